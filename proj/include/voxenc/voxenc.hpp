#pragma once

// Umbrella header for the voxelwise encoding-model toolkit.

#include "voxenc/encoding.hpp"
#include "voxenc/error.hpp"
#include "voxenc/events.hpp"
#include "voxenc/features.hpp"
#include "voxenc/grid.hpp"
#include "voxenc/groupstats.hpp"
#include "voxenc/manifest.hpp"
#include "voxenc/npy.hpp"
#include "voxenc/parallel.hpp"
#include "voxenc/preprocess.hpp"
#include "voxenc/reporting.hpp"
#include "voxenc/rng.hpp"
#include "voxenc/runner.hpp"
#include "voxenc/synth.hpp"
#include "voxenc/voxelsel.hpp"
