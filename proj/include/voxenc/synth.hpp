#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "voxenc/error.hpp"
#include "voxenc/events.hpp"
#include "voxenc/features.hpp"
#include "voxenc/grid.hpp"
#include "voxenc/manifest.hpp"
#include "voxenc/npy.hpp"
#include "voxenc/preprocess.hpp"
#include "voxenc/rng.hpp"
#include "voxenc/voxelsel.hpp"

namespace voxenc::synth {

// Knobs of a synthetic study with planted ground truth. Defaults are the
// reference desk-scale study: 5 subjects, 9 runs of 100 scans at TR 2 s,
// 20 units, 200 voxels of which 20 carry signal, unit noise.
struct SynthSpec {
  std::uint64_t seed = 42;
  int n_subjects = 5;
  int n_runs = 9;
  int n_scans_per_run = 100;
  int d = 20;
  std::size_t n_voxels = 200;
  int n_signal_voxels = 20;
  double noise_sd = 1.0;
  double beta_scale = 1.0;
  int n_tokens_per_run = 300;
  double tr_seconds = 2.0;
  std::array<double, 3> voxel_size_mm{3.0, 3.0, 3.0};
  features::HrfSpec hrf{};

  void validate() const {
    require(n_subjects >= 1, Errc::bad_spec, "need at least 1 subject");
    require(n_runs >= 3, Errc::bad_spec, "need at least 3 runs for nested cross-validation");
    require(n_scans_per_run >= 3, Errc::bad_spec, "need at least 3 scans per run");
    require(d >= 1, Errc::bad_spec, "need at least 1 unit");
    require(n_voxels >= 1, Errc::bad_spec, "need at least 1 voxel");
    require(n_signal_voxels >= 0 &&
                static_cast<std::size_t>(n_signal_voxels) <= n_voxels,
            Errc::bad_spec, "signal voxels must fit in the mask");
    require(noise_sd >= 0.0 && beta_scale >= 0.0, Errc::bad_spec,
            "noise_sd and beta_scale must be nonnegative");
    require(n_tokens_per_run >= 1, Errc::bad_spec, "need at least 1 token per run");
    require(tr_seconds > 0.0, Errc::bad_spec, "TR must be positive");
    hrf.validate();
  }
};

struct GroundTruth {
  Eigen::MatrixXd beta_true;       // d x V, exactly zero outside the signal set
  voxelsel::VoxelSet signal_set;
};

struct GeneratedStudy {
  std::filesystem::path manifest_path;
  io::StudyManifest manifest;
  io::VoxelGrid grid;
  GroundTruth truth;
};

namespace detail {

inline io::VoxelGrid make_grid(const SynthSpec& spec) {
  // Smallest cube that holds V voxels; the mask is the first V cells.
  std::size_t side = 1;
  while (side * side * side < spec.n_voxels) ++side;
  io::VoxelGrid grid;
  grid.dims = {side, side, side};
  grid.voxel_size_mm = spec.voxel_size_mm;
  grid.mask.assign(side * side * side, 0);
  for (std::size_t i = 0; i < spec.n_voxels; ++i) grid.mask[i] = 1;
  grid.rebuild_voxel_cells();
  return grid;
}

inline voxelsel::VoxelSet draw_signal_set(const SynthSpec& spec) {
  rng::Substream stream(spec.seed, 0, 0, rng::Stream::signal_set);
  std::vector<std::size_t> pool(spec.n_voxels);
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  // Partial Fisher-Yates: the first n_signal entries are the sample.
  for (int i = 0; i < spec.n_signal_voxels; ++i) {
    const auto j = static_cast<std::size_t>(i) +
                   stream.below(pool.size() - static_cast<std::size_t>(i));
    std::swap(pool[static_cast<std::size_t>(i)], pool[j]);
  }
  voxelsel::VoxelSet set;
  set.indices.assign(pool.begin(), pool.begin() + spec.n_signal_voxels);
  std::sort(set.indices.begin(), set.indices.end());
  set.source = "planted-signal";
  return set;
}

inline Eigen::MatrixXd draw_beta(const SynthSpec& spec, const voxelsel::VoxelSet& signal) {
  rng::Substream stream(spec.seed, 0, 0, rng::Stream::beta);
  Eigen::MatrixXd beta = Eigen::MatrixXd::Zero(spec.d, static_cast<Eigen::Index>(spec.n_voxels));
  for (std::size_t v : signal.indices)
    for (int j = 0; j < spec.d; ++j)
      beta(j, static_cast<Eigen::Index>(v)) = spec.beta_scale * stream.normal();
  return beta;
}

// Non-overlapping word events with sorted onsets and offsets: each token
// occupies part of the gap to the next onset.
inline io::EventTable draw_events(const SynthSpec& spec, int run) {
  rng::Substream stream(spec.seed, 0, static_cast<std::uint64_t>(run), rng::Stream::events);
  const double duration = spec.tr_seconds * static_cast<double>(spec.n_scans_per_run);
  const auto n = static_cast<std::size_t>(spec.n_tokens_per_run);
  std::vector<double> onsets(n);
  for (auto& t : onsets) t = stream.uniform(0.0, std::max(duration - 2.0, 0.5));
  std::sort(onsets.begin(), onsets.end());

  io::EventTable table;
  char buf[32];
  for (std::size_t i = 0; i < n; ++i) {
    const double next = i + 1 < n ? onsets[i + 1] : std::min(duration, onsets[i] + 1.0);
    const double gap = std::max(next - onsets[i], 1e-3);
    const double length = std::min(0.8 * gap, stream.uniform(0.1, 0.5));
    if (i % 10 == 9) {
      table.tokens.emplace_back(",");
    } else {
      std::snprintf(buf, sizeof(buf), "w%05zu", i);
      table.tokens.emplace_back(buf);
    }
    table.onset_s.push_back(onsets[i]);
    table.offset_s.push_back(std::min(onsets[i] + length, duration));
  }
  return table;
}

inline Eigen::MatrixXd draw_activations(const SynthSpec& spec, int run, std::size_t n_tokens) {
  rng::Substream stream(spec.seed, 0, static_cast<std::uint64_t>(run), rng::Stream::activations);
  Eigen::MatrixXd a(static_cast<Eigen::Index>(n_tokens), spec.d);
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j) a(i, j) = stream.normal();
  return a;
}

inline std::string run_name(int run) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "run-%02d", run + 1);
  return buf;
}

inline std::string subject_name(int subject) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "sub-%02d", subject + 1);
  return buf;
}

inline GeneratedStudy generate_with_beta(const SynthSpec& spec, const Eigen::MatrixXd& beta,
                                         const voxelsel::VoxelSet& signal,
                                         const std::filesystem::path& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);

  GeneratedStudy study;
  study.grid = make_grid(spec);
  study.truth.beta_true = beta;
  study.truth.signal_set = signal;

  io::write_array(study.grid.mask_array(), out_dir / "mask.npy");

  io::StudyManifest manifest;
  manifest.tr_seconds = spec.tr_seconds;
  manifest.runs_per_subject = spec.n_runs;
  manifest.model_tag = "synthetic";
  manifest.mask_path = out_dir / "mask.npy";
  manifest.voxel_size_mm = spec.voxel_size_mm;
  manifest.layer_spans = {{0, spec.d}};

  // The stimulus side is shared by all subjects: per-run events and
  // activations are keyed by run only.
  std::vector<io::EventTable> events(static_cast<std::size_t>(spec.n_runs));
  std::vector<Eigen::MatrixXd> designs(static_cast<std::size_t>(spec.n_runs));
  for (int r = 0; r < spec.n_runs; ++r) {
    const auto ri = static_cast<std::size_t>(r);
    events[ri] = draw_events(spec, r);
    const Eigen::MatrixXd act = draw_activations(spec, r, events[ri].size());
    io::write_events(events[ri], out_dir / (run_name(r) + "_events.csv"));
    io::write_array(io::from_matrix(act), out_dir / (run_name(r) + "_activations.npy"));
    features::ActivationMatrix am;
    am.values = act;
    am.layer_spans = {{0, spec.d}};
    designs[ri] = features::build_design(am, events[ri], spec.hrf, spec.tr_seconds,
                                         spec.n_scans_per_run)
                      .values;
  }

  for (int s = 0; s < spec.n_subjects; ++s) {
    const auto subject_dir = out_dir / subject_name(s);
    fs::create_directories(subject_dir);
    io::SubjectEntry entry;
    entry.id = subject_name(s);
    for (int r = 0; r < spec.n_runs; ++r) {
      const auto ri = static_cast<std::size_t>(r);
      rng::Substream noise(spec.seed, static_cast<std::uint64_t>(s) + 1,
                           static_cast<std::uint64_t>(r), rng::Stream::noise);
      Eigen::MatrixXd bold = designs[ri] * beta;
      for (Eigen::Index t = 0; t < bold.rows(); ++t)
        for (Eigen::Index v = 0; v < bold.cols(); ++v)
          bold(t, v) += spec.noise_sd * noise.normal();
      preprocess::preprocess_bold(bold);  // degenerate columns stay unscaled by design
      const auto bold_path = subject_dir / (run_name(r) + "_bold.npy");
      io::write_array(io::from_matrix(bold), bold_path);
      io::RunPaths paths;
      paths.bold = bold_path;
      paths.activations = out_dir / (run_name(r) + "_activations.npy");
      paths.events = out_dir / (run_name(r) + "_events.csv");
      entry.runs.push_back(std::move(paths));
    }
    manifest.subjects.push_back(std::move(entry));
  }

  study.manifest_path = out_dir / "manifest.json";
  io::write_manifest(manifest, study.manifest_path);
  study.manifest = manifest;

  io::write_array(io::from_matrix(beta), out_dir / "truth_beta.npy");
  voxelsel::write_voxel_set(signal, out_dir / "truth_signal.json");
  return study;
}

}  // namespace detail

inline GeneratedStudy gen_study(const SynthSpec& spec, const std::filesystem::path& out_dir) {
  spec.validate();
  const auto signal = detail::draw_signal_set(spec);
  const auto beta = detail::draw_beta(spec, signal);
  return detail::generate_with_beta(spec, beta, signal, out_dir);
}

// Two studies that share the stimulus and the noise realization and differ
// only in the coefficients: study B adds effect_map[v] times a fixed random
// unit direction to voxel v's column. Paired differences between the two
// fits isolate the planted effect.
inline std::pair<GeneratedStudy, GeneratedStudy> gen_paired_study(
    const SynthSpec& spec, const std::vector<double>& effect_map,
    const std::filesystem::path& out_dir) {
  spec.validate();
  require(effect_map.size() == spec.n_voxels, Errc::mismatched_shape,
          "effect map length must equal the voxel count");

  const auto signal = detail::draw_signal_set(spec);
  const Eigen::MatrixXd beta_a = detail::draw_beta(spec, signal);
  Eigen::MatrixXd beta_b = beta_a;
  rng::Substream dir_stream(spec.seed, 0, 0, rng::Stream::effect_dir);
  std::vector<std::size_t> effect_voxels;
  for (std::size_t v = 0; v < effect_map.size(); ++v) {
    Eigen::VectorXd direction(spec.d);
    for (int j = 0; j < spec.d; ++j) direction(j) = dir_stream.normal();
    if (effect_map[v] == 0.0) continue;  // direction drawn anyway to keep streams aligned
    direction.normalize();
    beta_b.col(static_cast<Eigen::Index>(v)) += effect_map[v] * direction;
    effect_voxels.push_back(v);
  }

  voxelsel::VoxelSet signal_b = signal;
  signal_b.indices.insert(signal_b.indices.end(), effect_voxels.begin(), effect_voxels.end());
  std::sort(signal_b.indices.begin(), signal_b.indices.end());
  signal_b.indices.erase(std::unique(signal_b.indices.begin(), signal_b.indices.end()),
                         signal_b.indices.end());

  auto study_a = detail::generate_with_beta(spec, beta_a, signal, out_dir / "a");
  auto study_b = detail::generate_with_beta(spec, beta_b, signal_b, out_dir / "b");
  return {std::move(study_a), std::move(study_b)};
}

}  // namespace voxenc::synth
