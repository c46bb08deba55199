#pragma once

#include <stdexcept>
#include <string>

namespace voxenc {

// Error taxonomy. Each failure mode named in a module contract gets its own
// code so callers (and the CLI exit-code mapping) can tell them apart.
enum class Errc {
  // array container
  bad_magic,
  unsupported_version,
  bad_header,
  unsupported_dtype,
  bad_shape,
  truncated_payload,
  io_failure,
  // event tables
  bad_csv,
  bad_interval,
  negative_time,
  non_monotonic_onsets,
  // manifests
  missing_field,
  dangling_path,
  too_few_runs,
  bad_manifest,
  // features
  degenerate_layer,
  mismatched_shape,
  offset_beyond_run,
  bad_resample,
  bad_hrf_spec,
  // preprocess / stats
  zero_variance,
  series_too_short,
  empty_mask,
  bad_threshold,
  // encoding
  singular_system,
  non_finite_input,
  bad_lambda,
  // voxel selection / reporting
  empty_result,
  empty_set,
  unequal_set_sizes,
  bad_k,
  no_convergence,
  bad_table,
  bad_axis,
  // synth / cli
  bad_spec,
  bad_argument,
};

inline const char* errc_name(Errc c) {
  switch (c) {
    case Errc::bad_magic: return "BadMagic";
    case Errc::unsupported_version: return "UnsupportedVersion";
    case Errc::bad_header: return "BadHeader";
    case Errc::unsupported_dtype: return "UnsupportedDtype";
    case Errc::bad_shape: return "BadShape";
    case Errc::truncated_payload: return "TruncatedPayload";
    case Errc::io_failure: return "IoFailure";
    case Errc::bad_csv: return "BadCsv";
    case Errc::bad_interval: return "BadInterval";
    case Errc::negative_time: return "NegativeTime";
    case Errc::non_monotonic_onsets: return "NonMonotonicOnsets";
    case Errc::missing_field: return "MissingField";
    case Errc::dangling_path: return "DanglingPath";
    case Errc::too_few_runs: return "TooFewRuns";
    case Errc::bad_manifest: return "BadManifest";
    case Errc::degenerate_layer: return "DegenerateLayer";
    case Errc::mismatched_shape: return "MismatchedShape";
    case Errc::offset_beyond_run: return "OffsetBeyondRun";
    case Errc::bad_resample: return "BadResample";
    case Errc::bad_hrf_spec: return "BadHrfSpec";
    case Errc::zero_variance: return "ZeroVariance";
    case Errc::series_too_short: return "SeriesTooShort";
    case Errc::empty_mask: return "EmptyMask";
    case Errc::bad_threshold: return "BadThreshold";
    case Errc::singular_system: return "SingularSystem";
    case Errc::non_finite_input: return "NonFiniteInput";
    case Errc::bad_lambda: return "BadLambda";
    case Errc::empty_result: return "EmptyResult";
    case Errc::empty_set: return "EmptySet";
    case Errc::unequal_set_sizes: return "UnequalSetSizes";
    case Errc::bad_k: return "BadK";
    case Errc::no_convergence: return "NoConvergence";
    case Errc::bad_table: return "BadTable";
    case Errc::bad_axis: return "BadAxis";
    case Errc::bad_spec: return "BadSpec";
    case Errc::bad_argument: return "BadArgument";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

  Errc code() const { return code_; }

  // Numerical-failure codes map to CLI exit 3, everything else to exit 2.
  bool is_numerical() const {
    switch (code_) {
      case Errc::zero_variance:
      case Errc::singular_system:
      case Errc::non_finite_input:
      case Errc::degenerate_layer:
      case Errc::no_convergence:
        return true;
      default:
        return false;
    }
  }

 private:
  Errc code_;
};

[[noreturn]] inline void raise(Errc code, const std::string& what) { throw Error(code, what); }

inline void require(bool cond, Errc code, const std::string& what) {
  if (!cond) raise(code, what);
}

}  // namespace voxenc
