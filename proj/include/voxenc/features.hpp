#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "voxenc/error.hpp"
#include "voxenc/events.hpp"
#include "voxenc/parallel.hpp"

namespace voxenc::features {

// Per-token model activations, tokens in rows. layer_spans records the
// column block of each layer (embedding layer first), half-open [begin, end).
struct ActivationMatrix {
  Eigen::MatrixXd values;
  std::vector<std::pair<int, int>> layer_spans;

  Eigen::Index n_tokens() const { return values.rows(); }
  Eigen::Index n_units() const { return values.cols(); }
};

inline ActivationMatrix concat_layers(const std::vector<Eigen::MatrixXd>& layers) {
  require(!layers.empty(), Errc::bad_argument, "no layers given");
  const Eigen::Index w = layers.front().rows();
  Eigen::Index d = 0;
  for (const auto& layer : layers) {
    require(layer.rows() == w, Errc::mismatched_shape, "layers disagree on token count");
    d += layer.cols();
  }
  ActivationMatrix out;
  out.values.resize(w, d);
  Eigen::Index col = 0;
  for (const auto& layer : layers) {
    out.values.middleCols(col, layer.cols()) = layer;
    out.layer_spans.emplace_back(static_cast<int>(col), static_cast<int>(col + layer.cols()));
    col += layer.cols();
  }
  return out;
}

// Scales each layer block by the reciprocal of its mean row L2-norm, so the
// mean row norm of every block becomes exactly 1. Brings layers of different
// magnitude onto one scale before they share a regularization budget.
inline ActivationMatrix normalize_layers(ActivationMatrix a) {
  require(!a.layer_spans.empty(), Errc::bad_argument, "activation matrix has no layer spans");
  int covered = 0;
  for (const auto& [b, e] : a.layer_spans) {
    require(b == covered && e > b, Errc::mismatched_shape, "layer spans must tile the columns");
    covered = e;
  }
  require(covered == a.values.cols(), Errc::mismatched_shape, "layer spans must cover all columns");
  require(a.values.rows() > 0, Errc::bad_argument, "no tokens");

  for (const auto& [b, e] : a.layer_spans) {
    auto block = a.values.middleCols(b, e - b);
    const double mean_norm = block.rowwise().norm().mean();
    require(mean_norm > 0.0, Errc::degenerate_layer, "layer block is identically zero");
    block /= mean_norm;
  }
  return a;
}

// Canonical double-gamma hemodynamic response: a gamma-density peak minus a
// scaled gamma-density undershoot, sampled on a fine grid and rescaled to
// unit peak. Defaults: peak at 6 s, undershoot at 16 s, ratio 1/6, 32 s long.
struct HrfSpec {
  double peak_delay_s = 6.0;
  double undershoot_delay_s = 16.0;
  double peak_dispersion = 1.0;
  double undershoot_dispersion = 1.0;
  double undershoot_ratio = 1.0 / 6.0;
  double kernel_length_s = 32.0;
  double dt_s = 0.2;

  void validate() const {
    require(peak_delay_s > 0 && undershoot_delay_s > 0 && peak_dispersion > 0 &&
                undershoot_dispersion > 0 && undershoot_ratio > 0 && kernel_length_s > 0 &&
                dt_s > 0,
            Errc::bad_hrf_spec, "all response-function parameters must be positive");
    const double steps = kernel_length_s / dt_s;
    require(std::fabs(steps - std::round(steps)) < 1e-9, Errc::bad_hrf_spec,
            "dt_s must divide kernel_length_s");
  }
};

namespace detail {

// Gamma density with shape delay/dispersion and scale dispersion; the mode
// sits at delay - dispersion.
inline double gamma_density(double t, double delay, double dispersion) {
  if (t <= 0.0) return 0.0;
  const double shape = delay / dispersion;
  return std::exp((shape - 1.0) * std::log(t) - t / dispersion - std::lgamma(shape) -
                  shape * std::log(dispersion));
}

}  // namespace detail

inline std::vector<double> hrf_kernel(const HrfSpec& spec) {
  spec.validate();
  const auto n = static_cast<std::size_t>(std::llround(spec.kernel_length_s / spec.dt_s)) + 1;
  std::vector<double> h(n);
  double peak = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) * spec.dt_s;
    h[i] = detail::gamma_density(t, spec.peak_delay_s, spec.peak_dispersion) -
           spec.undershoot_ratio *
               detail::gamma_density(t, spec.undershoot_delay_s, spec.undershoot_dispersion);
    peak = std::max(peak, h[i]);
  }
  require(peak > 0.0, Errc::bad_hrf_spec, "kernel has no positive peak");
  for (double& v : h) v /= peak;
  return h;
}

// Places one impulse per token at the fine-grid cell containing its offset
// time (amplitudes landing in the same cell sum), convolves with the kernel,
// and truncates to the run. The small epsilon keeps offsets that are exact
// cell boundaries in the cell they mathematically belong to.
inline std::vector<double> convolve_events(const io::EventTable& events,
                                           std::span<const double> amplitudes,
                                           const HrfSpec& spec, double run_duration_s) {
  spec.validate();
  require(amplitudes.size() == events.size(), Errc::mismatched_shape,
          "amplitude count must match token count");
  require(run_duration_s > 0.0, Errc::bad_argument, "run duration must be positive");

  const auto n_fine = static_cast<std::size_t>(std::llround(run_duration_s / spec.dt_s));
  require(n_fine > 0, Errc::bad_argument, "run shorter than one fine-grid step");

  std::vector<double> impulses(n_fine, 0.0);
  for (std::size_t i = 0; i < events.size(); ++i) {
    const double offset = events.offset_s[i];
    require(offset <= run_duration_s + 1e-9, Errc::offset_beyond_run,
            "token offset beyond run duration");
    auto cell = static_cast<std::size_t>(std::floor(offset / spec.dt_s + 1e-6));
    if (cell >= n_fine) cell = n_fine - 1;
    impulses[cell] += amplitudes[i];
  }

  const std::vector<double> kernel = hrf_kernel(spec);
  std::vector<double> out(n_fine, 0.0);
  for (std::size_t i = 0; i < n_fine; ++i) {
    if (impulses[i] == 0.0) continue;
    const std::size_t end = std::min(n_fine - i, kernel.size());
    for (std::size_t k = 0; k < end; ++k) out[i + k] += impulses[i] * kernel[k];
  }
  return out;
}

// Decimates the fine series at exact scan times k*TR and removes the mean.
inline std::vector<double> resample_and_center(std::span<const double> fine, double dt_s,
                                               double tr_seconds, int n_scans) {
  require(dt_s > 0 && tr_seconds > 0 && n_scans > 0, Errc::bad_argument,
          "positive dt, TR and scan count required");
  const double ratio = tr_seconds / dt_s;
  require(std::fabs(ratio - std::round(ratio)) < 1e-9, Errc::bad_resample,
          "TR must be an integer multiple of dt");
  const auto step = static_cast<std::size_t>(std::llround(ratio));
  std::vector<double> out(static_cast<std::size_t>(n_scans));
  for (std::size_t k = 0; k < out.size(); ++k) {
    const std::size_t idx = k * step;
    require(idx < fine.size(), Errc::bad_resample, "scan grid extends past the series");
    out[k] = fine[idx];
  }
  double mean = 0.0;
  for (double v : out) mean += v;
  mean /= static_cast<double>(out.size());
  for (double& v : out) v -= mean;
  return out;
}

// Scan-aligned design matrix, one mean-centered column per model unit.
struct FeatureDesign {
  Eigen::MatrixXd values;  // n_scans x d
  double tr_seconds = 2.0;
  bool centered = true;
};

inline FeatureDesign build_design(const ActivationMatrix& activations,
                                  const io::EventTable& events, const HrfSpec& spec,
                                  double tr_seconds, int n_scans, int n_threads = 1) {
  require(activations.n_tokens() == static_cast<Eigen::Index>(events.size()),
          Errc::mismatched_shape, "activation rows must match event count");
  const ActivationMatrix normalized = normalize_layers(activations);
  const double duration = tr_seconds * static_cast<double>(n_scans);

  FeatureDesign design;
  design.tr_seconds = tr_seconds;
  design.values.resize(n_scans, normalized.n_units());
  // Columns are independent pure functions of their amplitudes; the blocked
  // loop writes disjoint columns, so results do not depend on scheduling.
  parallel_blocks(static_cast<std::size_t>(normalized.n_units()), 16, n_threads,
                  [&](std::size_t begin, std::size_t end) {
    std::vector<double> amplitudes(static_cast<std::size_t>(normalized.n_tokens()));
    for (std::size_t j = begin; j < end; ++j) {
      const auto ji = static_cast<Eigen::Index>(j);
      for (Eigen::Index i = 0; i < normalized.n_tokens(); ++i)
        amplitudes[static_cast<std::size_t>(i)] = normalized.values(i, ji);
      const auto fine = convolve_events(events, amplitudes, spec, duration);
      const auto column = resample_and_center(fine, spec.dt_s, tr_seconds, n_scans);
      for (int t = 0; t < n_scans; ++t)
        design.values(t, ji) = column[static_cast<std::size_t>(t)];
    }
  });
  return design;
}

}  // namespace voxenc::features
