#pragma once

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "voxenc/error.hpp"
#include "voxenc/grid.hpp"

namespace voxenc::preprocess {

// Subtracts the least-squares line (intercept + slope * t); the residual is
// orthogonal to both the constant and the time index.
inline std::vector<double> linear_detrend(std::span<const double> series) {
  const std::size_t n = series.size();
  require(n >= 3, Errc::series_too_short, "detrending needs at least 3 samples");
  const double t_mean = static_cast<double>(n - 1) / 2.0;
  double y_mean = 0.0;
  for (double v : series) y_mean += v;
  y_mean /= static_cast<double>(n);

  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dt = static_cast<double>(i) - t_mean;
    num += dt * (series[i] - y_mean);
    den += dt * dt;
  }
  const double slope = num / den;
  const double intercept = y_mean - slope * t_mean;

  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i)
    out[i] = series[i] - (intercept + slope * static_cast<double>(i));
  return out;
}

inline double population_variance(std::span<const double> series) {
  double mean = 0.0;
  for (double v : series) mean += v;
  mean /= static_cast<double>(series.size());
  double var = 0.0;
  for (double v : series) var += (v - mean) * (v - mean);
  return var / static_cast<double>(series.size());
}

// Mean removal and scaling to unit variance (population convention, divide
// by T).
inline std::vector<double> standardize(std::span<const double> series) {
  require(!series.empty(), Errc::series_too_short, "empty series");
  double mean = 0.0;
  for (double v : series) mean += v;
  mean /= static_cast<double>(series.size());
  double var = 0.0;
  for (double v : series) var += (v - mean) * (v - mean);
  var /= static_cast<double>(series.size());
  require(var > 1e-12, Errc::zero_variance, "series has (near-)zero variance");
  const double inv_sd = 1.0 / std::sqrt(var);
  std::vector<double> out(series.size());
  for (std::size_t i = 0; i < series.size(); ++i) out[i] = (series[i] - mean) * inv_sd;
  return out;
}

// Detrend-then-standardize for every voxel column of a scans-by-voxels run.
// Columns that end up with (near-)zero variance after detrending are left as
// their detrended values and reported to the caller instead of being scaled.
inline std::vector<std::size_t> preprocess_bold(Eigen::MatrixXd& bold) {
  std::vector<std::size_t> degenerate;
  std::vector<double> col(static_cast<std::size_t>(bold.rows()));
  for (Eigen::Index v = 0; v < bold.cols(); ++v) {
    for (Eigen::Index t = 0; t < bold.rows(); ++t) col[static_cast<std::size_t>(t)] = bold(t, v);
    const auto detrended = linear_detrend(col);
    if (population_variance(detrended) > 1e-12) {
      const auto standardized = standardize(detrended);
      for (Eigen::Index t = 0; t < bold.rows(); ++t)
        bold(t, v) = standardized[static_cast<std::size_t>(t)];
    } else {
      degenerate.push_back(static_cast<std::size_t>(v));
      for (Eigen::Index t = 0; t < bold.rows(); ++t)
        bold(t, v) = detrended[static_cast<std::size_t>(t)];
    }
  }
  return degenerate;
}

// Marks a grid cell usable when the fraction of subjects with usable signal
// there reaches the threshold.
inline io::VoxelGrid build_mask(const std::vector<std::vector<std::uint8_t>>& per_subject_usable,
                                double threshold, std::array<std::size_t, 3> dims,
                                std::array<double, 3> voxel_size_mm) {
  require(threshold > 0.0 && threshold <= 1.0, Errc::bad_threshold, "threshold must be in (0,1]");
  require(!per_subject_usable.empty(), Errc::bad_argument, "no subjects");
  const std::size_t n_cells = dims[0] * dims[1] * dims[2];
  for (const auto& s : per_subject_usable)
    require(s.size() == n_cells, Errc::mismatched_shape, "usable flags do not match grid size");

  io::VoxelGrid grid;
  grid.dims = dims;
  grid.voxel_size_mm = voxel_size_mm;
  grid.mask.assign(n_cells, 0);
  const double n_subjects = static_cast<double>(per_subject_usable.size());
  for (std::size_t c = 0; c < n_cells; ++c) {
    std::size_t count = 0;
    for (const auto& s : per_subject_usable) count += s[c] ? 1 : 0;
    grid.mask[c] = (static_cast<double>(count) / n_subjects >= threshold) ? 1 : 0;
  }
  grid.rebuild_voxel_cells();
  require(grid.n_voxels() > 0, Errc::empty_mask, "no cell passes the usability threshold");
  return grid;
}

}  // namespace voxenc::preprocess
