#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "voxenc/error.hpp"
#include "voxenc/grid.hpp"
#include "voxenc/parallel.hpp"

namespace voxenc::groupstats {

// --- Student-t tail probabilities -------------------------------------------
//
// p-values come from the regularized incomplete beta function I_x(a, b),
// evaluated through its continued-fraction expansion (modified Lentz). The
// continued fraction converges for x < (a+1)/(a+b+2); the symmetry
// I_x(a,b) = 1 - I_{1-x}(b,a) covers the rest. Accuracy is driven to ~1e-15
// per step, comfortably beyond the 1e-10 requirement.

namespace detail {

inline double ibeta_cf(double a, double b, double x) {
  constexpr double tiny = 1e-300;
  constexpr double eps = 1e-15;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < tiny) d = tiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= 500; ++m) {
    const double m2 = 2.0 * static_cast<double>(m);
    double aa = static_cast<double>(m) * (b - static_cast<double>(m)) * x /
                ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + static_cast<double>(m)) * (qab + static_cast<double>(m)) * x /
         ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < eps) return h;
  }
  raise(Errc::no_convergence, "incomplete beta continued fraction did not converge");
}

}  // namespace detail

inline double regularized_incomplete_beta(double a, double b, double x) {
  require(a > 0.0 && b > 0.0, Errc::bad_argument, "beta parameters must be positive");
  require(x >= 0.0 && x <= 1.0, Errc::bad_argument, "x must be in [0,1]");
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                          a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(ln_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * detail::ibeta_cf(a, b, x) / a;
  return 1.0 - front * detail::ibeta_cf(b, a, 1.0 - x) / b;
}

// One-sided upper-tail probability P(T >= t) for Student's t with df degrees.
// Tails are clamped to the smallest positive double: p stays in (0, 1].
inline double student_t_sf(double t, double df) {
  require(df > 0.0, Errc::bad_argument, "degrees of freedom must be positive");
  const double x = df / (df + t * t);
  const double half_tail = 0.5 * regularized_incomplete_beta(df / 2.0, 0.5, x);
  const double p = t >= 0.0 ? half_tail : 1.0 - half_tail;
  return std::max(p, std::numeric_limits<double>::min());
}

inline double student_t_sf_two_sided(double t, double df) {
  require(df > 0.0, Errc::bad_argument, "degrees of freedom must be positive");
  const double x = df / (df + t * t);
  return std::max(regularized_incomplete_beta(df / 2.0, 0.5, x),
                  std::numeric_limits<double>::min());
}

// --- Smoothing ---------------------------------------------------------------

// Separable 3-D Gaussian smoothing restricted to the mask. Out-of-mask (and
// non-finite) cells contribute neither value nor weight; each output voxel is
// renormalized by the weight that actually landed in the mask, so a constant
// map is reproduced exactly and no signal bleeds across the mask boundary.
// Per axis, sigma_mm = fwhm / (2 sqrt(2 ln 2)) and the kernel is truncated to
// a total width of 4 sigma; below half a voxel of sigma that keeps one cell,
// making the operator the identity.
inline std::vector<double> smooth_gaussian(const std::vector<double>& map,
                                           const io::VoxelGrid& grid, double fwhm_mm,
                                           int n_threads = 1) {
  require(fwhm_mm > 0.0, Errc::bad_argument, "fwhm must be positive");
  require(map.size() == grid.n_voxels(), Errc::mismatched_shape,
          "map length does not match grid");
  for (double s : grid.voxel_size_mm)
    require(s > 0.0, Errc::bad_argument, "voxel sizes must be positive");

  const double sigma_mm = fwhm_mm / (2.0 * std::sqrt(2.0 * std::log(2.0)));
  std::array<std::vector<double>, 3> kernels;
  for (std::size_t axis = 0; axis < 3; ++axis) {
    const double sigma_vox = sigma_mm / grid.voxel_size_mm[axis];
    const int radius = static_cast<int>(std::floor(2.0 * sigma_vox));
    std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
    double sum = 0.0;
    for (int o = -radius; o <= radius; ++o) {
      const double w = std::exp(-0.5 * static_cast<double>(o) * static_cast<double>(o) /
                                (sigma_vox * sigma_vox));
      k[static_cast<std::size_t>(o + radius)] = w;
      sum += w;
    }
    for (double& w : k) w /= sum;
    kernels[axis] = std::move(k);
  }

  const std::size_t nx = grid.dims[0], ny = grid.dims[1], nz = grid.dims[2];
  const std::size_t n_cells = grid.n_cells();
  std::vector<double> num(n_cells, 0.0), den(n_cells, 0.0);
  for (std::size_t v = 0; v < map.size(); ++v) {
    if (!std::isfinite(map[v])) continue;
    num[grid.voxel_cells[v]] = map[v];
    den[grid.voxel_cells[v]] = 1.0;
  }

  auto convolve_axis = [&](std::vector<double>& field, std::size_t axis) {
    const auto& k = kernels[axis];
    const int radius = static_cast<int>(k.size() / 2);
    if (radius == 0) return;
    std::vector<double> out(n_cells, 0.0);
    const std::size_t extent[3] = {nx, ny, nz};
    const std::size_t stride[3] = {ny * nz, nz, 1};
    const std::size_t n_lines = n_cells / extent[axis];
    parallel_blocks(n_lines, 16, n_threads, [&](std::size_t begin, std::size_t end) {
      for (std::size_t line = begin; line < end; ++line) {
        // Decompose the line id into the two fixed coordinates.
        std::size_t rest = line, base = 0;
        for (std::size_t a = 0; a < 3; ++a) {
          if (a == axis) continue;
          const std::size_t coord = rest % extent[a];
          rest /= extent[a];
          base += coord * stride[a];
        }
        const std::size_t step = stride[axis];
        const auto n = static_cast<int>(extent[axis]);
        for (int i = 0; i < n; ++i) {
          double acc = 0.0;
          const int lo = std::max(0, i - radius), hi = std::min(n - 1, i + radius);
          for (int j = lo; j <= hi; ++j)
            acc += k[static_cast<std::size_t>(j - i + radius)] *
                   field[base + static_cast<std::size_t>(j) * step];
          out[base + static_cast<std::size_t>(i) * step] = acc;
        }
      }
    });
    field = std::move(out);
  };

  for (std::size_t axis = 0; axis < 3; ++axis) {
    convolve_axis(num, axis);
    convolve_axis(den, axis);
  }

  std::vector<double> result(map.size());
  for (std::size_t v = 0; v < map.size(); ++v) {
    if (!std::isfinite(map[v])) {
      result[v] = map[v];
      continue;
    }
    const std::size_t cell = grid.voxel_cells[v];
    result[v] = den[cell] > 0.0 ? num[cell] / den[cell] : map[v];
  }
  return result;
}

// --- Group tests -------------------------------------------------------------

struct StatMap {
  std::vector<double> t_values;
  std::vector<double> p_values;
  int df = 0;
  std::vector<std::uint8_t> survived;  // after correction
  std::vector<std::uint8_t> flagged;   // zero-sd or non-finite voxels, p forced to 1
  double corrected_alpha = 0.0;
};

inline double bonferroni(double alpha, std::size_t n_voxels) {
  require(n_voxels >= 1, Errc::bad_argument, "voxel count must be >= 1");
  require(alpha > 0.0 && alpha <= 1.0, Errc::bad_argument, "alpha must be in (0,1]");
  return alpha / static_cast<double>(n_voxels);
}

// One-sample t-test per voxel across subject maps: t = mean / (sd / sqrt(S)),
// sd with S-1 in the denominator, p one-sided upper tail by default.
inline StatMap one_sample_ttest(const std::vector<std::vector<double>>& subject_maps,
                                bool two_sided = false) {
  require(subject_maps.size() >= 3, Errc::bad_argument, "need at least 3 subjects");
  const std::size_t n_voxels = subject_maps.front().size();
  for (const auto& m : subject_maps)
    require(m.size() == n_voxels, Errc::mismatched_shape, "subject maps disagree on length");

  const double s = static_cast<double>(subject_maps.size());
  StatMap out;
  out.df = static_cast<int>(subject_maps.size()) - 1;
  out.t_values.assign(n_voxels, 0.0);
  out.p_values.assign(n_voxels, 1.0);
  out.flagged.assign(n_voxels, 0);
  out.survived.assign(n_voxels, 0);

  for (std::size_t v = 0; v < n_voxels; ++v) {
    bool finite = true;
    double mean = 0.0;
    for (const auto& m : subject_maps) {
      finite = finite && std::isfinite(m[v]);
      mean += m[v];
    }
    if (!finite) {
      out.flagged[v] = 1;
      continue;
    }
    mean /= s;
    double ss = 0.0;
    for (const auto& m : subject_maps) ss += (m[v] - mean) * (m[v] - mean);
    const double sd = std::sqrt(ss / (s - 1.0));
    if (!(sd > 0.0)) {
      out.flagged[v] = 1;
      continue;
    }
    const double t = mean / (sd / std::sqrt(s));
    out.t_values[v] = t;
    out.p_values[v] = two_sided ? student_t_sf_two_sided(t, static_cast<double>(out.df))
                                : student_t_sf(t, static_cast<double>(out.df));
  }
  return out;
}

inline void apply_bonferroni(StatMap& map, double alpha) {
  map.corrected_alpha = bonferroni(alpha, map.p_values.size());
  for (std::size_t v = 0; v < map.p_values.size(); ++v)
    map.survived[v] = (!map.flagged[v] && map.p_values[v] <= map.corrected_alpha) ? 1 : 0;
}

// Group test of per-subject difference maps A - B: difference, smooth,
// one-sample t-test, correction.
inline StatMap contrast_map(const std::vector<std::vector<double>>& maps_a,
                            const std::vector<std::vector<double>>& maps_b,
                            const io::VoxelGrid& grid, double fwhm_mm, double alpha,
                            bool two_sided = false, int n_threads = 1) {
  require(maps_a.size() == maps_b.size(), Errc::mismatched_shape,
          "contrast needs the same subjects on both sides");
  std::vector<std::vector<double>> diffs;
  diffs.reserve(maps_a.size());
  for (std::size_t s = 0; s < maps_a.size(); ++s) {
    require(maps_a[s].size() == maps_b[s].size() && maps_a[s].size() == grid.n_voxels(),
            Errc::mismatched_shape, "contrast maps disagree on voxel count");
    std::vector<double> d(maps_a[s].size());
    for (std::size_t v = 0; v < d.size(); ++v) d[v] = maps_a[s][v] - maps_b[s][v];
    diffs.push_back(smooth_gaussian(d, grid, fwhm_mm, n_threads));
  }
  StatMap out = one_sample_ttest(diffs, two_sided);
  apply_bonferroni(out, alpha);
  return out;
}

// Interaction contrast (A_tr - A_un) - (B_tr - B_un) per subject, then the
// same smooth + t-test pipeline.
inline StatMap interaction_map(const std::vector<std::vector<double>>& a_trained,
                               const std::vector<std::vector<double>>& a_untrained,
                               const std::vector<std::vector<double>>& b_trained,
                               const std::vector<std::vector<double>>& b_untrained,
                               const io::VoxelGrid& grid, double fwhm_mm, double alpha,
                               bool two_sided = false, int n_threads = 1) {
  const std::size_t n_subjects = a_trained.size();
  require(a_untrained.size() == n_subjects && b_trained.size() == n_subjects &&
              b_untrained.size() == n_subjects,
          Errc::mismatched_shape, "interaction needs four aligned map lists");
  std::vector<std::vector<double>> diffs;
  diffs.reserve(n_subjects);
  for (std::size_t s = 0; s < n_subjects; ++s) {
    const std::size_t nv = grid.n_voxels();
    require(a_trained[s].size() == nv && a_untrained[s].size() == nv &&
                b_trained[s].size() == nv && b_untrained[s].size() == nv,
            Errc::mismatched_shape, "interaction maps disagree on voxel count");
    std::vector<double> d(nv);
    for (std::size_t v = 0; v < nv; ++v)
      d[v] = (a_trained[s][v] - a_untrained[s][v]) - (b_trained[s][v] - b_untrained[s][v]);
    diffs.push_back(smooth_gaussian(d, grid, fwhm_mm, n_threads));
  }
  StatMap out = one_sample_ttest(diffs, two_sided);
  apply_bonferroni(out, alpha);
  return out;
}

}  // namespace voxenc::groupstats
