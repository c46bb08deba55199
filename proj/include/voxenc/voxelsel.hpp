#pragma once

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include <json.hpp>

#include "voxenc/encoding.hpp"
#include "voxenc/error.hpp"
#include "voxenc/rng.hpp"

namespace voxenc::voxelsel {

// Sorted, duplicate-free set of flat voxel indices.
struct VoxelSet {
  std::vector<std::size_t> indices;
  std::string source;

  std::size_t size() const { return indices.size(); }
};

// --- Shared response model ----------------------------------------------------
//
// Deterministic shared-response factorization: X_i ~ S W_i' with orthonormal
// per-subject maps W_i (V x k) and a common response S (stored k x T).
// Fitting alternates exact minimizations of sum_i ||X_i - S W_i'||_F^2:
//   W_i <- orthogonal Procrustes (SVD of X_i' S'),
//   S   <- mean_i X_i W_i,
// so the objective is nonincreasing by construction. S is initialized from
// the first subject's top-k principal directions; the seed only enters if
// that subject is rank-deficient and columns must be completed randomly.

struct SrmModel {
  int k = 0;
  std::vector<Eigen::MatrixXd> maps;  // per subject, V x k, orthonormal columns
  Eigen::MatrixXd shared;             // k x T
  std::vector<double> objective;      // value after each full iteration
};

namespace detail {

inline Eigen::MatrixXd procrustes(const Eigen::MatrixXd& m) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  return svd.matrixU() * svd.matrixV().transpose();
}

inline double srm_objective(const std::vector<Eigen::MatrixXd>& data,
                            const Eigen::MatrixXd& shared_t,
                            const std::vector<Eigen::MatrixXd>& maps) {
  double total = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i)
    total += (data[i] - shared_t * maps[i].transpose()).squaredNorm();
  return total;
}

}  // namespace detail

inline SrmModel srm_fit(const std::vector<Eigen::MatrixXd>& data, int k, int n_iters,
                        std::uint64_t seed) {
  require(!data.empty(), Errc::bad_argument, "no subjects");
  const Eigen::Index t = data.front().rows();
  const Eigen::Index v = data.front().cols();
  for (const auto& x : data)
    require(x.rows() == t && x.cols() == v, Errc::mismatched_shape,
            "subjects disagree on data shape");
  require(k >= 1 && k <= std::min(t, v), Errc::bad_k, "k must be in [1, min(T, V)]");

  // Init: scores of the first subject's top-k principal directions.
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(data.front(), Eigen::ComputeThinU | Eigen::ComputeThinV);
  require(svd.info() == Eigen::Success, Errc::no_convergence, "initial SVD failed");
  Eigen::MatrixXd shared_t(t, k);  // T x k while iterating
  const auto& sv = svd.singularValues();
  rng::Substream stream(seed, 0, 0, rng::Stream::generic);
  for (int j = 0; j < k; ++j) {
    if (sv(j) > 1e-12 * std::max(sv(0), 1.0)) {
      shared_t.col(j) = svd.matrixU().col(j) * sv(j);
    } else {
      // Rank-deficient start: fill with a random direction instead.
      for (Eigen::Index i = 0; i < t; ++i) shared_t(i, j) = stream.normal();
    }
  }

  SrmModel model;
  model.k = k;
  model.maps.assign(data.size(), Eigen::MatrixXd());
  for (int iter = 0; iter < n_iters; ++iter) {
    for (std::size_t i = 0; i < data.size(); ++i)
      model.maps[i] = detail::procrustes(data[i].transpose() * shared_t);
    shared_t.setZero();
    for (std::size_t i = 0; i < data.size(); ++i) shared_t += data[i] * model.maps[i];
    shared_t /= static_cast<double>(data.size());
    model.objective.push_back(detail::srm_objective(data, shared_t, model.maps));
  }
  if (model.maps.front().size() == 0) {
    // n_iters == 0: still return valid maps for the initial shared response.
    for (std::size_t i = 0; i < data.size(); ++i)
      model.maps[i] = detail::procrustes(data[i].transpose() * shared_t);
  }
  model.shared = shared_t.transpose();
  return model;
}

// Per-voxel reliability of the shared structure on held-out runs: project
// every other subject's held-out data through its map, average in shared
// space, map back through this subject's W_i, and correlate with the held-out
// data. The returned map is the across-subject mean R (NaN where every
// subject was degenerate).
inline std::vector<double> srm_reliability(const SrmModel& model,
                                           const std::vector<Eigen::MatrixXd>& heldout) {
  require(heldout.size() == model.maps.size(), Errc::mismatched_shape,
          "held-out subject count must match the fitted model");
  require(heldout.size() >= 2, Errc::bad_argument, "reliability needs at least 2 subjects");
  const Eigen::Index t = heldout.front().rows();
  const Eigen::Index v = heldout.front().cols();
  for (const auto& x : heldout)
    require(x.rows() == t && x.cols() == v, Errc::mismatched_shape,
            "held-out subjects disagree on shape");
  require(model.maps.front().rows() == v, Errc::mismatched_shape,
          "model voxel count does not match held-out data");

  const std::size_t n_subjects = heldout.size();
  std::vector<Eigen::MatrixXd> projected(n_subjects);
  for (std::size_t i = 0; i < n_subjects; ++i) projected[i] = heldout[i] * model.maps[i];

  const auto nv = static_cast<std::size_t>(v);
  std::vector<double> r_sum(nv, 0.0);
  std::vector<int> r_count(nv, 0);
  std::vector<double> yv(static_cast<std::size_t>(t)), hv(static_cast<std::size_t>(t));
  for (std::size_t i = 0; i < n_subjects; ++i) {
    Eigen::MatrixXd shared_est = Eigen::MatrixXd::Zero(t, model.k);
    for (std::size_t j = 0; j < n_subjects; ++j)
      if (j != i) shared_est += projected[j];
    shared_est /= static_cast<double>(n_subjects - 1);
    const Eigen::MatrixXd recon = shared_est * model.maps[i].transpose();
    for (std::size_t voxel = 0; voxel < nv; ++voxel) {
      const auto vi = static_cast<Eigen::Index>(voxel);
      for (Eigen::Index s = 0; s < t; ++s) {
        yv[static_cast<std::size_t>(s)] = heldout[i](s, vi);
        hv[static_cast<std::size_t>(s)] = recon(s, vi);
      }
      try {
        r_sum[voxel] += encoding::pearson_r(yv, hv);
        ++r_count[voxel];
      } catch (const Error& e) {
        if (e.code() != Errc::zero_variance) throw;
      }
    }
  }

  std::vector<double> result(nv);
  for (std::size_t voxel = 0; voxel < nv; ++voxel)
    result[voxel] = r_count[voxel] > 0 ? r_sum[voxel] / r_count[voxel]
                                       : std::numeric_limits<double>::quiet_NaN();
  return result;
}

// --- Selections ----------------------------------------------------------------

// Top pct% of the map by value; the set size is round(pct/100 * V) and ties
// break toward the lower voxel index.
inline VoxelSet top_percentile(const std::vector<double>& map, double pct) {
  require(pct > 0.0 && pct <= 100.0, Errc::bad_argument, "pct must be in (0, 100]");
  require(!map.empty(), Errc::empty_result, "empty map");
  for (double x : map)
    require(std::isfinite(x), Errc::non_finite_input, "map must be finite for selection");

  const auto n = static_cast<std::size_t>(
      std::llround(pct / 100.0 * static_cast<double>(map.size())));
  require(n >= 1, Errc::empty_result, "requested percentile selects no voxels");

  std::vector<std::size_t> order(map.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (map[a] != map[b]) return map[a] > map[b];
    return a < b;
  });
  VoxelSet set;
  set.indices.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n));
  std::sort(set.indices.begin(), set.indices.end());
  return set;
}

struct OverlapResult {
  std::vector<std::vector<double>> pairwise;  // percent, diagonal 100
  double kway = 0.0;                          // percent shared by all sets
};

inline OverlapResult overlap_percent(const std::vector<VoxelSet>& sets) {
  require(sets.size() >= 2, Errc::bad_argument, "overlap needs at least 2 sets");
  const std::size_t n = sets.front().size();
  require(n > 0, Errc::empty_set, "overlap of empty sets is undefined");
  for (const auto& s : sets)
    require(s.size() == n, Errc::unequal_set_sizes, "overlap requires equal-size sets");

  auto intersection_size = [](const std::vector<std::size_t>& a,
                              const std::vector<std::size_t>& b) {
    std::size_t count = 0, i = 0, j = 0;
    while (i < a.size() && j < b.size()) {
      if (a[i] == b[j]) {
        ++count;
        ++i;
        ++j;
      } else if (a[i] < b[j]) {
        ++i;
      } else {
        ++j;
      }
    }
    return count;
  };

  OverlapResult out;
  out.pairwise.assign(sets.size(), std::vector<double>(sets.size(), 100.0));
  for (std::size_t a = 0; a < sets.size(); ++a)
    for (std::size_t b = a + 1; b < sets.size(); ++b) {
      const double pct = 100.0 * static_cast<double>(
                             intersection_size(sets[a].indices, sets[b].indices)) /
                         static_cast<double>(n);
      out.pairwise[a][b] = pct;
      out.pairwise[b][a] = pct;
    }

  std::vector<std::size_t> common = sets.front().indices;
  for (std::size_t s = 1; s < sets.size(); ++s) {
    std::vector<std::size_t> next;
    std::set_intersection(common.begin(), common.end(), sets[s].indices.begin(),
                          sets[s].indices.end(), std::back_inserter(next));
    common = std::move(next);
  }
  out.kway = 100.0 * static_cast<double>(common.size()) / static_cast<double>(n);
  return out;
}

inline double brain_score(const std::vector<double>& map, const VoxelSet& set) {
  require(!set.indices.empty(), Errc::empty_set, "brain score over an empty set");
  double sum = 0.0;
  for (std::size_t idx : set.indices) {
    require(idx < map.size(), Errc::bad_argument, "voxel index out of range");
    sum += map[idx];
  }
  return sum / static_cast<double>(set.size());
}

// --- Voxel-set files -------------------------------------------------------------

inline void write_voxel_set(const VoxelSet& set, const std::filesystem::path& path) {
  nlohmann::json j;
  j["source"] = set.source;
  j["indices"] = set.indices;
  std::ofstream out(path, std::ios::trunc);
  require(out.good(), Errc::io_failure, "cannot open " + path.string() + " for writing");
  out << j.dump(2) << '\n';
}

inline VoxelSet read_voxel_set(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), Errc::io_failure, "cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    raise(Errc::bad_manifest, "bad voxel-set JSON: " + std::string(e.what()));
  }
  VoxelSet set;
  if (j.contains("source")) set.source = j["source"].get<std::string>();
  require(j.contains("indices"), Errc::missing_field, "voxel set missing 'indices'");
  set.indices = j["indices"].get<std::vector<std::size_t>>();
  require(std::is_sorted(set.indices.begin(), set.indices.end()) &&
              std::adjacent_find(set.indices.begin(), set.indices.end()) == set.indices.end(),
          Errc::bad_manifest, "voxel-set indices must be sorted and unique");
  return set;
}

}  // namespace voxenc::voxelsel
