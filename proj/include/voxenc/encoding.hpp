#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "voxenc/error.hpp"
#include "voxenc/parallel.hpp"

namespace voxenc::encoding {

// Regularization grid, log-linear between fixed endpoints. The default is
// 10 values from 1e1 to 1e5; endpoints are pinned exactly rather than left
// to pow() rounding.
struct LambdaGrid {
  std::vector<double> values;

  static LambdaGrid log_spaced(double lo, double hi, int n) {
    require(lo > 0.0 && hi > lo && n >= 2, Errc::bad_lambda, "need 0 < lo < hi and n >= 2");
    LambdaGrid g;
    g.values.resize(static_cast<std::size_t>(n));
    const double llo = std::log10(lo), lhi = std::log10(hi);
    for (int i = 1; i + 1 < n; ++i)
      g.values[static_cast<std::size_t>(i)] =
          std::pow(10.0, llo + (lhi - llo) * static_cast<double>(i) / static_cast<double>(n - 1));
    g.values.front() = lo;
    g.values.back() = hi;
    for (std::size_t i = 1; i < g.values.size(); ++i)
      require(g.values[i] > g.values[i - 1], Errc::bad_lambda, "grid must be strictly increasing");
    return g;
  }

  static LambdaGrid defaults() { return log_spaced(10.0, 1e5, 10); }

  std::size_t size() const { return values.size(); }
};

// Shared factorization for solving (X'X + lambda I) b = X'Y at many lambdas:
// one symmetric eigendecomposition of X'X is reused for every lambda and
// every voxel.
class RidgeFactor {
 public:
  RidgeFactor(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y) {
    require(x.rows() == y.rows(), Errc::mismatched_shape, "X and Y row counts differ");
    require(x.rows() >= 1, Errc::bad_argument, "need at least one sample");
    require(x.allFinite() && y.allFinite(), Errc::non_finite_input,
            "design or response contains non-finite values");
    const Eigen::MatrixXd xtx = x.transpose() * x;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(xtx);
    require(es.info() == Eigen::Success, Errc::no_convergence, "eigendecomposition failed");
    q_ = es.eigenvectors();
    eigenvalues_ = es.eigenvalues();
    qt_xty_ = q_.transpose() * (x.transpose() * y);
  }

  // Coefficients for one lambda, d x V.
  Eigen::MatrixXd solve(double lambda) const {
    require(lambda >= 0.0 && std::isfinite(lambda), Errc::bad_lambda,
            "lambda must be finite and nonnegative");
    if (lambda == 0.0) {
      const double max_eig = eigenvalues_.maxCoeff();
      require(eigenvalues_.minCoeff() > 1e-12 * std::max(max_eig, 1.0), Errc::singular_system,
              "X'X is singular; lambda = 0 is not solvable");
    }
    const Eigen::ArrayXd inv = 1.0 / (eigenvalues_.array() + lambda);
    return q_ * (inv.matrix().asDiagonal() * qt_xty_);
  }

 private:
  Eigen::MatrixXd q_;
  Eigen::VectorXd eigenvalues_;
  Eigen::MatrixXd qt_xty_;
};

inline Eigen::MatrixXd ridge_solve(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                                   double lambda) {
  return RidgeFactor(x, y).solve(lambda);
}

// Pearson linear correlation between a measured and a predicted time course.
// Degenerate inputs are an error, never a silent zero.
inline double pearson_r(std::span<const double> y, std::span<const double> yhat) {
  require(y.size() == yhat.size() && y.size() >= 2, Errc::mismatched_shape,
          "series must have equal length >= 2");
  const double n = static_cast<double>(y.size());
  double my = 0.0, mh = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    my += y[i];
    mh += yhat[i];
  }
  my /= n;
  mh /= n;
  double cov = 0.0, vy = 0.0, vh = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double a = y[i] - my;
    const double b = yhat[i] - mh;
    cov += a * b;
    vy += a * a;
    vh += b * b;
  }
  require(vy / n > 1e-12 && vh / n > 1e-12, Errc::zero_variance,
          "correlation undefined for (near-)constant series");
  return std::clamp(cov / std::sqrt(vy * vh), -1.0, 1.0);
}

// One fold per run: test = run i, validation = run (i+1) mod n, train = rest.
struct CvPlan {
  struct Fold {
    std::vector<int> train;
    int validation = 0;
    int test = 0;
  };
  std::vector<Fold> folds;
};

inline CvPlan make_cv_plan(int n_runs) {
  require(n_runs >= 3, Errc::too_few_runs, "nested cross-validation needs at least 3 runs");
  CvPlan plan;
  plan.folds.resize(static_cast<std::size_t>(n_runs));
  for (int i = 0; i < n_runs; ++i) {
    auto& fold = plan.folds[static_cast<std::size_t>(i)];
    fold.test = i;
    fold.validation = (i + 1) % n_runs;
    for (int r = 0; r < n_runs; ++r)
      if (r != fold.test && r != fold.validation) fold.train.push_back(r);
  }
  return plan;
}

struct FitResult {
  std::vector<double> r_map;                // mean R over folds; NaN where excluded
  std::vector<std::uint8_t> excluded;       // voxels dropped for degenerate evaluation data
  std::vector<std::int64_t> lambda_counts;  // per grid value, over (voxel, fold) selections
  std::vector<std::vector<double>> lambda_star;  // per fold, per voxel selected penalty
};

// Nested cross-validation: per fold, fit on the concatenated training runs,
// pick lambda* per voxel by validation-run R (ties toward the larger
// lambda), then score the test run at lambda*. The returned map is the mean
// of the per-fold test R values. Voxels whose evaluation data or prediction
// is (near-)constant at any point are flagged and excluded, not imputed.
inline FitResult nested_cv_fit(const std::vector<Eigen::MatrixXd>& designs,
                               const std::vector<Eigen::MatrixXd>& bold, const LambdaGrid& grid,
                               const CvPlan& plan, int n_threads = 1) {
  require(!designs.empty() && designs.size() == bold.size(), Errc::mismatched_shape,
          "need one design per run");
  const auto n_runs = designs.size();
  const Eigen::Index d = designs.front().cols();
  const Eigen::Index n_voxels = bold.front().cols();
  for (std::size_t r = 0; r < n_runs; ++r) {
    require(designs[r].cols() == d, Errc::mismatched_shape, "designs disagree on unit count");
    require(bold[r].cols() == n_voxels, Errc::mismatched_shape, "runs disagree on voxel count");
    require(designs[r].rows() == bold[r].rows(), Errc::mismatched_shape,
            "design and response scan counts differ");
  }
  require(!plan.folds.empty(), Errc::bad_argument, "empty cross-validation plan");
  for (const auto& fold : plan.folds) {
    auto in_range = [&](int r) { return r >= 0 && static_cast<std::size_t>(r) < n_runs; };
    require(in_range(fold.validation) && in_range(fold.test), Errc::bad_argument,
            "cross-validation plan references a run that does not exist");
    for (int r : fold.train)
      require(in_range(r), Errc::bad_argument,
              "cross-validation plan references a run that does not exist");
  }
  const std::size_t n_lambda = grid.size();
  require(n_lambda >= 1, Errc::bad_lambda, "empty lambda grid");

  const auto nv = static_cast<std::size_t>(n_voxels);
  std::vector<double> r_sum(nv, 0.0);
  std::vector<std::uint8_t> excluded(nv, 0);
  std::vector<std::int64_t> lambda_counts(n_lambda, 0);
  std::vector<std::vector<double>> lambda_star;

  for (const auto& fold : plan.folds) {
    Eigen::Index train_rows = 0;
    for (int r : fold.train) train_rows += designs[static_cast<std::size_t>(r)].rows();
    Eigen::MatrixXd x_train(train_rows, d);
    Eigen::MatrixXd y_train(train_rows, n_voxels);
    Eigen::Index row = 0;
    for (int r : fold.train) {
      const auto& dr = designs[static_cast<std::size_t>(r)];
      x_train.middleRows(row, dr.rows()) = dr;
      y_train.middleRows(row, dr.rows()) = bold[static_cast<std::size_t>(r)];
      row += dr.rows();
    }
    const RidgeFactor factor(x_train, y_train);

    const auto& x_val = designs[static_cast<std::size_t>(fold.validation)];
    const auto& y_val = bold[static_cast<std::size_t>(fold.validation)];
    const auto& x_test = designs[static_cast<std::size_t>(fold.test)];
    const auto& y_test = bold[static_cast<std::size_t>(fold.test)];

    const double nan = std::numeric_limits<double>::quiet_NaN();
    std::vector<std::vector<double>> r_val(n_lambda, std::vector<double>(nv, nan));
    std::vector<std::vector<double>> r_test(n_lambda, std::vector<double>(nv, nan));

    for (std::size_t li = 0; li < n_lambda; ++li) {
      const Eigen::MatrixXd beta = factor.solve(grid.values[li]);
      // Per-voxel predictions are independent matrix-vector products, so the
      // result does not depend on how the voxel range is blocked.
      parallel_blocks(nv, 64, n_threads, [&](std::size_t begin, std::size_t end) {
        std::vector<double> yv(static_cast<std::size_t>(x_val.rows()));
        std::vector<double> hv(yv.size());
        std::vector<double> yt(static_cast<std::size_t>(x_test.rows()));
        std::vector<double> ht(yt.size());
        for (std::size_t v = begin; v < end; ++v) {
          if (excluded[v]) continue;
          const auto vi = static_cast<Eigen::Index>(v);
          Eigen::VectorXd pred = x_val * beta.col(vi);
          for (std::size_t t = 0; t < yv.size(); ++t) {
            yv[t] = y_val(static_cast<Eigen::Index>(t), vi);
            hv[t] = pred(static_cast<Eigen::Index>(t));
          }
          pred = x_test * beta.col(vi);
          for (std::size_t t = 0; t < yt.size(); ++t) {
            yt[t] = y_test(static_cast<Eigen::Index>(t), vi);
            ht[t] = pred(static_cast<Eigen::Index>(t));
          }
          try {
            r_val[li][v] = pearson_r(yv, hv);
            r_test[li][v] = pearson_r(yt, ht);
          } catch (const Error& e) {
            if (e.code() != Errc::zero_variance) throw;
            excluded[v] = 1;
          }
        }
      });
    }

    std::vector<std::size_t> chosen(nv, 0);
    parallel_blocks(nv, 256, n_threads, [&](std::size_t begin, std::size_t end) {
      for (std::size_t v = begin; v < end; ++v) {
        if (excluded[v]) continue;
        std::size_t best = 0;
        for (std::size_t li = 1; li < n_lambda; ++li)
          if (r_val[li][v] >= r_val[best][v]) best = li;  // ties toward larger lambda
        chosen[v] = best;
        r_sum[v] += r_test[best][v];
      }
    });
    std::vector<double> fold_lambda(nv, std::numeric_limits<double>::quiet_NaN());
    for (std::size_t v = 0; v < nv; ++v)
      if (!excluded[v]) {
        ++lambda_counts[chosen[v]];
        fold_lambda[v] = grid.values[chosen[v]];
      }
    lambda_star.push_back(std::move(fold_lambda));
  }

  FitResult result;
  result.r_map.resize(nv);
  const double n_folds = static_cast<double>(plan.folds.size());
  for (std::size_t v = 0; v < nv; ++v)
    result.r_map[v] =
        excluded[v] ? std::numeric_limits<double>::quiet_NaN() : r_sum[v] / n_folds;
  result.excluded = std::move(excluded);
  result.lambda_counts = std::move(lambda_counts);
  result.lambda_star = std::move(lambda_star);
  return result;
}

}  // namespace voxenc::encoding
