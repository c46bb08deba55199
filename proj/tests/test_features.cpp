#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "voxenc/features.hpp"

using namespace voxenc;
using features::HrfSpec;

namespace {

io::EventTable make_events(std::initializer_list<std::pair<double, double>> times) {
  io::EventTable t;
  int i = 0;
  for (auto [onset, offset] : times) {
    t.tokens.push_back("w" + std::to_string(i++));
    t.onset_s.push_back(onset);
    t.offset_s.push_back(offset);
  }
  return t;
}

}  // namespace

TEST(ConcatLayers, TwoLayersConcatenateWithSpans) {
  Eigen::MatrixXd l0(3, 2), l1(3, 2);
  l0 << 1, 2, 3, 4, 5, 6;
  l1 << 7, 8, 9, 10, 11, 12;
  const auto a = features::concat_layers({l0, l1});
  EXPECT_EQ(a.values.rows(), 3);
  EXPECT_EQ(a.values.cols(), 4);
  ASSERT_EQ(a.layer_spans.size(), 2u);
  EXPECT_EQ(a.layer_spans[0], (std::pair<int, int>{0, 2}));
  EXPECT_EQ(a.layer_spans[1], (std::pair<int, int>{2, 4}));
  EXPECT_DOUBLE_EQ(a.values(0, 2), 7.0);
}

TEST(ConcatLayers, SingleLayerPassesThrough) {
  Eigen::MatrixXd l(2, 3);
  l << 1, 2, 3, 4, 5, 6;
  const auto a = features::concat_layers({l});
  EXPECT_TRUE(a.values.isApprox(l));
  EXPECT_EQ(a.layer_spans[0], (std::pair<int, int>{0, 3}));
}

TEST(ConcatLayers, EmbeddingPlusFourLayersOf768GiveFullWidth) {
  std::vector<Eigen::MatrixXd> layers(5, Eigen::MatrixXd::Ones(3, 768));
  const auto a = features::concat_layers(layers);
  EXPECT_EQ(a.values.cols(), 5 * 768);
  EXPECT_EQ(a.layer_spans.size(), 5u);
  EXPECT_EQ(a.layer_spans.back(), (std::pair<int, int>{4 * 768, 5 * 768}));
}

TEST(ConcatLayers, MismatchedTokenCountRejected) {
  EXPECT_THROW(features::concat_layers({Eigen::MatrixXd::Ones(3, 2), Eigen::MatrixXd::Ones(4, 2)}),
               Error);
}

TEST(NormalizeLayers, SingleRowNormBecomesOne) {
  features::ActivationMatrix a;
  a.values = Eigen::MatrixXd::Zero(1, 2);
  a.values << 2.0, 0.0;
  a.layer_spans = {{0, 2}};
  const auto n = features::normalize_layers(a);
  EXPECT_NEAR(n.values.row(0).norm(), 1.0, 1e-12);
}

TEST(NormalizeLayers, MeanNormTwoDividesRowsToHalfAndOneAndAHalf) {
  features::ActivationMatrix a;
  a.values = Eigen::MatrixXd::Zero(2, 2);
  a.values << 1.0, 0.0, 0.0, 3.0;  // row norms 1 and 3, mean 2
  a.layer_spans = {{0, 2}};
  const auto n = features::normalize_layers(a);
  EXPECT_NEAR(n.values.row(0).norm(), 0.5, 1e-12);
  EXPECT_NEAR(n.values.row(1).norm(), 1.5, 1e-12);
}

TEST(NormalizeLayers, IdempotentOnNormalizedInput) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> normal;
  features::ActivationMatrix a;
  a.values = Eigen::MatrixXd::NullaryExpr(8, 6, [&](Eigen::Index, Eigen::Index) { return normal(rng); });
  a.layer_spans = {{0, 3}, {3, 6}};
  const auto once = features::normalize_layers(a);
  const auto twice = features::normalize_layers(once);
  EXPECT_LT((twice.values - once.values).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(NormalizeLayers, ScaleEquivariantPerBlock) {
  std::mt19937_64 rng(13);
  std::normal_distribution<double> normal;
  features::ActivationMatrix a;
  a.values = Eigen::MatrixXd::NullaryExpr(5, 4, [&](Eigen::Index, Eigen::Index) { return normal(rng); });
  a.layer_spans = {{0, 2}, {2, 4}};
  const auto base = features::normalize_layers(a);
  features::ActivationMatrix scaled = a;
  scaled.values.middleCols(0, 2) *= 7.5;  // scaling one block must not change its output
  const auto after = features::normalize_layers(scaled);
  EXPECT_LT((after.values - base.values).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(NormalizeLayers, AllZeroLayerIsDegenerate) {
  features::ActivationMatrix a;
  a.values = Eigen::MatrixXd::Zero(3, 4);
  a.values.middleCols(2, 2).setOnes();
  a.layer_spans = {{0, 2}, {2, 4}};
  try {
    features::normalize_layers(a);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::degenerate_layer);
  }
}

TEST(HrfKernel, ZeroAtOriginUnitPeakNearFiveSecondsWithUndershoot) {
  const HrfSpec spec;
  const auto h = features::hrf_kernel(spec);
  ASSERT_EQ(h.size(), 161u);  // 32 s at 0.2 s plus the origin
  EXPECT_DOUBLE_EQ(h[0], 0.0);

  std::size_t argmax = 0;
  double peak = h[0];
  for (std::size_t i = 0; i < h.size(); ++i)
    if (h[i] > peak) {
      peak = h[i];
      argmax = i;
    }
  const double t_peak = static_cast<double>(argmax) * spec.dt_s;
  EXPECT_GE(t_peak, 4.8);
  EXPECT_LE(t_peak, 5.2);
  EXPECT_DOUBLE_EQ(peak, 1.0);

  double undershoot_min = 0.0;
  for (std::size_t i = 0; i < h.size(); ++i) {
    const double t = static_cast<double>(i) * spec.dt_s;
    if (t >= 10.0 && t <= 25.0) undershoot_min = std::min(undershoot_min, h[i]);
  }
  EXPECT_LT(undershoot_min, 0.0);
}

TEST(ConvolveEvents, UnitImpulseAtOriginReproducesKernelExactly) {
  const HrfSpec spec;
  const auto kernel = features::hrf_kernel(spec);
  const auto events = make_events({{0.0, 0.0}});
  const std::vector<double> amp = {1.0};
  const auto out = features::convolve_events(events, amp, spec, 60.0);
  ASSERT_EQ(out.size(), 300u);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double expected = i < kernel.size() ? kernel[i] : 0.0;
    EXPECT_EQ(out[i], expected) << "sample " << i;
  }
}

TEST(ConvolveEvents, ZeroAmplitudesGiveZeroSeries) {
  const HrfSpec spec;
  const auto events = make_events({{0.5, 0.7}, {1.0, 1.2}});
  const std::vector<double> amp = {0.0, 0.0};
  for (double v : features::convolve_events(events, amp, spec, 30.0)) EXPECT_EQ(v, 0.0);
}

// Oracle: the response of several impulses is the sum of shifted kernels.
TEST(ConvolveEvents, OverlappingImpulsesMatchShiftedKernelSum) {
  const HrfSpec spec;
  const auto kernel = features::hrf_kernel(spec);
  const auto events = make_events({{1.0, 1.2}, {2.4, 2.6}});
  const std::vector<double> amp = {0.7, -1.3};
  const double duration = 40.0;
  const auto out = features::convolve_events(events, amp, spec, duration);

  const auto n = out.size();
  std::vector<double> oracle(n, 0.0);
  for (std::size_t e = 0; e < events.size(); ++e) {
    const auto cell = static_cast<std::size_t>(std::floor(events.offset_s[e] / spec.dt_s + 1e-6));
    for (std::size_t k = 0; k < kernel.size() && cell + k < n; ++k)
      oracle[cell + k] += amp[e] * kernel[k];
  }
  for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(out[i], oracle[i], 1e-12);
}

TEST(ConvolveEvents, OffsetBeyondRunIsRejected) {
  const HrfSpec spec;
  const auto events = make_events({{0.5, 31.0}});
  const std::vector<double> amp = {1.0};
  try {
    features::convolve_events(events, amp, spec, 30.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::offset_beyond_run);
  }
}

TEST(ResampleAndCenter, ConstantSeriesBecomesZeros) {
  const std::vector<double> fine(100, 3.25);
  const auto out = features::resample_and_center(fine, 0.2, 2.0, 10);
  for (double v : out) EXPECT_NEAR(v, 0.0, 1e-12);
}

TEST(ResampleAndCenter, LinearRampIsAffineAndMeanZero) {
  std::vector<double> fine(200);
  for (std::size_t i = 0; i < fine.size(); ++i) fine[i] = 0.2 * static_cast<double>(i);
  const auto out = features::resample_and_center(fine, 0.2, 2.0, 15);
  double mean = 0.0;
  for (double v : out) mean += v;
  EXPECT_NEAR(mean / static_cast<double>(out.size()), 0.0, 1e-12);
  for (std::size_t k = 1; k + 1 < out.size(); ++k)
    EXPECT_NEAR(out[k + 1] - out[k], out[1] - out[0], 1e-12);
}

// Index-arithmetic oracle: decimation picks every (TR/dt)-th fine sample.
TEST(ResampleAndCenter, DecimatesKernelResponseAtExactGridPoints) {
  const HrfSpec spec;
  const auto events = make_events({{0.0, 0.0}});
  const std::vector<double> amp = {1.0};
  const auto fine = features::convolve_events(events, amp, spec, 40.0);
  const int n_scans = 20;
  const auto out = features::resample_and_center(fine, spec.dt_s, 2.0, n_scans);

  const std::size_t step = 10;  // 2.0 / 0.2
  double mean = 0.0;
  for (int k = 0; k < n_scans; ++k) mean += fine[static_cast<std::size_t>(k) * step];
  mean /= n_scans;
  for (int k = 0; k < n_scans; ++k)
    EXPECT_EQ(out[static_cast<std::size_t>(k)], fine[static_cast<std::size_t>(k) * step] - mean);
}

TEST(ResampleAndCenter, ScanGridPastSeriesEndRejected) {
  const std::vector<double> fine(50, 1.0);
  EXPECT_THROW(features::resample_and_center(fine, 0.2, 2.0, 6), Error);
  EXPECT_THROW(features::resample_and_center(fine, 0.2, 0.3, 3), Error);  // non-integer ratio
}

namespace {

features::ActivationMatrix single_unit_activations(int n_tokens) {
  features::ActivationMatrix a;
  a.values = Eigen::MatrixXd::Ones(n_tokens, 1);
  a.layer_spans = {{0, 1}};
  return a;
}

}  // namespace

TEST(BuildDesign, SingleTokenColumnIsProportionalToDecimatedKernel) {
  const HrfSpec spec;
  const auto events = make_events({{0.0, 0.0}});
  const auto design = features::build_design(single_unit_activations(1), events, spec, 2.0, 16);
  const auto kernel = features::hrf_kernel(spec);

  std::vector<double> expected(16);
  double mean = 0.0;
  for (int k = 0; k < 16; ++k) {
    const std::size_t idx = static_cast<std::size_t>(k) * 10;
    expected[static_cast<std::size_t>(k)] = idx < kernel.size() ? kernel[idx] : 0.0;
    mean += expected[static_cast<std::size_t>(k)];
  }
  mean /= 16.0;
  for (int k = 0; k < 16; ++k)
    EXPECT_NEAR(design.values(k, 0), expected[static_cast<std::size_t>(k)] - mean, 1e-12);
}

TEST(BuildDesign, ColumnPermutationPermutesDesignColumns) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> normal;
  const auto events = make_events({{0.4, 0.6}, {1.1, 1.3}, {2.0, 2.2}});
  features::ActivationMatrix a;
  a.values = Eigen::MatrixXd::NullaryExpr(3, 3, [&](Eigen::Index, Eigen::Index) { return normal(rng); });
  a.layer_spans = {{0, 3}};

  features::ActivationMatrix permuted = a;
  permuted.values.col(0) = a.values.col(2);
  permuted.values.col(2) = a.values.col(0);

  const HrfSpec spec;
  const auto d1 = features::build_design(a, events, spec, 2.0, 12);
  const auto d2 = features::build_design(permuted, events, spec, 2.0, 12);
  EXPECT_TRUE(d2.values.col(0).isApprox(d1.values.col(2), 1e-14));
  EXPECT_TRUE(d2.values.col(2).isApprox(d1.values.col(0), 1e-14));
  EXPECT_TRUE(d2.values.col(1).isApprox(d1.values.col(1), 1e-14));
}

// Composition oracle: build_design must equal normalize -> convolve ->
// resample applied by hand, column by column.
TEST(BuildDesign, MatchesCompositionOfSubOperations) {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> normal;
  const auto events = make_events({{0.3, 0.5}, {1.7, 1.9}, {3.0, 3.3}});
  features::ActivationMatrix a;
  a.values = Eigen::MatrixXd::NullaryExpr(3, 2, [&](Eigen::Index, Eigen::Index) { return normal(rng); });
  a.layer_spans = {{0, 2}};
  const HrfSpec spec;
  const int n_scans = 10;

  const auto design = features::build_design(a, events, spec, 2.0, n_scans);

  const auto normalized = features::normalize_layers(a);
  for (int j = 0; j < 2; ++j) {
    std::vector<double> amp(3);
    for (int i = 0; i < 3; ++i) amp[static_cast<std::size_t>(i)] = normalized.values(i, j);
    const auto fine = features::convolve_events(events, amp, spec, 2.0 * n_scans);
    const auto col = features::resample_and_center(fine, spec.dt_s, 2.0, n_scans);
    for (int t = 0; t < n_scans; ++t)
      EXPECT_NEAR(design.values(t, j), col[static_cast<std::size_t>(t)], 1e-12);
  }
}

TEST(BuildDesign, EveryColumnHasZeroMean) {
  std::mt19937_64 rng(23);
  std::normal_distribution<double> normal;
  io::EventTable events;
  double clock = 0.2;
  for (int i = 0; i < 25; ++i) {
    events.tokens.push_back("w");
    events.onset_s.push_back(clock);
    events.offset_s.push_back(clock + 0.2);
    clock += 1.1;
  }
  features::ActivationMatrix a;
  a.values = Eigen::MatrixXd::NullaryExpr(25, 4, [&](Eigen::Index, Eigen::Index) { return normal(rng); });
  a.layer_spans = {{0, 4}};
  const int n_scans = 20;
  const auto design = features::build_design(a, events, features::HrfSpec{}, 2.0, n_scans);
  for (int j = 0; j < 4; ++j)
    EXPECT_LE(std::fabs(design.values.col(j).sum()), 1e-9 * n_scans);
}

// Linearity over amplitudes with normalization held fixed: convolve+resample
// of a+b equals the sum of the two pipelines.
TEST(BuildDesign, ConvolutionPipelineIsLinearInAmplitudes) {
  std::mt19937_64 rng(29);
  std::normal_distribution<double> normal;
  const auto events = make_events({{0.2, 0.4}, {1.0, 1.1}, {2.5, 2.8}, {4.0, 4.4}});
  const HrfSpec spec;
  const int n_scans = 12;
  std::vector<double> a(4), b(4), ab(4);
  for (std::size_t i = 0; i < 4; ++i) {
    a[i] = normal(rng);
    b[i] = normal(rng);
    ab[i] = a[i] + b[i];
  }
  const auto col = [&](const std::vector<double>& amp) {
    const auto fine = features::convolve_events(events, amp, spec, 2.0 * n_scans);
    return features::resample_and_center(fine, spec.dt_s, 2.0, n_scans);
  };
  const auto ca = col(a), cb = col(b), cab = col(ab);
  for (int t = 0; t < n_scans; ++t)
    EXPECT_NEAR(cab[static_cast<std::size_t>(t)],
                ca[static_cast<std::size_t>(t)] + cb[static_cast<std::size_t>(t)], 1e-10);
}
