#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "voxenc/encoding.hpp"
#include "voxenc/groupstats.hpp"
#include "voxenc/rng.hpp"
#include "voxenc/runner.hpp"
#include "voxenc/synth.hpp"

using namespace voxenc;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "voxenc_synth_tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Per-subject maps straight from a generated study on disk.
std::vector<std::vector<double>> fit_all_subjects(const synth::GeneratedStudy& study,
                                                  int n_threads = 4) {
  const auto manifest = io::read_manifest(study.manifest_path);
  runner::DesignBuilder builder(manifest, features::HrfSpec{});
  const auto plan = encoding::make_cv_plan(manifest.runs_per_subject);
  const auto grid = encoding::LambdaGrid::defaults();
  std::vector<std::vector<double>> maps;
  for (const auto& subject : manifest.subjects) {
    std::vector<Eigen::MatrixXd> designs, bold;
    for (const auto& run : subject.runs) {
      Eigen::MatrixXd y = io::to_matrix(io::read_array(run.bold));
      preprocess::preprocess_bold(y);
      designs.push_back(builder.design_for(run, static_cast<int>(y.rows())));
      bold.push_back(std::move(y));
    }
    maps.push_back(encoding::nested_cv_fit(designs, bold, grid, plan, n_threads).r_map);
  }
  return maps;
}

}  // namespace

// The three published known-answer vectors for the 4x32 10-round generator.
TEST(Philox, MatchesPublishedKnownAnswerVectors) {
  using A4 = std::array<std::uint32_t, 4>;
  EXPECT_EQ(rng::Philox::rounds({0, 0, 0, 0}, {0, 0}),
            (A4{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u}));
  EXPECT_EQ(rng::Philox::rounds({0xFFFFFFFFu, 0xFFFFFFFFu, 0xFFFFFFFFu, 0xFFFFFFFFu},
                                {0xFFFFFFFFu, 0xFFFFFFFFu}),
            (A4{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu}));
  EXPECT_EQ(rng::Philox::rounds({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u},
                                {0xa4093822u, 0x299f31d0u}),
            (A4{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u}));

  // Substreams are reproducible and distinct.
  rng::Substream s(42, 1, 2, rng::Stream::noise);
  const auto a = s.next_u64();
  rng::Substream s2(42, 1, 2, rng::Stream::noise);
  EXPECT_EQ(a, s2.next_u64());
  rng::Substream other(42, 1, 3, rng::Stream::noise);
  EXPECT_NE(a, other.next_u64());
}

TEST(GenStudy, SameSeedIsByteIdentical) {
  synth::SynthSpec spec;
  spec.n_subjects = 2;
  spec.n_runs = 3;
  spec.n_scans_per_run = 20;
  spec.d = 4;
  spec.n_voxels = 27;
  spec.n_signal_voxels = 5;
  spec.n_tokens_per_run = 30;

  const auto dir_a = temp_dir("det_a");
  const auto dir_b = temp_dir("det_b");
  synth::gen_study(spec, dir_a);
  synth::gen_study(spec, dir_b);

  std::vector<fs::path> rel;
  for (const auto& entry : fs::recursive_directory_iterator(dir_a))
    if (entry.is_regular_file()) rel.push_back(fs::relative(entry.path(), dir_a));
  ASSERT_FALSE(rel.empty());
  std::sort(rel.begin(), rel.end());
  for (const auto& r : rel) {
    ASSERT_TRUE(fs::exists(dir_b / r)) << r;
    EXPECT_EQ(slurp(dir_a / r), slurp(dir_b / r)) << r;
  }

  // A different seed changes the data.
  synth::SynthSpec other = spec;
  other.seed = 43;
  const auto dir_c = temp_dir("det_c");
  synth::gen_study(other, dir_c);
  EXPECT_NE(slurp(dir_a / "sub-01" / "run-01_bold.npy"), slurp(dir_c / "sub-01" / "run-01_bold.npy"));
}

TEST(GenStudy, ManifestParsesAndAllPathsResolve) {
  synth::SynthSpec spec;
  spec.n_subjects = 1;
  spec.n_runs = 3;
  spec.n_scans_per_run = 12;
  spec.d = 3;
  spec.n_voxels = 8;
  spec.n_signal_voxels = 2;
  spec.n_tokens_per_run = 15;
  const auto dir = temp_dir("manifest");
  const auto study = synth::gen_study(spec, dir);
  const auto manifest = io::read_manifest(study.manifest_path);  // validates every path
  EXPECT_EQ(manifest.subjects.size(), 1u);
  EXPECT_EQ(manifest.runs_per_subject, 3);
  EXPECT_EQ(manifest.model_tag, "synthetic");
  ASSERT_EQ(manifest.layer_spans.size(), 1u);
  EXPECT_EQ(manifest.layer_spans[0], (std::pair<int, int>{0, 3}));
}

TEST(GenStudy, BoldColumnsPassPreprocessInvariants) {
  synth::SynthSpec spec;
  spec.n_subjects = 1;
  spec.n_runs = 3;
  spec.n_scans_per_run = 40;
  spec.d = 5;
  spec.n_voxels = 30;
  spec.n_signal_voxels = 6;
  spec.n_tokens_per_run = 60;
  const auto dir = temp_dir("invariants");
  const auto study = synth::gen_study(spec, dir);
  for (const auto& run : study.manifest.subjects[0].runs) {
    const Eigen::MatrixXd y = io::to_matrix(io::read_array(run.bold));
    for (Eigen::Index v = 0; v < y.cols(); ++v) {
      const double mean = y.col(v).mean();
      const double var = (y.col(v).array() - mean).square().mean();
      EXPECT_NEAR(mean, 0.0, 1e-9);
      EXPECT_NEAR(var, 1.0, 1e-6);
    }
  }
  // Ground truth invariant: beta is exactly zero outside the signal set.
  const std::set<std::size_t> signal(study.truth.signal_set.indices.begin(),
                                     study.truth.signal_set.indices.end());
  for (Eigen::Index v = 0; v < study.truth.beta_true.cols(); ++v) {
    if (signal.count(static_cast<std::size_t>(v))) continue;
    EXPECT_TRUE((study.truth.beta_true.col(v).array() == 0.0).all());
  }
}

// Long runs keep the per-run detrending distortion far below the 0.001
// budget; at that scale the noiseless pipeline recovers the signal exactly.
TEST(GenStudy, NoiselessStudyRecoversSignalVoxelsAlmostPerfectly) {
  synth::SynthSpec spec;
  spec.n_subjects = 1;
  spec.n_runs = 3;
  spec.n_scans_per_run = 12000;
  spec.d = 10;
  spec.n_voxels = 12;
  spec.n_signal_voxels = 12;  // every voxel carries signal
  spec.n_tokens_per_run = 30000;
  spec.noise_sd = 0.0;
  const auto dir = temp_dir("noiseless");
  const auto study = synth::gen_study(spec, dir);
  const auto maps = fit_all_subjects(study);
  for (double r : maps[0]) {
    ASSERT_TRUE(std::isfinite(r));
    EXPECT_GE(r, 0.999);
  }
}

TEST(GenStudy, ReferenceStudySignalSetIsRecoverableFromTheGroupMeanMap) {
  synth::SynthSpec spec;  // reference parameters
  const auto dir = temp_dir("reference");
  const auto study = synth::gen_study(spec, dir);
  const auto maps = fit_all_subjects(study);

  std::vector<double> group_mean(spec.n_voxels, 0.0);
  for (const auto& m : maps)
    for (std::size_t v = 0; v < group_mean.size(); ++v) group_mean[v] += m[v];
  for (auto& v : group_mean) v /= static_cast<double>(maps.size());

  const double pct = 100.0 * static_cast<double>(spec.n_signal_voxels) /
                     static_cast<double>(spec.n_voxels);
  const auto top = voxelsel::top_percentile(group_mean, pct);
  const std::set<std::size_t> signal(study.truth.signal_set.indices.begin(),
                                     study.truth.signal_set.indices.end());
  std::size_t hits = 0;
  for (auto v : top.indices) hits += signal.count(v);
  EXPECT_GE(static_cast<double>(hits),
            0.9 * static_cast<double>(study.truth.signal_set.size()));
}

TEST(GenPairedStudy, ZeroEffectGivesIdenticalStudiesAndZeroContrast) {
  synth::SynthSpec spec;
  spec.n_subjects = 3;
  spec.n_runs = 3;
  spec.n_scans_per_run = 30;
  spec.d = 4;
  spec.n_voxels = 27;
  spec.n_signal_voxels = 4;
  spec.n_tokens_per_run = 40;
  const auto dir = temp_dir("paired_zero");
  const std::vector<double> no_effect(spec.n_voxels, 0.0);
  const auto [study_a, study_b] = synth::gen_paired_study(spec, no_effect, dir);

  // Shared noise and equal betas: the BOLD files are identical.
  EXPECT_EQ(slurp(study_a.manifest.subjects[0].runs[0].bold),
            slurp(study_b.manifest.subjects[0].runs[0].bold));

  const auto maps_a = fit_all_subjects(study_a);
  const auto maps_b = fit_all_subjects(study_b);
  const auto stat = groupstats::contrast_map(maps_a, maps_b, study_a.grid, 3.0, 0.1);
  for (std::size_t v = 0; v < stat.t_values.size(); ++v) {
    EXPECT_EQ(stat.t_values[v], 0.0);
    EXPECT_FALSE(stat.survived[v]);
  }
}

TEST(GenPairedStudy, PlantedEffectVoxelsDominateTheContrast) {
  synth::SynthSpec spec;  // reference scale keeps the fit fast
  spec.n_subjects = 5;
  const auto dir = temp_dir("paired_effect");
  std::vector<double> effect(spec.n_voxels, 0.0);
  const std::vector<std::size_t> effect_voxels = {3, 17, 42, 77, 101, 120, 151, 163, 180, 197};
  for (auto v : effect_voxels) effect[v] = 3.0;
  const auto [study_a, study_b] = synth::gen_paired_study(spec, effect, dir);

  const auto maps_a = fit_all_subjects(study_a);
  const auto maps_b = fit_all_subjects(study_b);
  // B minus A: the effect raises B's fit on the effect voxels.
  const auto stat = groupstats::contrast_map(maps_b, maps_a, study_a.grid, 3.0, 0.1);

  const std::set<std::size_t> expected(effect_voxels.begin(), effect_voxels.end());
  std::vector<std::size_t> survived;
  for (std::size_t v = 0; v < stat.survived.size(); ++v)
    if (stat.survived[v]) survived.push_back(v);
  ASSERT_FALSE(survived.empty());
  std::size_t inside = 0;
  for (auto v : survived) inside += expected.count(v);
  // The survived set is dominated by the planted effect voxels.
  EXPECT_GE(static_cast<double>(inside), 0.8 * static_cast<double>(survived.size()));
  EXPECT_GE(inside, 8u);
}

TEST(GenPairedStudy, InteractionFixtureRecoversThePlantedEffect) {
  synth::SynthSpec spec;
  spec.n_subjects = 4;
  spec.n_runs = 4;
  spec.n_scans_per_run = 60;
  spec.d = 8;
  spec.n_voxels = 64;
  spec.n_signal_voxels = 8;
  spec.n_tokens_per_run = 90;

  // A pair with a planted "training" effect and a pair without.
  std::vector<double> effect(spec.n_voxels, 0.0);
  const std::vector<std::size_t> effect_voxels = {5, 20, 40, 60};
  for (auto v : effect_voxels) effect[v] = 3.0;

  const auto dir = temp_dir("interaction");
  const auto [a_untrained, a_trained] = synth::gen_paired_study(spec, effect, dir / "a");
  synth::SynthSpec spec_b = spec;
  spec_b.seed = spec.seed + 1000;  // an independent model family
  const std::vector<double> no_effect(spec.n_voxels, 0.0);
  const auto [b_untrained, b_trained] = synth::gen_paired_study(spec_b, no_effect, dir / "b");

  const auto stat = groupstats::interaction_map(
      fit_all_subjects(a_trained), fit_all_subjects(a_untrained), fit_all_subjects(b_trained),
      fit_all_subjects(b_untrained), a_trained.grid, 3.0, 0.1);

  // Every strongly positive interaction voxel is a planted one.
  const auto top = voxelsel::top_percentile(stat.t_values,
                                            100.0 * 4.0 / static_cast<double>(spec.n_voxels));
  const std::set<std::size_t> expected(effect_voxels.begin(), effect_voxels.end());
  std::size_t hits = 0;
  for (auto v : top.indices) hits += expected.count(v);
  EXPECT_GE(hits, 3u);
}

TEST(SynthSpecValidation, RejectsImpossibleSpecs) {
  synth::SynthSpec spec;
  spec.n_signal_voxels = static_cast<int>(spec.n_voxels) + 1;
  EXPECT_THROW(spec.validate(), Error);
  spec = synth::SynthSpec{};
  spec.n_runs = 2;
  EXPECT_THROW(spec.validate(), Error);
  spec = synth::SynthSpec{};
  spec.noise_sd = -1.0;
  EXPECT_THROW(spec.validate(), Error);
}
