#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "voxenc/encoding.hpp"
#include "voxenc/error.hpp"
#include "voxenc/features.hpp"
#include "voxenc/groupstats.hpp"
#include "voxenc/grid.hpp"
#include "voxenc/manifest.hpp"
#include "voxenc/preprocess.hpp"
#include "voxenc/reporting.hpp"
#include "voxenc/synth.hpp"
#include "voxenc/voxelsel.hpp"

// Top-level pipeline steps behind the CLI subcommands. Each takes validated
// options, writes its artifacts under an output directory, and returns a
// machine-readable summary. File contents never embed absolute paths, so
// output trees are byte-comparable across runs and directories.
namespace voxenc::runner {

namespace fs = std::filesystem;

inline void write_json_file(const nlohmann::json& j, const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  require(out.good(), Errc::io_failure, "cannot open " + path.string() + " for writing");
  out << j.dump(2) << '\n';
  require(out.good(), Errc::io_failure, "write failed for " + path.string());
}

// --- synth -------------------------------------------------------------------

inline nlohmann::json run_synth(const synth::SynthSpec& spec, const fs::path& out_dir) {
  const auto study = synth::gen_study(spec, out_dir);
  nlohmann::json j;
  j["command"] = "synth";
  j["manifest"] = study.manifest_path.string();
  j["n_subjects"] = spec.n_subjects;
  j["n_runs"] = spec.n_runs;
  j["n_voxels"] = study.grid.n_voxels();
  j["n_signal_voxels"] = study.truth.signal_set.size();
  j["seed"] = spec.seed;
  return j;
}

// --- build-design ------------------------------------------------------------

struct DesignCacheKey {
  std::string activations;
  std::string events;
  int n_scans;
  bool operator<(const DesignCacheKey& o) const {
    return std::tie(activations, events, n_scans) < std::tie(o.activations, o.events, o.n_scans);
  }
};

// Builds the design for one run, memoized on (activations, events, scans):
// studies where subjects share the stimulus build each run once.
class DesignBuilder {
 public:
  DesignBuilder(const io::StudyManifest& manifest, features::HrfSpec hrf, int n_threads = 1)
      : manifest_(manifest), hrf_(hrf), n_threads_(n_threads) {
    hrf_.validate();
    if (manifest.layer_spans.empty()) spans_ = {};
    else spans_ = manifest.layer_spans;
  }

  const Eigen::MatrixXd& design_for(const io::RunPaths& run, int n_scans) {
    DesignCacheKey key{run.activations.string(), run.events.string(), n_scans};
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;

    features::ActivationMatrix am;
    am.values = io::to_matrix(io::read_array(run.activations));
    am.layer_spans = spans_.empty()
                         ? std::vector<std::pair<int, int>>{{0, static_cast<int>(am.values.cols())}}
                         : spans_;
    const auto events = io::read_events(run.events);
    auto design =
        features::build_design(am, events, hrf_, manifest_.tr_seconds, n_scans, n_threads_)
            .values;
    return cache_.emplace(std::move(key), std::move(design)).first->second;
  }

 private:
  const io::StudyManifest& manifest_;
  features::HrfSpec hrf_;
  int n_threads_;
  std::vector<std::pair<int, int>> spans_;
  std::map<DesignCacheKey, Eigen::MatrixXd> cache_;
};

inline nlohmann::json run_build_design(const fs::path& manifest_path, const fs::path& out_dir,
                                       const features::HrfSpec& hrf) {
  hrf.validate();
  const auto manifest = io::read_manifest(manifest_path);
  fs::create_directories(out_dir);
  DesignBuilder builder(manifest, hrf);
  std::size_t written = 0;
  for (const auto& subject : manifest.subjects) {
    const auto subject_dir = out_dir / subject.id;
    fs::create_directories(subject_dir);
    for (std::size_t r = 0; r < subject.runs.size(); ++r) {
      const auto bold = io::read_array(subject.runs[r].bold);
      require(bold.shape.size() == 2, Errc::bad_shape, "BOLD arrays must be 2-D");
      const auto n_scans = static_cast<int>(bold.shape[0]);
      const auto& design = builder.design_for(subject.runs[r], n_scans);
      char name[32];
      std::snprintf(name, sizeof(name), "run-%02zu_design.npy", r + 1);
      io::write_array(io::from_matrix(design), subject_dir / name);
      ++written;
    }
  }
  nlohmann::json j;
  j["command"] = "build-design";
  j["n_designs"] = written;
  j["out"] = out_dir.string();
  return j;
}

// --- fit ---------------------------------------------------------------------

struct FitOptions {
  fs::path manifest_path;
  fs::path out_dir;
  encoding::LambdaGrid grid = encoding::LambdaGrid::defaults();
  features::HrfSpec hrf{};
  int n_threads = 1;
};

inline nlohmann::json run_fit(const FitOptions& options) {
  options.hrf.validate();
  require(options.n_threads >= 1, Errc::bad_argument, "thread count must be >= 1");
  const auto manifest = io::read_manifest(options.manifest_path);
  const auto grid =
      io::VoxelGrid::from_mask(io::read_array(manifest.mask_path), manifest.voxel_size_mm);
  fs::create_directories(options.out_dir);

  DesignBuilder builder(manifest, options.hrf, options.n_threads);
  const auto plan = encoding::make_cv_plan(manifest.runs_per_subject);

  nlohmann::json report;
  report["lambda_grid"] = options.grid.values;
  auto per_subject = nlohmann::json::array();
  auto map_names = nlohmann::json::array();

  for (const auto& subject : manifest.subjects) {
    std::vector<Eigen::MatrixXd> designs, bold;
    designs.reserve(subject.runs.size());
    bold.reserve(subject.runs.size());
    std::vector<std::size_t> degenerate;
    for (const auto& run : subject.runs) {
      Eigen::MatrixXd y = io::to_matrix(io::read_array(run.bold));
      require(static_cast<std::size_t>(y.cols()) == grid.n_voxels(), Errc::mismatched_shape,
              "BOLD voxel count does not match the mask");
      const auto degen = preprocess::preprocess_bold(y);
      degenerate.insert(degenerate.end(), degen.begin(), degen.end());
      designs.push_back(builder.design_for(run, static_cast<int>(y.rows())));
      bold.push_back(std::move(y));
    }
    auto result =
        encoding::nested_cv_fit(designs, bold, options.grid, plan, options.n_threads);

    const std::string map_name = subject.id + "_rmap.npy";
    io::write_map(result.r_map, grid, options.out_dir / map_name, subject.id,
                  manifest.model_tag);
    map_names.push_back(map_name);

    std::vector<std::size_t> excluded_indices;
    for (std::size_t v = 0; v < result.excluded.size(); ++v)
      if (result.excluded[v]) excluded_indices.push_back(v);
    per_subject.push_back({{"subject", subject.id},
                           {"lambda_counts", result.lambda_counts},
                           {"excluded_voxels", excluded_indices},
                           {"degenerate_bold_columns", degenerate}});
  }
  report["subjects"] = per_subject;
  write_json_file(report, options.out_dir / "fit_report.json");

  nlohmann::json j;
  j["command"] = "fit";
  j["n_subjects"] = manifest.subjects.size();
  j["n_voxels"] = grid.n_voxels();
  j["maps"] = map_names;
  j["report"] = "fit_report.json";
  j["out"] = options.out_dir.string();
  return j;
}

// --- group -------------------------------------------------------------------

struct GroupOptions {
  std::vector<fs::path> maps;       // one-sample, or the A side of a contrast
  std::vector<fs::path> maps_b;     // B side of a contrast
  std::vector<fs::path> a_trained, a_untrained, b_trained, b_untrained;  // interaction
  fs::path out_dir;
  double fwhm_mm = 6.0;
  double alpha = 0.1;
  bool two_sided = false;
  int n_threads = 1;
};

namespace detail {

struct LoadedMaps {
  std::vector<std::vector<double>> values;
  io::VoxelGrid grid;
};

inline LoadedMaps load_maps(const std::vector<fs::path>& paths) {
  require(!paths.empty(), Errc::bad_argument, "no maps given");
  LoadedMaps loaded;
  for (std::size_t i = 0; i < paths.size(); ++i) {
    auto m = io::read_map(paths[i]);
    if (i == 0) loaded.grid = m.grid;
    else
      require(loaded.grid.same_geometry(m.grid), Errc::mismatched_shape,
              "maps come from different grids");
    loaded.values.push_back(std::move(m.values));
  }
  return loaded;
}

}  // namespace detail

inline nlohmann::json run_group(const GroupOptions& options) {
  fs::create_directories(options.out_dir);
  groupstats::StatMap stat;
  io::VoxelGrid grid;
  std::string mode;

  if (!options.a_trained.empty()) {
    mode = "interaction";
    auto a_tr = detail::load_maps(options.a_trained);
    auto a_un = detail::load_maps(options.a_untrained);
    auto b_tr = detail::load_maps(options.b_trained);
    auto b_un = detail::load_maps(options.b_untrained);
    grid = a_tr.grid;
    stat = groupstats::interaction_map(a_tr.values, a_un.values, b_tr.values, b_un.values, grid,
                                       options.fwhm_mm, options.alpha, options.two_sided,
                                       options.n_threads);
  } else if (!options.maps_b.empty()) {
    mode = "contrast";
    auto a = detail::load_maps(options.maps);
    auto b = detail::load_maps(options.maps_b);
    require(a.grid.same_geometry(b.grid), Errc::mismatched_shape,
            "contrast sides come from different grids");
    grid = a.grid;
    stat = groupstats::contrast_map(a.values, b.values, grid, options.fwhm_mm, options.alpha,
                                    options.two_sided, options.n_threads);
  } else {
    mode = "one-sample";
    auto maps = detail::load_maps(options.maps);
    grid = maps.grid;
    std::vector<std::vector<double>> smoothed;
    smoothed.reserve(maps.values.size());
    for (const auto& m : maps.values)
      smoothed.push_back(groupstats::smooth_gaussian(m, grid, options.fwhm_mm,
                                                     options.n_threads));
    stat = groupstats::one_sample_ttest(smoothed, options.two_sided);
    groupstats::apply_bonferroni(stat, options.alpha);
  }

  io::write_map(stat.t_values, grid, options.out_dir / "t.npy");
  io::write_map(stat.p_values, grid, options.out_dir / "p.npy");
  std::vector<double> survived(stat.survived.begin(), stat.survived.end());
  io::write_map(survived, grid, options.out_dir / "survived.npy");

  std::size_t survived_count = 0, flagged_count = 0;
  for (auto s : stat.survived) survived_count += s;
  for (auto f : stat.flagged) flagged_count += f;

  nlohmann::json summary;
  summary["command"] = "group";
  summary["mode"] = mode;
  summary["df"] = stat.df;
  summary["alpha"] = options.alpha;
  summary["corrected_alpha"] = stat.corrected_alpha;
  summary["fwhm_mm"] = options.fwhm_mm;
  summary["two_sided"] = options.two_sided;
  summary["n_voxels"] = stat.p_values.size();
  summary["survived_count"] = survived_count;
  summary["flagged_count"] = flagged_count;
  write_json_file(summary, options.out_dir / "group_summary.json");
  summary["out"] = options.out_dir.string();
  return summary;
}

// --- select / overlap / score --------------------------------------------------

inline nlohmann::json run_select(const fs::path& map_path, double pct, const fs::path& out_path) {
  const auto map = io::read_map(map_path);
  auto set = voxelsel::top_percentile(map.values, pct);
  set.source = map_path.stem().string();
  if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
  voxelsel::write_voxel_set(set, out_path);
  nlohmann::json j;
  j["command"] = "select";
  j["pct"] = pct;
  j["n_selected"] = set.size();
  j["set"] = out_path.string();
  return j;
}

// Overlap table in the published layout: rows/columns are set labels, the
// upper triangle holds pairwise percentages, and a final row reports the
// all-sets overlap.
inline std::string overlap_table_csv(const std::vector<std::string>& labels,
                                     const voxelsel::OverlapResult& overlap) {
  std::string csv = "set";
  for (std::size_t b = 1; b < labels.size(); ++b) csv += "," + labels[b];
  csv += "\n";
  char cell[32];
  for (std::size_t a = 0; a + 1 < labels.size(); ++a) {
    csv += labels[a];
    for (std::size_t b = 1; b < labels.size(); ++b) {
      if (b <= a) {
        csv += ",.";
      } else {
        std::snprintf(cell, sizeof(cell), ",%.1f%%", overlap.pairwise[a][b]);
        csv += cell;
      }
    }
    csv += "\n";
  }
  std::snprintf(cell, sizeof(cell), "%.1f%%", overlap.kway);
  csv += "all," + std::string(cell) + "\n";
  return csv;
}

inline nlohmann::json run_overlap(const std::vector<fs::path>& set_paths,
                                  const fs::path& out_csv) {
  std::vector<voxelsel::VoxelSet> sets;
  std::vector<std::string> labels;
  for (const auto& p : set_paths) {
    sets.push_back(voxelsel::read_voxel_set(p));
    labels.push_back(sets.back().source.empty() ? p.stem().string() : sets.back().source);
  }
  const auto overlap = voxelsel::overlap_percent(sets);
  const std::string csv = overlap_table_csv(labels, overlap);
  if (!out_csv.empty()) {
    if (out_csv.has_parent_path()) fs::create_directories(out_csv.parent_path());
    std::ofstream out(out_csv, std::ios::trunc);
    require(out.good(), Errc::io_failure, "cannot open " + out_csv.string() + " for writing");
    out << csv;
  }
  nlohmann::json j;
  j["command"] = "overlap";
  j["labels"] = labels;
  j["pairwise_percent"] = overlap.pairwise;
  j["kway_percent"] = overlap.kway;
  j["table"] = csv;
  return j;
}

inline nlohmann::json run_score(const fs::path& map_path, const fs::path& set_path) {
  const auto map = io::read_map(map_path);
  const auto set = voxelsel::read_voxel_set(set_path);
  nlohmann::json j;
  j["command"] = "score";
  j["brain_score"] = voxelsel::brain_score(map.values, set);
  j["n_voxels"] = set.size();
  if (!map.subject.empty()) j["subject"] = map.subject;
  if (!map.model.empty()) j["model"] = map.model;
  return j;
}

// --- report / render ------------------------------------------------------------

inline nlohmann::json run_report(const fs::path& table_path, const fs::path& out_dir) {
  const auto records = reporting::load_model_table(table_path);
  const auto report = reporting::build_monotonicity_report(records);
  fs::create_directories(out_dir);
  const auto j = reporting::report_json(report, records);
  write_json_file(j, out_dir / "report.json");

  std::string csv = "lower_class,lower_layers,lower_dataset,lower_ppl,lower_score,"
                    "other_class,other_layers,other_dataset,other_ppl,other_score\n";
  char buf[256];
  for (const auto& c : report.counterexamples) {
    const auto& lo = records[c.lower_ppl_idx];
    const auto& hi = records[c.other_idx];
    std::snprintf(buf, sizeof(buf), "%s,%d,%s,%.6g,%.6g,%s,%d,%s,%.6g,%.6g\n",
                  lo.model_class.c_str(), lo.n_layers, lo.training_dataset.c_str(),
                  lo.perplexity, lo.brain_score, hi.model_class.c_str(), hi.n_layers,
                  hi.training_dataset.c_str(), hi.perplexity, hi.brain_score);
    csv += buf;
  }
  std::ofstream out(out_dir / "counterexamples.csv", std::ios::trunc);
  require(out.good(), Errc::io_failure, "cannot write counterexamples.csv");
  out << csv;

  nlohmann::json summary;
  summary["command"] = "report";
  summary["global_spearman_rho"] = report.global_rho;
  summary["n_records"] = records.size();
  summary["n_counterexamples"] = report.counterexamples.size();
  summary["best_is_same_model"] = report.best_perplexity_idx == report.best_brain_score_idx;
  summary["out"] = out_dir.string();
  return summary;
}

inline nlohmann::json run_render(const fs::path& map_path, int axis, const fs::path& out_dir) {
  const auto map = io::read_map(map_path);
  const auto files = reporting::render_slices(map.values, map.grid, axis, out_dir);
  nlohmann::json j;
  j["command"] = "render";
  j["n_slices"] = files.size();
  j["out"] = out_dir.string();
  return j;
}

}  // namespace voxenc::runner
