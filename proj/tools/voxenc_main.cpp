// voxenc: voxelwise encoding-model pipeline over study manifests.
//
// Subcommands compose into the full analysis graph:
//   synth -> build-design -> fit -> group -> select -> overlap -> score ->
//   report -> render
// Summaries go to stdout as JSON, logs to stderr. Exit codes: 0 success,
// 1 usage error, 2 data error, 3 numerical failure.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <string>

#include "voxenc/runner.hpp"

namespace {

voxenc::synth::SynthSpec load_synth_spec(const std::string& path) {
  using voxenc::Errc;
  std::ifstream in(path);
  voxenc::require(in.good(), Errc::io_failure, "cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    voxenc::raise(Errc::bad_spec, "bad spec JSON: " + std::string(e.what()));
  }
  voxenc::synth::SynthSpec spec;
  if (j.contains("seed")) spec.seed = j["seed"].get<std::uint64_t>();
  if (j.contains("n_subjects")) spec.n_subjects = j["n_subjects"].get<int>();
  if (j.contains("n_runs")) spec.n_runs = j["n_runs"].get<int>();
  if (j.contains("n_scans_per_run")) spec.n_scans_per_run = j["n_scans_per_run"].get<int>();
  if (j.contains("d")) spec.d = j["d"].get<int>();
  if (j.contains("n_voxels")) spec.n_voxels = j["n_voxels"].get<std::size_t>();
  if (j.contains("n_signal_voxels")) spec.n_signal_voxels = j["n_signal_voxels"].get<int>();
  if (j.contains("noise_sd")) spec.noise_sd = j["noise_sd"].get<double>();
  if (j.contains("beta_scale")) spec.beta_scale = j["beta_scale"].get<double>();
  if (j.contains("n_tokens_per_run")) spec.n_tokens_per_run = j["n_tokens_per_run"].get<int>();
  if (j.contains("tr_seconds")) spec.tr_seconds = j["tr_seconds"].get<double>();
  return spec;
}

void add_hrf_flags(CLI::App* cmd, voxenc::features::HrfSpec& hrf) {
  cmd->add_option("--hrf-peak-delay", hrf.peak_delay_s, "Response peak delay in seconds");
  cmd->add_option("--hrf-undershoot-delay", hrf.undershoot_delay_s,
                  "Undershoot delay in seconds");
  cmd->add_option("--hrf-peak-dispersion", hrf.peak_dispersion, "Peak dispersion");
  cmd->add_option("--hrf-undershoot-dispersion", hrf.undershoot_dispersion,
                  "Undershoot dispersion");
  cmd->add_option("--hrf-undershoot-ratio", hrf.undershoot_ratio, "Undershoot ratio");
  cmd->add_option("--hrf-length", hrf.kernel_length_s, "Kernel length in seconds");
  cmd->add_option("--hrf-dt", hrf.dt_s, "Fine sampling step in seconds");
}

int axis_from_name(const std::string& name) {
  if (name == "x" || name == "0") return 0;
  if (name == "y" || name == "1") return 1;
  if (name == "z" || name == "2") return 2;
  voxenc::raise(voxenc::Errc::bad_axis, "axis must be one of x, y, z");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"voxelwise encoding-model pipeline"};
  app.require_subcommand(1);

  // synth
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic study with ground truth");
  std::string synth_spec_path;
  std::string synth_out;
  std::uint64_t synth_seed = 0;
  bool synth_seed_set = false;
  synth_cmd->add_option("--spec", synth_spec_path, "Study spec JSON (defaults when omitted)");
  synth_cmd->add_option("--out", synth_out, "Output directory")->required();
  synth_cmd->add_option("--seed", synth_seed, "Override the spec seed")
      ->each([&](const std::string&) { synth_seed_set = true; });

  // build-design
  auto* design_cmd = app.add_subcommand("build-design", "Build design matrices from a manifest");
  std::string design_manifest, design_out;
  voxenc::features::HrfSpec design_hrf;
  design_cmd->add_option("--manifest", design_manifest, "Study manifest JSON")->required();
  design_cmd->add_option("--out", design_out, "Output directory")->required();
  add_hrf_flags(design_cmd, design_hrf);

  // fit
  auto* fit_cmd = app.add_subcommand("fit", "Fit encoding models with nested cross-validation");
  voxenc::runner::FitOptions fit_options;
  std::string fit_manifest, fit_out;
  double lambda_min = 10.0, lambda_max = 1e5;
  int lambda_count = 10;
  fit_cmd->add_option("--manifest", fit_manifest, "Study manifest JSON")->required();
  fit_cmd->add_option("--out", fit_out, "Output directory")->required();
  fit_cmd->add_option("--lambda-min", lambda_min, "Smallest ridge penalty");
  fit_cmd->add_option("--lambda-max", lambda_max, "Largest ridge penalty");
  fit_cmd->add_option("--lambdas", lambda_count, "Number of log-spaced penalties");
  fit_cmd->add_option("--threads", fit_options.n_threads, "Worker threads");
  add_hrf_flags(fit_cmd, fit_options.hrf);

  // group
  auto* group_cmd = app.add_subcommand("group", "Group-level statistics over subject maps");
  voxenc::runner::GroupOptions group_options;
  std::vector<std::string> group_maps, group_maps_b, group_a_tr, group_a_un, group_b_tr,
      group_b_un;
  std::string group_out;
  group_cmd->add_option("--maps", group_maps, "Per-subject maps (one-sample or contrast A side)");
  group_cmd->add_option("--maps-b", group_maps_b, "Contrast B side");
  group_cmd->add_option("--a-trained", group_a_tr, "Interaction: A trained maps");
  group_cmd->add_option("--a-untrained", group_a_un, "Interaction: A untrained maps");
  group_cmd->add_option("--b-trained", group_b_tr, "Interaction: B trained maps");
  group_cmd->add_option("--b-untrained", group_b_un, "Interaction: B untrained maps");
  group_cmd->add_option("--out", group_out, "Output directory")->required();
  group_cmd->add_option("--fwhm-mm", group_options.fwhm_mm, "Smoothing kernel FWHM in mm");
  group_cmd->add_option("--alpha", group_options.alpha, "Family-wise alpha before correction");
  group_cmd->add_flag("--two-sided", group_options.two_sided, "Two-sided p-values");
  group_cmd->add_option("--threads", group_options.n_threads, "Worker threads");

  // select
  auto* select_cmd = app.add_subcommand("select", "Select the top percentile of a map");
  std::string select_map, select_out;
  double select_pct = 25.0;
  select_cmd->add_option("--map", select_map, "Input map")->required();
  select_cmd->add_option("--pct", select_pct, "Percentile of voxels to keep");
  select_cmd->add_option("--out", select_out, "Output voxel-set JSON")->required();

  // overlap
  auto* overlap_cmd = app.add_subcommand("overlap", "Overlap percentages between voxel sets");
  std::vector<std::string> overlap_sets;
  std::string overlap_out;
  overlap_cmd->add_option("--sets", overlap_sets, "Voxel-set JSON files")->expected(-2);
  overlap_cmd->add_option("--out", overlap_out, "Output CSV table");

  // score
  auto* score_cmd = app.add_subcommand("score", "Mean map value within a voxel set");
  std::string score_map, score_set;
  score_cmd->add_option("--map", score_map, "Input map")->required();
  score_cmd->add_option("--set", score_set, "Voxel-set JSON")->required();

  // report
  auto* report_cmd = app.add_subcommand("report", "Perplexity vs brain-score report");
  std::string report_table, report_out;
  report_cmd->add_option("--table", report_table, "Model table CSV")->required();
  report_cmd->add_option("--out", report_out, "Output directory")->required();

  // render
  auto* render_cmd = app.add_subcommand("render", "Render a map as graymap slices");
  std::string render_map, render_out, render_axis = "z";
  render_cmd->add_option("--map", render_map, "Input map")->required();
  render_cmd->add_option("--axis", render_axis, "Slice axis: x, y or z");
  render_cmd->add_option("--out", render_out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    nlohmann::json summary;
    if (*synth_cmd) {
      voxenc::synth::SynthSpec spec;
      if (!synth_spec_path.empty()) spec = load_synth_spec(synth_spec_path);
      if (synth_seed_set) spec.seed = synth_seed;
      summary = voxenc::runner::run_synth(spec, synth_out);
    } else if (*design_cmd) {
      summary = voxenc::runner::run_build_design(design_manifest, design_out, design_hrf);
    } else if (*fit_cmd) {
      fit_options.manifest_path = fit_manifest;
      fit_options.out_dir = fit_out;
      fit_options.grid = voxenc::encoding::LambdaGrid::log_spaced(lambda_min, lambda_max,
                                                                  lambda_count);
      voxenc::require(fit_options.n_threads >= 1, voxenc::Errc::bad_argument,
                      "--threads must be >= 1");
      summary = voxenc::runner::run_fit(fit_options);
    } else if (*group_cmd) {
      auto to_paths = [](const std::vector<std::string>& v) {
        return std::vector<std::filesystem::path>(v.begin(), v.end());
      };
      group_options.maps = to_paths(group_maps);
      group_options.maps_b = to_paths(group_maps_b);
      group_options.a_trained = to_paths(group_a_tr);
      group_options.a_untrained = to_paths(group_a_un);
      group_options.b_trained = to_paths(group_b_tr);
      group_options.b_untrained = to_paths(group_b_un);
      group_options.out_dir = group_out;
      voxenc::require(group_options.n_threads >= 1, voxenc::Errc::bad_argument,
                      "--threads must be >= 1");
      voxenc::require(!group_options.maps.empty() || !group_options.a_trained.empty(),
                      voxenc::Errc::bad_argument, "group needs --maps or interaction inputs");
      summary = voxenc::runner::run_group(group_options);
    } else if (*select_cmd) {
      summary = voxenc::runner::run_select(select_map, select_pct, select_out);
    } else if (*overlap_cmd) {
      voxenc::require(overlap_sets.size() >= 2, voxenc::Errc::bad_argument,
                      "overlap needs at least 2 sets");
      summary = voxenc::runner::run_overlap(
          std::vector<std::filesystem::path>(overlap_sets.begin(), overlap_sets.end()),
          overlap_out);
    } else if (*score_cmd) {
      summary = voxenc::runner::run_score(score_map, score_set);
    } else if (*report_cmd) {
      summary = voxenc::runner::run_report(report_table, report_out);
    } else if (*render_cmd) {
      summary = voxenc::runner::run_render(render_map, axis_from_name(render_axis), render_out);
    }
    std::cout << summary.dump(2) << std::endl;
    return 0;
  } catch (const voxenc::Error& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return e.is_numerical() ? 3 : 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 2;
  }
}
