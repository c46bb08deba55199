#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "voxenc/error.hpp"
#include "voxenc/events.hpp"  // csv helpers
#include "voxenc/grid.hpp"

namespace voxenc::reporting {

struct ModelRecord {
  std::string model_class;        // GloVe | LSTM | GPT-2 | BERT
  int n_layers = 0;
  std::string training_dataset;
  std::string dataset_size_label;  // as written, e.g. "4.8G"
  std::uint64_t dataset_size_bytes = 0;
  double perplexity = 0.0;
  double brain_score = 0.0;
};

namespace detail {

inline std::uint64_t parse_size_bytes(const std::string& label) {
  require(!label.empty(), Errc::bad_table, "empty dataset size");
  double multiplier = 1.0;
  std::string digits = label;
  switch (label.back()) {
    case 'K': multiplier = 1e3; digits.pop_back(); break;
    case 'M': multiplier = 1e6; digits.pop_back(); break;
    case 'G': multiplier = 1e9; digits.pop_back(); break;
    default: break;
  }
  try {
    const double v = std::stod(digits);
    require(v > 0.0, Errc::bad_table, "dataset size must be positive");
    return static_cast<std::uint64_t>(std::llround(v * multiplier));
  } catch (const Error&) {
    throw;
  } catch (...) {
    raise(Errc::bad_table, "bad dataset size '" + label + "'");
  }
}

}  // namespace detail

inline std::vector<ModelRecord> load_model_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), Errc::io_failure, "cannot open " + path.string());
  std::string line;
  // Leading comment lines are allowed before the header.
  bool have_header = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    require(line == "model_class,n_layers,training_dataset,dataset_size,perplexity,brain_score",
            Errc::bad_table, "unexpected header: " + line);
    have_header = true;
    break;
  }
  require(have_header, Errc::bad_table, "model table has no header row");

  std::vector<ModelRecord> records;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    const auto fields = io::detail::split_csv_line(line);
    require(fields.size() == 6, Errc::bad_table,
            "row " + std::to_string(row) + ": expected 6 fields");
    ModelRecord r;
    r.model_class = fields[0];
    try {
      r.n_layers = std::stoi(fields[1]);
      r.perplexity = std::stod(fields[4]);
      r.brain_score = std::stod(fields[5]);
    } catch (...) {
      raise(Errc::bad_table, "row " + std::to_string(row) + ": bad numeric field");
    }
    r.training_dataset = fields[2];
    r.dataset_size_label = fields[3];
    r.dataset_size_bytes = detail::parse_size_bytes(fields[3]);
    require(r.n_layers >= 1, Errc::bad_table, "row " + std::to_string(row) + ": bad layer count");
    require(r.perplexity > 1.0, Errc::bad_table,
            "row " + std::to_string(row) + ": perplexity must exceed 1");
    require(r.brain_score >= -1.0 && r.brain_score <= 1.0, Errc::bad_table,
            "row " + std::to_string(row) + ": brain score out of [-1,1]");
    records.push_back(std::move(r));
  }
  require(!records.empty(), Errc::bad_table, "model table has no data rows");
  return records;
}

// Midranks: average rank for ties, 1-based.
inline std::vector<double> midranks(std::span<const double> x) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(x.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
    const double rank = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

// Spearman rank correlation: Pearson correlation of midranks.
inline double spearman_rho(std::span<const double> x, std::span<const double> y) {
  require(x.size() == y.size(), Errc::mismatched_shape, "length mismatch");
  require(x.size() >= 3, Errc::bad_argument, "rank correlation needs at least 3 points");
  const auto rx = midranks(x);
  const auto ry = midranks(y);
  const double n = static_cast<double>(x.size());
  const double mean = (n + 1.0) / 2.0;
  double cov = 0.0, vx = 0.0, vy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    const double a = rx[i] - mean, b = ry[i] - mean;
    cov += a * b;
    vx += a * a;
    vy += b * b;
  }
  require(vx > 0.0 && vy > 0.0, Errc::zero_variance, "all-tied vector has no ranking");
  return cov / std::sqrt(vx * vy);
}

// Does lower perplexity predict higher brain score? The report answers with
// rank correlations (global, per class, per layer count) plus an explicit
// list of cross-class counterexamples: pairs where one model has both lower
// perplexity and lower brain score than the other.
struct MonotonicityReport {
  double global_rho = 0.0;
  std::map<std::string, double> per_class_rho;   // classes with >= 3 records
  std::map<int, double> per_layer_rho;           // layer counts with >= 3 records
  struct Counterexample {
    std::size_t lower_ppl_idx = 0;  // lower perplexity AND lower brain score
    std::size_t other_idx = 0;
  };
  std::vector<Counterexample> counterexamples;
  std::size_t best_perplexity_idx = 0;   // lowest perplexity
  std::size_t best_brain_score_idx = 0;  // highest brain score
};

inline MonotonicityReport build_monotonicity_report(const std::vector<ModelRecord>& records) {
  require(!records.empty(), Errc::bad_table, "no records");
  std::vector<double> ppl(records.size()), score(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    ppl[i] = records[i].perplexity;
    score[i] = records[i].brain_score;
  }

  MonotonicityReport report;
  report.global_rho = spearman_rho(ppl, score);

  auto grouped_rho = [&](auto key_of, auto& out) {
    std::map<std::decay_t<decltype(key_of(records.front()))>, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < records.size(); ++i) groups[key_of(records[i])].push_back(i);
    for (const auto& [key, idx] : groups) {
      if (idx.size() < 3) continue;
      std::vector<double> gp(idx.size()), gs(idx.size());
      for (std::size_t i = 0; i < idx.size(); ++i) {
        gp[i] = ppl[idx[i]];
        gs[i] = score[idx[i]];
      }
      out[key] = spearman_rho(gp, gs);
    }
  };
  grouped_rho([](const ModelRecord& r) { return r.model_class; }, report.per_class_rho);
  grouped_rho([](const ModelRecord& r) { return r.n_layers; }, report.per_layer_rho);

  for (std::size_t i = 0; i < records.size(); ++i)
    for (std::size_t j = 0; j < records.size(); ++j) {
      if (records[i].model_class == records[j].model_class) continue;
      if (ppl[i] < ppl[j] && score[i] < score[j])
        report.counterexamples.push_back({i, j});
    }

  report.best_perplexity_idx = static_cast<std::size_t>(
      std::min_element(ppl.begin(), ppl.end()) - ppl.begin());
  report.best_brain_score_idx = static_cast<std::size_t>(
      std::max_element(score.begin(), score.end()) - score.begin());
  return report;
}

inline nlohmann::json record_json(const ModelRecord& r) {
  return {{"model_class", r.model_class},
          {"n_layers", r.n_layers},
          {"training_dataset", r.training_dataset},
          {"dataset_size", r.dataset_size_label},
          {"dataset_size_bytes", r.dataset_size_bytes},
          {"perplexity", r.perplexity},
          {"brain_score", r.brain_score}};
}

inline nlohmann::json report_json(const MonotonicityReport& report,
                                  const std::vector<ModelRecord>& records) {
  nlohmann::json j;
  j["global_spearman_rho"] = report.global_rho;
  j["per_class_spearman_rho"] = report.per_class_rho;
  nlohmann::json layers = nlohmann::json::object();
  for (const auto& [k, v] : report.per_layer_rho) layers[std::to_string(k)] = v;
  j["per_layer_spearman_rho"] = layers;
  j["best_perplexity"] = record_json(records[report.best_perplexity_idx]);
  j["best_brain_score"] = record_json(records[report.best_brain_score_idx]);
  j["best_is_same_model"] = report.best_perplexity_idx == report.best_brain_score_idx;
  auto cx = nlohmann::json::array();
  for (const auto& c : report.counterexamples)
    cx.push_back({{"lower_both", record_json(records[c.lower_ppl_idx])},
                  {"other", record_json(records[c.other_idx])}});
  j["counterexamples"] = cx;
  j["n_records"] = records.size();
  return j;
}

// --- Slice rendering -------------------------------------------------------------
//
// Plain 8-bit P5 graymaps, one per slice along the chosen axis. Values are
// min-max scaled over the whole in-mask map so slices share one gray scale;
// out-of-mask (and non-finite) cells render black, and a map with no value
// range renders uniform mid-gray.

inline std::vector<std::filesystem::path> render_slices(const std::vector<double>& map,
                                                        const io::VoxelGrid& grid, int axis,
                                                        const std::filesystem::path& out_dir) {
  require(axis >= 0 && axis <= 2, Errc::bad_axis, "axis must be 0, 1 or 2");
  require(map.size() == grid.n_voxels(), Errc::mismatched_shape, "map length mismatch");
  std::filesystem::create_directories(out_dir);

  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (double v : map)
    if (std::isfinite(v)) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  const bool degenerate = !(hi > lo);

  // Scatter scaled bytes onto the full grid; background stays 0.
  std::vector<std::uint8_t> cells(grid.n_cells(), 0);
  for (std::size_t v = 0; v < map.size(); ++v) {
    std::uint8_t byte = 128;
    if (!std::isfinite(map[v])) byte = 0;
    else if (!degenerate)
      byte = static_cast<std::uint8_t>(std::llround(255.0 * (map[v] - lo) / (hi - lo)));
    cells[grid.voxel_cells[v]] = byte;
  }

  // Rows/cols per axis: z-slice -> (y, x), y-slice -> (z, x), x-slice -> (z, y).
  const std::size_t nx = grid.dims[0], ny = grid.dims[1], nz = grid.dims[2];
  std::size_t n_slices, n_rows, n_cols;
  if (axis == 0) { n_slices = nx; n_rows = nz; n_cols = ny; }
  else if (axis == 1) { n_slices = ny; n_rows = nz; n_cols = nx; }
  else { n_slices = nz; n_rows = ny; n_cols = nx; }

  const char axis_name[3] = {'x', 'y', 'z'};
  std::vector<std::filesystem::path> files;
  for (std::size_t s = 0; s < n_slices; ++s) {
    char name[48];
    std::snprintf(name, sizeof(name), "slice_%c_%03zu.pgm", axis_name[axis], s);
    const auto path = out_dir / name;
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    require(out.good(), Errc::io_failure, "cannot open " + path.string() + " for writing");
    out << "P5\n" << n_cols << ' ' << n_rows << "\n255\n";
    for (std::size_t row = 0; row < n_rows; ++row)
      for (std::size_t col = 0; col < n_cols; ++col) {
        std::size_t x, y, z;
        if (axis == 0) { x = s; y = col; z = row; }
        else if (axis == 1) { x = col; y = s; z = row; }
        else { x = col; y = row; z = s; }
        out.put(static_cast<char>(cells[grid.cell_index(x, y, z)]));
      }
    require(out.good(), Errc::io_failure, "write failed for " + path.string());
    files.push_back(path);
  }
  return files;
}

}  // namespace voxenc::reporting
