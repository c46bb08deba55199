#pragma once

#include <array>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "voxenc/error.hpp"

namespace voxenc::io {

struct RunPaths {
  std::filesystem::path bold;
  std::filesystem::path activations;
  std::filesystem::path events;
};

struct SubjectEntry {
  std::string id;
  std::vector<RunPaths> runs;
};

// Root document of a study: where every run's data lives plus the shared
// acquisition facts. Paths are stored relative to the manifest and resolved
// on read; read_manifest fails fast on any dangling reference.
struct StudyManifest {
  double tr_seconds = 2.0;
  int runs_per_subject = 9;
  std::string model_tag;
  std::filesystem::path mask_path;
  std::array<double, 3> voxel_size_mm{3.0, 3.0, 3.0};
  std::vector<std::pair<int, int>> layer_spans;  // empty means one span over all columns
  std::vector<SubjectEntry> subjects;
};

namespace detail {

inline std::string relative_to(const std::filesystem::path& p, const std::filesystem::path& base) {
  const auto rel = std::filesystem::relative(p, base);
  return rel.empty() ? p.generic_string() : rel.generic_string();
}

inline const nlohmann::json& field(const nlohmann::json& j, const char* key) {
  require(j.contains(key), Errc::missing_field, std::string("manifest missing '") + key + "'");
  return j.at(key);
}

}  // namespace detail

inline StudyManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), Errc::io_failure, "cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    raise(Errc::bad_manifest, "bad manifest JSON: " + std::string(e.what()));
  }

  const auto base = path.parent_path();
  StudyManifest m;
  m.tr_seconds = detail::field(j, "tr_seconds").get<double>();
  m.runs_per_subject = detail::field(j, "runs_per_subject").get<int>();
  require(m.tr_seconds > 0.0, Errc::bad_manifest, "tr_seconds must be positive");
  require(m.runs_per_subject >= 3, Errc::too_few_runs,
          "nested cross-validation needs at least 3 runs per subject");
  m.mask_path = base / detail::field(j, "mask").get<std::string>();
  if (j.contains("model")) m.model_tag = j["model"].get<std::string>();
  if (j.contains("voxel_size_mm")) {
    for (int i = 0; i < 3; ++i)
      m.voxel_size_mm[static_cast<std::size_t>(i)] = j["voxel_size_mm"][i].get<double>();
  }
  if (j.contains("layer_spans")) {
    for (const auto& span : j["layer_spans"])
      m.layer_spans.emplace_back(span[0].get<int>(), span[1].get<int>());
  }

  for (const auto& js : detail::field(j, "subjects")) {
    SubjectEntry s;
    s.id = detail::field(js, "id").get<std::string>();
    for (const auto& jr : detail::field(js, "runs")) {
      RunPaths r;
      r.bold = base / detail::field(jr, "bold").get<std::string>();
      r.activations = base / detail::field(jr, "activations").get<std::string>();
      r.events = base / detail::field(jr, "events").get<std::string>();
      s.runs.push_back(std::move(r));
    }
    require(static_cast<int>(s.runs.size()) == m.runs_per_subject, Errc::bad_manifest,
            "subject " + s.id + " run count disagrees with runs_per_subject");
    m.subjects.push_back(std::move(s));
  }
  require(!m.subjects.empty(), Errc::bad_manifest, "manifest lists no subjects");

  // Every referenced path must resolve before any computation starts.
  auto check = [](const std::filesystem::path& p) {
    require(std::filesystem::exists(p), Errc::dangling_path, "missing file: " + p.string());
  };
  check(m.mask_path);
  for (const auto& s : m.subjects)
    for (const auto& r : s.runs) {
      check(r.bold);
      check(r.activations);
      check(r.events);
    }
  return m;
}

inline void write_manifest(const StudyManifest& m, const std::filesystem::path& path) {
  const auto base = path.parent_path();
  nlohmann::json j;
  j["tr_seconds"] = m.tr_seconds;
  j["runs_per_subject"] = m.runs_per_subject;
  j["mask"] = detail::relative_to(m.mask_path, base);
  j["voxel_size_mm"] = m.voxel_size_mm;
  if (!m.model_tag.empty()) j["model"] = m.model_tag;
  if (!m.layer_spans.empty()) {
    auto spans = nlohmann::json::array();
    for (const auto& [b, e] : m.layer_spans) spans.push_back({b, e});
    j["layer_spans"] = spans;
  }
  auto subjects = nlohmann::json::array();
  for (const auto& s : m.subjects) {
    nlohmann::json js;
    js["id"] = s.id;
    auto runs = nlohmann::json::array();
    for (const auto& r : s.runs) {
      runs.push_back({{"bold", detail::relative_to(r.bold, base)},
                      {"activations", detail::relative_to(r.activations, base)},
                      {"events", detail::relative_to(r.events, base)}});
    }
    js["runs"] = runs;
    subjects.push_back(js);
  }
  j["subjects"] = subjects;

  std::ofstream out(path, std::ios::trunc);
  require(out.good(), Errc::io_failure, "cannot open " + path.string() + " for writing");
  out << j.dump(2) << '\n';
  require(out.good(), Errc::io_failure, "write failed for " + path.string());
}

}  // namespace voxenc::io
