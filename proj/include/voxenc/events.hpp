#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "voxenc/error.hpp"

namespace voxenc::io {

// Word/punctuation timing table aligning the token stream to the scan clock.
// Punctuation tokens are ordinary rows; they carry their own activations.
struct EventTable {
  std::vector<std::string> tokens;
  std::vector<double> onset_s;
  std::vector<double> offset_s;

  std::size_t size() const { return tokens.size(); }
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  require(!quoted, Errc::bad_csv, "unterminated quote");
  fields.push_back(cur);
  return fields;
}

inline std::string csv_quote(const std::string& field) {
  if (field.find_first_of(",\"\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += "\"\"";
    else out += c;
  }
  out += '"';
  return out;
}

inline double parse_time(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    require(used == s.size() && std::isfinite(v), Errc::bad_csv, "bad number in " + what);
    return v;
  } catch (const Error&) {
    throw;
  } catch (...) {
    raise(Errc::bad_csv, "bad number '" + s + "' in " + what);
  }
}

inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace detail

inline EventTable read_events(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), Errc::io_failure, "cannot open " + path.string());
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), Errc::bad_csv, "empty events file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  require(line == "token,onset_s,offset_s", Errc::bad_csv,
          "events header must be 'token,onset_s,offset_s'");

  EventTable table;
  double prev_onset = -1.0;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = detail::split_csv_line(line);
    require(fields.size() == 3, Errc::bad_csv,
            "row " + std::to_string(row) + ": expected 3 fields");
    const double onset = detail::parse_time(fields[1], "row " + std::to_string(row));
    const double offset = detail::parse_time(fields[2], "row " + std::to_string(row));
    require(onset >= 0.0 && offset >= 0.0, Errc::negative_time,
            "row " + std::to_string(row) + ": negative time");
    require(offset >= onset, Errc::bad_interval,
            "row " + std::to_string(row) + ": offset before onset");
    require(onset >= prev_onset, Errc::non_monotonic_onsets,
            "row " + std::to_string(row) + ": onsets must be nondecreasing");
    prev_onset = onset;
    table.tokens.push_back(fields[0]);
    table.onset_s.push_back(onset);
    table.offset_s.push_back(offset);
  }
  return table;
}

inline void write_events(const EventTable& table, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  require(out.good(), Errc::io_failure, "cannot open " + path.string() + " for writing");
  out << "token,onset_s,offset_s\n";
  for (std::size_t i = 0; i < table.size(); ++i) {
    out << detail::csv_quote(table.tokens[i]) << ',' << detail::format_double(table.onset_s[i])
        << ',' << detail::format_double(table.offset_s[i]) << '\n';
  }
  require(out.good(), Errc::io_failure, "write failed for " + path.string());
}

}  // namespace voxenc::io
