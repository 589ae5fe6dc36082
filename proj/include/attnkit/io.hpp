#ifndef ATTNKIT_IO_HPP
#define ATTNKIT_IO_HPP

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "attnkit/types.hpp"

// File plumbing. Numeric text output always uses %.17g so doubles survive a
// write/read round trip bit-exactly; nothing here embeds timestamps or other
// run-varying state, so reruns of the same config produce identical bytes.

namespace attnkit {
namespace io {

using json = nlohmann::json;

inline void ensure_parent_dir(const std::string& path) {
  std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
}

inline std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

inline void write_text_file(const std::string& path, const std::string& text) {
  ensure_parent_dir(path);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path);
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open for reading: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Matrix CSV: one row per line, no header.
inline void write_matrix_csv(const std::string& path, const Matrix& m) {
  std::string text;
  text.reserve(static_cast<size_t>(m.rows) * m.cols * 20);
  for (int i = 0; i < m.rows; ++i) {
    for (int j = 0; j < m.cols; ++j) {
      if (j) text += ',';
      text += format_double(m(i, j));
    }
    text += '\n';
  }
  write_text_file(path, text);
}

inline Matrix read_matrix_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open for reading: " + path);
  std::vector<Vec> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    Vec row;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) {
      size_t used = 0;
      row.push_back(std::stod(cell, &used));
      if (used == 0) throw std::runtime_error("bad CSV cell in " + path);
    }
    if (!rows.empty() && row.size() != rows.front().size())
      throw std::runtime_error("ragged CSV rows in " + path);
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw std::runtime_error("empty CSV: " + path);
  Matrix m(static_cast<int>(rows.size()), static_cast<int>(rows.front().size()));
  for (size_t i = 0; i < rows.size(); ++i) m.set_row(static_cast<int>(i), rows[i]);
  return m;
}

// Hard path CSV: header + one (step, position) line per step, 1-based.
inline void write_path_csv(const std::string& path, const std::vector<int>& positions) {
  std::string text = "step,position\n";
  for (size_t k = 0; k < positions.size(); ++k) {
    text += std::to_string(k + 1);
    text += ',';
    text += std::to_string(positions[k]);
    text += '\n';
  }
  write_text_file(path, text);
}

inline std::vector<int> read_path_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open for reading: " + path);
  std::string line;
  if (!std::getline(in, line) || line.rfind("step,position", 0) != 0)
    throw std::runtime_error("bad path CSV header in " + path);
  std::vector<int> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto comma = line.find(',');
    if (comma == std::string::npos) throw std::runtime_error("bad path CSV row in " + path);
    out.push_back(std::stoi(line.substr(comma + 1)));
  }
  return out;
}

inline void write_json_file(const std::string& path, const json& j) {
  write_text_file(path, j.dump(2) + "\n");
}

inline json read_json_file(const std::string& path) {
  return json::parse(read_text_file(path));
}

inline json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (int i = 0; i < m.rows; ++i) {
    json row = json::array();
    for (int j = 0; j < m.cols; ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Matrix matrix_from_json(const json& rows) {
  if (!rows.is_array() || rows.empty() || !rows.front().is_array())
    throw std::runtime_error("expected a non-empty array of arrays");
  Matrix m(static_cast<int>(rows.size()), static_cast<int>(rows.front().size()));
  for (int i = 0; i < m.rows; ++i) {
    const auto& row = rows[i];
    if (static_cast<int>(row.size()) != m.cols) throw std::runtime_error("ragged matrix rows");
    for (int j = 0; j < m.cols; ++j) m(i, j) = row[j].get<double>();
  }
  return m;
}

// FNV-1a over the canonical (sorted-key, compact) JSON dump. Used to tag run
// manifests with the exact configuration that produced them.
inline uint64_t config_hash(const json& j) {
  const std::string s = j.dump();
  uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::string config_hash_hex(const json& j) {
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(config_hash(j)));
  return buf;
}

}  // namespace io
}  // namespace attnkit

#endif  // ATTNKIT_IO_HPP
