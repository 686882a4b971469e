#pragma once

#include <charconv>
#include <fstream>
#include <string>

#include <json.hpp>

#include "cogdiag/errors.hpp"
#include "cogdiag/matrix.hpp"

namespace cogdiag {

// Shortest decimal form that parses back to the same double.
inline std::string fmt_double(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline nlohmann::json matrix_to_json(const Matrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (int i = 0; i < m.rows; ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (int j = 0; j < m.cols; ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Matrix matrix_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.empty() || !j[0].is_array()) {
    throw CheckpointError("expected a nested array of matrix rows");
  }
  Matrix m(static_cast<int>(j.size()), static_cast<int>(j[0].size()));
  for (int i = 0; i < m.rows; ++i) {
    if (static_cast<int>(j[i].size()) != m.cols) {
      throw CheckpointError("ragged matrix rows in checkpoint");
    }
    for (int c = 0; c < m.cols; ++c) m(i, c) = j[i][c].get<double>();
  }
  if (!m.all_finite()) throw CheckpointError("non-finite matrix entry in checkpoint");
  return m;
}

inline void write_json_file(const nlohmann::json& j, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << j.dump(1) << '\n';
}

inline nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError("'" + path + "': " + e.what());
  }
}

}  // namespace cogdiag
