#pragma once

#include <charconv>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "outerproj/constraints.hpp"
#include "outerproj/data.hpp"
#include "outerproj/errors.hpp"
#include "outerproj/model.hpp"

namespace outerproj::io {

/// Shortest decimal text that round-trips to the same double.
inline std::string format_double(double x) {
  char buf[32];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, x);
  if (ec != std::errc{}) return "nan";
  return std::string(buf, end);
}

namespace detail {

inline std::string where(const std::filesystem::path& path, std::size_t line) {
  return path.string() + ":" + std::to_string(line) + ": ";
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline double parse_double(std::string_view field, const std::filesystem::path& path, std::size_t line) {
  field = trim(field);
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc{} || ptr != field.data() + field.size() || field.empty()) {
    throw DataError(where(path, line) + "cannot parse number '" + std::string(field) + "'");
  }
  return value;
}

inline std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string() + " for reading");
  return in;
}

}  // namespace detail

/// Writes `content` to a sibling temporary file and renames it over `path`,
/// so readers never observe a partially written file.
inline void write_text(const std::filesystem::path& path, std::string_view content) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open " + tmp.string() + " for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out.flush()) throw DataError("write failed: " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw DataError("cannot move " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

/// Comma-separated numeric rows; every row must have the same width.
inline std::vector<std::vector<double>> read_rows(const std::filesystem::path& path, bool has_header) {
  std::ifstream in = detail::open_in(path);
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (number == 1 && has_header) continue;
    const std::string_view view = detail::trim(line);
    if (view.empty()) continue;
    std::vector<double> row;
    std::size_t start = 0;
    for (;;) {
      const std::size_t comma = view.find(',', start);
      row.push_back(detail::parse_double(view.substr(start, comma == std::string_view::npos ? view.npos : comma - start), path, number));
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw DataError(detail::where(path, number) + "expected " + std::to_string(rows.front().size()) +
                      " columns, found " + std::to_string(row.size()));
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw DataError(path.string() + ": no data rows");
  return rows;
}

/// True when some field of the first non-blank line is not a number.
inline bool has_header_row(const std::filesystem::path& path) {
  std::ifstream in = detail::open_in(path);
  std::string line;
  while (std::getline(in, line)) {
    const std::string_view view = detail::trim(line);
    if (view.empty()) continue;
    std::size_t start = 0;
    for (;;) {
      const std::size_t comma = view.find(',', start);
      const std::string_view field =
          detail::trim(view.substr(start, comma == std::string_view::npos ? view.npos : comma - start));
      double value = 0.0;
      const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
      if (field.empty() || ec != std::errc{} || ptr != field.data() + field.size()) return true;
      if (comma == std::string_view::npos) return false;
      start = comma + 1;
    }
  }
  return false;
}

inline Matrix read_matrix(const std::filesystem::path& path, bool has_header = false) {
  const auto rows = read_rows(path, has_header);
  Matrix X(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows[i].size(); ++j) X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  }
  return X;
}

/// A single column or a single row of numbers.
inline Vector read_vector(const std::filesystem::path& path, bool has_header = false) {
  const Matrix M = read_matrix(path, has_header);
  if (M.cols() != 1 && M.rows() != 1) {
    throw DataError(path.string() + ": expected a single row or column of numbers");
  }
  return M.cols() == 1 ? Vector(M.col(0)) : Vector(M.row(0).transpose());
}

/// Features followed by the label/response in the last column.
inline data::Dataset load_csv(const std::filesystem::path& path, data::Kind kind, bool has_header = false) {
  const Matrix M = read_matrix(path, has_header);
  if (M.cols() < 2) throw DataError(path.string() + ": need at least one feature column and a label column");
  data::Dataset ds{M.leftCols(M.cols() - 1), M.col(M.cols() - 1), kind, std::nullopt};
  if (kind == data::Kind::Labels) {
    for (Eigen::Index i = 0; i < ds.y.size(); ++i) {
      if (ds.y[i] != 1.0 && ds.y[i] != -1.0) {
        throw DataError(detail::where(path, static_cast<std::size_t>(i) + 1 + (has_header ? 1 : 0)) +
                        "label must be -1 or +1");
      }
    }
  }
  return ds;
}

inline void write_matrix(std::ostream& out, const Matrix& X) {
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    for (Eigen::Index j = 0; j < X.cols(); ++j) {
      if (j) out << ',';
      out << format_double(X(i, j));
    }
    out << '\n';
  }
}

inline void write_matrix(const std::filesystem::path& path, const Matrix& X) {
  std::ostringstream out;
  write_matrix(out, X);
  write_text(path, out.str());
}

/// One value per line.
inline void write_vector(const std::filesystem::path& path, const Vector& v) {
  write_matrix(path, Matrix(v));
}

inline void write_csv(const std::filesystem::path& path, const data::Dataset& ds) {
  Matrix M(ds.X.rows(), ds.X.cols() + 1);
  M << ds.X, ds.y;
  write_matrix(path, M);
}

/// Graph file: a `d=<int>` header, then `i<TAB>j[<TAB>sign]` per edge with
/// 0-based indices and sign defaulting to +1. Blank lines and lines starting
/// with '#' are ignored. When `expected_dim` is given it must match the header.
inline FeatureGraph load_graph(const std::filesystem::path& path, std::optional<std::size_t> expected_dim = std::nullopt) {
  std::ifstream in = detail::open_in(path);
  std::string line;
  std::size_t number = 0;
  std::optional<std::size_t> dim;
  std::vector<Edge> edges;
  auto parse_index = [&](std::string_view field) -> long long {
    field = detail::trim(field);
    long long value = 0;
    const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
    if (ec != std::errc{} || ptr != field.data() + field.size() || field.empty()) {
      throw DataError(detail::where(path, number) + "cannot parse integer '" + std::string(field) + "'");
    }
    return value;
  };
  while (std::getline(in, line)) {
    ++number;
    const std::string_view view = detail::trim(line);
    if (view.empty() || view.front() == '#') continue;
    if (!dim) {
      if (view.substr(0, 2) != "d=") throw DataError(detail::where(path, number) + "expected header 'd=<int>'");
      const long long d = parse_index(view.substr(2));
      if (d < 1) throw DataError(detail::where(path, number) + "dimension must be positive");
      dim = static_cast<std::size_t>(d);
      if (expected_dim && *dim != *expected_dim) {
        throw DataError(detail::where(path, number) + "graph dimension " + std::to_string(*dim) +
                        " does not match data dimension " + std::to_string(*expected_dim));
      }
      continue;
    }
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    for (;;) {
      const std::size_t tab = view.find('\t', start);
      fields.push_back(view.substr(start, tab == view.npos ? view.npos : tab - start));
      if (tab == view.npos) break;
      start = tab + 1;
    }
    if (fields.size() < 2 || fields.size() > 3) {
      throw DataError(detail::where(path, number) + "expected 'i<TAB>j[<TAB>sign]'");
    }
    const long long i = parse_index(fields[0]);
    const long long j = parse_index(fields[1]);
    const long long sign = fields.size() == 3 ? parse_index(fields[2]) : 1;
    if (i < 0 || j < 0 || static_cast<std::size_t>(i) >= *dim || static_cast<std::size_t>(j) >= *dim) {
      throw DataError(detail::where(path, number) + "edge index out of range for d = " + std::to_string(*dim));
    }
    if (sign != 1 && sign != -1) throw DataError(detail::where(path, number) + "sign must be 1 or -1");
    edges.push_back({static_cast<std::size_t>(i), static_cast<std::size_t>(j), static_cast<int>(sign)});
  }
  if (!dim) throw DataError(path.string() + ": missing 'd=<int>' header");
  try {
    return FeatureGraph(*dim, std::move(edges));
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

inline void write_graph(const std::filesystem::path& path, const FeatureGraph& graph) {
  std::ostringstream out;
  out << "d=" << graph.dim() << '\n';
  for (const Edge& e : graph.edges()) out << e.from << '\t' << e.to << '\t' << e.sign << '\n';
  write_text(path, out.str());
}

}  // namespace outerproj::io
