#pragma once

// CSV ingestion and export for datasets. Quoted fields follow RFC 4180
// (doubled quotes, embedded separators and newlines); a header row is
// required.

#include <Eigen/Dense>

#include <algorithm>
#include <cerrno>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "emcwm/errors.hpp"
#include "emcwm/model.hpp"

namespace emcwm {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> lines;  // 1-based source line where each row starts
};

inline CsvTable parse_csv(std::string_view text) {
  CsvTable out;
  std::vector<std::string> record;
  std::string field;
  bool in_quotes = false;
  bool field_quoted = false;
  bool record_open = false;
  std::size_t line = 1;
  std::size_t record_line = 1;

  if (text.starts_with("\xEF\xBB\xBF")) text.remove_prefix(3);

  const auto end_field = [&] {
    record.push_back(std::move(field));
    field.clear();
    field_quoted = false;
  };
  const auto end_record = [&] {
    end_field();
    const bool blank = record.size() == 1 && record[0].empty();
    if (!blank) {
      if (out.header.empty()) {
        out.header = std::move(record);
      } else {
        if (record.size() != out.header.size()) {
          throw ParseError("line " + std::to_string(record_line) + ": expected " + std::to_string(out.header.size()) +
                           " fields, found " + std::to_string(record.size()));
        }
        out.rows.push_back(std::move(record));
        out.lines.push_back(record_line);
      }
    }
    record.clear();
    record_open = false;
  };

  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (!record_open) {
      record_open = true;
      record_line = line;
    }
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        if (c == '\n') ++line;
        field.push_back(c);
      }
      continue;
    }
    switch (c) {
      case '"':
        if (!field.empty() || field_quoted)
          throw ParseError("line " + std::to_string(line) + ": stray quote inside an unquoted field");
        in_quotes = true;
        field_quoted = true;
        break;
      case ',':
        end_field();
        break;
      case '\r':
        if (i + 1 < text.size() && text[i + 1] == '\n') break;
        end_record();
        ++line;
        break;
      case '\n':
        end_record();
        ++line;
        break;
      default:
        if (field_quoted) throw ParseError("line " + std::to_string(line) + ": text after a closing quote");
        field.push_back(c);
    }
  }
  if (in_quotes) throw ParseError("line " + std::to_string(record_line) + ": unterminated quoted field");
  if (record_open) end_record();
  if (out.header.empty()) throw ParseError("csv: missing header row");
  return out;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

inline CsvTable read_csv(const std::string& path) { return parse_csv(read_file(path)); }

/// A column chosen by header name or by 0-based position.
struct ColumnRef {
  std::string name;
  std::optional<std::size_t> index;

  static ColumnRef parse(std::string_view text) {
    ColumnRef ref{std::string(text), std::nullopt};
    std::size_t value = 0;
    const auto* last = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(text.data(), last, value);
    if (ec == std::errc{} && ptr == last && !text.empty()) ref.index = value;
    return ref;
  }

  /// Header names win over positions when a header is itself numeric.
  std::size_t resolve(const std::vector<std::string>& header) const {
    for (std::size_t j = 0; j < header.size(); ++j)
      if (header[j] == name) return j;
    if (index && *index < header.size()) return *index;
    throw ValidationError("unknown column '" + name + "'");
  }
};

struct ColumnSpec {
  std::vector<ColumnRef> responses;
  std::vector<ColumnRef> covariates;
  std::optional<ColumnRef> label;

  static std::vector<ColumnRef> parse_list(std::string_view text) {
    std::vector<ColumnRef> out;
    std::size_t start = 0;
    while (start <= text.size()) {
      const auto stop = std::min(text.find(',', start), text.size());
      auto item = text.substr(start, stop - start);
      while (!item.empty() && item.front() == ' ') item.remove_prefix(1);
      while (!item.empty() && item.back() == ' ') item.remove_suffix(1);
      if (item.empty()) throw ValidationError("empty entry in column list '" + std::string(text) + "'");
      out.push_back(ColumnRef::parse(item));
      start = stop + 1;
    }
    return out;
  }
};

namespace detail {

inline double parse_number(const std::string& cell, std::size_t line, const std::string& column) {
  std::string_view s = cell;
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double value = 0.0;
  const auto* last = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), last, value);
  if (s.empty() || ec != std::errc{} || ptr != last || !std::isfinite(value)) {
    throw ParseError("line " + std::to_string(line) + ", column '" + column + "': '" + cell + "' is not a number");
  }
  return value;
}

}  // namespace detail

/// Builds a dataset from a parsed table. Rows keep file order; class labels
/// are numbered by first appearance.
inline Dataset to_dataset(const CsvTable& table, const ColumnSpec& columns) {
  if (columns.responses.empty() || columns.covariates.empty())
    throw ValidationError("at least one response and one covariate column are required");
  std::vector<std::size_t> ry;
  std::vector<std::size_t> rx;
  for (const auto& c : columns.responses) ry.push_back(c.resolve(table.header));
  for (const auto& c : columns.covariates) rx.push_back(c.resolve(table.header));
  std::optional<std::size_t> rl;
  if (columns.label) rl = columns.label->resolve(table.header);

  std::vector<std::size_t> used;
  used.insert(used.end(), ry.begin(), ry.end());
  used.insert(used.end(), rx.begin(), rx.end());
  if (rl) used.push_back(*rl);
  for (std::size_t a = 0; a < used.size(); ++a)
    for (std::size_t b = a + 1; b < used.size(); ++b)
      if (used[a] == used[b]) throw ValidationError("column '" + table.header[used[a]] + "' is selected twice");

  const auto n = static_cast<Eigen::Index>(table.rows.size());
  if (n < 1) throw ValidationError("csv: no data rows");
  Dataset out;
  out.covariates.resize(n, static_cast<Eigen::Index>(rx.size()));
  out.responses.resize(n, static_cast<Eigen::Index>(ry.size()));
  for (auto j : rx) out.covariate_names.push_back(table.header[j]);
  for (auto j : ry) out.response_names.push_back(table.header[j]);
  std::map<std::string, int> class_ids;
  if (rl) out.labels = Labels{};

  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& row = table.rows[static_cast<std::size_t>(i)];
    const auto line = table.lines[static_cast<std::size_t>(i)];
    for (std::size_t k = 0; k < rx.size(); ++k)
      out.covariates(i, static_cast<Eigen::Index>(k)) = detail::parse_number(row[rx[k]], line, table.header[rx[k]]);
    for (std::size_t k = 0; k < ry.size(); ++k)
      out.responses(i, static_cast<Eigen::Index>(k)) = detail::parse_number(row[ry[k]], line, table.header[ry[k]]);
    if (rl) {
      const auto& name = row[*rl];
      auto [it, inserted] = class_ids.emplace(name, static_cast<int>(out.label_names.size()));
      if (inserted) out.label_names.push_back(name);
      out.labels->push_back(it->second);
    }
  }
  return out;
}

inline Dataset load_csv(const std::string& path, const ColumnSpec& columns) {
  return to_dataset(read_csv(path), columns);
}

/// Shortest text that reads back to the same double, capped at 17
/// significant digits.
inline std::string format_double(double v) {
  char buf[32];
  for (int digits = 15; digits <= 17; ++digits) {
    std::snprintf(buf, sizeof buf, "%.*g", digits, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

inline std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

/// Writes covariates, responses and (when present) labels with a header.
inline void write_csv(std::ostream& os, const Dataset& data, const std::string& label_header = "label") {
  std::vector<std::string> header;
  for (Eigen::Index j = 0; j < data.p(); ++j)
    header.push_back(j < static_cast<Eigen::Index>(data.covariate_names.size()) ? data.covariate_names[static_cast<std::size_t>(j)]
                                                                                  : "x" + std::to_string(j + 1));
  for (Eigen::Index j = 0; j < data.d(); ++j)
    header.push_back(j < static_cast<Eigen::Index>(data.response_names.size()) ? data.response_names[static_cast<std::size_t>(j)]
                                                                                 : "y" + std::to_string(j + 1));
  if (data.labels) header.push_back(label_header);
  for (std::size_t j = 0; j < header.size(); ++j) os << (j ? "," : "") << csv_quote(header[j]);
  os << '\n';
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    for (Eigen::Index j = 0; j < data.p(); ++j) os << (j ? "," : "") << format_double(data.covariates(i, j));
    for (Eigen::Index j = 0; j < data.d(); ++j) os << ',' << format_double(data.responses(i, j));
    if (data.labels) {
      const int id = (*data.labels)[static_cast<std::size_t>(i)];
      const bool named = id >= 0 && id < static_cast<int>(data.label_names.size());
      os << ',' << csv_quote(named ? data.label_names[static_cast<std::size_t>(id)] : std::to_string(id));
    }
    os << '\n';
  }
}

inline void write_csv(const std::string& path, const Dataset& data, const std::string& label_header = "label") {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  write_csv(out, data, label_header);
  if (!out) throw Error("write to '" + path + "' failed");
}

struct Standardization {
  Eigen::VectorXd covariate_center, covariate_scale, response_center, response_scale;
};

/// Centers every column and divides by its sample standard deviation
/// (columns with zero spread are only centered).
inline Standardization standardize(Dataset& data) {
  const auto one = [](Eigen::MatrixXd& m, Eigen::VectorXd& center, Eigen::VectorXd& scale) {
    center = m.colwise().mean().transpose();
    m.rowwise() -= center.transpose();
    const double denom = std::max<double>(1.0, static_cast<double>(m.rows() - 1));
    scale = (m.colwise().squaredNorm().transpose() / denom).cwiseSqrt();
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (scale[j] > 0.0) m.col(j) /= scale[j];
      else scale[j] = 1.0;
    }
  };
  Standardization s;
  one(data.covariates, s.covariate_center, s.covariate_scale);
  one(data.responses, s.response_center, s.response_scale);
  return s;
}

/// 64-bit FNV-1a digest, recorded in reports to identify input files.
inline std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

}  // namespace emcwm
