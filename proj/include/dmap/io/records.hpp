#pragma once

#include <dmap/error.hpp>
#include <dmap/geo.hpp>
#include <dmap/io/binary.hpp>
#include <dmap/io/format.hpp>

#include <charconv>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace dmap::io {

struct RowError {
  std::size_t line = 0; // 1-based, header is line 1
  std::string reason;
};

template <class Record>
struct ParsedRecords {
  std::vector<Record> records;
  std::vector<RowError> errors;
};

/// Splits one CSV line; double-quoted fields may contain commas and "" escapes.
inline std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> fields(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        fields.back() += '"';
        ++i;
      } else if (ch == '"') {
        quoted = false;
      } else {
        fields.back() += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      fields.emplace_back();
    } else {
      fields.back() += ch;
    }
  }
  return fields;
}

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t'))
    s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

inline bool parse_double(std::string_view s, double& out) {
  s = trim(s);
  if (s.empty())
    return false;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size() && std::isfinite(out);
}

/// Calls on_row(fields, line_number) for each non-blank data row after checking the header.
template <class F>
void scan_csv(const std::string& text, std::string_view expected_header, F&& on_row) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  const auto want = split_csv_line(expected_header);
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty())
      continue;
    if (!header_seen) {
      auto got = split_csv_line(trim(line));
      for (auto& f : got)
        f = std::string(trim(f));
      if (got != want)
        throw ValidationError("CSV: expected header '" + std::string(expected_header) +
                              "', got '" + std::string(trim(line)) + "'");
      header_seen = true;
      continue;
    }
    auto fields = split_csv_line(trim(line));
    on_row(fields, line_no);
  }
  if (!header_seen)
    throw ValidationError("CSV: missing header '" + std::string(expected_header) + "'");
}

} // namespace detail

inline constexpr std::string_view kActivityHeader = "vaccinator_id,lon,lat,timestamp";
inline constexpr std::string_view kSchoolHeader = "school_id,lon,lat";

inline ParsedRecords<geo::ActivityRecord> parse_activities(const std::string& text) {
  ParsedRecords<geo::ActivityRecord> out;
  detail::scan_csv(text, kActivityHeader, [&](const std::vector<std::string>& f, std::size_t line) {
    if (f.size() != 4) {
      out.errors.push_back({line, "expected 4 columns, got " + std::to_string(f.size())});
      return;
    }
    geo::ActivityRecord r;
    r.vaccinator_id = std::string(detail::trim(f[0]));
    if (r.vaccinator_id.empty()) {
      out.errors.push_back({line, "empty vaccinator_id"});
      return;
    }
    if (!detail::parse_double(f[1], r.lon) || !detail::parse_double(f[2], r.lat) ||
        !geo::valid_coordinate(r.lon, r.lat)) {
      out.errors.push_back({line, "invalid coordinates"});
      return;
    }
    const auto t = geo::parse_timestamp(detail::trim(f[3]));
    if (!t) {
      out.errors.push_back({line, "unparseable timestamp '" + f[3] + "'"});
      return;
    }
    r.timestamp = *t;
    out.records.push_back(std::move(r));
  });
  return out;
}

inline ParsedRecords<geo::SchoolRecord> parse_schools(const std::string& text) {
  ParsedRecords<geo::SchoolRecord> out;
  detail::scan_csv(text, kSchoolHeader, [&](const std::vector<std::string>& f, std::size_t line) {
    if (f.size() != 3) {
      out.errors.push_back({line, "expected 3 columns, got " + std::to_string(f.size())});
      return;
    }
    geo::SchoolRecord r;
    r.school_id = std::string(detail::trim(f[0]));
    if (r.school_id.empty()) {
      out.errors.push_back({line, "empty school_id"});
      return;
    }
    if (!detail::parse_double(f[1], r.lon) || !detail::parse_double(f[2], r.lat) ||
        !geo::valid_coordinate(r.lon, r.lat)) {
      out.errors.push_back({line, "invalid coordinates"});
      return;
    }
    out.records.push_back(std::move(r));
  });
  return out;
}

inline ParsedRecords<geo::ActivityRecord> read_activities(const std::string& path) {
  return parse_activities(read_file(path));
}

inline ParsedRecords<geo::SchoolRecord> read_schools(const std::string& path) {
  return parse_schools(read_file(path));
}

inline std::string format_activities(const std::vector<geo::ActivityRecord>& records) {
  std::string out(kActivityHeader);
  out += '\n';
  for (const auto& r : records)
    out += r.vaccinator_id + ',' + format_coord(r.lon) + ',' + format_coord(r.lat) + ',' +
           geo::format_timestamp(r.timestamp) + '\n';
  return out;
}

inline std::string format_schools(const std::vector<geo::SchoolRecord>& records) {
  std::string out(kSchoolHeader);
  out += '\n';
  for (const auto& r : records)
    out += r.school_id + ',' + format_coord(r.lon) + ',' + format_coord(r.lat) + '\n';
  return out;
}

} // namespace dmap::io
