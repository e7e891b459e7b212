#pragma once

// On-disk formats: count CSVs and sectioned `key = value` records. Each file starts
// with a versioned schema line. Files are written to a temporary sibling and renamed.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "loopmem/config.hpp"
#include "loopmem/errors.hpp"

namespace loopmem {

inline constexpr std::string_view kCountsSchema = "loopmem-counts/1";
inline constexpr std::string_view kRecordSchema = "loopmem-record/1";
inline constexpr std::string_view kCountsHeader = "round,slot,counts,expected,poisson_err";

inline void atomic_write(const std::filesystem::path& path, const std::string& content) {
  namespace fs = std::filesystem;
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  if (ec) throw IoError("cannot create directory " + path.parent_path().string() + ": " + ec.message());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out << content;
    out.flush();
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw IoError("cannot move output into place at " + path.string());
  }
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------- counts CSV

struct CountsRow {
  int round = 0;
  std::string slot;
  double counts = 0.0;  // integer for sampled runs, expectation in exact mode
  double expected = 0.0;
  double poisson_err = 0.0;
};

struct CountsTable {
  std::map<std::string, std::string> meta;  // key=value pairs from the schema line
  std::vector<CountsRow> rows;

  std::vector<const CountsRow*> slot_rows(std::string_view slot) const {
    std::vector<const CountsRow*> out;
    for (const auto& r : rows) {
      if (r.slot == slot) out.push_back(&r);
    }
    return out;
  }

  double meta_number(const std::string& key) const {
    auto it = meta.find(key);
    if (it == meta.end()) throw ParseError("counts file has no '" + key + "' in its header", 1);
    return parse_double(it->second, 1);
  }
};

inline std::string write_counts_csv(const CountsTable& table) {
  std::ostringstream out;
  out << "# " << kCountsSchema;
  for (const auto& [k, v] : table.meta) out << ' ' << k << '=' << v;
  out << '\n' << kCountsHeader << '\n';
  for (const auto& r : table.rows) {
    out << r.round << ',' << r.slot << ',' << format_double(r.counts) << ','
        << format_double(r.expected) << ',' << format_double(r.poisson_err) << '\n';
  }
  return out.str();
}

inline CountsTable parse_counts_csv(std::istream& in) {
  CountsTable table;
  std::string line;
  std::size_t n = 0;
  bool have_schema = false;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++n;
    std::string_view text = trim(line);
    if (text.empty()) continue;
    if (text.front() == '#') {
      std::istringstream words{std::string(text.substr(1))};
      std::string word;
      words >> word;
      if (word == kCountsSchema) {
        have_schema = true;
        while (words >> word) {
          const auto eq = word.find('=');
          if (eq == std::string::npos) throw ParseError("malformed header field '" + word + "'", n);
          table.meta[word.substr(0, eq)] = word.substr(eq + 1);
        }
      }
      continue;
    }
    if (!have_header) {
      if (text != kCountsHeader) {
        throw ParseError("expected header '" + std::string(kCountsHeader) + "'", n);
      }
      have_header = true;
      continue;
    }
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
      const auto comma = text.find(',', start);
      fields.push_back(trim(text.substr(start, comma - start)));
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    if (fields.size() != 5) {
      throw ParseError("expected 5 fields, got " + std::to_string(fields.size()), n);
    }
    CountsRow row;
    const auto round = parse_int(fields[0], n);
    if (round < 0) throw ParseError("round must be >= 0", n);
    row.round = static_cast<int>(round);
    row.slot = std::string(fields[1]);
    if (row.slot.empty()) throw ParseError("empty slot label", n);
    row.counts = parse_double(fields[2], n);
    row.expected = parse_double(fields[3], n);
    row.poisson_err = parse_double(fields[4], n);
    if (!(row.counts >= 0.0) || !std::isfinite(row.counts)) {
      throw ParseError("counts must be finite and >= 0", n);
    }
    table.rows.push_back(std::move(row));
  }
  if (!have_schema) throw ParseError("missing '# " + std::string(kCountsSchema) + "' line", 1);
  if (!have_header) throw ParseError("missing column header", n);
  return table;
}

inline CountsTable parse_counts_csv(const std::string& text) {
  std::istringstream in(text);
  return parse_counts_csv(in);
}

// ---------------------------------------------------------------- records

/// Ordered `[section]` blocks of `key = value` lines. Section names may repeat.
struct Record {
  struct Section {
    std::string name;
    std::vector<std::pair<std::string, std::string>> entries;
    std::size_t line = 0;

    Section& set(std::string key, std::string value) {
      entries.emplace_back(std::move(key), std::move(value));
      return *this;
    }
    Section& set(std::string key, double value) { return set(std::move(key), format_double(value)); }
    Section& set(std::string key, int value) { return set(std::move(key), std::to_string(value)); }
    Section& set(std::string key, std::int64_t value) {
      return set(std::move(key), std::to_string(value));
    }
    Section& set(std::string key, std::uint64_t value) {
      return set(std::move(key), std::to_string(value));
    }
    Section& set(std::string key, const char* value) { return set(std::move(key), std::string(value)); }

    bool has(std::string_view key) const {
      for (const auto& [k, v] : entries) {
        if (k == key) return true;
      }
      return false;
    }

    const std::string& get(std::string_view key) const {
      for (const auto& [k, v] : entries) {
        if (k == key) return v;
      }
      throw ParseError("section [" + name + "] has no key '" + std::string(key) + "'", line);
    }

    double number(std::string_view key) const { return parse_double(get(key), line); }
    std::int64_t integer(std::string_view key) const { return parse_int(get(key), line); }
  };

  std::string kind;  // follows the schema on the first line
  std::vector<Section> sections;

  Section& add(std::string name) {
    sections.push_back({std::move(name), {}, 0});
    return sections.back();
  }

  std::vector<const Section*> all(std::string_view name) const {
    std::vector<const Section*> out;
    for (const auto& s : sections) {
      if (s.name == name) out.push_back(&s);
    }
    return out;
  }

  const Section& first(std::string_view name) const {
    for (const auto& s : sections) {
      if (s.name == name) return s;
    }
    throw ParseError("record has no [" + std::string(name) + "] section", 0);
  }
};

inline std::string write_record(const Record& record) {
  std::ostringstream out;
  out << "# " << kRecordSchema << ' ' << record.kind << '\n';
  for (const auto& s : record.sections) {
    out << "\n[" << s.name << "]\n";
    for (const auto& [k, v] : s.entries) out << k << " = " << v << '\n';
  }
  return out.str();
}

inline Record parse_record(std::istream& in) {
  Record record;
  std::string raw;
  std::size_t n = 0;
  bool have_schema = false;
  while (std::getline(in, raw)) {
    ++n;
    std::string_view text = trim(raw);
    if (text.empty()) continue;
    if (text.front() == '#') {
      std::istringstream words{std::string(text.substr(1))};
      std::string schema;
      words >> schema;
      if (schema == kRecordSchema) {
        have_schema = true;
        words >> record.kind;
      }
      continue;
    }
    if (!have_schema) throw ParseError("missing '# " + std::string(kRecordSchema) + "' line", n);
    if (text.front() == '[') {
      if (text.back() != ']' || text.size() < 3) throw ParseError("malformed section header", n);
      record.add(std::string(text.substr(1, text.size() - 2))).line = n;
      continue;
    }
    const auto eq = text.find('=');
    if (eq == std::string_view::npos) throw ParseError("expected 'key = value'", n);
    if (record.sections.empty()) throw ParseError("entry outside of any [section]", n);
    const std::string key(trim(text.substr(0, eq)));
    if (key.empty()) throw ParseError("empty key", n);
    record.sections.back().set(key, std::string(trim(text.substr(eq + 1))));
  }
  if (!have_schema) throw ParseError("missing '# " + std::string(kRecordSchema) + "' line", 1);
  return record;
}

inline Record parse_record(const std::string& text) {
  std::istringstream in(text);
  return parse_record(in);
}

}  // namespace loopmem
