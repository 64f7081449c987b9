#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "binary_io.hpp"
#include "patchbag/error.hpp"
#include "patchbag/schema.hpp"

namespace patchbag::detail {

// Line-oriented reader for tab-separated manifests. Every error names the
// file, the line, and the field being parsed.
class ManifestReader {
 public:
  explicit ManifestReader(std::filesystem::path path) : path_(std::move(path)) {
    std::ifstream in(path_);
    if (!in) throw IoError("cannot open manifest " + path_.string());
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      lines_.push_back(line);
    }
  }

  bool done() const { return cursor_ >= lines_.size(); }
  std::size_t line_number() const { return cursor_; }

  // Fields of the next line; the first must equal `key`.
  std::vector<std::string> expect(const std::string& key, std::size_t min_fields = 2) {
    if (done()) fail(key, "missing line");
    ++cursor_;
    auto fields = split_fields(lines_[cursor_ - 1]);
    if (fields.front() != key) fail(key, "expected key '" + key + "', found '" + fields.front() + "'");
    if (fields.size() < min_fields) fail(key, "too few fields");
    return fields;
  }

  std::string peek_key() const { return done() ? std::string() : split_fields(lines_[cursor_]).front(); }

  std::uint64_t integer(const std::string& text, const std::string& field) const {
    std::uint64_t value = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc() || ptr != text.data() + text.size()) fail(field, "not an unsigned integer: '" + text + "'");
    return value;
  }

  std::uint32_t hex32(const std::string& text, const std::string& field) const {
    std::uint32_t value = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value, 16);
    if (ec != std::errc() || ptr != text.data() + text.size()) fail(field, "not a hex checksum: '" + text + "'");
    return value;
  }

  std::uint64_t scalar(const std::string& key) { return integer(expect(key).at(1), key); }

  [[noreturn]] void fail(const std::string& field, const std::string& message) const {
    throw ParseError(path_.string() + ":" + std::to_string(cursor_) + ": field '" + field + "': " + message);
  }

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  std::vector<std::string> lines_;
  std::size_t cursor_ = 0;
};

inline void write_schema(std::ostream& out, const TagSchema& schema) {
  out << "tasks\t" << schema.task_count() << '\n';
  for (const auto& task : schema.tasks) {
    out << "task\t" << task.name;
    for (const auto& c : task.classes) out << '\t' << c;
    out << '\n';
  }
}

inline TagSchema read_schema(ManifestReader& in) {
  const auto count = in.scalar("tasks");
  TagSchema schema;
  for (std::uint64_t k = 0; k < count; ++k) {
    auto fields = in.expect("task", 4);
    schema.tasks.push_back({fields[1], {fields.begin() + 2, fields.end()}});
  }
  try {
    schema.validate();
  } catch (const ConfigError& e) {
    in.fail("task", e.what());
  }
  return schema;
}

inline std::string hex(std::uint32_t value) {
  std::ostringstream out;
  out << std::hex << value;
  return out.str();
}

}  // namespace patchbag::detail
