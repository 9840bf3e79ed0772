#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace polymerlab::csv {

/// 17 significant digits, so values round-trip. nan, inf and -inf are spelled out.
std::string format(double v);
inline std::string format(std::int64_t v) { return std::to_string(v); }
inline std::string format(int v) { return std::to_string(v); }
inline std::string format(std::uint64_t v) { return std::to_string(v); }
inline std::string format(bool v) { return v ? "1" : "0"; }
std::string format(std::string_view v);
inline std::string format(const char* v) { return format(std::string_view(v)); }
inline std::string format(const std::string& v) { return format(std::string_view(v)); }

class Table {
 public:
  explicit Table(std::vector<std::string> header) : header_(std::move(header)) {}

  template <class... Ts>
  void add(const Ts&... cells) {
    std::vector<std::string> row;
    row.reserve(sizeof...(Ts));
    (row.push_back(format(cells)), ...);
    push(std::move(row));
  }
  void push(std::vector<std::string> row);

  const std::vector<std::string>& header() const noexcept { return header_; }
  std::size_t size() const noexcept { return rows_.size(); }
  std::string str() const;
  void write(const std::filesystem::path& path) const;

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

}  // namespace polymerlab::csv
