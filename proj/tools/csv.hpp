#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <string>
#include <string_view>

#include "rgflow/error.hpp"

namespace rgflow::app {

/// 17 significant digits, '.' decimal point, no grouping: lossless for doubles.
inline std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, std::initializer_list<std::string_view> header)
      : out_(path) {
    if (!out_) throw ConfigError("cannot write " + path.string());
    bool first = true;
    for (std::string_view h : header) {
      if (!first) out_ << ',';
      out_ << h;
      first = false;
    }
    out_ << '\n';
  }

  CsvWriter& operator<<(double v) { return field(format_real(v)); }
  CsvWriter& operator<<(int v) { return field(std::to_string(v)); }
  CsvWriter& operator<<(std::string_view v) { return field(std::string(v)); }

  void end_row() {
    out_ << '\n';
    first_ = true;
  }

 private:
  CsvWriter& field(const std::string& text) {
    if (!first_) out_ << ',';
    out_ << text;
    first_ = false;
    return *this;
  }

  std::ofstream out_;
  bool first_ = true;
};

}  // namespace rgflow::app
