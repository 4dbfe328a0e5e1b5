#pragma once

// Line-delimited key=value records, one per line. Values containing spaces,
// quotes, '=' or backslashes are double-quoted with backslash escapes.

#include "semeig/io.hpp"

#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace semeig {

using Record = std::vector<std::pair<std::string, std::string>>;

std::string format_record(const Record& r);
/// Throws FormatError on malformed input or duplicate keys.
std::map<std::string, std::string> parse_record(std::string_view line);

/// Shortest text that reads back to the same double.
std::string format_double(double v);

struct RunReport {
  std::string command;
  Record parameters;
  double wall_seconds = 0.0;
  IoStats io;  // delta over the run
  Record result;

  /// record=report command=... param.<k>=... wall_s=... io.* result.<k>=...
  std::string to_line() const;
  static RunReport parse(std::string_view line);
};

}  // namespace semeig
