#include "semeig/report.hpp"

#include <charconv>
#include <cstdio>
#include <stdexcept>

namespace semeig {

namespace {

bool needs_quotes(std::string_view v) {
  if (v.empty()) return true;
  for (char c : v)
    if (c == ' ' || c == '"' || c == '=' || c == '\\' || c == '\t' || c == '\n') return true;
  return false;
}

void check_key(std::string_view k) {
  if (k.empty()) throw std::invalid_argument("record key is empty");
  for (char c : k)
    if (c == ' ' || c == '"' || c == '=' || c == '\\' || c == '\t' || c == '\n')
      throw std::invalid_argument("record key contains a reserved character: " + std::string(k));
}

std::uint64_t to_u64(const std::map<std::string, std::string>& m, const std::string& key) {
  auto it = m.find(key);
  if (it == m.end()) throw FormatError("report record lacks " + key);
  std::uint64_t v = 0;
  const auto* end = it->second.data() + it->second.size();
  auto [ptr, ec] = std::from_chars(it->second.data(), end, v);
  if (ec != std::errc{} || ptr != end) throw FormatError("bad integer for " + key + ": " + it->second);
  return v;
}

}  // namespace

std::string format_record(const Record& r) {
  std::string out;
  for (const auto& [k, v] : r) {
    check_key(k);
    if (!out.empty()) out += ' ';
    out += k;
    out += '=';
    if (!needs_quotes(v)) {
      out += v;
      continue;
    }
    out += '"';
    for (char c : v) {
      if (c == '"' || c == '\\') out += '\\';
      if (c == '\n') {
        out += "\\n";
        continue;
      }
      out += c;
    }
    out += '"';
  }
  return out;
}

std::map<std::string, std::string> parse_record(std::string_view line) {
  std::map<std::string, std::string> out;
  std::size_t i = 0;
  const std::size_t n = line.size();
  while (i < n) {
    while (i < n && line[i] == ' ') ++i;
    if (i >= n) break;
    const std::size_t eq = line.find('=', i);
    if (eq == std::string_view::npos) throw FormatError("record field without '=' at column " + std::to_string(i));
    std::string key(line.substr(i, eq - i));
    if (key.empty() || key.find(' ') != std::string::npos) {
      throw FormatError("bad record key at column " + std::to_string(i));
    }
    i = eq + 1;
    std::string value;
    if (i < n && line[i] == '"') {
      ++i;
      bool closed = false;
      while (i < n) {
        char c = line[i++];
        if (c == '"') {
          closed = true;
          break;
        }
        if (c == '\\') {
          if (i >= n) break;
          c = line[i++];
          if (c == 'n') c = '\n';
        }
        value += c;
      }
      if (!closed) throw FormatError("unterminated quoted value for " + key);
      if (i < n && line[i] != ' ') throw FormatError("junk after quoted value for " + key);
    } else {
      const std::size_t sp = line.find(' ', i);
      const std::size_t end = sp == std::string_view::npos ? n : sp;
      value = std::string(line.substr(i, end - i));
      i = end;
    }
    if (!out.emplace(key, std::move(value)).second) throw FormatError("duplicate record key " + key);
  }
  return out;
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc{}) throw std::runtime_error("format_double failed");
  return std::string(buf, ptr);
}

std::string RunReport::to_line() const {
  Record r;
  r.emplace_back("record", "report");
  r.emplace_back("command", command);
  for (const auto& [k, v] : parameters) r.emplace_back("param." + k, v);
  char wall[32];
  std::snprintf(wall, sizeof wall, "%.6f", wall_seconds);
  r.emplace_back("wall_s", wall);
  r.emplace_back("io.bytes_read", std::to_string(io.bytes_read));
  r.emplace_back("io.bytes_written", std::to_string(io.bytes_written));
  r.emplace_back("io.read_ops", std::to_string(io.read_ops));
  r.emplace_back("io.write_ops", std::to_string(io.write_ops));
  for (const auto& [k, v] : result) r.emplace_back("result." + k, v);
  return format_record(r);
}

RunReport RunReport::parse(std::string_view line) {
  const auto m = parse_record(line);
  auto rec = m.find("record");
  if (rec == m.end() || rec->second != "report") throw FormatError("not a report record");
  RunReport out;
  auto cmd = m.find("command");
  if (cmd == m.end()) throw FormatError("report record lacks command");
  out.command = cmd->second;
  auto wall = m.find("wall_s");
  if (wall == m.end()) throw FormatError("report record lacks wall_s");
  try {
    out.wall_seconds = std::stod(wall->second);
  } catch (const std::exception&) {
    throw FormatError("bad wall_s: " + wall->second);
  }
  out.io.bytes_read = to_u64(m, "io.bytes_read");
  out.io.bytes_written = to_u64(m, "io.bytes_written");
  out.io.read_ops = to_u64(m, "io.read_ops");
  out.io.write_ops = to_u64(m, "io.write_ops");
  // Keys come back in sorted order; field order is not preserved.
  for (const auto& [k, v] : m) {
    if (k.rfind("param.", 0) == 0) out.parameters.emplace_back(k.substr(6), v);
    if (k.rfind("result.", 0) == 0) out.result.emplace_back(k.substr(7), v);
  }
  return out;
}

}  // namespace semeig
