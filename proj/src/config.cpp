// Copyright 2026 The iodiag Authors
// SPDX-License-Identifier: Apache-2.0

#include "iodiag/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "iodiag/error.hpp"

namespace iodiag {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

bool is_bare_key(std::string_view s) {
  if (s.empty()) return false;
  for (char c : s)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-'))
      return false;
  return true;
}

class LineParser {
 public:
  LineParser(std::string_view text, const std::string& source, std::size_t line)
      : s_(text), source_(source), line_(line) {}

  [[noreturn]] void fail(const std::string& what) const {
    throw ConfigError(source_ + ":" + std::to_string(line_) + ": " + what);
  }

  void skip_ws() {
    while (pos_ < s_.size() && (s_[pos_] == ' ' || s_[pos_] == '\t')) ++pos_;
  }

  bool at_end_or_comment() {
    skip_ws();
    return pos_ >= s_.size() || s_[pos_] == '#';
  }

  std::string string_lit() {
    const char quote = s_[pos_++];
    std::string out;
    while (pos_ < s_.size() && s_[pos_] != quote) {
      char c = s_[pos_++];
      if (c == '\\' && quote == '"') {
        if (pos_ >= s_.size()) break;
        switch (char e = s_[pos_++]) {
          case 'n': out += '\n'; break;
          case 't': out += '\t'; break;
          case '\\': out += '\\'; break;
          case '"': out += '"'; break;
          default: fail(std::string("unknown escape \\") + e);
        }
        continue;
      }
      out += c;
    }
    if (pos_ >= s_.size()) fail("unterminated string");
    ++pos_;
    return out;
  }

  std::variant<std::string, std::int64_t, double, bool> scalar() {
    skip_ws();
    if (pos_ >= s_.size()) fail("missing value");
    if (s_[pos_] == '"' || s_[pos_] == '\'') return string_lit();
    std::size_t end = pos_;
    while (end < s_.size() && s_[end] != ',' && s_[end] != ']' &&
           s_[end] != '#' && s_[end] != ' ' && s_[end] != '\t')
      ++end;
    std::string tok(s_.substr(pos_, end - pos_));
    pos_ = end;
    if (tok == "true") return true;
    if (tok == "false") return false;
    std::string digits;
    for (char c : tok)
      if (c != '_') digits += c;
    std::int64_t i = 0;
    auto [p, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), i);
    if (ec == std::errc() && p == digits.data() + digits.size() && !digits.empty())
      return i;
    try {
      std::size_t used = 0;
      double d = std::stod(digits, &used);
      if (used == digits.size()) return d;
    } catch (...) {
    }
    fail("cannot parse value '" + tok + "'");
  }

  ConfigValue value() {
    skip_ws();
    if (pos_ < s_.size() && s_[pos_] == '[') {
      ++pos_;
      std::vector<std::variant<std::string, std::int64_t>> arr;
      for (;;) {
        skip_ws();
        if (pos_ >= s_.size()) fail("unterminated array");
        if (s_[pos_] == ']') {
          ++pos_;
          break;
        }
        auto v = scalar();
        if (auto* str = std::get_if<std::string>(&v)) {
          arr.emplace_back(*str);
        } else if (auto* n = std::get_if<std::int64_t>(&v)) {
          arr.emplace_back(*n);
        } else {
          fail("arrays hold strings or integers");
        }
        skip_ws();
        if (pos_ < s_.size() && s_[pos_] == ',') ++pos_;
      }
      return arr;
    }
    auto v = scalar();
    return std::visit([](auto&& x) -> ConfigValue { return x; }, v);
  }

 private:
  std::string_view s_;
  const std::string& source_;
  std::size_t line_;
  std::size_t pos_ = 0;
};

}  // namespace

ConfigTable parse_config_text(std::string_view text, const std::string& source) {
  ConfigTable out;
  std::string section;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t nl = text.find('\n', start);
    if (nl == std::string_view::npos) nl = text.size();
    const std::string_view raw = text.substr(start, nl - start);
    start = nl + 1;
    ++line_no;
    const std::string_view line = trim(raw);
    if (line.empty() || line.front() == '#') {
      if (nl == text.size()) break;
      continue;
    }
    auto fail = [&](const std::string& what) {
      throw ConfigError(source + ":" + std::to_string(line_no) + ": " + what);
    };
    if (line.front() == '[') {
      const auto close = line.find(']');
      if (close == std::string_view::npos) fail("unterminated section header");
      section = std::string(trim(line.substr(1, close - 1)));
      if (!is_bare_key(section)) fail("bad section name '" + section + "'");
      auto rest = trim(line.substr(close + 1));
      if (!rest.empty() && rest.front() != '#') fail("text after section header");
      if (nl == text.size()) break;
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) fail("expected key = value");
    const std::string key(trim(line.substr(0, eq)));
    if (!is_bare_key(key)) fail("bad key '" + key + "'");
    LineParser p(line.substr(eq + 1), source, line_no);
    ConfigValue v = p.value();
    if (!p.at_end_or_comment()) fail("unexpected text after value");
    const std::string full = section.empty() ? key : section + "." + key;
    if (out.contains(full)) fail("duplicate key '" + full + "'");
    out.emplace(full, std::move(v));
    if (nl == text.size()) break;
  }
  return out;
}

std::optional<std::int64_t> parse_duration_ns(std::string_view text) {
  text = trim(text);
  if (text.empty()) return std::nullopt;
  std::size_t i = 0;
  while (i < text.size() &&
         (std::isdigit(static_cast<unsigned char>(text[i])) || text[i] == '.'))
    ++i;
  if (i == 0) return std::nullopt;
  double num = 0;
  try {
    std::size_t used = 0;
    num = std::stod(std::string(text.substr(0, i)), &used);
    if (used != i) return std::nullopt;
  } catch (...) {
    return std::nullopt;
  }
  const std::string_view unit = text.substr(i);
  double scale = 0;
  if (unit.empty() || unit == "ns") scale = 1;
  else if (unit == "us") scale = 1e3;
  else if (unit == "ms") scale = 1e6;
  else if (unit == "s") scale = 1e9;
  else if (unit == "m") scale = 60e9;
  else return std::nullopt;
  const double ns = std::round(num * scale);
  if (ns < 0 || ns > 9.2e18) return std::nullopt;
  return static_cast<std::int64_t>(ns);
}

namespace {

struct Applier {
  const std::string& source;
  const std::string& key;
  const ConfigValue& v;

  [[noreturn]] void bad(const char* want) const {
    throw ConfigError(source + ": " + key + " must be " + want);
  }
  std::string str() const {
    if (auto* s = std::get_if<std::string>(&v)) return *s;
    bad("a string");
  }
  std::int64_t integer() const {
    if (auto* i = std::get_if<std::int64_t>(&v)) return *i;
    bad("an integer");
  }
  std::int64_t positive() const {
    auto i = integer();
    if (i <= 0) bad("a positive integer");
    return i;
  }
  double number() const {
    if (auto* d = std::get_if<double>(&v)) return *d;
    if (auto* i = std::get_if<std::int64_t>(&v)) return static_cast<double>(*i);
    bad("a number");
  }
  std::vector<std::string> strings() const {
    if (auto* s = std::get_if<std::string>(&v)) return {*s};
    auto* a = std::get_if<std::vector<std::variant<std::string, std::int64_t>>>(&v);
    if (!a) bad("an array of strings");
    std::vector<std::string> out;
    for (const auto& x : *a) {
      auto* s = std::get_if<std::string>(&x);
      if (!s) bad("an array of strings");
      out.push_back(*s);
    }
    return out;
  }
  std::set<std::int64_t> ints() const {
    auto* a = std::get_if<std::vector<std::variant<std::string, std::int64_t>>>(&v);
    if (!a) bad("an array of integers");
    std::set<std::int64_t> out;
    for (const auto& x : *a) {
      auto* i = std::get_if<std::int64_t>(&x);
      if (!i) bad("an array of integers");
      out.insert(*i);
    }
    return out;
  }
  std::int64_t duration() const {
    if (auto* i = std::get_if<std::int64_t>(&v)) {
      if (*i <= 0) bad("a positive duration");
      return *i;
    }
    auto d = parse_duration_ns(str());
    if (!d || *d <= 0) bad("a positive duration like \"1s\" or \"500ms\"");
    return *d;
  }
};

}  // namespace

Config apply_config(const ConfigTable& table, Config c, const std::string& source) {
  for (const auto& [key, value] : table) {
    Applier a{source, key, value};
    if (key == "session.name") {
      c.session = a.str();
    } else if (key == "filters.syscalls") {
      std::set<SyscallKind> kinds;
      for (const auto& n : a.strings()) {
        auto k = find_syscall(n);
        if (!k) throw ConfigError(source + ": filters.syscalls: unknown syscall '" + n + "'");
        kinds.insert(*k);
      }
      c.filter.kinds = kinds;
    } else if (key == "filters.pids") {
      c.filter.pids = a.ints();
    } else if (key == "filters.tids") {
      c.filter.tids = a.ints();
    } else if (key == "filters.paths") {
      auto v = a.strings();
      c.filter.path_prefixes = std::set<std::string>(v.begin(), v.end());
    } else if (key == "ring_buffer.capacity_bytes") {
      c.ring.capacity_bytes_per_lane = static_cast<std::size_t>(a.positive());
    } else if (key == "ring_buffer.lanes") {
      c.ring.lanes = static_cast<std::size_t>(a.positive());
    } else if (key == "store.dir") {
      c.store_dir = a.str();
    } else if (key == "store.batch_size") {
      c.batch_size = static_cast<std::size_t>(a.positive());
    } else if (key == "store.max_events") {
      c.max_events = static_cast<std::uint64_t>(a.positive());
    } else if (key == "serve.host") {
      c.host = a.str();
    } else if (key == "serve.port") {
      auto p = a.integer();
      if (p < 0 || p > 65535) a.bad("a port number");
      c.port = static_cast<int>(p);
    } else if (key == "serve.refresh_ms") {
      c.refresh_ms = a.positive();
    } else if (key == "serve.static_dir") {
      c.static_dir = a.str();
    } else if (key == "record.command") {
      if (std::holds_alternative<std::string>(value)) {
        std::istringstream in(a.str());
        c.command.clear();
        for (std::string w; in >> w;) c.command.push_back(w);
      } else {
        c.command = a.strings();
      }
    } else if (key == "analyze.bucket") {
      c.bucket_ns = a.duration();
    } else if (key == "analyze.k_threshold") {
      c.k_threshold = a.positive();
    } else if (key == "analyze.dip_threshold") {
      c.dip_threshold = a.number();
      if (c.dip_threshold < 0 || c.dip_threshold > 1) a.bad("in [0, 1]");
    } else if (key == "analyze.background") {
      c.background = a.str();
    } else if (key == "analyze.foreground") {
      c.foreground = a.str();
    } else {
      throw ConfigError(source + ": unknown key '" + key + "'");
    }
  }
  return c;
}

Config load_config(const std::filesystem::path& path, Config base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return apply_config(parse_config_text(ss.str(), path.string()), std::move(base),
                      path.string());
}

std::set<SyscallKind> parse_kind_list(std::string_view list) {
  std::set<SyscallKind> out;
  std::size_t start = 0;
  while (start <= list.size()) {
    auto comma = list.find(',', start);
    if (comma == std::string_view::npos) comma = list.size();
    auto item = trim(list.substr(start, comma - start));
    if (!item.empty()) out.insert(catalog_lookup(item));
    start = comma + 1;
  }
  return out;
}

std::set<std::int64_t> parse_int_list(std::string_view list) {
  std::set<std::int64_t> out;
  std::size_t start = 0;
  while (start <= list.size()) {
    auto comma = list.find(',', start);
    if (comma == std::string_view::npos) comma = list.size();
    auto item = trim(list.substr(start, comma - start));
    if (!item.empty()) {
      std::int64_t v = 0;
      auto [p, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
      if (ec != std::errc() || p != item.data() + item.size())
        throw ConfigError("not an integer: '" + std::string(item) + "'");
      out.insert(v);
    }
    start = comma + 1;
  }
  return out;
}

}  // namespace iodiag
