// Copyright 2026 The iodiag Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "iodiag/model.hpp"
#include "iodiag/ringbuf.hpp"

namespace iodiag {

// One value of the configuration language: a small TOML subset with
// [sections], key = value, strings, integers, floats, booleans and flat
// arrays. Comments start with '#'.
using ConfigValue =
    std::variant<std::string, std::int64_t, double, bool,
                 std::vector<std::variant<std::string, std::int64_t>>>;
using ConfigTable = std::map<std::string, ConfigValue>;  // "section.key"

// Throws ConfigError with the source name and line on bad syntax.
ConfigTable parse_config_text(std::string_view text, const std::string& source);

// Durations: integer nanoseconds or a number with ns/us/ms/s/m suffix.
std::optional<std::int64_t> parse_duration_ns(std::string_view text);

struct Config {
  std::string session;
  FilterSpec filter;
  RingConfig ring{0, kDefaultLaneCapacity};  // lanes 0: mode default
  std::string store_dir = "iodiag-store";
  std::size_t batch_size = 1000;
  std::optional<std::uint64_t> max_events;
  std::string host = "127.0.0.1";
  int port = 8642;
  std::int64_t refresh_ms = 1000;
  std::string static_dir;
  std::vector<std::string> command;
  std::int64_t bucket_ns = 1'000'000'000;
  std::int64_t k_threshold = 5;
  double dip_threshold = 0.3;
  std::string background = "rocksdb:low*";
  std::string foreground = "db_bench*";
};

// Applies a parsed table over `base`. Unknown sections or keys and values of
// the wrong type are ConfigErrors.
Config apply_config(const ConfigTable& table, Config base, const std::string& source);

// Reads and applies a config file. A missing or unreadable file is a
// ConfigError naming the path.
Config load_config(const std::filesystem::path& path, Config base = {});

// Parses "read,write" style lists into a kind set (NotInCatalog on unknown
// names), and comma-separated integer lists.
std::set<SyscallKind> parse_kind_list(std::string_view list);
std::set<std::int64_t> parse_int_list(std::string_view list);

}  // namespace iodiag
