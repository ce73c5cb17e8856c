// Copyright 2026 The iodiag Authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>

#include "generators.hpp"
#include "iodiag/config.hpp"
#include "iodiag/error.hpp"

using namespace iodiag;

TEST_CASE("parse a full config") {
  const char* text = R"(
# capture settings
[session]
name = "nightly"

[filters]
syscalls = ["read", "write", "openat"]
pids = [10, 11]
paths = ["/var/log"]

[ring_buffer]
capacity_bytes = 1048576
lanes = 4

[store]
dir = "/tmp/store"   # trailing comment
batch_size = 500
max_events = 1000000

[serve]
host = "0.0.0.0"
port = 9000
refresh_ms = 250

[record]
command = ["sh", "-c", "echo hi"]

[analyze]
bucket = "500ms"
k_threshold = 4
dip_threshold = 0.25
background = "compact*"
foreground = "client*"
)";
  Config c = apply_config(parse_config_text(text, "t.toml"), {}, "t.toml");
  CHECK(c.session == "nightly");
  REQUIRE(c.filter.kinds);
  CHECK(c.filter.kinds->size() == 3);
  CHECK(c.filter.pids == std::set<std::int64_t>{10, 11});
  CHECK(c.filter.path_prefixes == std::set<std::string>{"/var/log"});
  CHECK(c.ring.capacity_bytes_per_lane == 1048576);
  CHECK(c.ring.lanes == 4);
  CHECK(c.store_dir == "/tmp/store");
  CHECK(c.batch_size == 500);
  CHECK(c.max_events == 1000000u);
  CHECK(c.host == "0.0.0.0");
  CHECK(c.port == 9000);
  CHECK(c.refresh_ms == 250);
  CHECK(c.command == std::vector<std::string>{"sh", "-c", "echo hi"});
  CHECK(c.bucket_ns == 500'000'000);
  CHECK(c.k_threshold == 4);
  CHECK(c.dip_threshold == doctest::Approx(0.25));
  CHECK(c.background == "compact*");
  CHECK(c.foreground == "client*");
}

TEST_CASE("defaults") {
  Config c;
  CHECK(c.store_dir == "iodiag-store");
  CHECK(c.port == 8642);
  CHECK(c.bucket_ns == 1'000'000'000);
  CHECK(c.k_threshold == 5);
  CHECK(c.dip_threshold == doctest::Approx(0.3));
  CHECK(c.batch_size == 1000);
}

TEST_CASE("errors name the source") {
  auto bad = [](const char* text) {
    try {
      apply_config(parse_config_text(text, "bad.toml"), {}, "bad.toml");
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find("bad.toml") != std::string::npos);
      return true;
    }
    return false;
  };
  CHECK(bad("[store]\nbogus = 1\n"));
  CHECK(bad("[nosuch]\nx = 1\n"));
  CHECK(bad("[store]\ndir = 5\n"));
  CHECK(bad("[store\ndir = \"x\"\n"));
  CHECK(bad("[store]\ndir = \"unterminated\n"));
  CHECK(bad("[analyze]\nbucket = \"fast\"\n"));
  CHECK(bad("[filters]\nsyscalls = [\"mmap\"]\n"));
  CHECK(bad("[serve]\nport = 70000\n"));
}

TEST_CASE("durations") {
  CHECK(parse_duration_ns("1s") == 1'000'000'000);
  CHECK(parse_duration_ns("250ms") == 250'000'000);
  CHECK(parse_duration_ns("10us") == 10'000);
  CHECK(parse_duration_ns("2m") == 120'000'000'000);
  CHECK(parse_duration_ns("42") == 42);
  CHECK(parse_duration_ns("0.5s") == 500'000'000);
  CHECK_FALSE(parse_duration_ns("soon"));
  CHECK_FALSE(parse_duration_ns(""));
}

TEST_CASE("lists") {
  CHECK(parse_kind_list("read,write") == std::set{SyscallKind::read, SyscallKind::write});
  CHECK_THROWS_AS(parse_kind_list("read,mmap"), NotInCatalog);
  CHECK(parse_int_list("1, 2,3") == std::set<std::int64_t>{1, 2, 3});
  CHECK_THROWS(parse_int_list("1,x"));
}

TEST_CASE("load_config over a base and missing files") {
  testing::TempDir dir;
  const auto path = dir.path() / "c.toml";
  std::ofstream(path) << "[store]\ndir = \"from-file\"\n";
  Config base;
  base.session = "kept";
  Config c = load_config(path, base);
  CHECK(c.store_dir == "from-file");
  CHECK(c.session == "kept");
  CHECK_THROWS_AS(load_config(dir.path() / "missing.toml"), ConfigError);
}
