// Copyright 2026 The iodiag Authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <map>

#include "generators.hpp"
#include "iodiag/capture.hpp"
#include "iodiag/pipeline.hpp"

using namespace iodiag;

TEST_CASE("tracing the scripted writer") {
  if (!live_capture_supported()) {
    MESSAGE("live capture unsupported here; skipped");
    return;
  }
  testing::TempDir dir;
  Store store(dir.path() / "store");
  store.create_session("live");
  const auto target = (dir.path() / "out.txt").string();
  FilterSpec f;
  f.kinds = std::set{SyscallKind::openat, SyscallKind::write, SyscallKind::close};
  auto h = spawn_and_trace({IODIAG_SCRIPTED_WRITER, target}, f, "live");
  auto r = run_pipeline(*h, store, "live");
  std::map<std::string, int> kinds;
  store.scan("live", [&](const StoredEvent& e) {
    ++kinds[std::string(to_string(e.event.kind))];
    if (e.event.kind == SyscallKind::write) {
      CHECK(e.event.enrichment->resolved_path == target);
    }
  });
  CHECK(kinds == std::map<std::string, int>{{"close", 1}, {"openat", 1}, {"write", 3}});
  CHECK(r.stats.dropped == 0);
}

TEST_CASE("path filter keeps only the target file") {
  if (!live_capture_supported()) return;
  testing::TempDir dir;
  Store store(dir.path() / "store");
  store.create_session("p");
  const auto target = (dir.path() / "x.txt").string();
  FilterSpec f;
  f.path_prefixes = std::set<std::string>{dir.path().string()};
  auto h = spawn_and_trace({IODIAG_SCRIPTED_WRITER, target}, f, "p");
  run_pipeline(*h, store, "p");
  CHECK(store.count("p") == 5);
}
