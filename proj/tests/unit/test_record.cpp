// Copyright 2026 The iodiag Authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "generators.hpp"
#include "iodiag/error.hpp"
#include "iodiag/record.hpp"

using namespace iodiag;

TEST_CASE("aggregated record round-trips") {
  const std::string line =
      R"({"session":"s","pid":10,"tid":11,"comm":"app","kind":"pwrite64",)"
      R"("args":{"fd":3,"count":16,"offset":26},"ret":16,"t_entry":5,"t_exit":9})";
  auto ev = parse_event(line, 1);
  CHECK(ev.pid == 10);
  CHECK(ev.tid == 11);
  CHECK(ev.kind == SyscallKind::pwrite64);
  CHECK(ev.args.offset == 26);
  CHECK(ev.retval == 16);
  CHECK(ev.t_exit == 9);
  // seq is always written, so the output gains a trailing "seq".
  CHECK(to_line(ev) == line.substr(0, line.size() - 1) + R"(,"seq":0})");
}

TEST_CASE("random events survive a JSON round trip") {
  for (const auto& ev : testing::random_events(7, 2000, "rt")) {
    auto back = parse_event(to_line(ev), 1);
    CHECK(back == ev);
  }
}

TEST_CASE("null ret and t_exit are kept") {
  auto ev = parse_event(
      R"({"pid":1,"tid":1,"comm":"x","kind":"close","args":{"fd":3},"ret":null,"t_entry":5,"t_exit":null})",
      1);
  CHECK_FALSE(ev.retval);
  CHECK_FALSE(ev.t_exit);
  CHECK_FALSE(ev.succeeded());
}

TEST_CASE("half events parse with direction") {
  auto rec = parse_record(
      R"({"dir":"entry","pid":1,"tid":2,"comm":"x","kind":"read","args":{"fd":3,"count":4},"t_entry":7})",
      3);
  auto* h = std::get_if<RawHalfEvent>(&rec);
  REQUIRE(h);
  CHECK(h->direction == Direction::entry);
  CHECK(h->timestamp == 7);
  auto exit_rec = parse_record(
      R"({"dir":"exit","pid":1,"tid":2,"comm":"x","kind":"read","ret":4,"t_exit":9})", 4);
  auto* x = std::get_if<RawHalfEvent>(&exit_rec);
  REQUIRE(x);
  CHECK(x->retval == 4);
}

TEST_CASE("kernel hints are optional keys") {
  auto ev = parse_event(
      R"({"pid":1,"tid":1,"comm":"x","kind":"openat","args":{"dirfd":-100,"path":"a","flags":0,"mode":0},)"
      R"("ret":3,"t_entry":1,"t_exit":2,"dev":2049,"ino":12,"mode":"regular","pos":0,"ppid":1})",
      1);
  CHECK(ev.hints.dev == 2049u);
  CHECK(ev.hints.ino == 12u);
  CHECK(ev.hints.file_type == FileType::regular);
  CHECK(ev.hints.ppid == 1);
}

TEST_CASE("long comm is clamped to the kernel length") {
  auto ev = parse_event(
      R"({"pid":1,"tid":1,"comm":"a-very-long-thread-name","kind":"fsync","args":{"fd":3},"ret":0,"t_entry":1})",
      1);
  CHECK(ev.comm.size() <= kMaxCommBytes);
}

TEST_CASE("schema violations carry the line number") {
  const char* bad[] = {
      "not json",
      "[1,2]",
      R"({"pid":1,"tid":1,"kind":"mmap","args":{},"t_entry":1})",
      R"({"pid":1,"tid":1,"kind":"read","args":{"fd":3},"t_entry":1})",
      R"({"pid":1,"tid":1,"kind":"read","args":{"fd":"3","count":1},"t_entry":1})",
      R"({"pid":1,"tid":1,"kind":"read","args":{"fd":3,"count":1}})",
      R"({"pid":1,"tid":1,"kind":"read","args":{"fd":3,"count":1},"t_entry":5,"t_exit":4})",
      R"({"dir":"sideways","pid":1,"tid":1,"kind":"read","args":{"fd":3,"count":1},"t_entry":1})",
  };
  for (const char* line : bad) {
    CAPTURE(line);
    try {
      parse_record(line, 42);
      FAIL("accepted");
    } catch (const MalformedInput& e) {
      CHECK(e.line() == 42);
    }
  }
}
