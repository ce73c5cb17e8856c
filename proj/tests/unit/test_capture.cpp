// Copyright 2026 The iodiag Authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>
#include <sstream>

#include "iodiag/capture.hpp"
#include "iodiag/error.hpp"

using namespace iodiag;

namespace {

std::vector<SyscallEvent> drain(CaptureHandle& h) {
  std::vector<SyscallEvent> all;
  for (;;) {
    auto b = h.next_batch(3);
    if (b.empty()) break;
    all.insert(all.end(), b.begin(), b.end());
  }
  return all;
}

std::unique_ptr<CaptureHandle> replay(std::istream& in, FilterSpec f = {}) {
  CaptureSource src;
  src.mode = ReplayInput{&in};
  src.filter = std::move(f);
  src.session = "cap";
  return open_capture(src);
}

}  // namespace

TEST_CASE("replay of the fixture yields every event with session and seq") {
  std::ifstream in(IODIAG_FIXTURES_DIR "/fig2a.jsonl");
  auto h = replay(in);
  auto all = drain(*h);
  REQUIRE(all.size() == 13);
  for (std::size_t i = 0; i < all.size(); ++i) {
    CHECK(all[i].session == "cap");
    CHECK(all[i].seq == i + 1);
  }
  auto s = h->stats();
  CHECK(s.observed == 13);
  CHECK(s.ring.produced == 13);
  CHECK(s.ring.dropped == 0);
  CHECK(s.enqueued_by_kind[static_cast<std::size_t>(SyscallKind::read)] == 2);
}

TEST_CASE("kind and pid filters") {
  std::ifstream in(IODIAG_FIXTURES_DIR "/fig2a.jsonl");
  FilterSpec f;
  f.kinds = std::set{SyscallKind::read, SyscallKind::write};
  f.pids = std::set<std::int64_t>{200};
  auto h = replay(in, f);
  auto all = drain(*h);
  CHECK(all.size() == 2);
  for (const auto& e : all) CHECK(e.kind == SyscallKind::read);
  CHECK(h->stats().filtered_out == 11);
}

TEST_CASE("path filter follows descriptors") {
  std::stringstream in;
  in << R"({"pid":1,"tid":1,"comm":"a","kind":"openat","args":{"dirfd":-100,"path":"/var/log/x","flags":0,"mode":0},"ret":3,"t_entry":1,"t_exit":2})" "\n"
     << R"({"pid":1,"tid":1,"comm":"a","kind":"openat","args":{"dirfd":-100,"path":"/etc/y","flags":0,"mode":0},"ret":4,"t_entry":3,"t_exit":4})" "\n"
     << R"({"pid":1,"tid":1,"comm":"a","kind":"read","args":{"fd":3,"count":1},"ret":1,"t_entry":5,"t_exit":6})" "\n"
     << R"({"pid":1,"tid":1,"comm":"a","kind":"read","args":{"fd":4,"count":1},"ret":1,"t_entry":7,"t_exit":8})" "\n"
     << R"({"pid":1,"tid":1,"comm":"a","kind":"openat","args":{"dirfd":3,"path":"rel","flags":0,"mode":0},"ret":5,"t_entry":9,"t_exit":10})" "\n";
  FilterSpec f;
  f.path_prefixes = std::set<std::string>{"/var/log"};
  auto h = replay(in, f);
  auto all = drain(*h);
  REQUIRE(all.size() == 3);
  CHECK(all[0].args.path == "/var/log/x");
  CHECK(all[1].args.fd == 3);
  CHECK(all[2].args.path == "rel");
}

TEST_CASE("half events are paired; orphans and unmatched entries counted") {
  std::stringstream in;
  in << R"({"dir":"entry","pid":1,"tid":1,"comm":"a","kind":"read","args":{"fd":3,"count":8},"t_entry":10})" "\n"
     << R"({"dir":"entry","pid":1,"tid":2,"comm":"b","kind":"write","args":{"fd":4,"count":8},"t_entry":11})" "\n"
     << R"({"dir":"exit","pid":1,"tid":1,"comm":"a","kind":"read","ret":8,"t_exit":15})" "\n"
     << R"({"dir":"exit","pid":1,"tid":3,"comm":"c","kind":"close","ret":0,"t_exit":16})" "\n";
  auto h = replay(in);
  auto all = drain(*h);
  REQUIRE(all.size() == 2);
  CHECK(all[0].kind == SyscallKind::read);
  CHECK(all[0].retval == 8);
  CHECK(all[0].t_exit == 15);
  CHECK(all[1].kind == SyscallKind::write);
  CHECK_FALSE(all[1].retval);
  auto s = h->stats();
  CHECK(s.orphan_exits == 1);
  CHECK(s.unmatched_entries == 1);
}

TEST_CASE("pairing helper") {
  RawHalfEvent en;
  en.direction = Direction::entry;
  en.pid = en.tid = 5;
  en.kind = SyscallKind::fsync;
  en.args.fd = 3;
  en.timestamp = 100;
  RawHalfEvent ex = en;
  ex.direction = Direction::exit;
  ex.args = {};
  ex.retval = 0;
  ex.timestamp = 90;  // clock skew: never before the entry
  PairingStats st;
  std::vector<RawHalfEvent> halves{en, ex};
  auto out = pair_half_events(halves, &st);
  REQUIRE(out.size() == 1);
  CHECK(out[0].t_exit == 100);
  CHECK(st.orphan_exits == 0);
}

TEST_CASE("malformed line stops replay with its line number") {
  std::stringstream in;
  in << R"({"pid":1,"tid":1,"comm":"a","kind":"fsync","args":{"fd":3},"ret":0,"t_entry":1})" "\n"
     << "\n"
     << "{oops\n";
  auto h = replay(in);
  try {
    drain(*h);
    FAIL("no error");
  } catch (const MalformedInput& e) {
    CHECK(e.line() == 3);
  }
}

TEST_CASE("join_path") {
  CHECK(join_path("/a/b", "c") == "/a/b/c");
  CHECK(join_path("/a/b/", "c") == "/a/b/c");
  CHECK(join_path("/a", "/abs") == "/abs");
}

TEST_CASE("live capture of a missing program fails cleanly") {
  if (!live_capture_supported()) return;
  CHECK_THROWS_AS(spawn_and_trace({"/nonexistent/program"}, {}, "x"), SpawnFailed);
}
