// Copyright 2026 The iodiag Authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fcntl.h>

#include "generators.hpp"
#include "iodiag/analyze.hpp"
#include "iodiag/correlate.hpp"
#include "iodiag/error.hpp"

using namespace iodiag;

namespace {

struct Script {
  std::vector<SyscallEvent> evs;
  std::int64_t t = 1000;

  SyscallEvent& add(std::int64_t pid, SyscallKind k, std::int64_t ret) {
    SyscallEvent e;
    e.pid = e.tid = pid;
    e.comm = pid == 1 ? "writer" : "reader";
    e.kind = k;
    e.retval = ret;
    e.t_entry = (t += 1000);
    e.t_exit = e.t_entry + 10;
    evs.push_back(e);
    return evs.back();
  }
  void open(std::int64_t pid, const std::string& path, std::int64_t fd, std::uint64_t ino,
            bool create) {
    auto& e = add(pid, SyscallKind::openat, fd);
    e.args.dirfd = -100;
    e.args.path = path;
    e.args.flags = create ? (O_WRONLY | O_CREAT | O_TRUNC) : O_RDONLY;
    e.args.mode = 0644;
    e.hints.dev = 9;
    e.hints.ino = ino;
  }
  void io(std::int64_t pid, SyscallKind k, std::int64_t fd, std::int64_t n) {
    auto& e = add(pid, k, n);
    e.args.fd = fd;
    e.args.count = 4096;
  }
  void seek(std::int64_t pid, std::int64_t fd, std::int64_t off) {
    auto& e = add(pid, SyscallKind::lseek, off);
    e.args.fd = fd;
    e.args.offset = off;
    e.args.whence = SEEK_SET;
  }
  void close(std::int64_t pid, std::int64_t fd) {
    auto& e = add(pid, SyscallKind::close, 0);
    e.args.fd = fd;
  }
  void unlink(std::int64_t pid, const std::string& path) {
    auto& e = add(pid, SyscallKind::unlink, 0);
    e.args.path = path;
  }
};

StaleOffsetReport run(const Script& s, bool resolve = true) {
  testing::TempDir dir;
  Store store(dir.path());
  testing::ingest_events(store, s.evs, "x", resolve);
  return detect_stale_offset_reads(store, "x");
}

// Writer rotates /log: old incarnation gets `old_bytes`, the new one
// `new_bytes`; the reader re-opens and seeks to `seek_to` before reading.
Script rotation(std::int64_t old_bytes, std::int64_t new_bytes, std::int64_t seek_to,
                std::int64_t read_ret, bool same_inode = true) {
  Script s;
  s.open(1, "/log", 3, 40, true);
  s.io(1, SyscallKind::write, 3, old_bytes);
  s.close(1, 3);
  s.open(2, "/log", 5, 40, false);
  s.io(2, SyscallKind::read, 5, old_bytes);
  s.unlink(1, "/log");
  s.close(2, 5);
  s.open(1, "/log", 3, same_inode ? 40 : 41, true);
  s.io(1, SyscallKind::write, 3, new_bytes);
  s.close(1, 3);
  s.open(2, "/log", 5, same_inode ? 40 : 41, false);
  if (seek_to) s.seek(2, 5, seek_to);
  s.io(2, SyscallKind::read, 5, read_ret);
  return s;
}

}  // namespace

TEST_CASE("stale offset read after rotation is reported") {
  auto r = run(rotation(26, 16, 26, 0));
  REQUIRE(r.findings.size() == 1);
  const auto& f = r.findings[0];
  CHECK(f.path == "/log");
  CHECK(f.erroneous_offset == 26);
  CHECK(f.bytes_written_to_new == 16);
  CHECK(f.reader_pid == 2);
  CHECK(f.old_tag != f.new_tag);
  CHECK(f.old_tag.inode == f.new_tag.inode);
  CHECK_FALSE(f.evidence.empty());
  CHECK_FALSE(r.warning);
}

TEST_CASE("a different inode after rotation is detected too") {
  auto r = run(rotation(100, 40, 100, 0, false));
  CHECK(r.findings.size() == 1);
}

TEST_CASE("reading the new file from the start is fine") {
  CHECK(run(rotation(26, 16, 0, 16)).findings.empty());
}

TEST_CASE("offset inside the new data is not a loss") {
  CHECK(run(rotation(10, 40, 10, 30)).findings.empty());
}

TEST_CASE("reading at exactly the new size is a loss of everything written") {
  auto r = run(rotation(16, 16, 16, 0));
  REQUIRE(r.findings.size() == 1);
  CHECK(r.findings[0].erroneous_offset == 16);
}

TEST_CASE("empty new file is not a loss") {
  CHECK(run(rotation(26, 0, 26, 0)).findings.empty());
}

TEST_CASE("without resolution the opening path is used and a warning is set") {
  auto r = run(rotation(26, 16, 26, 0), false);
  REQUIRE(r.findings.size() == 1);
  CHECK(r.findings[0].path == "/log");
  CHECK(r.warning);
}

TEST_CASE("glob patterns") {
  CHECK(glob_match("rocksdb:low*", "rocksdb:low3"));
  CHECK_FALSE(glob_match("rocksdb:low*", "rocksdb:high0"));
  CHECK(glob_match("db_bench?", "db_bench7"));
  CHECK(glob_match("t[0-3]", "t2"));
  CHECK_FALSE(glob_match("t[0-3]", "t5"));
  CHECK_THROWS_AS(check_pattern(""), MalformedPattern);
  CHECK_THROWS_AS(check_pattern("a[bc"), MalformedPattern);
  CHECK_NOTHROW(check_pattern("a[bc]*"));
}

TEST_CASE("contention intervals on the synthetic RocksDB run") {
  testing::TempDir dir;
  Store store(dir.path());
  auto fx = testing::contention_fixture(21, "rdb", 300);
  store.create_session("rdb");
  store.index_batch("rdb", fx.events);
  ContentionParams p;
  auto got = contention_report(store, "rdb", p);
  REQUIRE(got.size() == fx.contention.size());
  for (std::size_t i = 0; i < got.size(); ++i) {
    CHECK(std::llabs(got[i].t_start - fx.contention[i].first) <= fx.bucket_ns);
    CHECK(std::llabs(got[i].t_end - fx.contention[i].second) <= fx.bucket_ns);
    CHECK(got[i].active_background_threads >= 5);
    CHECK(got[i].dip_fraction >= 0.3);
  }
  double baseline = 0;
  auto buckets = contention_buckets(store, "rdb", p, &baseline);
  CHECK(buckets.size() == 300);
  CHECK(baseline > 350);
  p.k_threshold = 8;
  CHECK(contention_report(store, "rdb", p).empty());
  p.background = "[";
  CHECK_THROWS_AS(contention_report(store, "rdb", p), MalformedPattern);
}

TEST_CASE("contention buckets include empty stretches") {
  testing::TempDir dir;
  Store store(dir.path());
  std::vector<SyscallEvent> evs(2);
  evs[0].t_entry = 500'000'000;
  evs[1].t_entry = 4'200'000'000;
  for (auto& e : evs) {
    e.comm = "db_bench";
    e.kind = SyscallKind::fsync;
    e.args.fd = 3;
  }
  store.create_session("e");
  store.index_batch("e", evs);
  auto b = contention_buckets(store, "e", {});
  REQUIRE(b.size() == 5);
  CHECK(b[0].start == 0);
  CHECK(b[4].start == 4'000'000'000);
  CHECK(b[2].foreground == 0);
}

TEST_CASE("session summary") {
  testing::TempDir dir;
  Store store(dir.path());
  testing::ingest_file(store, IODIAG_FIXTURES_DIR "/fig2a.jsonl", "a");
  auto s = session_summary(store, "a");
  CHECK(s.events == 13);
  CHECK(s.per_kind["read"] == 2);
  CHECK(s.per_kind["openat"] == 2);
  CHECK(s.per_file_type["regular"] == 13);
  REQUIRE(s.per_thread.size() == 2);
  CHECK(s.per_thread[0].comm == "app");
  CHECK(s.per_thread[0].count == 7);
  CHECK(s.produced == 13);
  CHECK(s.dropped == 0);
  CHECK(s.unresolved == 0);
  CHECK_THROWS_AS(session_summary(store, "nope"), UnknownSession);
}
