// Copyright 2026 The iodiag Authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fcntl.h>

#include "fd_oracle.hpp"
#include "iodiag/enrich.hpp"

using namespace iodiag;

namespace {

std::int64_t g_t = 0;

SyscallEvent ev(SyscallKind k, std::int64_t ret, std::int64_t pid = 1) {
  SyscallEvent e;
  e.pid = e.tid = pid;
  e.kind = k;
  e.retval = ret;
  e.t_entry = (g_t += 10);
  return e;
}

SyscallEvent open_ev(const std::string& path, std::int64_t flags, std::int64_t fd,
                     std::optional<std::uint64_t> ino = {}, std::int64_t pid = 1) {
  auto e = ev(SyscallKind::openat, fd, pid);
  e.args.dirfd = -100;
  e.args.path = path;
  e.args.flags = flags;
  e.args.mode = 0644;
  if (ino) {
    e.hints.dev = 8;
    e.hints.ino = *ino;
  }
  return e;
}

SyscallEvent rw(SyscallKind k, std::int64_t fd, std::int64_t n, std::int64_t pid = 1) {
  auto e = ev(k, n, pid);
  e.args.fd = fd;
  e.args.count = n;
  return e;
}

}  // namespace

TEST_CASE("matches the brute-force model on random sequences") {
  for (std::uint64_t seed = 1; seed <= 60; ++seed) {
    FdTable t;
    const auto steps = testing::generate_fd_sequence(seed);
    std::size_t i = 0;
    for (const auto& s : steps) {
      CAPTURE(seed);
      CAPTURE(i);
      auto out = t.enrich(s.event);
      REQUIRE(out.enrichment);
      CHECK(out.enrichment->offset_before == s.expected.offset_before);
      CHECK(out.enrichment->offset_after == s.expected.offset_after);
      CHECK(out.enrichment->tag == s.expected.tag);
      if (s.expected.size_after) {
        auto st = t.lookup(s.event.pid, s.event.args.fd ? *s.event.args.fd : *s.event.retval);
        REQUIRE(st);
        CHECK(st->known_size == s.expected.size_after);
      }
      ++i;
    }
    CHECK(t.inconsistencies() == 0);
  }
}

TEST_CASE("sequential reads and writes advance the offset") {
  FdTable t;
  t.enrich(open_ev("/f", O_RDWR | O_CREAT | O_TRUNC, 3));
  auto w = t.enrich(rw(SyscallKind::write, 3, 26));
  CHECK(w.enrichment->offset_before == 0);
  CHECK(w.enrichment->offset_after == 26);
  auto r = t.enrich(rw(SyscallKind::read, 3, 0));
  CHECK(r.enrichment->offset_before == 26);
  CHECK(r.enrichment->offset_after == 26);
  auto st = t.lookup(1, 3);
  REQUIRE(st);
  CHECK(st->known_size == 26);
  CHECK(st->path == "/f");
}

TEST_CASE("failed calls leave the offset alone") {
  FdTable t;
  t.enrich(open_ev("/f", O_RDWR | O_CREAT | O_TRUNC, 3));
  t.enrich(rw(SyscallKind::write, 3, 10));
  auto bad = rw(SyscallKind::write, 3, 0);
  bad.retval = -28;
  auto out = t.enrich(bad);
  CHECK(out.enrichment->offset_before == 10);
  CHECK(out.enrichment->offset_after == 10);
}

TEST_CASE("append writes land at the known size") {
  FdTable t;
  t.enrich(open_ev("/log", O_WRONLY | O_CREAT | O_TRUNC, 3));
  t.enrich(rw(SyscallKind::write, 3, 100));
  t.enrich(open_ev("/log", O_WRONLY | O_APPEND, 4));
  auto st = t.lookup(1, 4);
  CHECK(st->append_mode);
  CHECK(st->offset == 0);
  auto w = t.enrich(rw(SyscallKind::write, 4, 5));
  CHECK(w.enrichment->offset_before == 100);
  CHECK(w.enrichment->offset_after == 105);
  // The size grew for the first descriptor too.
  CHECK(t.lookup(1, 3)->known_size == 105);
}

TEST_CASE("positional calls do not move the offset") {
  FdTable t;
  t.enrich(open_ev("/f", O_RDWR | O_CREAT | O_TRUNC, 3));
  auto e = rw(SyscallKind::pwrite64, 3, 8);
  e.args.offset = 4096;
  auto out = t.enrich(e);
  CHECK(out.enrichment->offset_before == 4096);
  CHECK(out.enrichment->offset_after == 4096);
  CHECK(t.lookup(1, 3)->offset == 0);
  CHECK(t.lookup(1, 3)->known_size == 4104);
  auto ra = ev(SyscallKind::readahead, 0);
  ra.args.fd = 3;
  ra.args.offset = 512;
  ra.args.count = 4096;
  auto rout = t.enrich(ra);
  CHECK(rout.enrichment->offset_before == 512);
  CHECK(rout.enrichment->offset_after == 512);
}

TEST_CASE("lseek whence values") {
  FdTable t;
  t.enrich(open_ev("/f", O_RDWR | O_CREAT | O_TRUNC, 3));
  t.enrich(rw(SyscallKind::write, 3, 50));
  auto seek = [&](std::int64_t off, std::int64_t whence, std::int64_t ret) {
    auto e = ev(SyscallKind::lseek, ret);
    e.args.fd = 3;
    e.args.offset = off;
    e.args.whence = whence;
    return t.enrich(e);
  };
  CHECK(seek(10, SEEK_SET, 10).enrichment->offset_after == 10);
  CHECK(seek(5, SEEK_CUR, 15).enrichment->offset_after == 15);
  CHECK(seek(-20, SEEK_END, 30).enrichment->offset_after == 30);
  auto fail = seek(-100, SEEK_SET, -22);
  CHECK(fail.enrichment->offset_before == 30);
  CHECK(fail.enrichment->offset_after == 30);
}

TEST_CASE("unlink and re-create with the same inode mints a new tag") {
  FdTable t;
  auto a = t.enrich(open_ev("app.log", O_WRONLY | O_CREAT | O_TRUNC, 3, 12));
  auto close3 = ev(SyscallKind::close, 0);
  close3.args.fd = 3;
  t.enrich(close3);
  auto u = ev(SyscallKind::unlink, 0);
  u.args.path = "app.log";
  auto uout = t.enrich(u);
  CHECK(uout.enrichment->tag == a.enrichment->tag);
  auto b = t.enrich(open_ev("app.log", O_WRONLY | O_CREAT | O_TRUNC, 3, 12));
  REQUIRE(a.enrichment->tag);
  REQUIRE(b.enrichment->tag);
  CHECK(a.enrichment->tag->inode == b.enrichment->tag->inode);
  CHECK(a.enrichment->tag != b.enrichment->tag);
}

TEST_CASE("a path reopened without hints keeps its synthetic identity") {
  FdTable t;
  auto a = t.enrich(open_ev("/x", O_RDWR | O_CREAT | O_TRUNC, 3));
  auto b = t.enrich(open_ev("/x", O_RDONLY, 4));
  REQUIRE(a.enrichment->tag);
  CHECK(a.enrichment->tag == b.enrichment->tag);
  CHECK(a.enrichment->tag->device == 0);
  CHECK(a.enrichment->tag->inode >= FdTable::kSyntheticInodeBase);
}

TEST_CASE("rename moves the path and replaces the target") {
  FdTable t;
  auto a = t.enrich(open_ev("/a", O_RDWR | O_CREAT | O_TRUNC, 3));
  auto b = t.enrich(open_ev("/b", O_RDWR | O_CREAT | O_TRUNC, 4));
  auto r = ev(SyscallKind::rename, 0);
  r.args.path = "/a";
  r.args.newpath = "/b";
  auto rout = t.enrich(r);
  CHECK(rout.enrichment->tag == a.enrichment->tag);
  CHECK(t.lookup(1, 3)->path == "/b");
  auto c = t.enrich(open_ev("/b", O_RDONLY, 5));
  CHECK(c.enrichment->tag == a.enrichment->tag);
  CHECK(c.enrichment->tag != b.enrichment->tag);
}

TEST_CASE("relative opens resolve through dirfd") {
  FdTable t;
  t.enrich(open_ev("/var/log", O_RDONLY | O_DIRECTORY, 3));
  auto e = open_ev("app.log", O_RDWR | O_CREAT, 4);
  e.args.dirfd = 3;
  t.enrich(e);
  CHECK(t.lookup(1, 4)->path == "/var/log/app.log");
  CHECK(t.lookup(1, 3)->file_type == FileType::directory);
}

TEST_CASE("children inherit descriptors") {
  FdTable t;
  t.enrich(open_ev("/f", O_RDWR | O_CREAT | O_TRUNC, 3, std::nullopt, 10));
  t.enrich(rw(SyscallKind::write, 3, 7, 10));
  auto child = rw(SyscallKind::write, 3, 3, 11);
  child.hints.ppid = 10;
  auto out = t.enrich(child);
  CHECK(out.enrichment->offset_before == 7);
  CHECK(t.inconsistencies() == 0);
}

TEST_CASE("unknown descriptors count as inconsistencies unless hinted") {
  FdTable t;
  auto out = t.enrich(rw(SyscallKind::read, 9, 10));
  CHECK_FALSE(out.enrichment->tag);
  CHECK_FALSE(out.enrichment->offset_before);
  CHECK(t.inconsistencies() == 1);

  auto hinted = rw(SyscallKind::read, 8, 10);
  hinted.hints.dev = 8;
  hinted.hints.ino = 99;
  hinted.hints.pos = 40;
  auto h = t.enrich(hinted);
  REQUIRE(h.enrichment->tag);
  CHECK(h.enrichment->tag->inode == 99);
  CHECK(h.enrichment->offset_before == 40);
  CHECK(h.enrichment->offset_after == 50);
}

TEST_CASE("file type classification") {
  CHECK(classify_file_type(FileType::socket) == FileType::socket);
  CHECK(classify_file_type(std::nullopt, "/tmp/", 0, true) == FileType::directory);
  CHECK(classify_file_type(std::nullopt, "/tmp", O_DIRECTORY, true) == FileType::directory);
  CHECK(classify_file_type(std::nullopt, "/tmp/", 0, false) == FileType::unknown);
  CHECK(classify_file_type(std::nullopt, "/tmp/x", 0, true) == FileType::unknown);
  CHECK(file_type_from_mode_bits(0010000 | 0644) == FileType::pipe);
  CHECK(file_type_from_mode_bits(0100000 | 0644) == FileType::regular);
  CHECK(file_type_from_mode_bits(0060000) == FileType::block_device);
}

TEST_CASE("mknod creates a known empty regular file") {
  FdTable t;
  auto m = ev(SyscallKind::mknod, 0);
  m.args.path = "/n";
  m.args.mode = 0100000 | 0644;
  m.args.dev = 0;
  CHECK(t.enrich(m).enrichment->file_type == FileType::regular);
  CHECK(t.known_size_of_path("/n") == 0);
}
