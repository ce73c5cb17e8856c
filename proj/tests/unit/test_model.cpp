// Copyright 2026 The iodiag Authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>

#include "iodiag/error.hpp"
#include "iodiag/model.hpp"

using namespace iodiag;

TEST_CASE("catalog has 42 distinct syscalls in four categories") {
  auto cat = syscall_catalog();
  CHECK(cat.size() == 42);
  std::set<std::string_view> names;
  std::map<SyscallCategory, int> per;
  for (std::size_t i = 0; i < cat.size(); ++i) {
    CHECK(static_cast<std::size_t>(cat[i].kind) == i);
    names.insert(cat[i].name);
    ++per[cat[i].category];
  }
  CHECK(names.size() == 42);
  CHECK(per[SyscallCategory::data] == 9);
  CHECK(per[SyscallCategory::metadata] == 19);
  CHECK(per[SyscallCategory::extended] == 12);
  CHECK(per[SyscallCategory::directory] == 2);
}

TEST_CASE("catalog lookup") {
  CHECK(catalog_lookup("pread64") == SyscallKind::pread64);
  CHECK(to_string(SyscallKind::renameat2) == "renameat2");
  CHECK(info(SyscallKind::lgetxattr).category == SyscallCategory::extended);
  CHECK(info(SyscallKind::mknodat).category == SyscallCategory::directory);
  CHECK_THROWS_AS(catalog_lookup("mmap"), NotInCatalog);
  CHECK_THROWS_AS(catalog_lookup(""), NotInCatalog);
  CHECK_FALSE(find_syscall("sendfile"));
}

TEST_CASE("kind predicates") {
  CHECK(is_open_kind(SyscallKind::creat));
  CHECK(is_open_kind(SyscallKind::openat));
  CHECK_FALSE(is_open_kind(SyscallKind::close));
  CHECK(is_read_kind(SyscallKind::readv));
  CHECK(is_write_kind(SyscallKind::pwrite64));
  CHECK(is_positional_kind(SyscallKind::pread64));
  CHECK_FALSE(is_positional_kind(SyscallKind::read));
  CHECK(is_unlink_kind(SyscallKind::unlinkat));
  CHECK(is_rename_kind(SyscallKind::renameat2));
  CHECK(is_fd_kind(SyscallKind::fstat));
  CHECK(is_fd_kind(SyscallKind::fgetxattr));
  CHECK_FALSE(is_fd_kind(SyscallKind::stat));
}

TEST_CASE("args must fit the kind") {
  SyscallArgs a;
  a.fd = 3;
  a.count = 10;
  CHECK(args_fit_kind(SyscallKind::read, a));
  CHECK_FALSE(args_fit_kind(SyscallKind::pread64, a));
  a.offset = 0;
  CHECK(args_fit_kind(SyscallKind::pread64, a));
  CHECK(a.has(ArgField::offset));
  CHECK_FALSE(a.has(ArgField::path));
}

TEST_CASE("file types and tags have scalar forms") {
  CHECK(file_type_from_string("fifo") == FileType::pipe);
  CHECK(file_type_from_string("dir") == FileType::directory);
  CHECK(file_type_from_string("regular") == FileType::regular);
  CHECK(file_type_from_string("nonsense") == FileType::unknown);
  for (int t = 0; t <= static_cast<int>(FileType::unknown); ++t) {
    auto ft = static_cast<FileType>(t);
    CHECK(file_type_from_string(to_string(ft)) == ft);
  }
  FileTag tag{2049, 12, 1'000'000'000};
  CHECK(to_string(tag) == "2049:12:1000000000");
  CHECK(file_tag_from_string("2049:12:1000000000") == tag);
  CHECK_FALSE(file_tag_from_string("2049:12"));
  CHECK(FileTag{1, 2, 3} < FileTag{1, 2, 4});
}
