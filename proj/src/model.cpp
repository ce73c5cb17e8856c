// Copyright 2026 The iodiag Authors
// SPDX-License-Identifier: Apache-2.0

#include "iodiag/model.hpp"

#include <array>
#include <charconv>

#include "iodiag/error.hpp"

namespace iodiag {

namespace {

using enum ArgField;

constexpr ArgMask bits(std::initializer_list<ArgField> fields) {
  ArgMask m = 0;
  for (auto f : fields) m |= arg_bit(f);
  return m;
}

using K = SyscallKind;
using C = SyscallCategory;

constexpr std::array<SyscallInfo, kSyscallKindCount> kCatalog{{
    {K::read, "read", C::data, bits({fd, count})},
    {K::pread64, "pread64", C::data, bits({fd, count, offset})},
    {K::readv, "readv", C::data, bits({fd, count})},
    {K::write, "write", C::data, bits({fd, count})},
    {K::pwrite64, "pwrite64", C::data, bits({fd, count, offset})},
    {K::writev, "writev", C::data, bits({fd, count})},
    {K::fsync, "fsync", C::data, bits({fd})},
    {K::fdatasync, "fdatasync", C::data, bits({fd})},
    {K::readahead, "readahead", C::data, bits({fd, offset, count})},

    {K::creat, "creat", C::metadata, bits({path, mode})},
    {K::open, "open", C::metadata, bits({path, flags, mode})},
    {K::openat, "openat", C::metadata, bits({dirfd, path, flags, mode})},
    {K::close, "close", C::metadata, bits({fd})},
    {K::lseek, "lseek", C::metadata, bits({fd, offset, whence})},
    {K::truncate, "truncate", C::metadata, bits({path, length})},
    {K::ftruncate, "ftruncate", C::metadata, bits({fd, length})},
    {K::rename, "rename", C::metadata, bits({path, newpath})},
    {K::renameat, "renameat", C::metadata,
     bits({dirfd, path, newdirfd, newpath})},
    {K::renameat2, "renameat2", C::metadata,
     bits({dirfd, path, newdirfd, newpath, flags})},
    {K::unlink, "unlink", C::metadata, bits({path})},
    {K::unlinkat, "unlinkat", C::metadata, bits({dirfd, path, flags})},
    {K::readlink, "readlink", C::metadata, bits({path, count})},
    {K::readlinkat, "readlinkat", C::metadata, bits({dirfd, path, count})},
    {K::stat, "stat", C::metadata, bits({path})},
    {K::lstat, "lstat", C::metadata, bits({path})},
    {K::fstat, "fstat", C::metadata, bits({fd})},
    {K::fstatfs, "fstatfs", C::metadata, bits({fd})},
    {K::fstatat, "fstatat", C::metadata, bits({dirfd, path, flags})},

    {K::getxattr, "getxattr", C::extended, bits({path, name, count})},
    {K::lgetxattr, "lgetxattr", C::extended, bits({path, name, count})},
    {K::fgetxattr, "fgetxattr", C::extended, bits({fd, name, count})},
    {K::setxattr, "setxattr", C::extended, bits({path, name, count, flags})},
    {K::lsetxattr, "lsetxattr", C::extended, bits({path, name, count, flags})},
    {K::fsetxattr, "fsetxattr", C::extended, bits({fd, name, count, flags})},
    {K::listxattr, "listxattr", C::extended, bits({path, count})},
    {K::llistxattr, "llistxattr", C::extended, bits({path, count})},
    {K::flistxattr, "flistxattr", C::extended, bits({fd, count})},
    {K::removexattr, "removexattr", C::extended, bits({path, name})},
    {K::lremovexattr, "lremovexattr", C::extended, bits({path, name})},
    {K::fremovexattr, "fremovexattr", C::extended, bits({fd, name})},

    {K::mknod, "mknod", C::directory, bits({path, mode, dev})},
    {K::mknodat, "mknodat", C::directory, bits({dirfd, path, mode, dev})},
}};

constexpr bool catalog_is_ordered() {
  for (std::size_t i = 0; i < kCatalog.size(); ++i)
    if (static_cast<std::size_t>(kCatalog[i].kind) != i) return false;
  return true;
}
static_assert(catalog_is_ordered(), "catalog rows must follow enum order");

constexpr std::array<std::string_view, kArgFieldCount> kArgNames{
    "fd",    "dirfd", "path", "newdirfd", "newpath", "count", "offset",
    "whence", "flags", "mode", "length",  "name",    "dev"};

constexpr std::array<std::string_view, 9> kFileTypeNames{
    "regular", "directory", "socket",  "block_device", "char_device",
    "pipe",    "symlink",   "other",   "unknown"};

}  // namespace

std::span<const SyscallInfo> syscall_catalog() { return kCatalog; }

const SyscallInfo& info(SyscallKind kind) {
  return kCatalog[static_cast<std::size_t>(kind)];
}

std::string_view to_string(SyscallKind kind) { return info(kind).name; }

std::string_view to_string(SyscallCategory category) {
  switch (category) {
    case C::data: return "data";
    case C::metadata: return "metadata";
    case C::extended: return "extended";
    case C::directory: return "directory";
  }
  return "?";
}

std::string_view to_string(ArgField field) {
  return kArgNames[static_cast<std::size_t>(field)];
}

std::optional<ArgField> arg_field_from_string(std::string_view name) {
  for (std::size_t i = 0; i < kArgNames.size(); ++i)
    if (kArgNames[i] == name) return static_cast<ArgField>(i);
  return std::nullopt;
}

std::optional<SyscallKind> find_syscall(std::string_view name) {
  for (const auto& row : kCatalog)
    if (row.name == name) return row.kind;
  return std::nullopt;
}

SyscallKind catalog_lookup(std::string_view name) {
  if (auto k = find_syscall(name)) return *k;
  throw NotInCatalog(std::string(name));
}

bool is_open_kind(SyscallKind k) {
  return k == K::creat || k == K::open || k == K::openat;
}
bool is_read_kind(SyscallKind k) {
  return k == K::read || k == K::pread64 || k == K::readv;
}
bool is_write_kind(SyscallKind k) {
  return k == K::write || k == K::pwrite64 || k == K::writev;
}
bool is_positional_kind(SyscallKind k) {
  return k == K::pread64 || k == K::pwrite64;
}
bool is_unlink_kind(SyscallKind k) {
  return k == K::unlink || k == K::unlinkat;
}
bool is_rename_kind(SyscallKind k) {
  return k == K::rename || k == K::renameat || k == K::renameat2;
}
bool is_fd_kind(SyscallKind k) {
  return (info(k).args & arg_bit(ArgField::fd)) != 0;
}

std::string_view to_string(FileType t) {
  return kFileTypeNames[static_cast<std::size_t>(t)];
}

FileType file_type_from_string(std::string_view s) {
  for (std::size_t i = 0; i < kFileTypeNames.size(); ++i)
    if (kFileTypeNames[i] == s) return static_cast<FileType>(i);
  if (s == "dir") return FileType::directory;
  if (s == "fifo") return FileType::pipe;
  if (s == "block" || s == "blk") return FileType::block_device;
  if (s == "char" || s == "chr") return FileType::char_device;
  if (s == "link" || s == "lnk") return FileType::symlink;
  if (s == "sock") return FileType::socket;
  if (s == "file" || s == "reg") return FileType::regular;
  return FileType::unknown;
}

std::string to_string(const FileTag& tag) {
  return std::to_string(tag.device) + ":" + std::to_string(tag.inode) + ":" +
         std::to_string(tag.first_access);
}

std::optional<FileTag> file_tag_from_string(std::string_view s) {
  FileTag tag;
  auto parse = [&s](auto& out, bool last) -> bool {
    auto end = last ? s.size() : s.find(':');
    if (end == std::string_view::npos || end == 0) return false;
    auto [p, ec] = std::from_chars(s.data(), s.data() + end, out);
    if (ec != std::errc{} || p != s.data() + end) return false;
    s.remove_prefix(last ? end : end + 1);
    return true;
  };
  if (!parse(tag.device, false) || !parse(tag.inode, false) ||
      !parse(tag.first_access, true))
    return std::nullopt;
  return tag;
}

ArgMask SyscallArgs::present() const {
  ArgMask m = 0;
  if (fd) m |= arg_bit(ArgField::fd);
  if (dirfd) m |= arg_bit(ArgField::dirfd);
  if (path) m |= arg_bit(ArgField::path);
  if (newdirfd) m |= arg_bit(ArgField::newdirfd);
  if (newpath) m |= arg_bit(ArgField::newpath);
  if (count) m |= arg_bit(ArgField::count);
  if (offset) m |= arg_bit(ArgField::offset);
  if (whence) m |= arg_bit(ArgField::whence);
  if (flags) m |= arg_bit(ArgField::flags);
  if (mode) m |= arg_bit(ArgField::mode);
  if (length) m |= arg_bit(ArgField::length);
  if (name) m |= arg_bit(ArgField::name);
  if (dev) m |= arg_bit(ArgField::dev);
  return m;
}

bool args_fit_kind(SyscallKind kind, const SyscallArgs& args) {
  return args.present() == info(kind).args;
}

}  // namespace iodiag
