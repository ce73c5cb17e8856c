// Copyright 2026 The iodiag Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>

namespace iodiag {

enum class SyscallCategory : std::uint8_t { data, metadata, extended, directory };

// The traced syscall catalog. Enumerator order is part of the on-disk
// encoding; append only.
enum class SyscallKind : std::uint8_t {
  // data
  read, pread64, readv, write, pwrite64, writev, fsync, fdatasync, readahead,
  // metadata
  creat, open, openat, close, lseek, truncate, ftruncate, rename, renameat,
  renameat2, unlink, unlinkat, readlink, readlinkat, stat, lstat, fstat,
  fstatfs, fstatat,
  // extended attributes
  getxattr, lgetxattr, fgetxattr, setxattr, lsetxattr, fsetxattr, listxattr,
  llistxattr, flistxattr, removexattr, lremovexattr, fremovexattr,
  // directory
  mknod, mknodat,
};

inline constexpr std::size_t kSyscallKindCount = 42;

// Argument slots a syscall may carry. Each kind defines a fixed subset.
enum class ArgField : std::uint8_t {
  fd, dirfd, path, newdirfd, newpath, count, offset, whence, flags, mode,
  length, name, dev,
};

inline constexpr std::size_t kArgFieldCount = 13;

using ArgMask = std::uint16_t;

constexpr ArgMask arg_bit(ArgField f) {
  return static_cast<ArgMask>(1u << static_cast<unsigned>(f));
}

struct SyscallInfo {
  SyscallKind kind;
  std::string_view name;
  SyscallCategory category;
  ArgMask args;
};

std::span<const SyscallInfo> syscall_catalog();
const SyscallInfo& info(SyscallKind kind);
std::string_view to_string(SyscallKind kind);
std::string_view to_string(SyscallCategory category);
std::string_view to_string(ArgField field);
std::optional<ArgField> arg_field_from_string(std::string_view name);

// Throws NotInCatalog for anything outside the 42 catalog members.
SyscallKind catalog_lookup(std::string_view name);
std::optional<SyscallKind> find_syscall(std::string_view name);

// Kind predicates used throughout enrichment, correlation and analysis.
bool is_open_kind(SyscallKind k);       // creat, open, openat
bool is_read_kind(SyscallKind k);       // read, pread64, readv
bool is_write_kind(SyscallKind k);      // write, pwrite64, writev
bool is_positional_kind(SyscallKind k); // pread64, pwrite64
bool is_unlink_kind(SyscallKind k);
bool is_rename_kind(SyscallKind k);
// True when the kind's primary target is a file descriptor argument.
bool is_fd_kind(SyscallKind k);

enum class FileType : std::uint8_t {
  regular, directory, socket, block_device, char_device, pipe, symlink, other,
  unknown,
};

std::string_view to_string(FileType t);
// Accepts the canonical names plus a few common spellings ("fifo", "dir",
// "block", "char", "link"). Anything else maps to unknown.
FileType file_type_from_string(std::string_view s);

struct FileTag {
  std::uint64_t device = 0;
  std::uint64_t inode = 0;
  std::int64_t first_access = 0;

  friend auto operator<=>(const FileTag&, const FileTag&) = default;
};

// "dev:ino:first_access", used as the scalar form of a tag in queries.
std::string to_string(const FileTag& tag);
std::optional<FileTag> file_tag_from_string(std::string_view s);

struct EnrichmentInfo {
  FileType file_type = FileType::unknown;
  std::optional<std::int64_t> offset_before;
  std::optional<std::int64_t> offset_after;
  std::optional<FileTag> tag;
  std::optional<std::string> resolved_path;

  friend bool operator==(const EnrichmentInfo&, const EnrichmentInfo&) = default;
};

struct SyscallArgs {
  std::optional<std::int64_t> fd;
  std::optional<std::int64_t> dirfd;
  std::optional<std::string> path;
  std::optional<std::int64_t> newdirfd;
  std::optional<std::string> newpath;
  std::optional<std::int64_t> count;
  std::optional<std::int64_t> offset;
  std::optional<std::int64_t> whence;
  std::optional<std::int64_t> flags;
  std::optional<std::int64_t> mode;
  std::optional<std::int64_t> length;
  std::optional<std::string> name;
  std::optional<std::int64_t> dev;

  ArgMask present() const;
  bool has(ArgField f) const { return (present() & arg_bit(f)) != 0; }

  friend bool operator==(const SyscallArgs&, const SyscallArgs&) = default;
};

// True iff args carries exactly the fields the kind defines.
bool args_fit_kind(SyscallKind kind, const SyscallArgs& args);

// Facts a kernel-side tracer can read directly and a recorded trace may carry
// alongside the syscall: file type, inode identity, current file position and
// the parent of a newly seen process.
struct KernelHints {
  std::optional<FileType> file_type;
  std::optional<std::uint64_t> dev;
  std::optional<std::uint64_t> ino;
  std::optional<std::int64_t> pos;
  std::optional<std::int64_t> ppid;

  bool empty() const {
    return !file_type && !dev && !ino && !pos && !ppid;
  }
  friend bool operator==(const KernelHints&, const KernelHints&) = default;
};

struct SyscallEvent {
  std::string session;
  std::int64_t pid = 0;
  std::int64_t tid = 0;
  std::string comm;  // at most 16 bytes, like the kernel's task comm
  SyscallKind kind = SyscallKind::read;
  SyscallArgs args;
  std::optional<std::int64_t> retval;  // raw kernel value, -errno on failure
  std::int64_t t_entry = 0;
  std::optional<std::int64_t> t_exit;
  KernelHints hints;
  std::optional<EnrichmentInfo> enrichment;
  std::uint64_t seq = 0;

  bool succeeded() const { return retval && *retval >= 0; }

  friend bool operator==(const SyscallEvent&, const SyscallEvent&) = default;
};

inline constexpr std::size_t kMaxCommBytes = 16;

struct FilterSpec {
  std::optional<std::set<SyscallKind>> kinds;
  std::optional<std::set<std::int64_t>> pids;
  std::optional<std::set<std::int64_t>> tids;
  std::optional<std::set<std::string>> path_prefixes;

  bool match_all() const { return !kinds && !pids && !tids && !path_prefixes; }
  friend bool operator==(const FilterSpec&, const FilterSpec&) = default;
};

struct SessionStats {
  std::uint64_t produced = 0;
  std::uint64_t dropped = 0;
  std::uint64_t stored = 0;
  std::uint64_t unresolved = 0;
  std::uint64_t filtered_out = 0;
  std::uint64_t orphan_exits = 0;
  std::uint64_t inconsistencies = 0;

  friend bool operator==(const SessionStats&, const SessionStats&) = default;
};

struct Session {
  std::string name;
  std::int64_t created_at = 0;  // unix epoch nanoseconds
  FilterSpec filter;
  SessionStats stats;
};

}  // namespace iodiag
