// Copyright 2026 The iodiag Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>

#include "iodiag/model.hpp"

namespace iodiag {

// Snapshot of what is known about one open descriptor.
struct OpenFileState {
  std::optional<std::string> path;
  FileType file_type = FileType::unknown;
  std::optional<std::int64_t> offset;
  std::optional<std::int64_t> known_size;
  bool append_mode = false;
  std::optional<FileTag> tag;
};

// Type from a kernel-provided hint; otherwise a successful open of a path
// with a trailing '/' or O_DIRECTORY is a directory; otherwise unknown.
FileType classify_file_type(std::optional<FileType> hint,
                            std::optional<std::string_view> path = {},
                            std::int64_t open_flags = 0,
                            bool succeeded = false);

// Type encoded in the S_IFMT bits of a mknod mode argument.
FileType file_type_from_mode_bits(std::int64_t mode);

// Reconstructed per-session descriptor state. Not thread-safe: one pipeline
// thread feeds it, events of each pid in order.
//
// File sizes live with the file, not the descriptor, so a write through one
// fd is visible through every other fd on the same file. Files without a
// kernel-provided (dev, ino) get a synthetic identity on device 0.
class FdTable {
 public:
  FdTable();
  ~FdTable();
  FdTable(FdTable&&) noexcept;
  FdTable& operator=(FdTable&&) noexcept;

  // Applies the event's state transition and returns it with enrichment
  // attached. Never throws for inconsistent input; see inconsistencies().
  SyscallEvent enrich(SyscallEvent event);

  std::optional<OpenFileState> lookup(std::int64_t pid, std::int64_t fd) const;
  // Current tag of the live incarnation bound to (dev, ino), if any.
  std::optional<FileTag> current_tag(std::uint64_t dev,
                                     std::uint64_t ino) const;
  std::optional<std::int64_t> known_size_of_path(const std::string& path) const;

  std::uint64_t inconsistencies() const { return inconsistencies_; }
  std::size_t open_descriptors() const { return fds_.size(); }

  static constexpr std::uint64_t kSyntheticInodeBase = 1ull << 48;

 private:
  struct FileState {
    std::pair<std::uint64_t, std::uint64_t> id;
    std::optional<FileTag> tag;
    std::optional<std::int64_t> size;
    FileType type = FileType::unknown;
    std::optional<std::string> path;
  };
  using FilePtr = std::shared_ptr<FileState>;
  struct OpenFd {
    FilePtr file;
    std::optional<std::string> path;
    std::optional<std::int64_t> offset;
    bool append = false;
    FileType type = FileType::unknown;
  };
  struct Key {
    std::int64_t pid;
    std::int64_t fd;
    friend bool operator==(const Key&, const Key&) = default;
  };
  struct KeyHash {
    std::size_t operator()(const Key& k) const noexcept {
      return std::hash<std::int64_t>{}(k.pid * 1000003 ^ k.fd);
    }
  };

  void inherit(std::int64_t pid, std::int64_t ppid);
  std::optional<std::string> effective_path(const SyscallEvent& ev) const;
  FilePtr file_for_open(const SyscallEvent& ev, const std::string& path);
  FilePtr file_for_path(const SyscallEvent& ev,
                        const std::optional<std::string>& path);
  FilePtr new_file(std::optional<std::pair<std::uint64_t, std::uint64_t>> id);
  OpenFd* find_fd(std::int64_t pid, std::int64_t fd);
  OpenFd* adopt_fd(const SyscallEvent& ev);
  void forget_path(const std::string& path);
  void unbind(const FilePtr& file);

  void on_open(const SyscallEvent& ev, EnrichmentInfo& out);
  void on_data(const SyscallEvent& ev, EnrichmentInfo& out);
  void on_lseek(const SyscallEvent& ev, EnrichmentInfo& out);
  void on_close(const SyscallEvent& ev, EnrichmentInfo& out);
  void on_unlink(const SyscallEvent& ev, EnrichmentInfo& out);
  void on_rename(const SyscallEvent& ev, EnrichmentInfo& out);
  void on_truncate(const SyscallEvent& ev, EnrichmentInfo& out);
  void on_mknod(const SyscallEvent& ev, EnrichmentInfo& out);
  void on_other(const SyscallEvent& ev, EnrichmentInfo& out);

  std::unordered_map<Key, OpenFd, KeyHash> fds_;
  std::map<std::pair<std::uint64_t, std::uint64_t>, FilePtr> by_identity_;
  std::unordered_map<std::string, FilePtr> by_path_;
  std::unordered_set<std::int64_t> seen_pids_;
  std::uint64_t next_synthetic_ = kSyntheticInodeBase;
  std::uint64_t inconsistencies_ = 0;
};

// Free-function form of FdTable::enrich.
SyscallEvent enrich_event(FdTable& table, SyscallEvent event);

}  // namespace iodiag
