// Copyright 2026 The iodiag Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <istream>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <variant>
#include <vector>

#include "iodiag/model.hpp"
#include "iodiag/record.hpp"
#include "iodiag/ringbuf.hpp"

namespace iodiag {

inline constexpr std::int64_t kAtFdCwd = -100;

// Joins a dirfd-relative path onto its directory. Absolute `rel` wins.
std::string join_path(std::string_view dir, std::string_view rel);

// The path dimension checks `path_hint` when the syscall carries no path
// argument; pass the fd's last-known path there.
bool match_filter(const SyscallEvent& event, const FilterSpec& filter,
                  std::optional<std::string_view> path_hint = std::nullopt);

// What an in-kernel filter can see about descriptors: the path each (pid, fd)
// was opened with. Updated from every paired event, filtered or not.
class PathTracker {
 public:
  std::optional<std::string_view> fd_path(std::int64_t pid,
                                          std::int64_t fd) const;
  // The path argument (made absolute against a known dirfd), else the fd's
  // last-known path.
  std::optional<std::string> event_path(const SyscallEvent& event) const;
  void observe(const SyscallEvent& event);

 private:
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
  std::unordered_map<Key, std::string, KeyHash> paths_;
  std::unordered_set<std::int64_t> seen_pids_;
};

struct PairingStats {
  std::uint64_t orphan_exits = 0;
  std::uint64_t unmatched_entries = 0;
};

// Merges entry/exit halves into SyscallEvents. A thread runs one syscall at a
// time, so a new entry on a tid with a pending entry closes the old one as
// unmatched; an exit pairs with the pending entry of the same kind or is
// counted as an orphan and skipped.
class HalfEventPairer {
 public:
  void push(RawHalfEvent half, std::vector<SyscallEvent>& out);
  // Emits still-pending entries (ret and t_exit unknown), oldest first.
  void finish(std::vector<SyscallEvent>& out);
  const PairingStats& stats() const { return stats_; }

 private:
  std::unordered_map<std::int64_t, RawHalfEvent> pending_;
  PairingStats stats_;
};

std::vector<SyscallEvent> pair_half_events(std::span<const RawHalfEvent> halves,
                                           PairingStats* stats = nullptr);

struct ReplayInput {
  std::istream* stream = nullptr;  // not owned
};

struct LiveTarget {
  std::vector<std::string> command;  // spawned and traced with descendants
};

struct CaptureSource {
  std::variant<ReplayInput, LiveTarget> mode;
  FilterSpec filter;
  std::string session;
  // Lane count 0 picks the default: 1 for replay, one per CPU for live.
  RingConfig ring{0, kDefaultLaneCapacity};
};

struct CaptureStats {
  std::uint64_t observed = 0;      // paired events seen before filtering
  std::uint64_t filtered_out = 0;
  std::uint64_t orphan_exits = 0;
  std::uint64_t unmatched_entries = 0;
  std::array<std::uint64_t, kSyscallKindCount> enqueued_by_kind{};
  RingStats ring;
};

class CaptureHandle {
 public:
  virtual ~CaptureHandle() = default;
  // Blocks until at least one event is available; an empty result means the
  // capture has ended and every buffered event has been handed out.
  virtual std::vector<SyscallEvent> next_batch(std::size_t max) = 0;
  // Ends capture early. Already-buffered events are still delivered.
  virtual void stop() = 0;
  virtual CaptureStats stats() const = 0;
};

// Replay works everywhere. Live throws Unsupported where no backend exists or
// privileges are missing, SpawnFailed when the command cannot be started.
std::unique_ptr<CaptureHandle> open_capture(const CaptureSource& source);

std::unique_ptr<CaptureHandle> spawn_and_trace(
    const std::vector<std::string>& command, const FilterSpec& filter,
    const std::string& session, RingConfig ring = {0, kDefaultLaneCapacity});

bool live_capture_supported();

namespace detail {

// Producer side shared by every backend: tracks paths, filters, stamps
// session and sequence numbers and enqueues encoded events.
class CaptureProducer {
 public:
  CaptureProducer(RingBuffer& ring, FilterSpec filter, std::string session);

  // Returns false if the event was filtered out or dropped.
  bool offer(SyscallEvent event, std::size_t lane);

  // Counters may be read from another thread while the producer runs.
  std::uint64_t observed() const { return observed_.load(); }
  std::uint64_t filtered_out() const { return filtered_out_.load(); }
  std::array<std::uint64_t, kSyscallKindCount> enqueued_by_kind() const;

 private:
  RingBuffer& ring_;
  FilterSpec filter_;
  std::string session_;
  PathTracker tracker_;
  std::vector<std::uint64_t> lane_seq_;
  std::vector<std::byte> scratch_;
  std::atomic<std::uint64_t> observed_{0};
  std::atomic<std::uint64_t> filtered_out_{0};
  std::array<std::atomic<std::uint64_t>, kSyscallKindCount> enqueued_by_kind_{};
};

// Drains up to `max` events across lanes, decoding records.
std::size_t drain_lanes(RingBuffer& ring, std::size_t max,
                        std::vector<SyscallEvent>& out);

std::unique_ptr<CaptureHandle> make_live_capture(const LiveTarget& target,
                                                 const FilterSpec& filter,
                                                 const std::string& session,
                                                 RingConfig ring);

}  // namespace detail

}  // namespace iodiag
