// Copyright 2026 The iodiag Authors
// SPDX-License-Identifier: Apache-2.0

// Synthetic sessions with known ground truth.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "iodiag/model.hpp"
#include "iodiag/pipeline.hpp"
#include "iodiag/store.hpp"

namespace iodiag::testing {

// Arbitrary events over a small vocabulary, some with enrichment, so that
// equality, prefix and range predicates all hit and miss.
std::vector<SyscallEvent> random_events(std::uint64_t seed, std::size_t n,
                                        const std::string& session);

// RocksDB-like run: 8 "db_bench" foreground threads, background threads
// "rocksdb:low0".."rocksdb:low6" and "rocksdb:high0". During each contention
// interval at least five low threads are busy and foreground throughput
// halves. Outside them at most two low threads are busy; `decoys` are quiet
// stretches where foreground dips but background stays low.
struct ContentionFixture {
  std::vector<SyscallEvent> events;
  std::vector<std::pair<std::int64_t, std::int64_t>> contention;  // [start, end) ns
  std::vector<std::pair<std::int64_t, std::int64_t>> decoys;
  std::int64_t bucket_ns = 1'000'000'000;
};

ContentionFixture contention_fixture(std::uint64_t seed, const std::string& session,
                                     int seconds = 600);

// File workload where every file is opened once per reader with kernel
// identity hints. Events are in time order and unenriched.
struct FileWorkload {
  std::vector<SyscallEvent> events;
  std::vector<std::size_t> file_of;  // per event: index of the file it touches
  std::size_t files = 0;
};

FileWorkload file_workload(std::uint64_t seed, const std::string& session,
                           std::size_t target_events, std::size_t files);

// Writes `n` syscalls of a mixed open/read/write/lseek/close workload as
// canonical JSONL records. Returns the number of lines written.
std::size_t write_synthetic_trace(const std::filesystem::path& out, std::size_t n,
                                  const std::string& session, std::uint64_t seed);

// Runs the replay pipeline over a JSONL file or over in-memory events.
PipelineResult ingest_file(Store& store, const std::filesystem::path& trace,
                           const std::string& session, bool resolve = true);
PipelineResult ingest_events(Store& store, const std::vector<SyscallEvent>& events,
                             const std::string& session, bool resolve = true);

// A fresh directory under the system temp dir, removed by the destructor.
class TempDir {
 public:
  explicit TempDir(const std::string& stem = "iodiag-test");
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace iodiag::testing
