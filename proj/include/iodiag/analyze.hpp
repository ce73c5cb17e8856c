// Copyright 2026 The iodiag Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "iodiag/model.hpp"
#include "iodiag/store.hpp"

namespace iodiag {

// A reader opened a fresh incarnation of a path and read it at an offset
// left over from the previous incarnation, skipping what had been written.
struct DataLossFinding {
  std::string path;
  FileTag old_tag;
  FileTag new_tag;
  std::int64_t reader_pid = 0;
  std::int64_t erroneous_offset = 0;
  std::int64_t bytes_written_to_new = 0;
  std::int64_t bytes_read_before_loss = 0;
  std::vector<std::uint64_t> evidence;  // event ids in time order
};

struct StaleOffsetReport {
  std::vector<DataLossFinding> findings;
  // Set when some events have no resolved path, so findings may be missing.
  std::optional<std::string> warning;
};

// Events considered are those with tags; paths come from resolved_path, or
// from the opening syscall when resolution has not run.
StaleOffsetReport detect_stale_offset_reads(const Store& store,
                                            const std::string& session);

struct ContentionParams {
  std::int64_t bucket_ns = 1'000'000'000;
  std::string background = "rocksdb:low*";
  std::string foreground = "db_bench*";
  std::size_t k_threshold = 5;
  double dip_threshold = 0.3;
};

struct ContentionInterval {
  std::int64_t t_start = 0;
  std::int64_t t_end = 0;
  std::size_t active_background_threads = 0;  // peak over the interval
  double foreground_rate = 0.0;               // mean syscalls per bucket
  double baseline_foreground_rate = 0.0;
  double dip_fraction = 0.0;
};

struct BucketActivity {
  std::int64_t start = 0;
  std::size_t background_names = 0;
  std::uint64_t foreground = 0;
  bool flagged = false;
};

// Glob match on thread names (shell wildcards * ? [...]). Throws
// MalformedPattern for an empty pattern or an unterminated bracket.
void check_pattern(std::string_view pattern);
bool glob_match(std::string_view pattern, std::string_view name);

// Per-bucket activity across the session's whole time span, empty buckets
// included. Baseline is the median foreground count over these buckets.
std::vector<BucketActivity> contention_buckets(const Store& store,
                                               const std::string& session,
                                               const ContentionParams& params,
                                               double* baseline = nullptr);

std::vector<ContentionInterval> contention_report(const Store& store,
                                                  const std::string& session,
                                                  const ContentionParams& params);

struct SessionSummary {
  std::string session;
  std::uint64_t events = 0;
  std::map<std::string, std::uint64_t> per_kind;
  std::map<std::string, std::uint64_t> per_file_type;
  struct Thread {
    std::int64_t pid = 0;
    std::int64_t tid = 0;
    std::string comm;  // most recent name
    std::uint64_t count = 0;
  };
  std::vector<Thread> per_thread;  // sorted by tid
  std::uint64_t produced = 0;
  std::uint64_t dropped = 0;
  double drop_fraction = 0.0;
  std::uint64_t unresolved = 0;
  double fraction_unresolved = 0.0;
  std::uint64_t inconsistencies = 0;
  std::uint64_t orphan_exits = 0;
  std::uint64_t filtered_out = 0;
};

SessionSummary session_summary(const Store& store, const std::string& session);

nlohmann::ordered_json to_json(const DataLossFinding& f);
nlohmann::ordered_json to_json(const StaleOffsetReport& r);
nlohmann::ordered_json to_json(const ContentionInterval& c);
nlohmann::ordered_json to_json(const SessionSummary& s);

}  // namespace iodiag
