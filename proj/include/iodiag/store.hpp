// Copyright 2026 The iodiag Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "iodiag/model.hpp"

namespace iodiag {

// Field paths understood by queries and aggregations. Aliases:
// proc_name = comm, retval = ret, and the enrichment fields may be named
// without their "enrichment." prefix. "path" is the resolved path when known,
// else the path argument. Unknown names are valid and match nothing.
struct FieldRef {
  enum class Base : std::uint8_t {
    id, session, pid, tid, comm, kind, category, ret, t_entry, t_exit, seq,
    arg, file_type, offset_before, offset_after, tag, resolved_path, path,
  };
  Base base = Base::id;
  ArgField arg = ArgField::fd;  // when base == arg
};

std::optional<FieldRef> parse_field(std::string_view path);
std::string field_name(const FieldRef& field);
// Only enrichment fields may be updated.
bool is_mutable(const FieldRef& field);

struct StoredEvent {
  std::uint64_t id = 0;  // position in the session, stable across reopen
  SyscallEvent event;

  friend bool operator==(const StoredEvent&, const StoredEvent&) = default;
};

// The scalar value of `field` on an event, or null when the event has none.
nlohmann::json field_value(const StoredEvent& ev, const FieldRef& field);

// Total order over scalar values: null < numbers < strings.
int compare_values(const nlohmann::json& a, const nlohmann::json& b);

struct Predicate {
  enum class Op : std::uint8_t { equals, in, prefix, range };
  Op op = Op::equals;
  std::vector<nlohmann::json> values;   // equals: one; in: any number
  std::string prefix;
  std::optional<std::int64_t> lo;       // range: lo <= v < hi
  std::optional<std::int64_t> hi;

  static Predicate eq(nlohmann::json v);
  static Predicate one_of(std::vector<nlohmann::json> vs);
  static Predicate starts_with(std::string p);
  static Predicate between(std::optional<std::int64_t> lo,
                           std::optional<std::int64_t> hi);
};

struct FieldMatch {
  std::string field;
  Predicate pred;
};

// A null value never matches; a range only matches integers.
bool matches(const StoredEvent& ev, const FieldMatch& m);

struct SortSpec {
  std::string field = "t_entry";
  bool descending = false;
};

struct QuerySpec {
  std::string session;
  std::vector<FieldMatch> match;
  std::optional<std::pair<std::int64_t, std::int64_t>> time_range;  // [t0, t1)
  SortSpec sort;
  std::optional<std::size_t> limit;
  std::size_t offset = 0;
};

struct QueryResult {
  std::vector<StoredEvent> events;
  std::size_t total = 0;  // matches before pagination
};

struct Metric {
  enum class Kind : std::uint8_t { count, sum, percentile };
  Kind kind = Kind::count;
  std::string field;
  double p = 50.0;
};

struct AggSpec {
  std::string session;
  std::vector<std::string> group_by;
  std::optional<std::int64_t> bucket_ns;
  Metric metric;
  std::optional<std::size_t> top_n;  // keep the N groups with the largest total
  std::vector<FieldMatch> match;
  std::optional<std::pair<std::int64_t, std::int64_t>> time_range;
};

struct AggRow {
  std::vector<nlohmann::json> group;
  std::optional<std::int64_t> bucket;  // bucket start, a multiple of the width
  std::int64_t value = 0;

  friend bool operator==(const AggRow&, const AggRow&) = default;
};

// Throws MalformedSpec for bad ranges, widths, percentiles or metric fields.
void validate(const QuerySpec& spec);
void validate(const AggSpec& spec);

// Sort order used by every query: the sort field, then seq, then id.
bool query_less(const StoredEvent& a, const StoredEvent& b,
                const FieldRef* field, bool descending);

// Evaluates an aggregation over any event sequence (used by the store and
// reusable over query results).
std::vector<AggRow> aggregate_events(std::span<const StoredEvent* const> events,
                                     const AggSpec& spec);

struct StoreOptions {
  std::optional<std::uint64_t> max_events;  // across all sessions
};

// Embedded document store. One directory per session holding meta.json,
// an append-only events.seg and a patches.log of enrichment updates.
// Thread-safe: one writer and any number of readers.
class Store {
 public:
  explicit Store(std::filesystem::path dir, StoreOptions options = {});
  ~Store();
  Store(const Store&) = delete;
  Store& operator=(const Store&) = delete;

  const std::filesystem::path& dir() const { return dir_; }

  // Throws DuplicateSession, or Error for names that are not filesystem-safe.
  Session create_session(const std::string& name, const FilterSpec& filter = {},
                         std::optional<std::int64_t> created_at = std::nullopt);
  bool has_session(const std::string& name) const;
  Session session(const std::string& name) const;  // UnknownSession
  std::vector<Session> sessions() const;           // sorted by name
  void set_stats(const std::string& name, const SessionStats& stats);

  // Appends a batch; returns the number indexed. `stored` grows by that count.
  std::size_t index_batch(const std::string& session,
                          std::span<const SyscallEvent> events);

  QueryResult query(const QuerySpec& spec) const;
  std::vector<AggRow> aggregate(const AggSpec& spec) const;
  std::size_t count(const std::string& session) const;

  std::size_t update_field(const QuerySpec& spec, const std::string& field,
                           const nlohmann::json& value);
  // Sets one enrichment field on the given ids; returns how many changed.
  std::size_t update_by_ids(const std::string& session, const std::string& field,
                            const nlohmann::json& value,
                            std::span<const std::uint64_t> ids);

  // Visits every event in id order under a read lock.
  void scan(const std::string& session,
            const std::function<void(const StoredEvent&)>& fn) const;

  // Picks up sessions and appends written by another process.
  void refresh();
  // Flushes and fsyncs open segment files.
  void sync();

 private:
  struct SessionData;

  SessionData& get(const std::string& name);
  const SessionData& get(const std::string& name) const;
  void load_session(const std::filesystem::path& sdir);
  void read_tail(SessionData& s);
  void write_meta(const SessionData& s) const;
  void apply_update(SessionData& s, const FieldRef& f, const nlohmann::json& v,
                    std::span<const std::uint64_t> ids, bool persist,
                    std::size_t* changed);
  std::vector<const StoredEvent*> select(const SessionData& s,
                                         const std::vector<FieldMatch>& match,
                                         const std::optional<std::pair<std::int64_t, std::int64_t>>& range) const;

  std::filesystem::path dir_;
  StoreOptions options_;
  mutable std::shared_mutex mu_;
  std::map<std::string, std::unique_ptr<SessionData>> sessions_;
  std::uint64_t total_events_ = 0;
};

bool valid_session_name(std::string_view name);

// Stored-event JSON: the canonical record plus "id".
nlohmann::ordered_json to_json(const StoredEvent& ev);

nlohmann::ordered_json filter_to_json(const FilterSpec& filter);
FilterSpec filter_from_json(const nlohmann::json& j);
nlohmann::ordered_json stats_to_json(const SessionStats& stats);
SessionStats stats_from_json(const nlohmann::json& j);
nlohmann::ordered_json session_to_json(const Session& session);

}  // namespace iodiag
