// Copyright 2026 The iodiag Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <memory>
#include <string>

#include <json.hpp>

#include "iodiag/analyze.hpp"
#include "iodiag/store.hpp"

namespace iodiag {

// Request bodies. Query:
//   {"match": [{"field": "kind", "equals": "read"},
//              {"field": "pid", "in": [1, 2]},
//              {"field": "path", "prefix": "/var/log"},
//              {"field": "t_entry", "range": [lo, hi]}],
//    "time_range": [t0, t1], "sort": {"field": "t_entry", "order": "asc"},
//    "limit": 500, "offset": 0, "cursor": "..."}
// "match" may also be an object of field -> value equalities.
// Aggregate:
//   {"group_by": ["proc_name"], "bucket": "1s" | ns, "top_n": 12,
//    "metric": "count" | {"sum": "ret"} | {"percentile": "ret", "p": 99},
//    "match": ..., "time_range": ...}
// Both throw MalformedSpec on shape errors.
QuerySpec query_spec_from_json(const nlohmann::json& body, const std::string& session);
AggSpec agg_spec_from_json(const nlohmann::json& body, const std::string& session);
std::vector<FieldMatch> match_from_json(const nlohmann::json& match);

nlohmann::ordered_json to_json(const AggRow& row);
nlohmann::ordered_json rows_to_json(const std::vector<AggRow>& rows);

struct ApiOptions {
  std::string host = "127.0.0.1";
  int port = 8642;           // 0 picks a free port
  std::int64_t refresh_ms = 1000;
  std::string static_dir;    // served at / when set
  std::size_t page_size = 500;
};

// HTTP JSON interface over a store:
//   GET  /sessions
//   POST /sessions/{name}/query
//   POST /sessions/{name}/aggregate
//   POST /sessions/{name}/resolve
//   GET  /sessions/{name}/findings/{stale-offset|contention}
//   GET  /sessions/{name}/summary
class ApiServer {
 public:
  ApiServer(Store& store, ApiOptions options);
  ~ApiServer();
  ApiServer(const ApiServer&) = delete;
  ApiServer& operator=(const ApiServer&) = delete;

  // Binds the listening socket and returns the port. Throws Error when the
  // address is in use or cannot be bound.
  int bind();
  // Serves until stop(); binds first if needed.
  void run();
  // bind() plus run() on a background thread.
  int start();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace iodiag
