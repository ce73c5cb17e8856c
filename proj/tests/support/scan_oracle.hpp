// Copyright 2026 The iodiag Authors
// SPDX-License-Identifier: Apache-2.0

// Linear-scan reference for store queries and aggregations. Field values are
// read back out of each event's exported JSON rather than from the model
// structs the store indexes.

#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "iodiag/store.hpp"

namespace iodiag::testing {

nlohmann::json oracle_field(const nlohmann::json& record, const std::string& field);

struct OracleQueryResult {
  std::vector<std::uint64_t> ids;
  std::size_t total = 0;
};

OracleQueryResult oracle_query(const std::vector<StoredEvent>& all, const QuerySpec& spec);
std::vector<AggRow> oracle_aggregate(const std::vector<StoredEvent>& all, const AggSpec& spec);

// Random specs over the vocabulary of random_events().
QuerySpec random_query_spec(std::uint64_t seed, const std::string& session);
AggSpec random_agg_spec(std::uint64_t seed, const std::string& session);

}  // namespace iodiag::testing
