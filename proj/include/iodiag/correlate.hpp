// Copyright 2026 The iodiag Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "iodiag/model.hpp"
#include "iodiag/store.hpp"

namespace iodiag {

// Resolution covers events that carry a tag plus fd-based events that could
// not be tagged (their open was never seen).
struct ResolutionReport {
  std::uint64_t resolved = 0;
  std::uint64_t unresolved = 0;
  double fraction_unresolved = 0.0;

  friend bool operator==(const ResolutionReport&, const ResolutionReport&) = default;
};

struct ResolutionConflict {
  FileTag tag;
  std::vector<std::string> paths;  // in order of first opening
  std::string chosen;
};

// For every tag with a successful open carrying a path, sets resolved_path
// on all events with that tag to the earliest open's path. Updates the
// session's unresolved count. Calls on one session are serialized.
ResolutionReport resolve_paths(Store& store, const std::string& session);

// Like resolve_paths, but returns nullopt instead of waiting when another
// resolution of the same session is in progress.
std::optional<ResolutionReport> try_resolve_paths(Store& store,
                                                  const std::string& session);

// Counts resolved and unresolved events as stored, without updating anything.
ResolutionReport resolution_status(const Store& store, const std::string& session);

std::vector<ResolutionConflict> resolution_conflicts(const Store& store,
                                                     const std::string& session);

nlohmann::ordered_json to_json(const ResolutionReport& report);
nlohmann::ordered_json to_json(const ResolutionConflict& conflict);

}  // namespace iodiag
