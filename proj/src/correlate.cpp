// Copyright 2026 The iodiag Authors
// SPDX-License-Identifier: Apache-2.0

#include "iodiag/correlate.hpp"

#include <algorithm>
#include <map>
#include <memory>
#include <mutex>
#include <unordered_map>

#include "iodiag/capture.hpp"

namespace iodiag {

namespace {

std::mutex& session_lock(const std::string& session) {
  static std::mutex registry_mu;
  static std::map<std::string, std::unique_ptr<std::mutex>> locks;
  std::lock_guard g(registry_mu);
  auto& m = locks[session];
  if (!m) m = std::make_unique<std::mutex>();
  return *m;
}

struct Opening {
  std::int64_t t = 0;
  std::uint64_t seq = 0;
  std::uint64_t id = 0;
  std::string path;
};

struct TagPaths {
  std::vector<Opening> opens;  // sorted by time
};

// Gathers every successful open that carries both a tag and a path. Relative
// paths under a dirfd are joined with the directory's opening path.
std::map<FileTag, TagPaths> collect_openings(const Store& store,
                                             const std::string& session) {
  std::vector<StoredEvent> copies;
  store.scan(session, [&](const StoredEvent& ev) {
    if (is_open_kind(ev.event.kind) && ev.event.succeeded() &&
        ev.event.args.path)
      copies.push_back(ev);
  });
  std::sort(copies.begin(), copies.end(), [](const auto& a, const auto& b) {
    return std::tie(a.event.t_entry, a.event.seq, a.id) <
           std::tie(b.event.t_entry, b.event.seq, b.id);
  });

  struct PidFd {
    std::int64_t pid, fd;
    bool operator<(const PidFd& o) const {
      return std::tie(pid, fd) < std::tie(o.pid, o.fd);
    }
  };
  std::map<PidFd, std::string> dirs;
  std::map<FileTag, TagPaths> out;
  for (const auto& ev : copies) {
    const auto& e = ev.event;
    std::string path = *e.args.path;
    if (!path.starts_with('/') && e.args.dirfd && *e.args.dirfd != kAtFdCwd) {
      auto it = dirs.find({e.pid, *e.args.dirfd});
      if (it != dirs.end()) path = join_path(it->second, path);
    }
    dirs[{e.pid, *e.retval}] = path;
    if (!e.enrichment || !e.enrichment->tag) continue;
    auto& opens_of = out[*e.enrichment->tag].opens;
    opens_of.push_back({e.t_entry, e.seq, ev.id, path});
  }
  return out;
}

bool in_population(const SyscallEvent& e) {
  if (e.enrichment && e.enrichment->tag) return true;
  return is_fd_kind(e.kind);
}

ResolutionReport resolve_locked(Store& store, const std::string& session) {
  const auto openings = collect_openings(store, session);

  std::map<FileTag, std::vector<std::uint64_t>> ids_by_tag;
  std::vector<std::uint64_t> orphans;  // tagged without an opening, or untagged
  ResolutionReport r;
  store.scan(session, [&](const StoredEvent& ev) {
    const auto& e = ev.event;
    if (!in_population(e)) return;
    if (e.enrichment && e.enrichment->tag &&
        openings.contains(*e.enrichment->tag)) {
      ids_by_tag[*e.enrichment->tag].push_back(ev.id);
      ++r.resolved;
    } else {
      orphans.push_back(ev.id);
      ++r.unresolved;
    }
  });
  for (const auto& [tag, ids] : ids_by_tag) {
    const std::string& chosen = openings.at(tag).opens.front().path;
    store.update_by_ids(session, "enrichment.resolved_path", chosen, ids);
  }
  // Clears anything a previous run set on events that no longer resolve.
  store.update_by_ids(session, "enrichment.resolved_path", nullptr, orphans);

  const std::uint64_t total = r.resolved + r.unresolved;
  r.fraction_unresolved =
      total ? static_cast<double>(r.unresolved) / static_cast<double>(total) : 0.0;
  SessionStats stats = store.session(session).stats;
  stats.unresolved = r.unresolved;
  store.set_stats(session, stats);
  return r;
}

}  // namespace

ResolutionReport resolve_paths(Store& store, const std::string& session) {
  store.session(session);  // UnknownSession before taking the lock
  std::lock_guard g(session_lock(store.dir().string() + "\n" + session));
  return resolve_locked(store, session);
}

std::optional<ResolutionReport> try_resolve_paths(Store& store,
                                                  const std::string& session) {
  store.session(session);
  std::unique_lock g(session_lock(store.dir().string() + "\n" + session),
                     std::try_to_lock);
  if (!g.owns_lock()) return std::nullopt;
  return resolve_locked(store, session);
}

ResolutionReport resolution_status(const Store& store, const std::string& session) {
  ResolutionReport r;
  store.scan(session, [&](const StoredEvent& ev) {
    const auto& e = ev.event;
    if (!in_population(e)) return;
    if (e.enrichment && e.enrichment->resolved_path && e.enrichment->tag)
      ++r.resolved;
    else
      ++r.unresolved;
  });
  const std::uint64_t total = r.resolved + r.unresolved;
  r.fraction_unresolved =
      total ? static_cast<double>(r.unresolved) / static_cast<double>(total) : 0.0;
  return r;
}

std::vector<ResolutionConflict> resolution_conflicts(const Store& store,
                                                     const std::string& session) {
  std::vector<ResolutionConflict> out;
  for (const auto& [tag, tp] : collect_openings(store, session)) {
    std::vector<std::string> paths;
    for (const auto& o : tp.opens)
      if (std::find(paths.begin(), paths.end(), o.path) == paths.end())
        paths.push_back(o.path);
    if (paths.size() < 2) continue;
    out.push_back({tag, paths, paths.front()});
  }
  return out;
}

nlohmann::ordered_json to_json(const ResolutionReport& r) {
  nlohmann::ordered_json j;
  j["resolved"] = r.resolved;
  j["unresolved"] = r.unresolved;
  j["fraction_unresolved"] = r.fraction_unresolved;
  return j;
}

nlohmann::ordered_json to_json(const ResolutionConflict& c) {
  nlohmann::ordered_json j;
  j["tag"] = to_string(c.tag);
  j["paths"] = c.paths;
  j["chosen"] = c.chosen;
  return j;
}

}  // namespace iodiag
