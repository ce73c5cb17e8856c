// Copyright 2026 The iodiag Authors
// SPDX-License-Identifier: Apache-2.0

#include "iodiag/analyze.hpp"

#include <fnmatch.h>

#include <algorithm>
#include <set>
#include <tuple>
#include <unordered_map>
#include <unordered_set>

#include "iodiag/correlate.hpp"
#include "iodiag/error.hpp"

namespace iodiag {

using ojson = nlohmann::ordered_json;

namespace {

std::vector<StoredEvent> sorted_events(const Store& store,
                                       const std::string& session) {
  std::vector<StoredEvent> out;
  store.scan(session, [&out](const StoredEvent& ev) { out.push_back(ev); });
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    return std::tie(a.event.t_entry, a.event.seq, a.id) <
           std::tie(b.event.t_entry, b.event.seq, b.id);
  });
  return out;
}

const FileTag* tag_of(const SyscallEvent& e) {
  return e.enrichment && e.enrichment->tag ? &*e.enrichment->tag : nullptr;
}

struct PidFd {
  std::int64_t pid;
  std::int64_t fd;
  bool operator<(const PidFd& o) const {
    return std::tie(pid, fd) < std::tie(o.pid, o.fd);
  }
};

// How far into the file writes on one incarnation reached, over time.
struct WriteHistory {
  std::vector<std::pair<std::int64_t, std::int64_t>> extent_at;  // (t, extent)

  void add(std::int64_t t, std::int64_t extent) {
    const std::int64_t prev = extent_at.empty() ? 0 : extent_at.back().second;
    extent_at.emplace_back(t, std::max(prev, extent));
  }
  // Extent reached by writes that started before t.
  std::int64_t before(std::int64_t t) const {
    std::int64_t out = 0;
    for (const auto& [wt, ext] : extent_at) {
      if (wt >= t) break;
      out = ext;
    }
    return out;
  }
};

}  // namespace

StaleOffsetReport detect_stale_offset_reads(const Store& store,
                                            const std::string& session) {
  const auto events = sorted_events(store, session);
  StaleOffsetReport report;

  // Paths per tag: resolved path if correlation ran, else the opening path.
  std::map<FileTag, std::string> tag_path;
  for (const auto& ev : events) {
    const auto* t = tag_of(ev.event);
    if (t && ev.event.enrichment->resolved_path)
      tag_path.try_emplace(*t, *ev.event.enrichment->resolved_path);
  }
  for (const auto& ev : events) {
    const auto* t = tag_of(ev.event);
    if (t && is_open_kind(ev.event.kind) && ev.event.succeeded() &&
        ev.event.args.path)
      tag_path.try_emplace(*t, *ev.event.args.path);
  }

  struct Unlink {
    std::int64_t t;
    FileTag tag;
    std::uint64_t id;
  };
  std::map<std::string, std::vector<Unlink>> unlinks;
  std::map<FileTag, WriteHistory> writes;
  std::int64_t running = 0;
  std::map<FileTag, std::int64_t> written_sum;
  for (const auto& ev : events) {
    const auto& e = ev.event;
    const auto* t = tag_of(e);
    if (!t || !e.succeeded()) continue;
    if (is_unlink_kind(e.kind)) {
      auto it = tag_path.find(*t);
      std::string p = it != tag_path.end() ? it->second : e.args.path.value_or("");
      unlinks[p].push_back({e.t_entry, *t, ev.id});
    } else if (is_write_kind(e.kind)) {
      const std::int64_t n = *e.retval;
      running = (written_sum[*t] += n);
      std::int64_t extent = running;
      const auto& en = *e.enrichment;
      if (e.kind == SyscallKind::pwrite64 && e.args.offset) {
        extent = *e.args.offset + n;
      } else if (en.offset_after) {
        extent = *en.offset_after;
      }
      writes[*t].add(e.t_entry, extent);
    }
  }

  // Previous incarnation of T2's path: the last unlink before T2 appeared.
  auto predecessor = [&](const FileTag& t2) -> const Unlink* {
    auto p = tag_path.find(t2);
    if (p == tag_path.end()) return nullptr;
    auto u = unlinks.find(p->second);
    if (u == unlinks.end()) return nullptr;
    const Unlink* best = nullptr;
    for (const auto& x : u->second)
      if (x.t < t2.first_access && x.tag != t2) best = &x;
    return best;
  };

  struct Pending {
    FileTag tag;
    const Unlink* unlink;
  };
  std::map<PidFd, Pending> pending;
  std::set<std::tuple<FileTag, FileTag, std::int64_t>> seen;

  for (const auto& ev : events) {
    const auto& e = ev.event;
    if (is_open_kind(e.kind) && e.succeeded()) {
      pending.erase({e.pid, *e.retval});
      const auto* t = tag_of(e);
      if (!t) continue;
      if (const Unlink* u = predecessor(*t))
        pending[{e.pid, *e.retval}] = {*t, u};
      continue;
    }
    if (!e.args.fd) continue;
    auto it = pending.find({e.pid, *e.args.fd});
    if (it == pending.end()) continue;
    if (e.kind == SyscallKind::close) {
      pending.erase(it);
      continue;
    }
    if (!is_read_kind(e.kind)) continue;

    const Pending p = it->second;
    pending.erase(it);  // only the first read after the open counts
    if (!e.retval || *e.retval != 0 || !e.enrichment ||
        !e.enrichment->offset_before)
      continue;
    const std::int64_t offset = *e.enrichment->offset_before;
    auto w = writes.find(p.tag);
    const std::int64_t written = w == writes.end() ? 0 : w->second.before(e.t_entry);
    if (written <= 0 || offset < written) continue;
    if (!seen.insert({p.unlink->tag, p.tag, e.pid}).second) continue;

    DataLossFinding f;
    f.path = tag_path.at(p.tag);
    f.old_tag = p.unlink->tag;
    f.new_tag = p.tag;
    f.reader_pid = e.pid;
    f.erroneous_offset = offset;
    f.bytes_written_to_new = written;
    f.bytes_read_before_loss = 0;
    for (const auto& other : events) {
      if (other.event.t_entry > e.t_entry) break;
      const auto* t = tag_of(other.event);
      if (other.id == p.unlink->id || (t && (*t == f.old_tag || *t == f.new_tag)))
        f.evidence.push_back(other.id);
    }
    report.findings.push_back(std::move(f));
  }

  const auto status = resolution_status(store, session);
  if (status.unresolved > 0)
    report.warning = std::to_string(status.unresolved) +
                     " events have unresolved paths; findings may be incomplete";
  return report;
}

// ---------------------------------------------------------------- contention

void check_pattern(std::string_view p) {
  if (p.empty()) throw MalformedPattern("empty thread-name pattern");
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] == '\\') {
      ++i;
      continue;
    }
    if (p[i] != '[') continue;
    std::size_t j = i + 1;
    if (j < p.size() && (p[j] == '!' || p[j] == '^')) ++j;
    if (j < p.size() && p[j] == ']') ++j;
    while (j < p.size() && p[j] != ']') ++j;
    if (j >= p.size())
      throw MalformedPattern("unterminated '[' in pattern '" + std::string(p) + "'");
    i = j;
  }
}

bool glob_match(std::string_view pattern, std::string_view name) {
  const std::string p(pattern), n(name);
  return ::fnmatch(p.c_str(), n.c_str(), 0) == 0;
}

namespace {

double median(std::vector<std::uint64_t> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  if (v.size() % 2) return static_cast<double>(v[m]);
  return (static_cast<double>(v[m - 1]) + static_cast<double>(v[m])) / 2.0;
}

constexpr std::size_t kMaxBuckets = 50'000'000;

}  // namespace

std::vector<BucketActivity> contention_buckets(const Store& store,
                                               const std::string& session,
                                               const ContentionParams& params,
                                               double* baseline_out) {
  check_pattern(params.background);
  check_pattern(params.foreground);
  if (params.bucket_ns <= 0) throw MalformedSpec("bucket width must be positive");
  if (!(params.dip_threshold >= 0.0 && params.dip_threshold <= 1.0))
    throw MalformedSpec("dip threshold must be in [0, 1]");

  struct Sample {
    std::int64_t t;
    std::string comm;
  };
  std::vector<Sample> samples;
  store.scan(session, [&](const StoredEvent& ev) {
    samples.push_back({ev.event.t_entry, ev.event.comm});
  });
  if (baseline_out) *baseline_out = 0.0;
  if (samples.empty()) return {};

  const std::int64_t b = params.bucket_ns;
  auto bucket_of = [b](std::int64_t t) {
    std::int64_t q = t / b;
    if (t % b != 0 && t < 0) --q;
    return q;
  };
  std::int64_t lo = bucket_of(samples.front().t), hi = lo;
  for (const auto& s : samples) {
    lo = std::min(lo, bucket_of(s.t));
    hi = std::max(hi, bucket_of(s.t));
  }
  const auto n = static_cast<std::size_t>(hi - lo + 1);
  if (n > kMaxBuckets) throw MalformedSpec("bucket width too small for session span");

  // Classify each distinct name once.
  std::unordered_map<std::string, std::pair<bool, bool>> kind_of;
  std::vector<std::unordered_set<std::string>> bg(n);
  std::vector<BucketActivity> out(n);
  for (const auto& s : samples) {
    auto [it, fresh] = kind_of.try_emplace(s.comm);
    if (fresh)
      it->second = {glob_match(params.background, s.comm),
                    glob_match(params.foreground, s.comm)};
    const auto i = static_cast<std::size_t>(bucket_of(s.t) - lo);
    if (it->second.first) bg[i].insert(s.comm);
    if (it->second.second) ++out[i].foreground;
  }
  std::vector<std::uint64_t> fg(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i].start = (lo + static_cast<std::int64_t>(i)) * b;
    out[i].background_names = bg[i].size();
    fg[i] = out[i].foreground;
  }
  const double baseline = median(fg);
  if (baseline_out) *baseline_out = baseline;
  for (auto& a : out)
    a.flagged = baseline > 0.0 && a.background_names >= params.k_threshold &&
                static_cast<double>(a.foreground) <=
                    (1.0 - params.dip_threshold) * baseline;
  return out;
}

std::vector<ContentionInterval> contention_report(const Store& store,
                                                  const std::string& session,
                                                  const ContentionParams& params) {
  double baseline = 0.0;
  const auto buckets = contention_buckets(store, session, params, &baseline);
  std::vector<ContentionInterval> out;
  for (std::size_t i = 0; i < buckets.size();) {
    if (!buckets[i].flagged) {
      ++i;
      continue;
    }
    std::size_t j = i;
    ContentionInterval c;
    std::uint64_t fg = 0;
    while (j < buckets.size() && buckets[j].flagged) {
      c.active_background_threads =
          std::max(c.active_background_threads, buckets[j].background_names);
      fg += buckets[j].foreground;
      ++j;
    }
    c.t_start = buckets[i].start;
    c.t_end = buckets[j - 1].start + params.bucket_ns;
    c.foreground_rate = static_cast<double>(fg) / static_cast<double>(j - i);
    c.baseline_foreground_rate = baseline;
    c.dip_fraction = std::clamp(1.0 - c.foreground_rate / baseline, 0.0, 1.0);
    out.push_back(c);
    i = j;
  }
  return out;
}

// ------------------------------------------------------------------ summary

SessionSummary session_summary(const Store& store, const std::string& session) {
  const Session meta = store.session(session);
  SessionSummary s;
  s.session = session;
  std::map<std::int64_t, std::pair<std::int64_t, SessionSummary::Thread>> threads;
  store.scan(session, [&](const StoredEvent& ev) {
    const auto& e = ev.event;
    ++s.events;
    ++s.per_kind[std::string(to_string(e.kind))];
    const FileType ft = e.enrichment ? e.enrichment->file_type : FileType::unknown;
    ++s.per_file_type[std::string(to_string(ft))];
    auto& [latest, th] = threads[e.tid];
    if (th.count == 0 || e.t_entry >= latest) {
      latest = e.t_entry;
      th.comm = e.comm;
      th.pid = e.pid;
    }
    th.tid = e.tid;
    ++th.count;
  });
  for (auto& [tid, v] : threads) s.per_thread.push_back(v.second);
  s.produced = meta.stats.produced;
  s.dropped = meta.stats.dropped;
  s.drop_fraction = s.produced ? static_cast<double>(s.dropped) /
                                     static_cast<double>(s.produced)
                               : 0.0;
  const auto r = resolution_status(store, session);
  s.unresolved = r.unresolved;
  s.fraction_unresolved = r.fraction_unresolved;
  s.inconsistencies = meta.stats.inconsistencies;
  s.orphan_exits = meta.stats.orphan_exits;
  s.filtered_out = meta.stats.filtered_out;
  return s;
}

// --------------------------------------------------------------------- json

ojson to_json(const DataLossFinding& f) {
  ojson j;
  j["path"] = f.path;
  j["old_tag"] = to_string(f.old_tag);
  j["new_tag"] = to_string(f.new_tag);
  j["reader_pid"] = f.reader_pid;
  j["erroneous_offset"] = f.erroneous_offset;
  j["bytes_written_to_new"] = f.bytes_written_to_new;
  j["bytes_read_before_loss"] = f.bytes_read_before_loss;
  j["evidence"] = f.evidence;
  return j;
}

ojson to_json(const StaleOffsetReport& r) {
  ojson j;
  ojson arr = ojson::array();
  for (const auto& f : r.findings) arr.push_back(to_json(f));
  j["findings"] = arr;
  j["warning"] = r.warning ? ojson(*r.warning) : ojson(nullptr);
  return j;
}

ojson to_json(const ContentionInterval& c) {
  ojson j;
  j["t_start"] = c.t_start;
  j["t_end"] = c.t_end;
  j["active_background_threads"] = c.active_background_threads;
  j["foreground_rate"] = c.foreground_rate;
  j["baseline_foreground_rate"] = c.baseline_foreground_rate;
  j["dip_fraction"] = c.dip_fraction;
  return j;
}

ojson to_json(const SessionSummary& s) {
  ojson j;
  j["session"] = s.session;
  j["events"] = s.events;
  j["per_kind"] = s.per_kind;
  j["per_file_type"] = s.per_file_type;
  ojson threads = ojson::array();
  for (const auto& t : s.per_thread)
    threads.push_back({{"pid", t.pid}, {"tid", t.tid}, {"comm", t.comm},
                       {"count", t.count}});
  j["per_thread"] = threads;
  j["produced"] = s.produced;
  j["dropped"] = s.dropped;
  j["drop_fraction"] = s.drop_fraction;
  j["unresolved"] = s.unresolved;
  j["fraction_unresolved"] = s.fraction_unresolved;
  j["inconsistencies"] = s.inconsistencies;
  j["orphan_exits"] = s.orphan_exits;
  j["filtered_out"] = s.filtered_out;
  return j;
}

}  // namespace iodiag
