// Copyright 2026 The iodiag Authors
// SPDX-License-Identifier: Apache-2.0

#include "iodiag/capture.hpp"

#include <algorithm>
#include <string>
#include <thread>

#include "iodiag/codec.hpp"
#include "iodiag/error.hpp"

namespace iodiag {

std::string join_path(std::string_view dir, std::string_view rel) {
  if (rel.empty()) return std::string(dir);
  if (rel.front() == '/' || dir.empty()) return std::string(rel);
  std::string out(dir);
  if (out.back() != '/') out.push_back('/');
  out.append(rel);
  return out;
}

namespace {

bool has_prefix(std::string_view s, const std::set<std::string>& prefixes) {
  return std::any_of(prefixes.begin(), prefixes.end(),
                     [s](const std::string& p) { return s.starts_with(p); });
}

}  // namespace

bool match_filter(const SyscallEvent& ev, const FilterSpec& f,
                  std::optional<std::string_view> path_hint) {
  if (f.kinds && !f.kinds->contains(ev.kind)) return false;
  if (f.pids && !f.pids->contains(ev.pid)) return false;
  if (f.tids && !f.tids->contains(ev.tid)) return false;
  if (!f.path_prefixes) return true;

  if (ev.args.path || ev.args.newpath) {
    if (ev.args.path && has_prefix(*ev.args.path, *f.path_prefixes))
      return true;
    if (ev.args.newpath && has_prefix(*ev.args.newpath, *f.path_prefixes))
      return true;
    // A relative path argument may still resolve under a prefix via dirfd.
    return path_hint && has_prefix(*path_hint, *f.path_prefixes);
  }
  if (path_hint) return has_prefix(*path_hint, *f.path_prefixes);
  return false;
}

// ---------------------------------------------------------------- PathTracker

std::optional<std::string_view> PathTracker::fd_path(std::int64_t pid,
                                                     std::int64_t fd) const {
  auto it = paths_.find(Key{pid, fd});
  if (it == paths_.end()) return std::nullopt;
  return std::string_view(it->second);
}

std::optional<std::string> PathTracker::event_path(
    const SyscallEvent& ev) const {
  if (ev.args.path) {
    const auto& p = *ev.args.path;
    if (!p.starts_with('/') && ev.args.dirfd && *ev.args.dirfd != kAtFdCwd) {
      if (auto dir = fd_path(ev.pid, *ev.args.dirfd))
        return join_path(*dir, p);
    }
    return p;
  }
  if (ev.args.fd) {
    if (auto p = fd_path(ev.pid, *ev.args.fd)) return std::string(*p);
  }
  return std::nullopt;
}

void PathTracker::observe(const SyscallEvent& ev) {
  if (seen_pids_.insert(ev.pid).second && ev.hints.ppid) {
    std::vector<std::pair<Key, std::string>> inherited;
    for (const auto& [k, v] : paths_)
      if (k.pid == *ev.hints.ppid) inherited.emplace_back(Key{ev.pid, k.fd}, v);
    for (auto& [k, v] : inherited) paths_.emplace(k, std::move(v));
  }
  if (!ev.succeeded()) return;
  if (is_open_kind(ev.kind)) {
    if (auto p = event_path(ev)) paths_[Key{ev.pid, *ev.retval}] = *p;
  } else if (ev.kind == SyscallKind::close && ev.args.fd) {
    paths_.erase(Key{ev.pid, *ev.args.fd});
  }
}

// ------------------------------------------------------------ HalfEventPairer

namespace {

SyscallEvent from_entry(RawHalfEvent&& h) {
  SyscallEvent ev;
  ev.session = std::move(h.session);
  ev.pid = h.pid;
  ev.tid = h.tid;
  ev.comm = std::move(h.comm);
  ev.kind = h.kind;
  ev.args = std::move(h.args);
  ev.t_entry = h.timestamp;
  ev.hints = h.hints;
  return ev;
}

template <typename T>
void merge_opt(std::optional<T>& into, const std::optional<T>& from) {
  if (from) into = from;
}

}  // namespace

void HalfEventPairer::push(RawHalfEvent half, std::vector<SyscallEvent>& out) {
  auto it = pending_.find(half.tid);
  if (half.direction == Direction::entry) {
    if (it != pending_.end()) {
      ++stats_.unmatched_entries;
      out.push_back(from_entry(std::move(it->second)));
      it->second = std::move(half);
    } else {
      pending_.emplace(half.tid, std::move(half));
    }
    return;
  }
  if (it == pending_.end() || it->second.kind != half.kind) {
    ++stats_.orphan_exits;
    return;
  }
  SyscallEvent ev = from_entry(std::move(it->second));
  pending_.erase(it);
  ev.retval = half.retval;
  ev.t_exit = std::max(half.timestamp, ev.t_entry);
  // The exit side sees the latest kernel state (e.g. the inode an open
  // created); the name may have changed during the call too.
  if (!half.comm.empty()) ev.comm = std::move(half.comm);
  merge_opt(ev.hints.file_type, half.hints.file_type);
  merge_opt(ev.hints.dev, half.hints.dev);
  merge_opt(ev.hints.ino, half.hints.ino);
  merge_opt(ev.hints.ppid, half.hints.ppid);
  if (!ev.hints.pos) ev.hints.pos = half.hints.pos;
  out.push_back(std::move(ev));
}

void HalfEventPairer::finish(std::vector<SyscallEvent>& out) {
  std::vector<SyscallEvent> rest;
  rest.reserve(pending_.size());
  for (auto& [tid, h] : pending_) rest.push_back(from_entry(std::move(h)));
  pending_.clear();
  stats_.unmatched_entries += rest.size();
  std::sort(rest.begin(), rest.end(), [](const auto& a, const auto& b) {
    return std::tie(a.t_entry, a.tid) < std::tie(b.t_entry, b.tid);
  });
  for (auto& ev : rest) out.push_back(std::move(ev));
}

std::vector<SyscallEvent> pair_half_events(std::span<const RawHalfEvent> halves,
                                           PairingStats* stats) {
  HalfEventPairer pairer;
  std::vector<SyscallEvent> out;
  for (const auto& h : halves) pairer.push(h, out);
  pairer.finish(out);
  if (stats) *stats = pairer.stats();
  return out;
}

// ------------------------------------------------------------------ producer

namespace detail {

CaptureProducer::CaptureProducer(RingBuffer& ring, FilterSpec filter,
                                 std::string session)
    : ring_(ring),
      filter_(std::move(filter)),
      session_(std::move(session)),
      lane_seq_(ring.lanes(), 0) {}

bool CaptureProducer::offer(SyscallEvent ev, std::size_t lane) {
  observed_.fetch_add(1, std::memory_order_relaxed);
  std::optional<std::string> fd_path;
  if (filter_.path_prefixes) fd_path = tracker_.event_path(ev);
  tracker_.observe(ev);
  if (!match_filter(ev, filter_, fd_path)) {
    filtered_out_.fetch_add(1, std::memory_order_relaxed);
    return false;
  }
  ev.session = session_;
  ev.seq = ++lane_seq_.at(lane);
  scratch_.clear();
  codec::encode(ev, scratch_);
  if (ring_.produce(lane, scratch_) == ProduceResult::dropped) return false;
  enqueued_by_kind_[static_cast<std::size_t>(ev.kind)].fetch_add(
      1, std::memory_order_relaxed);
  return true;
}

std::array<std::uint64_t, kSyscallKindCount>
CaptureProducer::enqueued_by_kind() const {
  std::array<std::uint64_t, kSyscallKindCount> out{};
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = enqueued_by_kind_[i].load(std::memory_order_relaxed);
  return out;
}

std::size_t drain_lanes(RingBuffer& ring, std::size_t max,
                        std::vector<SyscallEvent>& out) {
  std::size_t n = 0;
  for (std::size_t lane = 0; lane < ring.lanes() && n < max; ++lane) {
    n += ring.consume_batch(lane, max - n, [&out](std::span<const std::byte> r) {
      out.push_back(codec::decode(r));
    });
  }
  return n;
}

}  // namespace detail

// -------------------------------------------------------------------- replay

namespace {

class ReplayCapture final : public CaptureHandle {
 public:
  ReplayCapture(std::istream& in, const FilterSpec& filter,
                const std::string& session, RingConfig ring)
      : in_(in), ring_(ring), producer_(ring_, filter, session) {}

  std::vector<SyscallEvent> next_batch(std::size_t max) override {
    std::vector<SyscallEvent> out;
    if (max == 0) return out;
    out.reserve(max);
    detail::drain_lanes(ring_, max, out);
    while (out.size() < max && !exhausted_) {
      fill(max - out.size());
      detail::drain_lanes(ring_, max - out.size(), out);
    }
    return out;
  }

  void stop() override { exhausted_ = true; }

  CaptureStats stats() const override {
    CaptureStats s;
    s.observed = producer_.observed();
    s.filtered_out = producer_.filtered_out();
    s.orphan_exits = pairer_.stats().orphan_exits;
    s.unmatched_entries = pairer_.stats().unmatched_entries;
    s.enqueued_by_kind = producer_.enqueued_by_kind();
    s.ring = ring_.stats();
    return s;
  }

 private:
  // Parses until `want` events have been offered or input ends.
  void fill(std::size_t want) {
    std::size_t offered = 0;
    std::string line;
    std::vector<SyscallEvent> paired;
    while (offered < want) {
      if (!std::getline(in_, line)) {
        if (in_.bad()) throw Error("replay: read error");
        paired.clear();
        pairer_.finish(paired);
        for (auto& ev : paired) producer_.offer(std::move(ev), 0);
        exhausted_ = true;
        return;
      }
      ++line_no_;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      auto rec = parse_record(line, line_no_);
      paired.clear();
      if (auto* ev = std::get_if<SyscallEvent>(&rec)) {
        paired.push_back(std::move(*ev));
      } else {
        pairer_.push(std::move(std::get<RawHalfEvent>(rec)), paired);
      }
      for (auto& ev : paired) {
        producer_.offer(std::move(ev), 0);
        ++offered;
      }
    }
  }

  std::istream& in_;
  RingBuffer ring_;
  detail::CaptureProducer producer_;
  HalfEventPairer pairer_;
  std::size_t line_no_ = 0;
  bool exhausted_ = false;
};

}  // namespace

std::unique_ptr<CaptureHandle> open_capture(const CaptureSource& source) {
  if (const auto* replay = std::get_if<ReplayInput>(&source.mode)) {
    if (!replay->stream) throw Error("replay capture needs an input stream");
    RingConfig ring = source.ring;
    if (ring.lanes == 0) ring.lanes = 1;
    return std::make_unique<ReplayCapture>(*replay->stream, source.filter,
                                           source.session, ring);
  }
  const auto& live = std::get<LiveTarget>(source.mode);
  return spawn_and_trace(live.command, source.filter, source.session,
                         source.ring);
}

std::unique_ptr<CaptureHandle> spawn_and_trace(
    const std::vector<std::string>& command, const FilterSpec& filter,
    const std::string& session, RingConfig ring) {
  if (ring.lanes == 0)
    ring.lanes = std::max(1u, std::thread::hardware_concurrency());
  return detail::make_live_capture(LiveTarget{command}, filter, session, ring);
}

}  // namespace iodiag
