// Copyright 2026 The iodiag Authors
// SPDX-License-Identifier: Apache-2.0

// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero when any of them fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <deque>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/core.h>

#include "fd_oracle.hpp"
#include "generators.hpp"
#include "iodiag/analyze.hpp"
#include "iodiag/capture.hpp"
#include "iodiag/correlate.hpp"
#include "iodiag/enrich.hpp"
#include "iodiag/pipeline.hpp"
#include "iodiag/ringbuf.hpp"
#include "iodiag/store.hpp"
#include "scan_oracle.hpp"

using namespace iodiag;
using Clock = std::chrono::steady_clock;

namespace {

const std::string kFixtures = IODIAG_FIXTURES_DIR;

// Collects failure notes for one criterion.
struct Check {
  std::vector<std::string> notes;
  void expect(bool ok, const std::string& what) {
    if (!ok && notes.size() < 10) notes.push_back(what);
    if (!ok) ++failures;
  }
  std::size_t failures = 0;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::vector<StoredEvent> all_of(const Store& s, const std::string& session) {
  std::vector<StoredEvent> out;
  s.scan(session, [&](const StoredEvent& e) { out.push_back(e); });
  return out;
}

void data_loss(Check& c, std::string& detail) {
  const auto t0 = Clock::now();
  testing::TempDir dir;
  Store store(dir.path());
  testing::ingest_file(store, kFixtures + "/fig2a.jsonl", "a");
  testing::ingest_file(store, kFixtures + "/fig2b.jsonl", "b");
  const auto a = detect_stale_offset_reads(store, "a");
  const auto b = detect_stale_offset_reads(store, "b");
  const double took = seconds_since(t0);
  c.expect(a.findings.size() == 1, fmt::format("fig2a findings {}", a.findings.size()));
  if (a.findings.size() == 1) {
    c.expect(a.findings[0].erroneous_offset == 26,
             fmt::format("erroneous_offset {}", a.findings[0].erroneous_offset));
    c.expect(a.findings[0].bytes_written_to_new == 16,
             fmt::format("bytes_written_to_new {}", a.findings[0].bytes_written_to_new));
  }
  c.expect(b.findings.empty(), fmt::format("fig2b findings {}", b.findings.size()));
  c.expect(took < 1.0, fmt::format("took {:.3f} s", took));
  detail = fmt::format("{:.3f} s", took);
}

void tag_distinction(Check& c, std::string& detail) {
  testing::TempDir dir;
  Store store(dir.path());
  testing::ingest_file(store, kFixtures + "/fig2a.jsonl", "a");
  const std::int64_t recreate = 3'000'000'000;
  std::set<std::string> before, after;
  std::size_t tagged = 0;
  for (const auto& ev : all_of(store, "a")) {
    const auto& e = ev.event;
    if (!e.enrichment || !e.enrichment->tag) continue;
    ++tagged;
    const auto tag = to_string(*e.enrichment->tag);
    (e.t_entry < recreate ? before : after).insert(tag);
    c.expect(e.enrichment->resolved_path == std::optional<std::string>("app.log"),
             fmt::format("event {} resolved to {}", ev.id,
                         e.enrichment->resolved_path.value_or("<none>")));
  }
  c.expect(before.size() == 1, fmt::format("{} tags before re-create", before.size()));
  c.expect(after.size() == 1, fmt::format("{} tags after re-create", after.size()));
  if (before.size() == 1 && after.size() == 1)
    c.expect(*before.begin() != *after.begin(), "both incarnations share a tag");
  c.expect(tagged >= 11, fmt::format("only {} tagged events", tagged));
  detail = fmt::format("{} tagged events", tagged);
}

void offset_oracle(Check& c, std::string& detail) {
  const auto t0 = Clock::now();
  std::size_t events = 0;
  for (std::uint64_t seed = 1; seed <= 1000; ++seed) {
    FdTable t;
    const auto steps = testing::generate_fd_sequence(seed);
    for (std::size_t i = 0; i < steps.size(); ++i) {
      const auto& s = steps[i];
      auto out = t.enrich(s.event);
      ++events;
      const auto where = fmt::format("seed {} step {}", seed, i);
      if (!out.enrichment) {
        c.expect(false, where + ": no enrichment");
        continue;
      }
      c.expect(out.enrichment->offset_before == s.expected.offset_before,
               where + ": offset_before");
      c.expect(out.enrichment->offset_after == s.expected.offset_after,
               where + ": offset_after");
      c.expect(out.enrichment->tag == s.expected.tag, where + ": tag");
      if (s.expected.size_after) {
        const auto fd = s.event.args.fd ? *s.event.args.fd : *s.event.retval;
        const auto st = t.lookup(s.event.pid, fd);
        c.expect(st && st->known_size == s.expected.size_after, where + ": size");
      }
    }
  }
  const double took = seconds_since(t0);
  c.expect(took < 60.0, fmt::format("took {:.1f} s", took));
  detail = fmt::format("{} events, {:.1f} s", events, took);
}

std::vector<std::byte> ring_record(std::uint64_t value, std::size_t size) {
  std::vector<std::byte> r(std::max<std::size_t>(size, 8));
  std::memcpy(r.data(), &value, 8);
  return r;
}

std::uint64_t ring_value(std::span<const std::byte> r) {
  std::uint64_t v = 0;
  std::memcpy(&v, r.data(), 8);
  return v;
}

void ring_accounting(Check& c, std::string& detail) {
  // Random interleavings against a per-lane model of accepted records.
  constexpr std::size_t kLanes = 4;
  RingBuffer ring({kLanes, 512});
  std::mt19937_64 rng(2026);
  std::vector<std::deque<std::uint64_t>> model(kLanes);
  std::uint64_t next = 0;
  std::size_t ops = 0;
  for (; ops < 200'000; ++ops) {
    const std::size_t lane = rng() % kLanes;
    if (rng() % 100 < 55) {
      const auto v = next++;
      const auto size = 8 + rng() % 40;
      if (ring.produce(lane, ring_record(v, size)) == ProduceResult::accepted)
        model[lane].push_back(v);
    } else {
      const std::size_t want = 1 + rng() % 6;
      for (const auto& r : ring.consume_batch(lane, want)) {
        if (model[lane].empty()) {
          c.expect(false, "consumed more than was accepted");
          break;
        }
        c.expect(ring_value(r) == model[lane].front(),
                 fmt::format("lane {} out of order", lane));
        model[lane].pop_front();
      }
    }
    if (ops % 997 == 0) {
      const auto s = ring.stats();
      c.expect(s.produced == s.consumed + s.dropped + s.buffered, "global invariant");
      for (std::size_t l = 0; l < kLanes; ++l) {
        const auto& ls = s.lanes[l];
        c.expect(ls.produced == ls.consumed + ls.dropped + ls.buffered,
                 fmt::format("lane {} invariant", l));
        c.expect(ls.buffered == model[l].size(), fmt::format("lane {} buffered", l));
      }
    }
  }
  const auto s = ring.stats();
  c.expect(s.produced == s.consumed + s.dropped + s.buffered, "final invariant");

  // Throttled consumer: it keeps up with 96.5% of the produce rate.
  constexpr std::uint64_t kProduced = 549'000;
  constexpr double kTarget = 0.035;
  RingBuffer throttled({1, 64 * RingBuffer::footprint(64)});
  double credit = 0.0;
  const auto payload = ring_record(0, 64);
  for (std::uint64_t i = 0; i < kProduced; ++i) {
    throttled.produce(0, payload);
    credit += 1.0 - kTarget;
    while (credit >= 1.0) {
      throttled.consume_batch(0, 1, [](std::span<const std::byte>) {});
      credit -= 1.0;
    }
  }
  const auto ts = throttled.stats();
  c.expect(ts.produced == kProduced, fmt::format("produced {}", ts.produced));
  c.expect(ts.produced == ts.consumed + ts.dropped + ts.buffered, "throttled invariant");
  const double frac = ts.drop_fraction();
  c.expect(std::abs(frac - kTarget) <= 0.005, fmt::format("drop fraction {:.4f}", frac));
  detail = fmt::format("{} ops; drop fraction {:.2f}%", ops, frac * 100.0);
}

void unresolved_share(Check& c, std::string& detail) {
  constexpr std::size_t kFiles = 2000;
  auto w = testing::file_workload(7, "u", 100'000, kFiles);
  std::mt19937_64 rng(11);
  std::vector<std::size_t> order(kFiles);
  for (std::size_t i = 0; i < kFiles; ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);
  const std::set<std::size_t> chosen(order.begin(), order.begin() + kFiles / 20);

  std::vector<SyscallEvent> kept;
  std::size_t chosen_events = 0;
  for (std::size_t i = 0; i < w.events.size(); ++i) {
    const bool hit = chosen.contains(w.file_of[i]);
    if (hit && is_open_kind(w.events[i].kind)) continue;
    kept.push_back(w.events[i]);
    if (hit) ++chosen_events;
  }
  testing::TempDir dir;
  Store store(dir.path());
  const auto r = testing::ingest_events(store, kept, "u");
  const double share = static_cast<double>(chosen_events) / static_cast<double>(kept.size());
  c.expect(r.resolution.has_value(), "no resolution report");
  const double got = r.resolution ? r.resolution->fraction_unresolved : -1.0;
  c.expect(std::abs(got - share) <= 0.01,
           fmt::format("fraction_unresolved {:.4f}, share {:.4f}", got, share));
  detail = fmt::format("{} events, unresolved {:.2f}% vs share {:.2f}%", kept.size(),
                       got * 100.0, share * 100.0);
}

bool overlaps(std::int64_t a0, std::int64_t a1, std::int64_t b0, std::int64_t b1) {
  return a0 < b1 && b0 < a1;
}

void contention(Check& c, std::string& detail) {
  auto fx = testing::contention_fixture(3, "rdb", 600);
  testing::TempDir dir;
  Store store(dir.path());
  store.create_session("rdb");
  store.index_batch("rdb", fx.events);
  ContentionParams p;
  p.bucket_ns = fx.bucket_ns;
  const auto got = contention_report(store, "rdb", p);
  c.expect(got.size() == fx.contention.size(),
           fmt::format("{} intervals flagged, {} expected", got.size(), fx.contention.size()));
  for (std::size_t i = 0; i < std::min(got.size(), fx.contention.size()); ++i) {
    const auto ds = std::llabs(got[i].t_start - fx.contention[i].first);
    const auto de = std::llabs(got[i].t_end - fx.contention[i].second);
    c.expect(ds <= fx.bucket_ns && de <= fx.bucket_ns,
             fmt::format("interval {}: [{}, {}) vs [{}, {})", i, got[i].t_start,
                         got[i].t_end, fx.contention[i].first, fx.contention[i].second));
  }
  // Every flagged bucket lies within one bucket of a ground-truth interval.
  std::size_t flagged = 0;
  for (const auto& b : contention_buckets(store, "rdb", p)) {
    if (!b.flagged) continue;
    ++flagged;
    bool near_truth = false;
    for (const auto& [s, e] : fx.contention)
      near_truth |= overlaps(b.start, b.start + p.bucket_ns, s - p.bucket_ns, e + p.bucket_ns);
    c.expect(near_truth, fmt::format("quiet bucket at {} flagged", b.start));
  }
  for (const auto& g : got)
    for (const auto& [s, e] : fx.decoys)
      c.expect(!overlaps(g.t_start, g.t_end, s, e), "decoy interval flagged");
  detail = fmt::format("{} intervals, {} flagged buckets", got.size(), flagged);
}

void store_correctness(Check& c, std::string& detail) {
  testing::TempDir dir;
  std::vector<std::string> before;
  std::vector<StoredEvent> all;
  constexpr std::uint64_t kSpecs = 200;
  {
    Store s(dir.path());
    s.create_session("r");
    const auto events = testing::random_events(77, 10'000, "r");
    s.index_batch("r", events);
    all = all_of(s, "r");
    c.expect(all.size() == 10'000, fmt::format("{} stored", all.size()));
    for (std::uint64_t seed = 0; seed < kSpecs; ++seed) {
      const auto q = testing::random_query_spec(seed, "r");
      const auto got = s.query(q);
      const auto want = testing::oracle_query(all, q);
      std::vector<std::uint64_t> ids;
      for (const auto& e : got.events) ids.push_back(e.id);
      c.expect(got.total == want.total && ids == want.ids,
               fmt::format("query seed {} differs", seed));
      const auto a = testing::random_agg_spec(seed, "r");
      const auto rows = s.aggregate(a);
      c.expect(rows == testing::oracle_aggregate(all, a),
               fmt::format("aggregate seed {} differs", seed));
      std::ostringstream text;
      for (const auto& e : got.events) text << to_json(e).dump() << '\n';
      for (const auto& r : rows) {
        for (const auto& g : r.group) text << g.dump() << ',';
        text << r.bucket.value_or(-1) << ',' << r.value << '\n';
      }
      before.push_back(text.str());
    }
    s.sync();
  }
  Store again(dir.path());
  const auto reopened = all_of(again, "r");
  c.expect(reopened.size() == all.size(), "event count changed on reopen");
  for (std::size_t i = 0; i < std::min(all.size(), reopened.size()); ++i)
    c.expect(to_json(all[i]).dump() == to_json(reopened[i]).dump(),
             fmt::format("event {} changed on reopen", i));
  for (std::uint64_t seed = 0; seed < kSpecs; ++seed) {
    const auto got = again.query(testing::random_query_spec(seed, "r"));
    const auto rows = again.aggregate(testing::random_agg_spec(seed, "r"));
    std::ostringstream text;
    for (const auto& e : got.events) text << to_json(e).dump() << '\n';
    for (const auto& r : rows) {
      for (const auto& g : r.group) text << g.dump() << ',';
      text << r.bucket.value_or(-1) << ',' << r.value << '\n';
    }
    c.expect(text.str() == before[seed], fmt::format("seed {} differs after reopen", seed));
  }
  detail = fmt::format("{} query and aggregate specs", kSpecs);
}

void throughput(Check& c, std::string& detail) {
  testing::TempDir dir;
  const auto trace = dir.path() / "trace.jsonl";
  const auto n = testing::write_synthetic_trace(trace, 1'000'000, "t", 5);
  Store store(dir.path() / "store");
  const auto t0 = Clock::now();
  const auto r = testing::ingest_file(store, trace, "t", false);
  const double took = seconds_since(t0);
  const double rate = static_cast<double>(r.stats.stored) / took;
  c.expect(r.stats.stored == n, fmt::format("stored {} of {}", r.stats.stored, n));
  c.expect(rate >= 50'000.0, fmt::format("{:.0f} events/s", rate));
  detail = fmt::format("{} events in {:.1f} s, {:.0f} events/s", n, took, rate);
}

void live_capture(Check& c, std::string& detail) {
  if (!live_capture_supported()) {
    c.expect(false, "live capture unsupported on this host");
    return;
  }
  testing::TempDir dir;
  Store store(dir.path() / "store");
  store.create_session("live");
  FilterSpec f;
  f.kinds = std::set{SyscallKind::openat, SyscallKind::write, SyscallKind::close};
  auto h = spawn_and_trace({IODIAG_SCRIPTED_WRITER, (dir.path() / "out.txt").string()}, f,
                           "live");
  run_pipeline(*h, store, "live");
  std::map<std::string, int> kinds;
  store.scan("live", [&](const StoredEvent& e) { ++kinds[std::string(to_string(e.event.kind))]; });
  const std::map<std::string, int> want{{"close", 1}, {"openat", 1}, {"write", 3}};
  std::string got;
  for (const auto& [k, n] : kinds) got += fmt::format("{}={} ", k, n);
  c.expect(kinds == want, "kinds " + got);
  detail = got;
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    std::function<void(Check&, std::string&)> run;
  };
  const std::vector<Criterion> criteria = {
      {"data-loss-reproduction", data_loss},
      {"inode-reuse-tags", tag_distinction},
      {"offset-oracle-equivalence", offset_oracle},
      {"ring-buffer-accounting", ring_accounting},
      {"unresolved-path-share", unresolved_share},
      {"contention-detection", contention},
      {"store-correctness", store_correctness},
      {"throughput-smoke", throughput},
      {"live-capture", live_capture},
  };
  int failed = 0;
  for (const auto& cr : criteria) {
    Check c;
    std::string detail;
    try {
      cr.run(c, detail);
    } catch (const std::exception& e) {
      c.expect(false, std::string("threw: ") + e.what());
    }
    const bool ok = c.failures == 0;
    if (!ok) ++failed;
    std::cout << (ok ? "PASS " : "FAIL ") << cr.name;
    if (!detail.empty()) std::cout << " (" << detail << ")";
    std::cout << '\n';
    for (const auto& n : c.notes) std::cout << "    " << n << '\n';
    std::cout.flush();
  }
  return failed == 0 ? 0 : 1;
}
