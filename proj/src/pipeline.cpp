// Copyright 2026 The iodiag Authors
// SPDX-License-Identifier: Apache-2.0

#include "iodiag/pipeline.hpp"

#include <algorithm>
#include <condition_variable>
#include <deque>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

#include "iodiag/enrich.hpp"

namespace iodiag {

namespace {

// Bounded hand-off between the enricher and the store writer.
class BatchQueue {
 public:
  explicit BatchQueue(std::size_t cap) : cap_(std::max<std::size_t>(cap, 1)) {}

  void push(std::vector<SyscallEvent> b) {
    std::unique_lock l(mu_);
    not_full_.wait(l, [&] { return q_.size() < cap_ || closed_; });
    if (closed_) return;
    q_.push_back(std::move(b));
    not_empty_.notify_one();
  }

  std::optional<std::vector<SyscallEvent>> pop() {
    std::unique_lock l(mu_);
    not_empty_.wait(l, [&] { return !q_.empty() || closed_; });
    if (q_.empty()) return std::nullopt;
    auto b = std::move(q_.front());
    q_.pop_front();
    not_full_.notify_one();
    return b;
  }

  void close() {
    std::lock_guard l(mu_);
    closed_ = true;
    not_empty_.notify_all();
    not_full_.notify_all();
  }

 private:
  std::mutex mu_;
  std::condition_variable not_full_, not_empty_;
  std::deque<std::vector<SyscallEvent>> q_;
  std::size_t cap_;
  bool closed_ = false;
};

}  // namespace

PipelineResult run_pipeline(CaptureHandle& capture, Store& store,
                            const std::string& session,
                            const PipelineOptions& options,
                            const std::atomic<bool>* stop) {
  store.session(session);  // UnknownSession up front
  const std::size_t batch = std::max<std::size_t>(options.batch_size, 1);
  BatchQueue queue(options.queue_batches);
  FdTable table;
  std::exception_ptr enrich_error, write_error;

  std::thread enricher([&] {
    try {
      bool stopping = false;
      for (;;) {
        if (!stopping && stop && stop->load()) {
          capture.stop();
          stopping = true;
        }
        auto events = capture.next_batch(batch);
        if (events.empty()) break;
        // Lanes are drained one after another; restore time order.
        std::stable_sort(events.begin(), events.end(),
                         [](const auto& a, const auto& b) {
                           return a.t_entry < b.t_entry;
                         });
        for (auto& ev : events) ev = table.enrich(std::move(ev));
        queue.push(std::move(events));
      }
    } catch (...) {
      enrich_error = std::current_exception();
    }
    queue.close();
  });

  std::uint64_t stored = 0;
  std::thread writer([&] {
    try {
      while (auto b = queue.pop()) stored += store.index_batch(session, *b);
    } catch (...) {
      write_error = std::current_exception();
      queue.close();
      capture.stop();
    }
  });

  enricher.join();
  writer.join();

  PipelineResult r;
  r.capture = capture.stats();
  SessionStats s = store.session(session).stats;
  s.produced += r.capture.ring.produced;
  s.dropped += r.capture.ring.dropped;
  s.filtered_out += r.capture.filtered_out;
  s.orphan_exits += r.capture.orphan_exits;
  s.inconsistencies += table.inconsistencies();
  store.set_stats(session, s);
  store.sync();

  if (write_error) std::rethrow_exception(write_error);
  if (enrich_error) std::rethrow_exception(enrich_error);

  if (options.resolve) r.resolution = resolve_paths(store, session);
  r.stats = store.session(session).stats;
  return r;
}

}  // namespace iodiag
