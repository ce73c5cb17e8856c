// Copyright 2026 The iodiag Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <atomic>
#include <cstddef>
#include <optional>
#include <string>

#include "iodiag/capture.hpp"
#include "iodiag/correlate.hpp"
#include "iodiag/store.hpp"

namespace iodiag {

struct PipelineOptions {
  std::size_t batch_size = 1000;
  std::size_t queue_batches = 16;  // enriched batches waiting for the writer
  bool resolve = true;
};

struct PipelineResult {
  SessionStats stats;
  CaptureStats capture;
  std::optional<ResolutionReport> resolution;
};

// Drains `capture` into `session` of `store`: one thread enriches, one
// indexes. Returns when the capture ends (or `stop` is set and the buffered
// events are drained). Session stats are written at the end.
PipelineResult run_pipeline(CaptureHandle& capture, Store& store,
                            const std::string& session,
                            const PipelineOptions& options = {},
                            const std::atomic<bool>* stop = nullptr);

}  // namespace iodiag
