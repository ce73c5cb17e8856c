// Copyright 2026 The iodiag Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

namespace iodiag {

inline constexpr std::size_t kDefaultLaneCapacity = 256u * 1024u * 1024u;

struct RingConfig {
  std::size_t lanes = 1;
  std::size_t capacity_bytes_per_lane = kDefaultLaneCapacity;
};

enum class ProduceResult { accepted, dropped };

struct LaneStats {
  std::uint64_t produced = 0;
  std::uint64_t consumed = 0;
  std::uint64_t dropped = 0;
  std::uint64_t buffered = 0;
};

struct RingStats {
  std::uint64_t produced = 0;
  std::uint64_t consumed = 0;
  std::uint64_t dropped = 0;
  std::uint64_t buffered = 0;
  std::vector<LaneStats> lanes;

  double drop_fraction() const {
    return produced == 0 ? 0.0
                         : static_cast<double>(dropped) /
                               static_cast<double>(produced);
  }
};

// Per-lane bounded byte rings carrying length-prefixed records.
//
// Each lane is single-producer/single-consumer and lock-free: produce() never
// blocks, and a record that does not fit in the lane's free space is dropped
// (the incoming record is the one discarded). Lanes are independent.
class RingBuffer {
 public:
  // Bytes a record of `payload` bytes occupies in a lane.
  static constexpr std::size_t kHeaderBytes = 4;
  static constexpr std::size_t footprint(std::size_t payload) {
    return kHeaderBytes + payload;
  }

  explicit RingBuffer(RingConfig config);
  ~RingBuffer();

  RingBuffer(const RingBuffer&) = delete;
  RingBuffer& operator=(const RingBuffer&) = delete;

  ProduceResult produce(std::size_t lane, std::span<const std::byte> record);

  // Removes and returns up to `max` of the oldest records, FIFO.
  std::vector<std::vector<std::byte>> consume_batch(std::size_t lane,
                                                    std::size_t max);

  // Same, but hands each record to `sink` without an intermediate vector.
  // The span is only valid during the call.
  std::size_t consume_batch(
      std::size_t lane, std::size_t max,
      const std::function<void(std::span<const std::byte>)>& sink);

  RingStats stats() const;
  const RingConfig& config() const { return config_; }
  std::size_t lanes() const { return config_.lanes; }

 private:
  struct Lane;
  Lane& lane_at(std::size_t lane) const;

  RingConfig config_;
  std::unique_ptr<Lane[]> lanes_;
};

}  // namespace iodiag
