// Copyright 2026 The iodiag Authors
// SPDX-License-Identifier: Apache-2.0

#include "iodiag/ringbuf.hpp"

#include <algorithm>
#include <cstring>

#include "iodiag/error.hpp"

namespace iodiag {

struct RingBuffer::Lane {
  std::unique_ptr<std::byte[]> data;
  std::size_t capacity = 0;

  // Byte positions; they only grow. Buffered bytes are tail - head.
  alignas(64) std::atomic<std::uint64_t> tail{0};
  std::atomic<std::uint64_t> accepted{0};
  std::atomic<std::uint64_t> dropped{0};

  alignas(64) std::atomic<std::uint64_t> head{0};
  std::atomic<std::uint64_t> consumed{0};

  void copy_in(std::uint64_t pos, const void* src, std::size_t n) {
    const std::size_t at = pos % capacity;
    const std::size_t first = std::min(n, capacity - at);
    std::memcpy(data.get() + at, src, first);
    std::memcpy(data.get(), static_cast<const std::byte*>(src) + first,
                n - first);
  }

  void copy_out(std::uint64_t pos, void* dst, std::size_t n) const {
    const std::size_t at = pos % capacity;
    const std::size_t first = std::min(n, capacity - at);
    std::memcpy(dst, data.get() + at, first);
    std::memcpy(static_cast<std::byte*>(dst) + first, data.get(), n - first);
  }
};

RingBuffer::RingBuffer(RingConfig config) : config_(config) {
  if (config_.lanes == 0) throw Error("ring buffer needs at least one lane");
  if (config_.capacity_bytes_per_lane <= kHeaderBytes)
    throw Error("ring buffer lane capacity too small");
  lanes_ = std::make_unique<Lane[]>(config_.lanes);
  for (std::size_t i = 0; i < config_.lanes; ++i) {
    // Default-initialised storage: pages are only touched once written.
    lanes_[i].data.reset(new std::byte[config_.capacity_bytes_per_lane]);
    lanes_[i].capacity = config_.capacity_bytes_per_lane;
  }
}

RingBuffer::~RingBuffer() = default;

RingBuffer::Lane& RingBuffer::lane_at(std::size_t lane) const {
  if (lane >= config_.lanes) throw LaneOutOfRange(lane, config_.lanes);
  return lanes_[lane];
}

ProduceResult RingBuffer::produce(std::size_t lane_index,
                                  std::span<const std::byte> record) {
  Lane& lane = lane_at(lane_index);
  const std::size_t need = footprint(record.size());
  const std::uint64_t tail = lane.tail.load(std::memory_order_relaxed);
  const std::uint64_t head = lane.head.load(std::memory_order_acquire);
  const std::uint64_t free_bytes = lane.capacity - (tail - head);
  if (need > free_bytes || record.size() > UINT32_MAX) {
    lane.dropped.fetch_add(1, std::memory_order_relaxed);
    return ProduceResult::dropped;
  }
  const auto len = static_cast<std::uint32_t>(record.size());
  std::byte header[kHeaderBytes];
  for (std::size_t i = 0; i < kHeaderBytes; ++i)
    header[i] = static_cast<std::byte>((len >> (8 * i)) & 0xff);
  lane.copy_in(tail, header, kHeaderBytes);
  lane.copy_in(tail + kHeaderBytes, record.data(), record.size());
  lane.tail.store(tail + need, std::memory_order_release);
  lane.accepted.fetch_add(1, std::memory_order_release);
  return ProduceResult::accepted;
}

std::size_t RingBuffer::consume_batch(
    std::size_t lane_index, std::size_t max,
    const std::function<void(std::span<const std::byte>)>& sink) {
  Lane& lane = lane_at(lane_index);
  std::uint64_t head = lane.head.load(std::memory_order_relaxed);
  const std::uint64_t tail = lane.tail.load(std::memory_order_acquire);
  std::vector<std::byte> scratch;
  std::size_t n = 0;
  while (n < max && head < tail) {
    std::byte header[kHeaderBytes];
    lane.copy_out(head, header, kHeaderBytes);
    std::uint32_t len = 0;
    for (std::size_t i = 0; i < kHeaderBytes; ++i)
      len |= static_cast<std::uint32_t>(header[i]) << (8 * i);
    const std::uint64_t body = head + kHeaderBytes;
    const std::size_t at = body % lane.capacity;
    if (at + len <= lane.capacity) {
      sink(std::span<const std::byte>(lane.data.get() + at, len));
    } else {
      scratch.resize(len);
      lane.copy_out(body, scratch.data(), len);
      sink(scratch);
    }
    head = body + len;
    ++n;
  }
  lane.head.store(head, std::memory_order_release);
  lane.consumed.fetch_add(n, std::memory_order_relaxed);
  return n;
}

std::vector<std::vector<std::byte>> RingBuffer::consume_batch(
    std::size_t lane, std::size_t max) {
  std::vector<std::vector<std::byte>> out;
  consume_batch(lane, max, [&out](std::span<const std::byte> rec) {
    out.emplace_back(rec.begin(), rec.end());
  });
  return out;
}

RingStats RingBuffer::stats() const {
  RingStats s;
  s.lanes.reserve(config_.lanes);
  for (std::size_t i = 0; i < config_.lanes; ++i) {
    const Lane& lane = lanes_[i];
    LaneStats ls;
    ls.consumed = lane.consumed.load(std::memory_order_acquire);
    const auto accepted = lane.accepted.load(std::memory_order_acquire);
    ls.dropped = lane.dropped.load(std::memory_order_acquire);
    ls.produced = accepted + ls.dropped;
    ls.buffered = accepted >= ls.consumed ? accepted - ls.consumed : 0;
    s.produced += ls.produced;
    s.consumed += ls.consumed;
    s.dropped += ls.dropped;
    s.buffered += ls.buffered;
    s.lanes.push_back(ls);
  }
  return s;
}

}  // namespace iodiag
