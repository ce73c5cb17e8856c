// Copyright 2026 The iodiag Authors
// SPDX-License-Identifier: Apache-2.0

#include "iodiag/codec.hpp"

#include <cstdint>
#include <cstring>

#include "iodiag/error.hpp"

namespace iodiag::codec {

namespace {

constexpr std::uint8_t kVersion = 1;

// Presence bits for the optional top-level fields.
enum : std::uint16_t {
  kHasRet = 1 << 0,
  kHasExit = 1 << 1,
  kHasEnrichment = 1 << 2,
  kHintType = 1 << 3,
  kHintDev = 1 << 4,
  kHintIno = 1 << 5,
  kHintPos = 1 << 6,
  kHintPpid = 1 << 7,
};

enum : std::uint8_t {
  kEnBefore = 1 << 0,
  kEnAfter = 1 << 1,
  kEnTag = 1 << 2,
  kEnPath = 1 << 3,
};

class Writer {
 public:
  explicit Writer(std::vector<std::byte>& out) : out_(out) {}

  void u8(std::uint8_t v) { out_.push_back(static_cast<std::byte>(v)); }

  void uvar(std::uint64_t v) {
    while (v >= 0x80) {
      u8(static_cast<std::uint8_t>(v) | 0x80);
      v >>= 7;
    }
    u8(static_cast<std::uint8_t>(v));
  }

  void svar(std::int64_t v) {
    uvar((static_cast<std::uint64_t>(v) << 1) ^
         static_cast<std::uint64_t>(v >> 63));
  }

  void str(const std::string& s) {
    uvar(s.size());
    const auto* p = reinterpret_cast<const std::byte*>(s.data());
    out_.insert(out_.end(), p, p + s.size());
  }

 private:
  std::vector<std::byte>& out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::byte> in) : in_(in) {}

  std::uint8_t u8() {
    if (pos_ >= in_.size()) throw Error("codec: truncated record");
    return static_cast<std::uint8_t>(in_[pos_++]);
  }

  std::uint64_t uvar() {
    std::uint64_t v = 0;
    for (int shift = 0; shift < 64; shift += 7) {
      auto b = u8();
      v |= static_cast<std::uint64_t>(b & 0x7f) << shift;
      if ((b & 0x80) == 0) return v;
    }
    throw Error("codec: varint overflow");
  }

  std::int64_t svar() {
    auto u = uvar();
    return static_cast<std::int64_t>((u >> 1) ^ (~(u & 1) + 1));
  }

  std::string str() {
    auto n = uvar();
    if (n > in_.size() - pos_) throw Error("codec: truncated string");
    std::string s(reinterpret_cast<const char*>(in_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == in_.size(); }

 private:
  std::span<const std::byte> in_;
  std::size_t pos_ = 0;
};

template <typename Args, typename Fn>
void for_each_arg(Args& a, Fn&& fn) {
  fn(a.fd);
  fn(a.dirfd);
  fn(a.path);
  fn(a.newdirfd);
  fn(a.newpath);
  fn(a.count);
  fn(a.offset);
  fn(a.whence);
  fn(a.flags);
  fn(a.mode);
  fn(a.length);
  fn(a.name);
  fn(a.dev);
}

}  // namespace

void encode(const SyscallEvent& ev, std::vector<std::byte>& out) {
  Writer w(out);
  w.u8(kVersion);
  std::uint16_t flags = 0;
  if (ev.retval) flags |= kHasRet;
  if (ev.t_exit) flags |= kHasExit;
  if (ev.enrichment) flags |= kHasEnrichment;
  if (ev.hints.file_type) flags |= kHintType;
  if (ev.hints.dev) flags |= kHintDev;
  if (ev.hints.ino) flags |= kHintIno;
  if (ev.hints.pos) flags |= kHintPos;
  if (ev.hints.ppid) flags |= kHintPpid;
  w.uvar(flags);

  w.str(ev.session);
  w.svar(ev.pid);
  w.svar(ev.tid);
  w.str(ev.comm);
  w.u8(static_cast<std::uint8_t>(ev.kind));
  w.uvar(ev.args.present());
  for_each_arg(ev.args, [&w](const auto& slot) {
    if (!slot) return;
    if constexpr (std::is_same_v<std::decay_t<decltype(*slot)>, std::string>)
      w.str(*slot);
    else
      w.svar(*slot);
  });
  if (ev.retval) w.svar(*ev.retval);
  w.svar(ev.t_entry);
  if (ev.t_exit) w.svar(*ev.t_exit);
  w.uvar(ev.seq);

  if (ev.hints.file_type) w.u8(static_cast<std::uint8_t>(*ev.hints.file_type));
  if (ev.hints.dev) w.uvar(*ev.hints.dev);
  if (ev.hints.ino) w.uvar(*ev.hints.ino);
  if (ev.hints.pos) w.svar(*ev.hints.pos);
  if (ev.hints.ppid) w.svar(*ev.hints.ppid);

  if (ev.enrichment) {
    const auto& e = *ev.enrichment;
    std::uint8_t ef = 0;
    if (e.offset_before) ef |= kEnBefore;
    if (e.offset_after) ef |= kEnAfter;
    if (e.tag) ef |= kEnTag;
    if (e.resolved_path) ef |= kEnPath;
    w.u8(ef);
    w.u8(static_cast<std::uint8_t>(e.file_type));
    if (e.offset_before) w.svar(*e.offset_before);
    if (e.offset_after) w.svar(*e.offset_after);
    if (e.tag) {
      w.uvar(e.tag->device);
      w.uvar(e.tag->inode);
      w.svar(e.tag->first_access);
    }
    if (e.resolved_path) w.str(*e.resolved_path);
  }
}

std::vector<std::byte> encode(const SyscallEvent& event) {
  std::vector<std::byte> out;
  out.reserve(96);
  encode(event, out);
  return out;
}

SyscallEvent decode(std::span<const std::byte> bytes) {
  Reader r(bytes);
  if (r.u8() != kVersion) throw Error("codec: unknown record version");
  const auto flags = static_cast<std::uint16_t>(r.uvar());

  SyscallEvent ev;
  ev.session = r.str();
  ev.pid = r.svar();
  ev.tid = r.svar();
  ev.comm = r.str();
  auto kind = r.u8();
  if (kind >= kSyscallKindCount) throw Error("codec: bad syscall kind");
  ev.kind = static_cast<SyscallKind>(kind);
  const auto present = static_cast<ArgMask>(r.uvar());
  unsigned bit = 0;
  for_each_arg(ev.args, [&](auto& slot) {
    if (present & (1u << bit++)) {
      if constexpr (std::is_same_v<
                        typename std::decay_t<decltype(slot)>::value_type,
                        std::string>)
        slot = r.str();
      else
        slot = r.svar();
    }
  });
  if (flags & kHasRet) ev.retval = r.svar();
  ev.t_entry = r.svar();
  if (flags & kHasExit) ev.t_exit = r.svar();
  ev.seq = r.uvar();

  if (flags & kHintType) {
    auto t = r.u8();
    if (t > static_cast<std::uint8_t>(FileType::unknown))
      throw Error("codec: bad file type");
    ev.hints.file_type = static_cast<FileType>(t);
  }
  if (flags & kHintDev) ev.hints.dev = r.uvar();
  if (flags & kHintIno) ev.hints.ino = r.uvar();
  if (flags & kHintPos) ev.hints.pos = r.svar();
  if (flags & kHintPpid) ev.hints.ppid = r.svar();

  if (flags & kHasEnrichment) {
    EnrichmentInfo e;
    auto ef = r.u8();
    auto t = r.u8();
    if (t > static_cast<std::uint8_t>(FileType::unknown))
      throw Error("codec: bad file type");
    e.file_type = static_cast<FileType>(t);
    if (ef & kEnBefore) e.offset_before = r.svar();
    if (ef & kEnAfter) e.offset_after = r.svar();
    if (ef & kEnTag) {
      FileTag tag;
      tag.device = r.uvar();
      tag.inode = r.uvar();
      tag.first_access = r.svar();
      e.tag = tag;
    }
    if (ef & kEnPath) e.resolved_path = r.str();
    ev.enrichment = std::move(e);
  }
  if (!r.done()) throw Error("codec: trailing bytes");
  return ev;
}

}  // namespace iodiag::codec
