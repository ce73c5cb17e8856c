// Copyright 2026 The iodiag Authors
// SPDX-License-Identifier: Apache-2.0

// Canonical line-delimited JSON trace records.
//
// Aggregated form (one syscall, entry and exit merged):
//   {"session":s,"pid":n,"tid":n,"comm":s,"kind":s,"args":{...},
//    "ret":n|null,"t_entry":ns,"t_exit":ns|null}
// Half-event form adds "dir":"entry"|"exit"; an entry carries args and
// t_entry, an exit carries ret and t_exit.
//
// Optional keys understood on either form: "seq", the kernel facts "mode"
// (file type name), "dev", "ino", "pos" (file position before the call) and
// "ppid", plus "enrichment" on exported aggregated records. Unknown keys are
// ignored.

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>

#include <json.hpp>

#include "iodiag/model.hpp"

namespace iodiag {

enum class Direction : std::uint8_t { entry, exit };

struct RawHalfEvent {
  Direction direction = Direction::entry;
  std::string session;
  std::int64_t pid = 0;
  std::int64_t tid = 0;
  std::string comm;
  SyscallKind kind = SyscallKind::read;
  std::int64_t timestamp = 0;
  SyscallArgs args;                    // entry only
  std::optional<std::int64_t> retval;  // exit only
  KernelHints hints;

  friend bool operator==(const RawHalfEvent&, const RawHalfEvent&) = default;
};

using TraceRecord = std::variant<SyscallEvent, RawHalfEvent>;

nlohmann::ordered_json args_to_json(const SyscallArgs& args);
nlohmann::ordered_json enrichment_to_json(const EnrichmentInfo& info);
nlohmann::ordered_json to_json(const SyscallEvent& event);
nlohmann::ordered_json to_json(const RawHalfEvent& half);

// Compact single-line rendering without trailing newline.
std::string to_line(const SyscallEvent& event);
std::string to_line(const RawHalfEvent& half);

// Throws MalformedInput carrying line_no on any schema violation.
TraceRecord parse_record(std::string_view line, std::size_t line_no);
SyscallEvent parse_event(std::string_view line, std::size_t line_no);

SyscallArgs args_from_json(const nlohmann::json& j, SyscallKind kind,
                           std::size_t line_no);
EnrichmentInfo enrichment_from_json(const nlohmann::json& j,
                                    std::size_t line_no);

}  // namespace iodiag
