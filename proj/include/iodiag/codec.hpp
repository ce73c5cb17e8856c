// Copyright 2026 The iodiag Authors
// SPDX-License-Identifier: Apache-2.0

// Compact binary encoding of SyscallEvent. Used for ring-buffer records and
// store segments; lossless, so decode(encode(e)) == e.

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "iodiag/model.hpp"

namespace iodiag::codec {

void encode(const SyscallEvent& event, std::vector<std::byte>& out);
std::vector<std::byte> encode(const SyscallEvent& event);

// Throws iodiag::Error on truncated or corrupt input.
SyscallEvent decode(std::span<const std::byte> bytes);

}  // namespace iodiag::codec
