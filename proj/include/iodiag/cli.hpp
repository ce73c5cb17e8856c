// Copyright 2026 The iodiag Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <ostream>
#include <vector>

#include "iodiag/analyze.hpp"
#include "iodiag/store.hpp"

namespace iodiag {

// Exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFindings = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitUnsupported = 3;

// Environment variable naming the store directory. A config file's store.dir
// is overridden by it.
inline constexpr const char* kStoreEnv = "IODIAG_STORE";

// Runs the iodiag command line. Never throws; errors become messages on
// `err` and a nonzero exit code.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

// Table renderings shared by the CLI commands.
void print_event_table(std::ostream& out, const std::vector<StoredEvent>& events);
void print_summary(std::ostream& out, const SessionSummary& summary);

}  // namespace iodiag
