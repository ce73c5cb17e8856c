// Copyright 2026 The iodiag Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace iodiag {

// Base of every error the library throws. Callers that only care about
// "something went wrong" catch this; the CLI maps subclasses to exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NotInCatalog : public Error {
 public:
  explicit NotInCatalog(const std::string& name)
      : Error("syscall not in catalog: " + name) {}
};

class MalformedInput : public Error {
 public:
  MalformedInput(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class Unsupported : public Error {
 public:
  using Error::Error;
};

class SpawnFailed : public Error {
 public:
  using Error::Error;
};

class LaneOutOfRange : public Error {
 public:
  LaneOutOfRange(std::size_t lane, std::size_t lanes)
      : Error("lane " + std::to_string(lane) + " out of range (lanes=" +
              std::to_string(lanes) + ")") {}
};

class UnknownSession : public Error {
 public:
  explicit UnknownSession(const std::string& name)
      : Error("unknown session: " + name) {}
};

class DuplicateSession : public Error {
 public:
  explicit DuplicateSession(const std::string& name)
      : Error("session already exists: " + name) {}
};

class StorageFull : public Error {
 public:
  using Error::Error;
};

class MalformedSpec : public Error {
 public:
  using Error::Error;
};

class ImmutableField : public Error {
 public:
  explicit ImmutableField(const std::string& field)
      : Error("field is not mutable: " + field) {}
};

class MalformedPattern : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace iodiag
