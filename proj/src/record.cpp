// Copyright 2026 The iodiag Authors
// SPDX-License-Identifier: Apache-2.0

#include "iodiag/record.hpp"

#include "iodiag/error.hpp"

namespace iodiag {

namespace {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

std::string dump(const ojson& j) {
  return j.dump(-1, ' ', false, json::error_handler_t::replace);
}

[[noreturn]] void fail(std::size_t line, const std::string& what) {
  throw MalformedInput(line, what);
}

std::int64_t get_int(const json& j, const char* key, std::size_t line) {
  auto it = j.find(key);
  if (it == j.end() || !it->is_number_integer())
    fail(line, std::string("missing or non-integer \"") + key + "\"");
  return it->get<std::int64_t>();
}

std::optional<std::int64_t> get_opt_int(const json& j, const char* key,
                                        std::size_t line) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  if (!it->is_number_integer())
    fail(line, std::string("non-integer \"") + key + "\"");
  return it->get<std::int64_t>();
}

std::optional<std::uint64_t> get_opt_uint(const json& j, const char* key,
                                          std::size_t line) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  if (!it->is_number_unsigned())
    fail(line, std::string("expected unsigned integer \"") + key + "\"");
  return it->get<std::uint64_t>();
}

std::string get_opt_string(const json& j, const char* key, std::size_t line) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return {};
  if (!it->is_string()) fail(line, std::string("non-string \"") + key + "\"");
  return it->get<std::string>();
}

std::string clamp_comm(std::string comm) {
  if (comm.size() > kMaxCommBytes) comm.resize(kMaxCommBytes);
  return comm;
}

SyscallKind get_kind(const json& j, std::size_t line) {
  auto it = j.find("kind");
  if (it == j.end() || !it->is_string()) fail(line, "missing \"kind\"");
  auto kind = find_syscall(it->get_ref<const std::string&>());
  if (!kind)
    fail(line, "syscall not in catalog: " + it->get<std::string>());
  return *kind;
}

KernelHints hints_from_json(const json& j, std::size_t line) {
  KernelHints h;
  if (auto it = j.find("mode"); it != j.end() && !it->is_null()) {
    if (!it->is_string()) fail(line, "\"mode\" must be a file type name");
    h.file_type = file_type_from_string(it->get_ref<const std::string&>());
  }
  h.dev = get_opt_uint(j, "dev", line);
  h.ino = get_opt_uint(j, "ino", line);
  h.pos = get_opt_int(j, "pos", line);
  h.ppid = get_opt_int(j, "ppid", line);
  return h;
}

void hints_to_json(const KernelHints& h, ojson& j) {
  if (h.file_type) j["mode"] = std::string(to_string(*h.file_type));
  if (h.dev) j["dev"] = *h.dev;
  if (h.ino) j["ino"] = *h.ino;
  if (h.pos) j["pos"] = *h.pos;
  if (h.ppid) j["ppid"] = *h.ppid;
}

template <typename Fn>
void for_each_arg(const SyscallArgs& a, Fn&& fn) {
  fn(ArgField::fd, a.fd);
  fn(ArgField::dirfd, a.dirfd);
  fn(ArgField::path, a.path);
  fn(ArgField::newdirfd, a.newdirfd);
  fn(ArgField::newpath, a.newpath);
  fn(ArgField::count, a.count);
  fn(ArgField::offset, a.offset);
  fn(ArgField::whence, a.whence);
  fn(ArgField::flags, a.flags);
  fn(ArgField::mode, a.mode);
  fn(ArgField::length, a.length);
  fn(ArgField::name, a.name);
  fn(ArgField::dev, a.dev);
}

template <typename Fn>
void for_each_arg(SyscallArgs& a, Fn&& fn) {
  fn(ArgField::fd, a.fd);
  fn(ArgField::dirfd, a.dirfd);
  fn(ArgField::path, a.path);
  fn(ArgField::newdirfd, a.newdirfd);
  fn(ArgField::newpath, a.newpath);
  fn(ArgField::count, a.count);
  fn(ArgField::offset, a.offset);
  fn(ArgField::whence, a.whence);
  fn(ArgField::flags, a.flags);
  fn(ArgField::mode, a.mode);
  fn(ArgField::length, a.length);
  fn(ArgField::name, a.name);
  fn(ArgField::dev, a.dev);
}

}  // namespace

ojson args_to_json(const SyscallArgs& args) {
  ojson j = ojson::object();
  for_each_arg(args, [&j](ArgField f, const auto& v) {
    if (v) j[std::string(to_string(f))] = *v;
  });
  return j;
}

SyscallArgs args_from_json(const json& j, SyscallKind kind,
                           std::size_t line) {
  if (!j.is_object()) fail(line, "\"args\" must be an object");
  SyscallArgs args;
  const ArgMask wanted = info(kind).args;
  for_each_arg(args, [&](ArgField f, auto& slot) {
    if ((wanted & arg_bit(f)) == 0) return;  // not defined for kind: ignore
    auto key = to_string(f);
    auto it = j.find(std::string(key));
    if (it == j.end())
      fail(line, std::string(to_string(kind)) + " requires argument \"" +
                     std::string(key) + "\"");
    using T = typename std::decay_t<decltype(slot)>::value_type;
    if constexpr (std::is_same_v<T, std::string>) {
      if (!it->is_string())
        fail(line, "argument \"" + std::string(key) + "\" must be a string");
      slot = it->template get<std::string>();
    } else {
      if (!it->is_number_integer())
        fail(line, "argument \"" + std::string(key) + "\" must be an integer");
      slot = it->template get<std::int64_t>();
    }
  });
  return args;
}

ojson enrichment_to_json(const EnrichmentInfo& e) {
  ojson j;
  j["file_type"] = std::string(to_string(e.file_type));
  j["offset_before"] = e.offset_before ? ojson(*e.offset_before) : ojson();
  j["offset_after"] = e.offset_after ? ojson(*e.offset_after) : ojson();
  if (e.tag) {
    j["tag"] = {{"dev", e.tag->device},
                {"ino", e.tag->inode},
                {"first_access", e.tag->first_access}};
  } else {
    j["tag"] = nullptr;
  }
  j["resolved_path"] = e.resolved_path ? ojson(*e.resolved_path) : ojson();
  return j;
}

EnrichmentInfo enrichment_from_json(const json& j, std::size_t line) {
  if (!j.is_object()) fail(line, "\"enrichment\" must be an object");
  EnrichmentInfo e;
  auto type = get_opt_string(j, "file_type", line);
  e.file_type = type.empty() ? FileType::unknown : file_type_from_string(type);
  e.offset_before = get_opt_int(j, "offset_before", line);
  e.offset_after = get_opt_int(j, "offset_after", line);
  if (auto it = j.find("tag"); it != j.end() && !it->is_null()) {
    if (!it->is_object()) fail(line, "\"tag\" must be an object");
    FileTag tag;
    auto dev = get_opt_uint(*it, "dev", line);
    auto ino = get_opt_uint(*it, "ino", line);
    if (!dev || !ino) fail(line, "\"tag\" requires dev and ino");
    tag.device = *dev;
    tag.inode = *ino;
    tag.first_access = get_int(*it, "first_access", line);
    e.tag = tag;
  }
  if (auto it = j.find("resolved_path"); it != j.end() && !it->is_null()) {
    if (!it->is_string()) fail(line, "\"resolved_path\" must be a string");
    e.resolved_path = it->get<std::string>();
  }
  return e;
}

ojson to_json(const SyscallEvent& ev) {
  ojson j;
  j["session"] = ev.session;
  j["pid"] = ev.pid;
  j["tid"] = ev.tid;
  j["comm"] = ev.comm;
  j["kind"] = std::string(to_string(ev.kind));
  j["args"] = args_to_json(ev.args);
  j["ret"] = ev.retval ? ojson(*ev.retval) : ojson();
  j["t_entry"] = ev.t_entry;
  j["t_exit"] = ev.t_exit ? ojson(*ev.t_exit) : ojson();
  j["seq"] = ev.seq;
  hints_to_json(ev.hints, j);
  if (ev.enrichment) j["enrichment"] = enrichment_to_json(*ev.enrichment);
  return j;
}

ojson to_json(const RawHalfEvent& h) {
  ojson j;
  j["dir"] = h.direction == Direction::entry ? "entry" : "exit";
  j["session"] = h.session;
  j["pid"] = h.pid;
  j["tid"] = h.tid;
  j["comm"] = h.comm;
  j["kind"] = std::string(to_string(h.kind));
  if (h.direction == Direction::entry) {
    j["args"] = args_to_json(h.args);
    j["t_entry"] = h.timestamp;
  } else {
    j["ret"] = h.retval ? ojson(*h.retval) : ojson();
    j["t_exit"] = h.timestamp;
  }
  hints_to_json(h.hints, j);
  return j;
}

std::string to_line(const SyscallEvent& event) { return dump(to_json(event)); }
std::string to_line(const RawHalfEvent& half) { return dump(to_json(half)); }

TraceRecord parse_record(std::string_view line, std::size_t line_no) {
  json j = json::parse(line, nullptr, false);
  if (j.is_discarded()) fail(line_no, "invalid JSON");
  if (!j.is_object()) fail(line_no, "record must be a JSON object");

  const SyscallKind kind = get_kind(j, line_no);
  auto dir = j.find("dir");
  if (dir != j.end() && !dir->is_null()) {
    if (!dir->is_string()) fail(line_no, "\"dir\" must be entry or exit");
    const auto& d = dir->get_ref<const std::string&>();
    RawHalfEvent h;
    if (d == "entry") {
      h.direction = Direction::entry;
    } else if (d == "exit") {
      h.direction = Direction::exit;
    } else {
      fail(line_no, "\"dir\" must be entry or exit");
    }
    h.session = get_opt_string(j, "session", line_no);
    h.pid = get_int(j, "pid", line_no);
    h.tid = get_int(j, "tid", line_no);
    h.comm = clamp_comm(get_opt_string(j, "comm", line_no));
    h.kind = kind;
    h.hints = hints_from_json(j, line_no);
    if (h.direction == Direction::entry) {
      h.timestamp = get_int(j, "t_entry", line_no);
      auto args = j.find("args");
      if (args == j.end()) fail(line_no, "entry record requires \"args\"");
      h.args = args_from_json(*args, kind, line_no);
    } else {
      h.timestamp = get_int(j, "t_exit", line_no);
      if (j.find("ret") == j.end()) fail(line_no, "exit record requires \"ret\"");
      h.retval = get_opt_int(j, "ret", line_no);
    }
    return h;
  }

  SyscallEvent ev;
  ev.session = get_opt_string(j, "session", line_no);
  ev.pid = get_int(j, "pid", line_no);
  ev.tid = get_int(j, "tid", line_no);
  ev.comm = clamp_comm(get_opt_string(j, "comm", line_no));
  ev.kind = kind;
  auto args = j.find("args");
  if (args == j.end()) fail(line_no, "record requires \"args\"");
  ev.args = args_from_json(*args, kind, line_no);
  ev.retval = get_opt_int(j, "ret", line_no);
  ev.t_entry = get_int(j, "t_entry", line_no);
  ev.t_exit = get_opt_int(j, "t_exit", line_no);
  if (ev.t_exit && *ev.t_exit < ev.t_entry)
    fail(line_no, "t_exit precedes t_entry");
  if (auto seq = get_opt_uint(j, "seq", line_no)) ev.seq = *seq;
  ev.hints = hints_from_json(j, line_no);
  if (auto e = j.find("enrichment"); e != j.end() && !e->is_null())
    ev.enrichment = enrichment_from_json(*e, line_no);
  return ev;
}

SyscallEvent parse_event(std::string_view line, std::size_t line_no) {
  auto rec = parse_record(line, line_no);
  if (auto* ev = std::get_if<SyscallEvent>(&rec)) return std::move(*ev);
  fail(line_no, "expected an aggregated record, found a half-event");
}

}  // namespace iodiag
