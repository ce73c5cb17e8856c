// Copyright 2026 The iodiag Authors
// SPDX-License-Identifier: Apache-2.0

#include "iodiag/enrich.hpp"

#include <algorithm>
#include <vector>

#include "iodiag/capture.hpp"

namespace iodiag {

namespace {

// Linux ABI values; recorded traces carry raw flag words.
constexpr std::int64_t kOTrunc = 01000;
constexpr std::int64_t kOAppend = 02000;
constexpr std::int64_t kODirectory = 0200000;
constexpr std::int64_t kCreatFlags = 01 | 0100 | 01000;  // WRONLY|CREAT|TRUNC

constexpr std::int64_t kSeekSet = 0;
constexpr std::int64_t kSeekCur = 1;
constexpr std::int64_t kSeekEnd = 2;

}  // namespace

FileType classify_file_type(std::optional<FileType> hint,
                            std::optional<std::string_view> path,
                            std::int64_t open_flags, bool succeeded) {
  if (hint) return *hint;
  if (succeeded) {
    if (path && !path->empty() && path->back() == '/')
      return FileType::directory;
    if (open_flags & kODirectory) return FileType::directory;
  }
  return FileType::unknown;
}

FileType file_type_from_mode_bits(std::int64_t mode) {
  switch (mode & 0170000) {
    case 0100000: return FileType::regular;
    case 0040000: return FileType::directory;
    case 0140000: return FileType::socket;
    case 0060000: return FileType::block_device;
    case 0020000: return FileType::char_device;
    case 0010000: return FileType::pipe;
    case 0120000: return FileType::symlink;
    case 0: return FileType::regular;  // mknod defaults to a regular file
    default: return FileType::other;
  }
}

FdTable::FdTable() = default;
FdTable::~FdTable() = default;
FdTable::FdTable(FdTable&&) noexcept = default;
FdTable& FdTable::operator=(FdTable&&) noexcept = default;

SyscallEvent enrich_event(FdTable& table, SyscallEvent event) {
  return table.enrich(std::move(event));
}

std::optional<OpenFileState> FdTable::lookup(std::int64_t pid,
                                             std::int64_t fd) const {
  auto it = fds_.find(Key{pid, fd});
  if (it == fds_.end()) return std::nullopt;
  const OpenFd& o = it->second;
  OpenFileState s;
  s.path = o.path;
  s.file_type = o.type;
  s.offset = o.offset;
  s.append_mode = o.append;
  if (o.file) {
    s.known_size = o.file->size;
    s.tag = o.file->tag;
  }
  return s;
}

std::optional<FileTag> FdTable::current_tag(std::uint64_t dev,
                                            std::uint64_t ino) const {
  auto it = by_identity_.find({dev, ino});
  if (it == by_identity_.end()) return std::nullopt;
  return it->second->tag;
}

std::optional<std::int64_t> FdTable::known_size_of_path(
    const std::string& path) const {
  auto it = by_path_.find(path);
  if (it == by_path_.end()) return std::nullopt;
  return it->second->size;
}

FdTable::OpenFd* FdTable::find_fd(std::int64_t pid, std::int64_t fd) {
  auto it = fds_.find(Key{pid, fd});
  return it == fds_.end() ? nullptr : &it->second;
}

FdTable::FilePtr FdTable::new_file(
    std::optional<std::pair<std::uint64_t, std::uint64_t>> id) {
  auto f = std::make_shared<FileState>();
  f->id = id ? *id : std::pair<std::uint64_t, std::uint64_t>{0, next_synthetic_++};
  by_identity_[f->id] = f;
  return f;
}

void FdTable::inherit(std::int64_t pid, std::int64_t ppid) {
  std::vector<std::pair<Key, OpenFd>> copies;
  for (const auto& [k, v] : fds_)
    if (k.pid == ppid) copies.emplace_back(Key{pid, k.fd}, v);
  for (auto& [k, v] : copies) fds_.emplace(k, std::move(v));
}

std::optional<std::string> FdTable::effective_path(
    const SyscallEvent& ev) const {
  if (!ev.args.path) return std::nullopt;
  const std::string& p = *ev.args.path;
  if (!p.starts_with('/') && ev.args.dirfd && *ev.args.dirfd != kAtFdCwd) {
    auto it = fds_.find(Key{ev.pid, *ev.args.dirfd});
    if (it != fds_.end() && it->second.path)
      return join_path(*it->second.path, p);
  }
  return p;
}

void FdTable::forget_path(const std::string& path) {
  auto it = by_path_.find(path);
  if (it == by_path_.end()) return;
  if (it->second->path == path) it->second->path.reset();
  by_path_.erase(it);
}

// The (dev, ino) incarnation ends: later opens of that pair mint a new tag.
void FdTable::unbind(const FilePtr& file) {
  auto it = by_identity_.find(file->id);
  if (it != by_identity_.end() && it->second == file) by_identity_.erase(it);
  if (file->path) forget_path(*file->path);
}

FdTable::FilePtr FdTable::file_for_open(const SyscallEvent& ev,
                                        const std::string& path) {
  FilePtr f;
  if (ev.hints.dev && ev.hints.ino) {
    const std::pair id{*ev.hints.dev, *ev.hints.ino};
    if (auto it = by_identity_.find(id); it != by_identity_.end()) {
      f = it->second;
    } else {
      f = new_file(id);
    }
    // A different file now answers to this name (replaced out of view).
    if (auto bound = by_path_.find(path);
        bound != by_path_.end() && bound->second != f) {
      auto stale = bound->second;
      unbind(stale);
    }
  } else if (auto it = by_path_.find(path); it != by_path_.end()) {
    f = it->second;
  } else {
    f = new_file(std::nullopt);
  }
  if (f->path != path) {
    if (f->path) forget_path(*f->path);
    f->path = path;
  }
  by_path_[path] = f;
  return f;
}

FdTable::FilePtr FdTable::file_for_path(
    const SyscallEvent& ev, const std::optional<std::string>& path) {
  if (ev.hints.dev && ev.hints.ino) {
    auto it = by_identity_.find({*ev.hints.dev, *ev.hints.ino});
    if (it != by_identity_.end()) return it->second;
  }
  if (path) {
    auto it = by_path_.find(*path);
    if (it != by_path_.end()) return it->second;
  }
  return nullptr;
}

// An fd we never saw opened. Kernel facts on the event, when present, let
// us pick up the file mid-stream.
FdTable::OpenFd* FdTable::adopt_fd(const SyscallEvent& ev) {
  if (ev.succeeded()) ++inconsistencies_;
  if (!ev.args.fd || !ev.hints.dev || !ev.hints.ino) return nullptr;
  const std::pair id{*ev.hints.dev, *ev.hints.ino};
  FilePtr f;
  if (auto it = by_identity_.find(id); it != by_identity_.end()) {
    f = it->second;
  } else {
    f = new_file(id);
  }
  if (!f->tag) f->tag = FileTag{id.first, id.second, ev.t_entry};
  if (ev.hints.file_type) f->type = *ev.hints.file_type;
  OpenFd o;
  o.file = f;
  o.path = f->path;
  o.type = f->type;
  o.offset = ev.hints.pos;
  return &(fds_[Key{ev.pid, *ev.args.fd}] = std::move(o));
}

SyscallEvent FdTable::enrich(SyscallEvent ev) {
  if (seen_pids_.insert(ev.pid).second && ev.hints.ppid)
    inherit(ev.pid, *ev.hints.ppid);

  EnrichmentInfo out;
  const SyscallKind k = ev.kind;
  if (is_open_kind(k)) {
    on_open(ev, out);
  } else if (is_read_kind(k) || is_write_kind(k) ||
             k == SyscallKind::readahead) {
    on_data(ev, out);
  } else if (k == SyscallKind::lseek) {
    on_lseek(ev, out);
  } else if (k == SyscallKind::close) {
    on_close(ev, out);
  } else if (is_unlink_kind(k)) {
    on_unlink(ev, out);
  } else if (is_rename_kind(k)) {
    on_rename(ev, out);
  } else if (k == SyscallKind::truncate || k == SyscallKind::ftruncate) {
    on_truncate(ev, out);
  } else if (k == SyscallKind::mknod || k == SyscallKind::mknodat) {
    on_mknod(ev, out);
  } else {
    on_other(ev, out);
  }
  ev.enrichment = std::move(out);
  return ev;
}

void FdTable::on_open(const SyscallEvent& ev, EnrichmentInfo& out) {
  const auto path = effective_path(ev);
  const std::int64_t flags =
      ev.kind == SyscallKind::creat ? kCreatFlags : ev.args.flags.value_or(0);
  out.file_type =
      classify_file_type(ev.hints.file_type, path, flags, ev.succeeded());
  if (!ev.succeeded()) return;

  const std::string p = path.value_or(std::string());
  FilePtr f = file_for_open(ev, p);
  if (!f->tag) f->tag = FileTag{f->id.first, f->id.second, ev.t_entry};
  if (flags & kOTrunc) f->size = 0;
  if (out.file_type != FileType::unknown) f->type = out.file_type;

  OpenFd o;
  o.file = f;
  o.path = p;
  o.offset = 0;  // O_APPEND moves the position only when writing
  o.append = (flags & kOAppend) != 0;
  o.type = f->type;

  const Key key{ev.pid, *ev.retval};
  if (fds_.contains(key)) ++inconsistencies_;  // missed a close
  fds_[key] = std::move(o);

  out.file_type = f->type;
  out.tag = f->tag;
}

void FdTable::on_data(const SyscallEvent& ev, EnrichmentInfo& out) {
  OpenFd* o = ev.args.fd ? find_fd(ev.pid, *ev.args.fd) : nullptr;
  if (!o) o = adopt_fd(ev);
  if (!o) {
    out.file_type = classify_file_type(ev.hints.file_type);
    if (is_positional_kind(ev.kind) || ev.kind == SyscallKind::readahead) {
      out.offset_before = ev.args.offset;
      out.offset_after = ev.args.offset;
    }
    return;
  }
  if (ev.hints.file_type) o->type = *ev.hints.file_type;
  out.file_type = o->type;
  if (o->file) out.tag = o->file->tag;
  const std::int64_t moved =
      ev.retval && *ev.retval > 0 ? *ev.retval : 0;

  if (is_positional_kind(ev.kind) || ev.kind == SyscallKind::readahead) {
    out.offset_before = ev.args.offset;
    out.offset_after = ev.args.offset;
    if (ev.kind == SyscallKind::pwrite64 && ev.succeeded() && o->file &&
        o->file->size && ev.args.offset)
      o->file->size = std::max(*o->file->size, *ev.args.offset + moved);
    return;
  }

  std::optional<std::int64_t> before;
  if (is_write_kind(ev.kind) && o->append) {
    before = o->file ? o->file->size : std::nullopt;
  } else if (ev.hints.pos) {
    before = ev.hints.pos;
  } else {
    before = o->offset;
  }
  out.offset_before = before;
  if (!ev.succeeded()) {
    out.offset_after = before;
    return;
  }
  out.offset_after = before ? std::optional(*before + moved) : std::nullopt;
  o->offset = out.offset_after;
  if (is_write_kind(ev.kind) && o->file && o->file->size && out.offset_after)
    o->file->size = std::max(*o->file->size, *out.offset_after);
}

void FdTable::on_lseek(const SyscallEvent& ev, EnrichmentInfo& out) {
  OpenFd* o = ev.args.fd ? find_fd(ev.pid, *ev.args.fd) : nullptr;
  if (!o) o = adopt_fd(ev);
  if (!o) {
    out.file_type = classify_file_type(ev.hints.file_type);
    if (ev.succeeded()) out.offset_after = ev.retval;
    return;
  }
  out.file_type = o->type;
  if (o->file) out.tag = o->file->tag;
  const auto current = ev.hints.pos ? ev.hints.pos : o->offset;
  out.offset_before = current;
  if (!ev.succeeded() && ev.retval) {  // failed: position unchanged
    out.offset_after = current;
    return;
  }
  std::optional<std::int64_t> next;
  const std::int64_t delta = ev.args.offset.value_or(0);
  switch (ev.args.whence.value_or(-1)) {
    case kSeekSet: next = delta; break;
    case kSeekCur:
      if (current) next = *current + delta;
      break;
    case kSeekEnd:
      if (o->file && o->file->size) next = *o->file->size + delta;
      break;
    default: break;  // SEEK_DATA/SEEK_HOLE: only the return value tells
  }
  if (ev.succeeded()) next = ev.retval;
  o->offset = next;
  out.offset_after = next;
}

void FdTable::on_close(const SyscallEvent& ev, EnrichmentInfo& out) {
  if (!ev.args.fd) return;
  auto it = fds_.find(Key{ev.pid, *ev.args.fd});
  if (it == fds_.end()) {
    if (ev.succeeded()) ++inconsistencies_;
    out.file_type = classify_file_type(ev.hints.file_type);
    return;
  }
  out.file_type = it->second.type;
  if (it->second.file) out.tag = it->second.file->tag;
  fds_.erase(it);
}

void FdTable::on_unlink(const SyscallEvent& ev, EnrichmentInfo& out) {
  const auto path = effective_path(ev);
  FilePtr f = file_for_path(ev, path);
  out.file_type = classify_file_type(ev.hints.file_type);
  if (f) {
    out.tag = f->tag;
    if (f->type != FileType::unknown) out.file_type = f->type;
  }
  if (!ev.succeeded()) return;
  if (f) unbind(f);
  if (path) forget_path(*path);
}

void FdTable::on_rename(const SyscallEvent& ev, EnrichmentInfo& out) {
  const auto from = effective_path(ev);
  std::optional<std::string> to;
  if (ev.args.newpath) {
    to = *ev.args.newpath;
    if (!to->starts_with('/') && ev.args.newdirfd &&
        *ev.args.newdirfd != kAtFdCwd) {
      if (auto* d = find_fd(ev.pid, *ev.args.newdirfd); d && d->path)
        to = join_path(*d->path, *to);
    }
  }
  FilePtr f = file_for_path(ev, from);
  out.file_type = classify_file_type(ev.hints.file_type);
  if (f) {
    out.tag = f->tag;
    if (f->type != FileType::unknown) out.file_type = f->type;
  }
  if (!ev.succeeded() || !to) return;
  if (auto target = by_path_.find(*to);
      target != by_path_.end() && target->second != f) {
    auto replaced = target->second;
    unbind(replaced);  // the old target is unlinked by the rename
  }
  if (!f) return;
  if (from) forget_path(*from);
  f->path = *to;
  by_path_[*to] = f;
  for (auto& [k, o] : fds_)
    if (o.file == f) o.path = *to;
}

void FdTable::on_truncate(const SyscallEvent& ev, EnrichmentInfo& out) {
  FilePtr f;
  if (ev.kind == SyscallKind::ftruncate) {
    OpenFd* o = ev.args.fd ? find_fd(ev.pid, *ev.args.fd) : nullptr;
    if (!o) o = adopt_fd(ev);
    if (o) {
      f = o->file;
      out.file_type = o->type;
    }
  } else {
    const auto path = effective_path(ev);
    f = file_for_path(ev, path);
    if (!f && path && ev.succeeded()) {
      f = new_file(ev.hints.dev && ev.hints.ino
                       ? std::optional(std::pair{*ev.hints.dev, *ev.hints.ino})
                       : std::nullopt);
      f->path = *path;
      by_path_[*path] = f;
    }
    out.file_type = classify_file_type(ev.hints.file_type);
  }
  if (!f) return;
  out.tag = f->tag;
  if (out.file_type == FileType::unknown) out.file_type = f->type;
  if (ev.succeeded() && ev.args.length) f->size = *ev.args.length;
}

void FdTable::on_mknod(const SyscallEvent& ev, EnrichmentInfo& out) {
  out.file_type = ev.hints.file_type
                      ? *ev.hints.file_type
                      : file_type_from_mode_bits(ev.args.mode.value_or(0));
  const auto path = effective_path(ev);
  if (!ev.succeeded() || !path) return;
  if (by_path_.contains(*path)) unbind(by_path_[*path]);
  FilePtr f = new_file(ev.hints.dev && ev.hints.ino
                           ? std::optional(std::pair{*ev.hints.dev, *ev.hints.ino})
                           : std::nullopt);
  f->type = out.file_type;
  f->path = *path;
  if (f->type == FileType::regular) f->size = 0;
  by_path_[*path] = f;
}

void FdTable::on_other(const SyscallEvent& ev, EnrichmentInfo& out) {
  if (is_fd_kind(ev.kind)) {
    OpenFd* o = ev.args.fd ? find_fd(ev.pid, *ev.args.fd) : nullptr;
    if (!o) o = adopt_fd(ev);
    if (!o) {
      out.file_type = classify_file_type(ev.hints.file_type);
      return;
    }
    if (ev.hints.file_type) o->type = *ev.hints.file_type;
    out.file_type = o->type;
    if (o->file) out.tag = o->file->tag;
    return;
  }
  // Path-based metadata and xattr calls: no offsets; type and tag when the
  // path names a file we know.
  const auto path = effective_path(ev);
  FilePtr f = file_for_path(ev, path);
  out.file_type = classify_file_type(ev.hints.file_type, path, 0,
                                     ev.succeeded());
  if (f) {
    out.tag = f->tag;
    if (out.file_type == FileType::unknown) out.file_type = f->type;
    if (ev.hints.file_type) f->type = *ev.hints.file_type;
  }
}

}  // namespace iodiag
