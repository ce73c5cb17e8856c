// Copyright 2026 The iodiag Authors
// SPDX-License-Identifier: Apache-2.0

// Live capture for Linux/x86-64 built on ptrace. The tracer thread seizes the
// spawned command, follows forks, vforks and clones, pairs syscall-entry and
// syscall-exit stops and feeds catalog syscalls through the shared capture
// producer. Kernel facts the enrichment stage consumes (inode identity, file
// type, file position) are read from /proc while the tracee is stopped.

#include "iodiag/capture.hpp"
#include "iodiag/error.hpp"

#if defined(__linux__) && defined(__x86_64__)

#include <fcntl.h>
#include <signal.h>
#include <sys/ptrace.h>
#include <sys/stat.h>
#include <sys/syscall.h>
#include <sys/uio.h>
#include <sys/user.h>
#include <sys/wait.h>
#include <time.h>
#include <unistd.h>

#include <atomic>
#include <cerrno>
#include <chrono>
#include <cstring>
#include <fstream>
#include <future>
#include <mutex>
#include <sstream>
#include <thread>
#include <unordered_map>

namespace iodiag {

bool live_capture_supported() { return true; }

namespace {

using K = SyscallKind;

std::optional<SyscallKind> kind_for_syscall(long nr) {
  switch (nr) {
    case SYS_read: return K::read;
    case SYS_pread64: return K::pread64;
    case SYS_readv: return K::readv;
    case SYS_write: return K::write;
    case SYS_pwrite64: return K::pwrite64;
    case SYS_writev: return K::writev;
    case SYS_fsync: return K::fsync;
    case SYS_fdatasync: return K::fdatasync;
    case SYS_readahead: return K::readahead;
    case SYS_creat: return K::creat;
    case SYS_open: return K::open;
    case SYS_openat: return K::openat;
    case SYS_close: return K::close;
    case SYS_lseek: return K::lseek;
    case SYS_truncate: return K::truncate;
    case SYS_ftruncate: return K::ftruncate;
    case SYS_rename: return K::rename;
    case SYS_renameat: return K::renameat;
    case SYS_renameat2: return K::renameat2;
    case SYS_unlink: return K::unlink;
    case SYS_unlinkat: return K::unlinkat;
    case SYS_readlink: return K::readlink;
    case SYS_readlinkat: return K::readlinkat;
    case SYS_stat: return K::stat;
    case SYS_lstat: return K::lstat;
    case SYS_fstat: return K::fstat;
    case SYS_fstatfs: return K::fstatfs;
    case SYS_newfstatat: return K::fstatat;
    case SYS_getxattr: return K::getxattr;
    case SYS_lgetxattr: return K::lgetxattr;
    case SYS_fgetxattr: return K::fgetxattr;
    case SYS_setxattr: return K::setxattr;
    case SYS_lsetxattr: return K::lsetxattr;
    case SYS_fsetxattr: return K::fsetxattr;
    case SYS_listxattr: return K::listxattr;
    case SYS_llistxattr: return K::llistxattr;
    case SYS_flistxattr: return K::flistxattr;
    case SYS_removexattr: return K::removexattr;
    case SYS_lremovexattr: return K::lremovexattr;
    case SYS_fremovexattr: return K::fremovexattr;
    case SYS_mknod: return K::mknod;
    case SYS_mknodat: return K::mknodat;
    default: return std::nullopt;
  }
}

std::int64_t now_ns() {
  timespec ts{};
  clock_gettime(CLOCK_MONOTONIC, &ts);
  return static_cast<std::int64_t>(ts.tv_sec) * 1'000'000'000 + ts.tv_nsec;
}

FileType type_from_mode(mode_t m) {
  switch (m & S_IFMT) {
    case S_IFREG: return FileType::regular;
    case S_IFDIR: return FileType::directory;
    case S_IFSOCK: return FileType::socket;
    case S_IFBLK: return FileType::block_device;
    case S_IFCHR: return FileType::char_device;
    case S_IFIFO: return FileType::pipe;
    case S_IFLNK: return FileType::symlink;
    default: return FileType::other;
  }
}

void stat_into(const std::string& proc_path, bool follow, KernelHints& h) {
  struct stat st {};
  int rc = follow ? ::stat(proc_path.c_str(), &st)
                  : ::lstat(proc_path.c_str(), &st);
  if (rc != 0) return;
  h.dev = static_cast<std::uint64_t>(st.st_dev);
  h.ino = static_cast<std::uint64_t>(st.st_ino);
  h.file_type = type_from_mode(st.st_mode);
}

std::optional<std::int64_t> read_fd_pos(pid_t pid, std::int64_t fd) {
  std::ifstream in("/proc/" + std::to_string(pid) + "/fdinfo/" +
                   std::to_string(fd));
  std::string key;
  std::int64_t value = 0;
  while (in >> key) {
    if (key == "pos:" && in >> value) return value;
    in.ignore(1 << 12, '\n');
  }
  return std::nullopt;
}

std::string read_comm(pid_t pid, pid_t tid) {
  std::ifstream in("/proc/" + std::to_string(pid) + "/task/" +
                   std::to_string(tid) + "/comm");
  std::string comm;
  std::getline(in, comm);
  if (comm.size() > kMaxCommBytes) comm.resize(kMaxCommBytes);
  return comm;
}

std::optional<pid_t> read_tgid(pid_t tid) {
  std::ifstream in("/proc/" + std::to_string(tid) + "/status");
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("Tgid:", 0) == 0) return std::stoi(line.substr(5));
  }
  return std::nullopt;
}

bool read_memory(pid_t tid, std::uint64_t addr, void* buf, std::size_t n) {
  iovec local{buf, n};
  iovec remote{reinterpret_cast<void*>(addr), n};
  return process_vm_readv(tid, &local, 1, &remote, 1, 0) ==
         static_cast<ssize_t>(n);
}

std::optional<std::string> read_string(pid_t tid, std::uint64_t addr) {
  if (addr == 0) return std::nullopt;
  std::string out;
  char chunk[256];
  for (int i = 0; i < 64; ++i) {  // 16 KiB cap, above PATH_MAX
    // Read up to the page boundary so a short string near an unmapped page
    // still succeeds.
    std::size_t to_page = 4096 - ((addr + out.size()) % 4096);
    std::size_t n = std::min(sizeof chunk, to_page);
    if (!read_memory(tid, addr + out.size(), chunk, n)) break;
    if (auto* nul = static_cast<char*>(std::memchr(chunk, 0, n))) {
      out.append(chunk, nul);
      return out;
    }
    out.append(chunk, n);
  }
  return out.empty() ? std::nullopt : std::optional<std::string>(out);
}

std::int64_t iov_total(pid_t tid, std::uint64_t iov_addr, std::int64_t count) {
  if (count <= 0 || count > 1024) return 0;
  std::vector<iovec> iov(static_cast<std::size_t>(count));
  if (!read_memory(tid, iov_addr, iov.data(), iov.size() * sizeof(iovec)))
    return 0;
  std::int64_t total = 0;
  for (const auto& v : iov) total += static_cast<std::int64_t>(v.iov_len);
  return total;
}

std::string resolve_in(pid_t pid, std::optional<std::int64_t> dirfd,
                       const std::string& path) {
  if (path.starts_with('/')) return path;
  const std::string base = "/proc/" + std::to_string(pid);
  if (dirfd && *dirfd != kAtFdCwd)
    return base + "/fd/" + std::to_string(*dirfd) + "/" + path;
  return base + "/cwd/" + path;
}

std::optional<std::string> opt_path(pid_t tid, std::uint64_t reg) {
  auto s = read_string(tid, reg);
  return s ? s : std::optional<std::string>(std::string());
}

SyscallArgs decode_args(SyscallKind kind, pid_t tid,
                        const user_regs_struct& r) {
  SyscallArgs a;
  auto i32 = [](unsigned long long v) {
    return static_cast<std::int64_t>(static_cast<int>(v));
  };
  auto s64 = [](unsigned long long v) { return static_cast<std::int64_t>(v); };
  switch (kind) {
    case K::read: case K::write:
      a.fd = i32(r.rdi); a.count = s64(r.rdx); break;
    case K::pread64: case K::pwrite64:
      a.fd = i32(r.rdi); a.count = s64(r.rdx); a.offset = s64(r.r10); break;
    case K::readv: case K::writev:
      a.fd = i32(r.rdi); a.count = iov_total(tid, r.rsi, s64(r.rdx)); break;
    case K::fsync: case K::fdatasync: case K::close: case K::fstat:
    case K::fstatfs:
      a.fd = i32(r.rdi); break;
    case K::readahead:
      a.fd = i32(r.rdi); a.offset = s64(r.rsi); a.count = s64(r.rdx); break;
    case K::creat:
      a.path = opt_path(tid, r.rdi); a.mode = s64(r.rsi); break;
    case K::open:
      a.path = opt_path(tid, r.rdi); a.flags = s64(r.rsi);
      a.mode = s64(r.rdx); break;
    case K::openat:
      a.dirfd = i32(r.rdi); a.path = opt_path(tid, r.rsi);
      a.flags = s64(r.rdx); a.mode = s64(r.r10); break;
    case K::lseek:
      a.fd = i32(r.rdi); a.offset = s64(r.rsi); a.whence = s64(r.rdx); break;
    case K::truncate:
      a.path = opt_path(tid, r.rdi); a.length = s64(r.rsi); break;
    case K::ftruncate:
      a.fd = i32(r.rdi); a.length = s64(r.rsi); break;
    case K::rename:
      a.path = opt_path(tid, r.rdi); a.newpath = opt_path(tid, r.rsi); break;
    case K::renameat: case K::renameat2:
      a.dirfd = i32(r.rdi); a.path = opt_path(tid, r.rsi);
      a.newdirfd = i32(r.rdx); a.newpath = opt_path(tid, r.r10);
      if (kind == K::renameat2) a.flags = s64(r.r8);
      break;
    case K::unlink: case K::stat: case K::lstat:
      a.path = opt_path(tid, r.rdi); break;
    case K::unlinkat:
      a.dirfd = i32(r.rdi); a.path = opt_path(tid, r.rsi);
      a.flags = s64(r.rdx); break;
    case K::readlink:
      a.path = opt_path(tid, r.rdi); a.count = s64(r.rdx); break;
    case K::readlinkat:
      a.dirfd = i32(r.rdi); a.path = opt_path(tid, r.rsi);
      a.count = s64(r.r10); break;
    case K::fstatat:
      a.dirfd = i32(r.rdi); a.path = opt_path(tid, r.rsi);
      a.flags = s64(r.r10); break;
    case K::getxattr: case K::lgetxattr:
      a.path = opt_path(tid, r.rdi); a.name = opt_path(tid, r.rsi);
      a.count = s64(r.r10); break;
    case K::fgetxattr:
      a.fd = i32(r.rdi); a.name = opt_path(tid, r.rsi); a.count = s64(r.r10);
      break;
    case K::setxattr: case K::lsetxattr:
      a.path = opt_path(tid, r.rdi); a.name = opt_path(tid, r.rsi);
      a.count = s64(r.r10); a.flags = s64(r.r8); break;
    case K::fsetxattr:
      a.fd = i32(r.rdi); a.name = opt_path(tid, r.rsi); a.count = s64(r.r10);
      a.flags = s64(r.r8); break;
    case K::listxattr: case K::llistxattr:
      a.path = opt_path(tid, r.rdi); a.count = s64(r.rdx); break;
    case K::flistxattr:
      a.fd = i32(r.rdi); a.count = s64(r.rdx); break;
    case K::removexattr: case K::lremovexattr:
      a.path = opt_path(tid, r.rdi); a.name = opt_path(tid, r.rsi); break;
    case K::fremovexattr:
      a.fd = i32(r.rdi); a.name = opt_path(tid, r.rsi); break;
    case K::mknod:
      a.path = opt_path(tid, r.rdi); a.mode = s64(r.rsi); a.dev = s64(r.rdx);
      break;
    case K::mknodat:
      a.dirfd = i32(r.rdi); a.path = opt_path(tid, r.rsi);
      a.mode = s64(r.rdx); a.dev = s64(r.r10); break;
  }
  return a;
}

// Kernel facts visible at syscall entry: the fd's inode, type and position,
// or the inode a path argument names before the call changes it.
void entry_hints(SyscallKind kind, pid_t pid, const SyscallArgs& a,
                 KernelHints& h) {
  const std::string proc = "/proc/" + std::to_string(pid);
  if (a.fd && *a.fd >= 0) {
    stat_into(proc + "/fd/" + std::to_string(*a.fd), true, h);
    if ((info(kind).category == SyscallCategory::data &&
         !is_positional_kind(kind)) ||
        kind == K::lseek)
      h.pos = read_fd_pos(pid, *a.fd);
    return;
  }
  if (a.path && !is_open_kind(kind) && kind != K::mknod &&
      kind != K::mknodat) {
    const bool follow = kind == K::stat || kind == K::getxattr ||
                        kind == K::setxattr || kind == K::listxattr ||
                        kind == K::removexattr || kind == K::truncate;
    stat_into(resolve_in(pid, a.dirfd, *a.path), follow, h);
  }
}

class LiveCapture final : public CaptureHandle {
 public:
  LiveCapture(const LiveTarget& target, const FilterSpec& filter,
              const std::string& session, RingConfig ring)
      : ring_(ring), producer_(ring_, filter, session) {
    if (target.command.empty()) throw SpawnFailed("empty command line");
    std::promise<void> started;
    auto ready = started.get_future();
    tracer_ = std::thread([this, cmd = target.command,
                           p = std::move(started)]() mutable {
      run(cmd, p);
    });
    try {
      ready.get();
    } catch (...) {
      tracer_.join();
      throw;
    }
  }

  ~LiveCapture() override {
    stop();
    if (tracer_.joinable()) tracer_.join();
    if (root_ > 0 && !root_reaped_) {
      // Detached after an explicit stop: reap whenever it exits.
      std::thread([pid = root_] { waitpid(pid, nullptr, 0); }).detach();
    }
  }

  std::vector<SyscallEvent> next_batch(std::size_t max) override {
    std::vector<SyscallEvent> out;
    auto backoff = std::chrono::microseconds(50);
    for (;;) {
      const bool finished = finished_.load(std::memory_order_acquire);
      detail::drain_lanes(ring_, max, out);
      if (!out.empty() || finished) {
        // Lanes are independent; restore a single time order per batch.
        std::stable_sort(out.begin(), out.end(),
                         [](const auto& a, const auto& b) {
                           return a.t_entry < b.t_entry;
                         });
        return out;
      }
      std::this_thread::sleep_for(backoff);
      backoff = std::min(backoff * 2, std::chrono::microseconds(5000));
    }
  }

  void stop() override { stop_requested_.store(true); }

  CaptureStats stats() const override {
    CaptureStats s;
    s.observed = producer_.observed();
    s.filtered_out = producer_.filtered_out();
    s.orphan_exits = orphan_exits_.load();
    s.unmatched_entries = unmatched_entries_.load();
    s.enqueued_by_kind = producer_.enqueued_by_kind();
    s.ring = ring_.stats();
    return s;
  }

 private:
  struct Tracee {
    pid_t tgid = 0;
    bool in_syscall = false;
    long nr = -1;
  };

  static std::optional<std::string> find_executable(const std::string& cmd) {
    if (cmd.find('/') != std::string::npos)
      return access(cmd.c_str(), X_OK) == 0 ? std::optional(cmd) : std::nullopt;
    const char* path = std::getenv("PATH");
    std::stringstream dirs(path ? path : "/usr/bin:/bin");
    std::string dir;
    while (std::getline(dirs, dir, ':')) {
      auto candidate = (dir.empty() ? std::string(".") : dir) + "/" + cmd;
      if (access(candidate.c_str(), X_OK) == 0) return candidate;
    }
    return std::nullopt;
  }

  void spawn(const std::vector<std::string>& cmd) {
    auto exe = find_executable(cmd.front());
    if (!exe) throw SpawnFailed("command not found: " + cmd.front());
    std::vector<char*> argv;
    for (const auto& a : cmd) argv.push_back(const_cast<char*>(a.c_str()));
    argv.push_back(nullptr);

    pid_t pid = fork();
    if (pid < 0) throw SpawnFailed(std::string("fork: ") + strerror(errno));
    if (pid == 0) {
      raise(SIGSTOP);
      execv(exe->c_str(), argv.data());
      _exit(127);
    }
    root_ = pid;
    int status = 0;
    if (waitpid(pid, &status, WUNTRACED) != pid || !WIFSTOPPED(status)) {
      root_reaped_ = true;
      throw SpawnFailed("child did not reach its start barrier");
    }
    const long opts = PTRACE_O_TRACESYSGOOD | PTRACE_O_TRACEFORK |
                      PTRACE_O_TRACEVFORK | PTRACE_O_TRACECLONE |
                      PTRACE_O_TRACEEXEC | PTRACE_O_EXITKILL;
    if (ptrace(PTRACE_SEIZE, pid, nullptr, reinterpret_cast<void*>(opts)) !=
        0) {
      const int err = errno;
      kill(pid, SIGKILL);
      waitpid(pid, nullptr, 0);
      root_reaped_ = true;
      throw Unsupported(std::string("ptrace seize failed: ") + strerror(err));
    }
    tracees_[pid] = Tracee{pid};
    kill(pid, SIGCONT);
  }

  void run(const std::vector<std::string>& cmd, std::promise<void>& started) {
    try {
      spawn(cmd);
    } catch (...) {
      started.set_exception(std::current_exception());
      return;
    }
    started.set_value();
    loop();
    std::vector<SyscallEvent> rest;
    pairer_.finish(rest);
    for (auto& ev : rest) emit(std::move(ev));
    unmatched_entries_.store(pairer_.stats().unmatched_entries);
    finished_.store(true, std::memory_order_release);
  }

  void detach(pid_t tid, int sig) {
    ptrace(PTRACE_DETACH, tid, nullptr, reinterpret_cast<void*>(
                                            static_cast<long>(sig)));
    tracees_.erase(tid);
  }

  void loop() {
    bool stopping = false;
    auto backoff = std::chrono::microseconds(10);
    while (!tracees_.empty()) {
      if (!stopping && stop_requested_.load()) {
        stopping = true;
        for (const auto& [tid, t] : tracees_)
          ptrace(PTRACE_INTERRUPT, tid, nullptr, nullptr);
      }
      int status = 0;
      pid_t tid = waitpid(-1, &status, __WALL | WNOHANG);
      if (tid == 0) {
        std::this_thread::sleep_for(backoff);
        backoff = std::min(backoff * 2, std::chrono::microseconds(2000));
        continue;
      }
      backoff = std::chrono::microseconds(10);
      if (tid < 0) {
        if (errno == EINTR) continue;
        break;  // ECHILD: nothing left to trace
      }
      if (WIFEXITED(status) || WIFSIGNALED(status)) {
        tracees_.erase(tid);
        if (tid == root_) root_reaped_ = true;
        continue;
      }
      if (!WIFSTOPPED(status)) continue;
      if (!tracees_.contains(tid)) tracees_[tid] = Tracee{read_tgid(tid).value_or(tid)};

      const int sig = WSTOPSIG(status);
      const int event = status >> 16;
      if (stopping) {
        const bool signal_stop = sig != (SIGTRAP | 0x80) && event == 0;
        detach(tid, signal_stop ? sig : 0);
        continue;
      }
      int inject = 0;
      if (sig == (SIGTRAP | 0x80)) {
        on_syscall_stop(tid);
      } else if (event == PTRACE_EVENT_FORK || event == PTRACE_EVENT_VFORK ||
                 event == PTRACE_EVENT_CLONE) {
        unsigned long child = 0;
        ptrace(PTRACE_GETEVENTMSG, tid, nullptr, &child);
        const auto child_tid = static_cast<pid_t>(child);
        const pid_t parent_tgid = tracees_[tid].tgid;
        pid_t child_tgid = child_tid;
        if (event == PTRACE_EVENT_CLONE)
          child_tgid = read_tgid(child_tid).value_or(child_tid);
        if (!tracees_.contains(child_tid))
          tracees_[child_tid] = Tracee{child_tgid};
        else
          tracees_[child_tid].tgid = child_tgid;
        if (child_tgid != parent_tgid) parent_of_[child_tgid] = parent_tgid;
      } else if (event == PTRACE_EVENT_STOP || event == PTRACE_EVENT_EXEC) {
        // group-stop, interrupt or exec notification: just resume
      } else {
        inject = sig;
      }
      ptrace(PTRACE_SYSCALL, tid, nullptr,
             reinterpret_cast<void*>(static_cast<long>(inject)));
    }
  }

  void on_syscall_stop(pid_t tid) {
    Tracee& t = tracees_[tid];
    user_regs_struct regs{};
    if (ptrace(PTRACE_GETREGS, tid, nullptr, &regs) != 0) return;
    const std::int64_t ts = now_ns();
    if (!t.in_syscall) {
      t.in_syscall = true;
      t.nr = static_cast<long>(regs.orig_rax);
      auto kind = kind_for_syscall(t.nr);
      if (!kind) return;
      RawHalfEvent h;
      h.direction = Direction::entry;
      h.pid = t.tgid;
      h.tid = tid;
      h.comm = read_comm(t.tgid, tid);
      h.kind = *kind;
      h.timestamp = ts;
      h.args = decode_args(*kind, tid, regs);
      entry_hints(*kind, t.tgid, h.args, h.hints);
      if (auto it = parent_of_.find(t.tgid); it != parent_of_.end()) {
        h.hints.ppid = it->second;
        parent_of_.erase(it);
      }
      feed(std::move(h));
      return;
    }
    t.in_syscall = false;
    auto kind = kind_for_syscall(t.nr);
    if (!kind) return;
    RawHalfEvent h;
    h.direction = Direction::exit;
    h.pid = t.tgid;
    h.tid = tid;
    h.comm = read_comm(t.tgid, tid);
    h.kind = *kind;
    h.timestamp = ts;
    h.retval = static_cast<std::int64_t>(regs.rax);
    if (is_open_kind(*kind) && *h.retval >= 0)
      stat_into("/proc/" + std::to_string(t.tgid) + "/fd/" +
                    std::to_string(*h.retval),
                true, h.hints);
    feed(std::move(h));
  }

  void feed(RawHalfEvent h) {
    std::vector<SyscallEvent> out;
    pairer_.push(std::move(h), out);
    orphan_exits_.store(pairer_.stats().orphan_exits);
    unmatched_entries_.store(pairer_.stats().unmatched_entries);
    for (auto& ev : out) emit(std::move(ev));
  }

  void emit(SyscallEvent ev) {
    const auto lane = static_cast<std::size_t>(ev.tid) % ring_.lanes();
    producer_.offer(std::move(ev), lane);
  }

  RingBuffer ring_;
  detail::CaptureProducer producer_;
  HalfEventPairer pairer_;  // tracer thread only
  std::unordered_map<pid_t, Tracee> tracees_;
  std::unordered_map<pid_t, pid_t> parent_of_;
  std::thread tracer_;
  pid_t root_ = -1;
  bool root_reaped_ = false;
  std::atomic<bool> stop_requested_{false};
  std::atomic<bool> finished_{false};
  std::atomic<std::uint64_t> orphan_exits_{0};
  std::atomic<std::uint64_t> unmatched_entries_{0};
};

}  // namespace

namespace detail {

std::unique_ptr<CaptureHandle> make_live_capture(const LiveTarget& target,
                                                 const FilterSpec& filter,
                                                 const std::string& session,
                                                 RingConfig ring) {
  return std::make_unique<LiveCapture>(target, filter, session, ring);
}

}  // namespace detail

}  // namespace iodiag

#else  // no live backend on this platform

namespace iodiag {

bool live_capture_supported() { return false; }

namespace detail {

std::unique_ptr<CaptureHandle> make_live_capture(const LiveTarget&,
                                                 const FilterSpec&,
                                                 const std::string&,
                                                 RingConfig) {
  throw Unsupported("live capture is only available on Linux x86-64");
}

}  // namespace detail

}  // namespace iodiag

#endif
