// Copyright 2026 The iodiag Authors
// SPDX-License-Identifier: Apache-2.0

#include "iodiag/cli.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>

#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdlib>
#include <fstream>
#include <thread>

#include "iodiag/api.hpp"
#include "iodiag/capture.hpp"
#include "iodiag/config.hpp"
#include "iodiag/correlate.hpp"
#include "iodiag/error.hpp"
#include "iodiag/pipeline.hpp"
#include "iodiag/record.hpp"

namespace iodiag {

namespace {

std::atomic<bool> g_interrupted{false};

extern "C" void on_signal(int) { g_interrupted.store(true); }

class SignalScope {
 public:
  SignalScope() {
    g_interrupted.store(false);
    prev_int_ = std::signal(SIGINT, on_signal);
    prev_term_ = std::signal(SIGTERM, on_signal);
  }
  ~SignalScope() {
    std::signal(SIGINT, prev_int_);
    std::signal(SIGTERM, prev_term_);
  }

 private:
  void (*prev_int_)(int);
  void (*prev_term_)(int);
};

// Flag values as parsed; anything unset falls back to the config file and
// then the built-in default.
struct Flags {
  std::string config;
  std::string session;
  std::string syscalls, pids, tids;
  std::vector<std::string> paths;
  std::string format;
  int port = -1;
  bool no_resolve = false;
  std::string bucket;
  long long k_threshold = -1;
  double dip_threshold = -1;
  std::string background, foreground;

  // query / aggregate / export
  std::vector<std::string> where;
  std::size_t limit = 0;
  std::string sort;
  std::string group_by;
  std::string metric = "count";
  std::size_t top_n = 0;
  std::string output;
  std::string input;
  std::string detector;
  std::vector<std::string> command;
};

Config resolve_config(const Flags& f) {
  Config c;
  if (!f.config.empty()) c = load_config(f.config, c);
  if (const char* env = std::getenv(kStoreEnv); env && *env) c.store_dir = env;
  if (!f.session.empty()) c.session = f.session;
  if (!f.syscalls.empty()) c.filter.kinds = parse_kind_list(f.syscalls);
  if (!f.pids.empty()) c.filter.pids = parse_int_list(f.pids);
  if (!f.tids.empty()) c.filter.tids = parse_int_list(f.tids);
  if (!f.paths.empty())
    c.filter.path_prefixes = std::set<std::string>(f.paths.begin(), f.paths.end());
  if (f.port >= 0) c.port = f.port;
  if (!f.bucket.empty()) {
    auto d = parse_duration_ns(f.bucket);
    if (!d || *d <= 0) throw ConfigError("--bucket: bad duration '" + f.bucket + "'");
    c.bucket_ns = *d;
  }
  if (f.k_threshold >= 0) {
    if (f.k_threshold < 1) throw ConfigError("--k-threshold must be at least 1");
    c.k_threshold = f.k_threshold;
  }
  if (f.dip_threshold >= 0) {
    if (f.dip_threshold > 1) throw ConfigError("--dip-threshold must be in [0, 1]");
    c.dip_threshold = f.dip_threshold;
  }
  if (!f.background.empty()) c.background = f.background;
  if (!f.foreground.empty()) c.foreground = f.foreground;
  if (!f.command.empty()) c.command = f.command;
  return c;
}

std::string require_session(const Config& c) {
  if (c.session.empty()) throw ConfigError("no session given (use --session)");
  return c.session;
}

std::unique_ptr<Store> open_store(const Config& c) {
  StoreOptions o;
  o.max_events = c.max_events;
  return std::make_unique<Store>(c.store_dir, o);
}

std::string pct(double f) { return fmt::format("{:.2f}%", f * 100.0); }

std::string resolution_line(const ResolutionReport& r) {
  return fmt::format("resolved {} events, {} unresolved ({} unresolved)",
                     r.resolved, r.unresolved, pct(r.fraction_unresolved));
}

// Query predicates from the filter flags and --where field=value pairs.
std::vector<FieldMatch> match_from_flags(const Flags& f) {
  std::vector<FieldMatch> m;
  using nlohmann::json;
  if (!f.syscalls.empty()) {
    std::vector<json> v;
    for (auto k : parse_kind_list(f.syscalls)) v.emplace_back(std::string(to_string(k)));
    m.push_back({"kind", Predicate::one_of(v)});
  }
  if (!f.pids.empty()) {
    std::vector<json> v;
    for (auto p : parse_int_list(f.pids)) v.emplace_back(p);
    m.push_back({"pid", Predicate::one_of(v)});
  }
  if (!f.tids.empty()) {
    std::vector<json> v;
    for (auto t : parse_int_list(f.tids)) v.emplace_back(t);
    m.push_back({"tid", Predicate::one_of(v)});
  }
  for (const auto& p : f.paths) m.push_back({"path", Predicate::starts_with(p)});
  for (const auto& w : f.where) {
    const auto eq = w.find('=');
    if (eq == std::string::npos || eq == 0)
      throw ConfigError("--where expects field=value, got '" + w + "'");
    const std::string field = w.substr(0, eq), value = w.substr(eq + 1);
    json v = json::parse(value, nullptr, false);
    if (v.is_discarded() || v.is_object() || v.is_array()) v = value;
    m.push_back({field, Predicate::eq(v)});
  }
  return m;
}

FilterSpec capture_filter(const Config& c) { return c.filter; }

std::string cell(const std::optional<std::int64_t>& v) {
  return v ? std::to_string(*v) : "-";
}

void print_rows(std::ostream& out, const std::vector<std::string>& header,
                const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> w(header.size());
  for (std::size_t i = 0; i < header.size(); ++i) w[i] = header[i].size();
  for (const auto& r : rows)
    for (std::size_t i = 0; i < r.size() && i < w.size(); ++i)
      w[i] = std::max(w[i], r[i].size());
  auto line = [&](const std::vector<std::string>& r) {
    std::string s;
    for (std::size_t i = 0; i < r.size(); ++i) {
      if (i) s += "  ";
      s += fmt::format("{:<{}}", r[i], i + 1 == r.size() ? 0 : w[i]);
    }
    out << s << '\n';
  };
  line(header);
  for (const auto& r : rows) line(r);
}

std::string format_time(std::int64_t ns) {
  const bool neg = ns < 0;
  const std::uint64_t a = neg ? 0 - static_cast<std::uint64_t>(ns) : ns;
  return fmt::format("{}{}.{:09}", neg ? "-" : "", a / 1'000'000'000,
                     a % 1'000'000'000);
}

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string scalar_text(const nlohmann::json& v) {
  if (v.is_null()) return "-";
  if (v.is_string()) return v.get<std::string>();
  return v.dump();
}

std::vector<std::string> event_cells(const StoredEvent& s) {
  const auto& e = s.event;
  std::string target = "-";
  if (e.enrichment && e.enrichment->resolved_path) {
    target = *e.enrichment->resolved_path;
  } else if (e.args.path) {
    target = *e.args.path;
  } else if (e.args.fd) {
    target = "fd " + std::to_string(*e.args.fd);
  }
  if (e.args.newpath) target += " -> " + *e.args.newpath;
  std::optional<std::int64_t> offset;
  if (e.enrichment) offset = e.enrichment->offset_before;
  std::string bytes = "-";
  const auto cat = info(e.kind).category;
  if (cat == SyscallCategory::data && e.kind != SyscallKind::fsync &&
      e.kind != SyscallKind::fdatasync && e.kind != SyscallKind::readahead &&
      e.succeeded())
    bytes = std::to_string(*e.retval);
  return {format_time(e.t_entry),
          e.comm,
          fmt::format("{}/{}", e.pid, e.tid),
          std::string(to_string(e.kind)),
          target,
          cell(offset),
          bytes,
          e.retval ? std::to_string(*e.retval) : "?"};
}

const std::vector<std::string> kEventHeader = {
    "time", "comm", "pid/tid", "kind", "path-or-fd", "offset", "bytes", "retval"};

// ------------------------------------------------------------------ commands

int ingest_or_record(const Flags& f, bool live, std::ostream& out, std::ostream& err) {
  Config c = resolve_config(f);
  std::unique_ptr<std::istream> owned;
  std::istream* in = nullptr;
  if (!live) {
    if (f.input == "-") {
      in = &std::cin;
    } else {
      owned = std::make_unique<std::ifstream>(f.input);
      if (!*owned) throw ConfigError("cannot read trace file " + f.input);
      in = owned.get();
    }
    if (c.session.empty()) {
      std::string stem = std::filesystem::path(f.input).stem().string();
      for (auto& ch : stem)
        if (!std::isalnum(static_cast<unsigned char>(ch)) && ch != '-' && ch != '_') ch = '_';
      c.session = stem.empty() || stem == "_" ? "ingest" : stem;
    }
  } else {
    if (c.command.empty())
      throw ConfigError("record needs a command (after -- or record.command)");
    if (!live_capture_supported())
      throw Unsupported("live capture is not supported on this platform");
    if (c.session.empty())
      c.session = fmt::format("record-{}", std::chrono::duration_cast<std::chrono::seconds>(
                                               std::chrono::system_clock::now().time_since_epoch())
                                               .count());
  }

  auto store = open_store(c);
  store->create_session(c.session, c.filter);

  CaptureSource src;
  src.filter = capture_filter(c);
  src.session = c.session;
  src.ring = c.ring;
  if (live) {
    src.mode = LiveTarget{c.command};
  } else {
    src.mode = ReplayInput{in};
  }

  PipelineOptions po;
  po.batch_size = c.batch_size;
  po.resolve = !f.no_resolve;
  std::unique_ptr<SignalScope> signals;
  if (live) signals = std::make_unique<SignalScope>();
  auto handle = open_capture(src);
  PipelineResult r = run_pipeline(*handle, *store, c.session, po,
                                  live ? &g_interrupted : nullptr);
  (void)err;
  print_summary(out, session_summary(*store, c.session));
  if (r.resolution) out << resolution_line(*r.resolution) << '\n';
  return kExitOk;
}

int cmd_resolve(const Flags& f, std::ostream& out) {
  Config c = resolve_config(f);
  auto store = open_store(c);
  auto r = resolve_paths(*store, require_session(c));
  out << resolution_line(r) << '\n';
  for (const auto& conflict : resolution_conflicts(*store, c.session)) {
    std::string paths;
    for (const auto& p : conflict.paths) paths += (paths.empty() ? "" : ", ") + p;
    out << fmt::format("conflict: tag {} opened as {}; using {}\n",
                       to_string(conflict.tag), paths, conflict.chosen);
  }
  return kExitOk;
}

int cmd_query(const Flags& f, std::ostream& out) {
  Config c = resolve_config(f);
  auto store = open_store(c);
  QuerySpec q;
  q.session = require_session(c);
  q.match = match_from_flags(f);
  if (!f.sort.empty()) {
    auto colon = f.sort.find(':');
    q.sort.field = f.sort.substr(0, colon);
    if (colon != std::string::npos) {
      const auto dir = f.sort.substr(colon + 1);
      if (dir != "asc" && dir != "desc") throw ConfigError("--sort direction must be asc or desc");
      q.sort.descending = dir == "desc";
    }
  }
  if (f.limit) q.limit = f.limit;
  auto r = store->query(q);
  const std::string fmt_name = f.format.empty() ? "table" : f.format;
  if (fmt_name == "table") {
    std::vector<std::vector<std::string>> rows;
    for (const auto& ev : r.events) rows.push_back(event_cells(ev));
    print_rows(out, kEventHeader, rows);
  } else if (fmt_name == "json") {
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const auto& ev : r.events) arr.push_back(to_json(ev));
    out << arr.dump(2) << '\n';
  } else if (fmt_name == "jsonl") {
    for (const auto& ev : r.events) out << to_line(ev.event) << '\n';
  } else {
    throw ConfigError("unknown --format '" + fmt_name + "' (table, json, jsonl)");
  }
  return kExitOk;
}

Metric parse_metric(const std::string& m) {
  Metric out;
  if (m == "count") return out;
  const auto colon = m.find(':');
  if (colon == std::string::npos)
    throw ConfigError("--metric must be count, sum:FIELD or pNN:FIELD");
  const std::string head = m.substr(0, colon);
  out.field = m.substr(colon + 1);
  if (head == "sum") {
    out.kind = Metric::Kind::sum;
  } else if (head.size() > 1 && head[0] == 'p') {
    out.kind = Metric::Kind::percentile;
    try {
      std::size_t used = 0;
      out.p = std::stod(head.substr(1), &used);
      if (used != head.size() - 1) throw 0;
    } catch (...) {
      throw ConfigError("bad percentile in --metric '" + m + "'");
    }
  } else {
    throw ConfigError("--metric must be count, sum:FIELD or pNN:FIELD");
  }
  return out;
}

int cmd_aggregate(const Flags& f, std::ostream& out) {
  Config c = resolve_config(f);
  auto store = open_store(c);
  AggSpec a;
  a.session = require_session(c);
  std::size_t start = 0;
  while (start < f.group_by.size()) {
    auto comma = f.group_by.find(',', start);
    if (comma == std::string::npos) comma = f.group_by.size();
    if (comma > start) a.group_by.push_back(f.group_by.substr(start, comma - start));
    start = comma + 1;
  }
  if (!f.bucket.empty()) a.bucket_ns = c.bucket_ns;
  a.metric = parse_metric(f.metric);
  if (f.top_n) a.top_n = f.top_n;
  a.match = match_from_flags(f);
  auto rows = store->aggregate(a);
  const std::string fmt_name = f.format.empty() ? "table" : f.format;
  if (fmt_name == "json") {
    out << rows_to_json(rows).dump(2) << '\n';
    return kExitOk;
  }
  std::vector<std::string> header = a.group_by;
  header.push_back("bucket");
  header.push_back("value");
  std::vector<std::vector<std::string>> cells;
  for (const auto& r : rows) {
    std::vector<std::string> line;
    for (const auto& g : r.group) line.push_back(scalar_text(g));
    line.push_back(r.bucket ? std::to_string(*r.bucket) : "-");
    line.push_back(std::to_string(r.value));
    cells.push_back(std::move(line));
  }
  if (fmt_name == "csv") {
    auto emit = [&](const std::vector<std::string>& r) {
      for (std::size_t i = 0; i < r.size(); ++i)
        out << (i ? "," : "") << csv_escape(r[i] == "-" ? "" : r[i]);
      out << '\n';
    };
    emit(header);
    for (const auto& r : cells) emit(r);
  } else if (fmt_name == "table") {
    print_rows(out, header, cells);
  } else {
    throw ConfigError("unknown --format '" + fmt_name + "' (table, csv, json)");
  }
  return kExitOk;
}

int cmd_report(const Flags& f, std::ostream& out) {
  Config c = resolve_config(f);
  auto store = open_store(c);
  const std::string session = require_session(c);
  const bool json_out = f.format == "json";
  if (!f.format.empty() && f.format != "json" && f.format != "table")
    throw ConfigError("unknown --format '" + f.format + "' (table, json)");

  if (f.detector == "stale-offset") {
    auto r = detect_stale_offset_reads(*store, session);
    if (json_out) {
      out << to_json(r).dump(2) << '\n';
    } else if (r.findings.empty()) {
      out << "no findings\n";
    } else {
      std::vector<std::vector<std::string>> rows;
      for (const auto& x : r.findings)
        rows.push_back({x.path, to_string(x.old_tag), to_string(x.new_tag),
                        std::to_string(x.reader_pid), std::to_string(x.erroneous_offset),
                        std::to_string(x.bytes_written_to_new),
                        std::to_string(x.evidence.size())});
      print_rows(out, {"path", "old tag", "new tag", "reader", "read offset",
                       "bytes written", "evidence"},
                 rows);
    }
    if (r.warning && !json_out) out << "warning: " << *r.warning << '\n';
    return r.findings.empty() ? kExitOk : kExitFindings;
  }
  if (f.detector == "contention") {
    ContentionParams p;
    p.bucket_ns = c.bucket_ns;
    p.k_threshold = static_cast<std::size_t>(c.k_threshold);
    p.dip_threshold = c.dip_threshold;
    p.background = c.background;
    p.foreground = c.foreground;
    auto intervals = contention_report(*store, session, p);
    if (json_out) {
      nlohmann::ordered_json arr = nlohmann::ordered_json::array();
      for (const auto& i : intervals) arr.push_back(to_json(i));
      nlohmann::ordered_json j;
      j["findings"] = arr;
      out << j.dump(2) << '\n';
    } else if (intervals.empty()) {
      out << "no findings\n";
    } else {
      std::vector<std::vector<std::string>> rows;
      for (const auto& i : intervals)
        rows.push_back({format_time(i.t_start), format_time(i.t_end),
                        std::to_string(i.active_background_threads),
                        fmt::format("{:.1f}", i.foreground_rate),
                        fmt::format("{:.1f}", i.baseline_foreground_rate),
                        fmt::format("{:.2f}", i.dip_fraction)});
      print_rows(out, {"start", "end", "background threads", "foreground/bucket",
                       "baseline", "dip"},
                 rows);
      out << "note: client latency is not in the trace; correlate externally\n";
    }
    return intervals.empty() ? kExitOk : kExitFindings;
  }
  throw ConfigError("unknown detector '" + f.detector + "' (stale-offset, contention)");
}

int cmd_export(const Flags& f, std::ostream& out) {
  Config c = resolve_config(f);
  auto store = open_store(c);
  const std::string session = require_session(c);
  std::unique_ptr<std::ofstream> file;
  std::ostream* o = &out;
  if (!f.output.empty() && f.output != "-") {
    file = std::make_unique<std::ofstream>(f.output);
    if (!*file) throw ConfigError("cannot write " + f.output);
    o = file.get();
  }
  QuerySpec q;
  q.session = session;
  q.match = match_from_flags(f);
  auto r = store->query(q);
  const std::string fmt_name = f.format.empty() ? "jsonl" : f.format;
  if (fmt_name == "jsonl") {
    for (const auto& ev : r.events) *o << to_line(ev.event) << '\n';
  } else if (fmt_name == "csv") {
    *o << "id,time,comm,pid,tid,kind,path_or_fd,offset,bytes,retval\n";
    for (const auto& ev : r.events) {
      auto cells = event_cells(ev);
      *o << ev.id << ',' << csv_escape(cells[0]) << ',' << csv_escape(cells[1]) << ','
         << ev.event.pid << ',' << ev.event.tid;
      for (std::size_t i = 3; i < cells.size(); ++i)
        *o << ',' << csv_escape(cells[i] == "-" ? "" : cells[i]);
      *o << '\n';
    }
  } else {
    throw ConfigError("unknown --format '" + fmt_name + "' (jsonl, csv)");
  }
  return kExitOk;
}

int cmd_summary(const Flags& f, std::ostream& out) {
  Config c = resolve_config(f);
  auto store = open_store(c);
  auto s = session_summary(*store, require_session(c));
  if (f.format == "json") {
    out << to_json(s).dump(2) << '\n';
  } else {
    print_summary(out, s);
  }
  return kExitOk;
}

int cmd_sessions(const Flags& f, std::ostream& out) {
  Config c = resolve_config(f);
  auto store = open_store(c);
  if (f.format == "json") {
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const auto& s : store->sessions()) arr.push_back(session_to_json(s));
    out << arr.dump(2) << '\n';
    return kExitOk;
  }
  std::vector<std::vector<std::string>> rows;
  for (const auto& s : store->sessions())
    rows.push_back({s.name, std::to_string(s.stats.stored), std::to_string(s.stats.produced),
                    std::to_string(s.stats.dropped), std::to_string(s.stats.unresolved)});
  print_rows(out, {"session", "stored", "produced", "dropped", "unresolved"}, rows);
  return kExitOk;
}

int cmd_serve(const Flags& f, std::ostream& out) {
  Config c = resolve_config(f);
  auto store = open_store(c);
  ApiOptions o;
  o.host = c.host;
  o.port = c.port;
  o.refresh_ms = c.refresh_ms;
  o.static_dir = c.static_dir;
  ApiServer server(*store, o);
  SignalScope signals;
  const int port = server.start();
  out << fmt::format("serving {} on http://{}:{}\n", c.store_dir, c.host, port)
      << std::flush;
  while (!g_interrupted.load())
    std::this_thread::sleep_for(std::chrono::milliseconds(100));
  server.stop();
  return kExitOk;
}

void add_filter_flags(CLI::App* app, Flags& f) {
  app->add_option("--syscalls", f.syscalls, "Comma-separated syscall kinds");
  app->add_option("--pids", f.pids, "Comma-separated process ids");
  app->add_option("--tids", f.tids, "Comma-separated thread ids");
  app->add_option("--paths", f.paths, "Path prefix (repeatable)");
}

void add_common(CLI::App* app, Flags& f) {
  app->add_option("--config", f.config, "Config file");
  app->add_option("--session", f.session, "Session name");
}

}  // namespace

void print_event_table(std::ostream& out, const std::vector<StoredEvent>& events) {
  std::vector<std::vector<std::string>> rows;
  for (const auto& ev : events) rows.push_back(event_cells(ev));
  print_rows(out, kEventHeader, rows);
}

void print_summary(std::ostream& out, const SessionSummary& s) {
  out << fmt::format("session {}: {} events stored (produced {}, dropped {}, {})\n",
                     s.session, s.events, s.produced, s.dropped, pct(s.drop_fraction));
  out << fmt::format("unresolved {} ({}), inconsistencies {}, orphan exits {}, filtered {}\n",
                     s.unresolved, pct(s.fraction_unresolved), s.inconsistencies,
                     s.orphan_exits, s.filtered_out);
  auto join = [](const std::map<std::string, std::uint64_t>& m) {
    std::string line;
    for (const auto& [k, v] : m) line += fmt::format("{}{}={}", line.empty() ? "" : " ", k, v);
    return line.empty() ? std::string("none") : line;
  };
  out << "kinds: " << join(s.per_kind) << '\n';
  out << "file types: " << join(s.per_file_type) << '\n';
  out << "threads:\n";
  for (const auto& t : s.per_thread)
    out << fmt::format("  {} {} (pid {}): {}\n", t.tid, t.comm, t.pid, t.count);
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"iodiag: syscall-level I/O tracing and diagnosis"};
  app.require_subcommand(1);
  Flags f;

  auto* record = app.add_subcommand("record", "Trace a command and store its I/O syscalls");
  add_common(record, f);
  add_filter_flags(record, f);
  record->add_flag("--no-resolve", f.no_resolve, "Skip path correlation");
  record->add_option("command", f.command, "Command to run (after --)");

  auto* ingest = app.add_subcommand("ingest", "Load a recorded JSONL trace");
  add_common(ingest, f);
  add_filter_flags(ingest, f);
  ingest->add_flag("--no-resolve", f.no_resolve, "Skip path correlation");
  ingest->add_option("file", f.input, "Trace file, or - for stdin")->required();

  auto* resolve = app.add_subcommand("resolve", "Translate file tags to paths");
  add_common(resolve, f);

  auto* query = app.add_subcommand("query", "Print matching events");
  add_common(query, f);
  add_filter_flags(query, f);
  query->add_option("--where", f.where, "field=value equality (repeatable)");
  query->add_option("--sort", f.sort, "Sort field, optionally :desc");
  query->add_option("--limit", f.limit, "Maximum events");
  query->add_option("--format", f.format, "table, json or jsonl");

  auto* aggregate = app.add_subcommand("aggregate", "Group and count events");
  add_common(aggregate, f);
  add_filter_flags(aggregate, f);
  aggregate->add_option("--where", f.where, "field=value equality (repeatable)");
  aggregate->add_option("--group-by", f.group_by, "Comma-separated fields");
  aggregate->add_option("--bucket", f.bucket, "Time bucket width, e.g. 1s");
  aggregate->add_option("--metric", f.metric, "count, sum:FIELD or pNN:FIELD");
  aggregate->add_option("--top-n", f.top_n, "Keep the N busiest groups");
  aggregate->add_option("--format", f.format, "table, csv or json");

  auto* report = app.add_subcommand("report", "Run a detector");
  add_common(report, f);
  report->add_option("detector", f.detector, "stale-offset or contention")->required();
  report->add_option("--bucket", f.bucket, "Bucket width (contention)");
  report->add_option("--k-threshold", f.k_threshold, "Background threads needed");
  report->add_option("--dip-threshold", f.dip_threshold, "Foreground dip fraction");
  report->add_option("--background", f.background, "Background thread-name glob");
  report->add_option("--foreground", f.foreground, "Foreground thread-name glob");
  report->add_option("--format", f.format, "table or json");

  auto* exp = app.add_subcommand("export", "Write a session as JSONL or CSV");
  add_common(exp, f);
  add_filter_flags(exp, f);
  exp->add_option("--format", f.format, "jsonl or csv");
  exp->add_option("--output,-o", f.output, "Output file (default stdout)");

  auto* summary = app.add_subcommand("summary", "Summarize a session");
  add_common(summary, f);
  summary->add_option("--format", f.format, "text or json");

  auto* sessions = app.add_subcommand("sessions", "List sessions");
  add_common(sessions, f);
  sessions->add_option("--format", f.format, "table or json");

  auto* serve = app.add_subcommand("serve", "Start the HTTP API");
  add_common(serve, f);
  serve->add_option("--port", f.port, "Listen port");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitUsage;
  }

  try {
    if (*record) return ingest_or_record(f, true, out, err);
    if (*ingest) return ingest_or_record(f, false, out, err);
    if (*resolve) return cmd_resolve(f, out);
    if (*query) return cmd_query(f, out);
    if (*aggregate) return cmd_aggregate(f, out);
    if (*report) return cmd_report(f, out);
    if (*exp) return cmd_export(f, out);
    if (*summary) return cmd_summary(f, out);
    if (*sessions) return cmd_sessions(f, out);
    if (*serve) return cmd_serve(f, out);
  } catch (const Unsupported& e) {
    err << "iodiag: " << e.what() << '\n';
    return kExitUnsupported;
  } catch (const std::exception& e) {
    err << "iodiag: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace iodiag
