// Copyright 2026 The iodiag Authors
// SPDX-License-Identifier: Apache-2.0

#include "iodiag/store.hpp"

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <mutex>
#include <unordered_map>

#include <unistd.h>

#include "iodiag/codec.hpp"
#include "iodiag/error.hpp"
#include "iodiag/record.hpp"

namespace iodiag {

namespace fs = std::filesystem;
using json = nlohmann::json;
using ojson = nlohmann::ordered_json;
using Base = FieldRef::Base;

// ------------------------------------------------------------------- fields

std::optional<FieldRef> parse_field(std::string_view p) {
  static const std::unordered_map<std::string_view, Base> kNames = {
      {"id", Base::id},
      {"session", Base::session},
      {"pid", Base::pid},
      {"tid", Base::tid},
      {"comm", Base::comm},
      {"proc_name", Base::comm},
      {"kind", Base::kind},
      {"category", Base::category},
      {"ret", Base::ret},
      {"retval", Base::ret},
      {"t_entry", Base::t_entry},
      {"t_exit", Base::t_exit},
      {"seq", Base::seq},
      {"file_type", Base::file_type},
      {"offset_before", Base::offset_before},
      {"offset_after", Base::offset_after},
      {"tag", Base::tag},
      {"resolved_path", Base::resolved_path},
      {"path", Base::path},
  };
  if (p.starts_with("args.")) {
    auto f = arg_field_from_string(p.substr(5));
    if (!f) return std::nullopt;
    return FieldRef{Base::arg, *f};
  }
  bool enrichment = false;
  if (p.starts_with("enrichment.")) {
    p.remove_prefix(11);
    enrichment = true;
  }
  auto it = kNames.find(p);
  if (it == kNames.end()) return std::nullopt;
  if (enrichment && it->second < Base::file_type) return std::nullopt;
  if (enrichment && it->second == Base::path) return std::nullopt;
  return FieldRef{it->second, ArgField::fd};
}

std::string field_name(const FieldRef& f) {
  switch (f.base) {
    case Base::id: return "id";
    case Base::session: return "session";
    case Base::pid: return "pid";
    case Base::tid: return "tid";
    case Base::comm: return "comm";
    case Base::kind: return "kind";
    case Base::category: return "category";
    case Base::ret: return "ret";
    case Base::t_entry: return "t_entry";
    case Base::t_exit: return "t_exit";
    case Base::seq: return "seq";
    case Base::arg: return "args." + std::string(to_string(f.arg));
    case Base::file_type: return "enrichment.file_type";
    case Base::offset_before: return "enrichment.offset_before";
    case Base::offset_after: return "enrichment.offset_after";
    case Base::tag: return "enrichment.tag";
    case Base::resolved_path: return "enrichment.resolved_path";
    case Base::path: return "path";
  }
  return {};
}

bool is_mutable(const FieldRef& f) {
  return f.base >= Base::file_type && f.base <= Base::resolved_path;
}

namespace {

bool is_numeric_field(const FieldRef& f) {
  switch (f.base) {
    case Base::id: case Base::pid: case Base::tid: case Base::ret:
    case Base::t_entry: case Base::t_exit: case Base::seq:
    case Base::offset_before: case Base::offset_after:
      return true;
    case Base::arg:
      return f.arg != ArgField::path && f.arg != ArgField::newpath &&
             f.arg != ArgField::name;
    default:
      return false;
  }
}

template <typename T>
json opt(const std::optional<T>& v) {
  return v ? json(*v) : json(nullptr);
}

json arg_value(const SyscallArgs& a, ArgField f) {
  switch (f) {
    case ArgField::fd: return opt(a.fd);
    case ArgField::dirfd: return opt(a.dirfd);
    case ArgField::path: return opt(a.path);
    case ArgField::newdirfd: return opt(a.newdirfd);
    case ArgField::newpath: return opt(a.newpath);
    case ArgField::count: return opt(a.count);
    case ArgField::offset: return opt(a.offset);
    case ArgField::whence: return opt(a.whence);
    case ArgField::flags: return opt(a.flags);
    case ArgField::mode: return opt(a.mode);
    case ArgField::length: return opt(a.length);
    case ArgField::name: return opt(a.name);
    case ArgField::dev: return opt(a.dev);
  }
  return nullptr;
}

}  // namespace

json field_value(const StoredEvent& s, const FieldRef& f) {
  const SyscallEvent& e = s.event;
  const auto& en = e.enrichment;
  switch (f.base) {
    case Base::id: return s.id;
    case Base::session: return e.session;
    case Base::pid: return e.pid;
    case Base::tid: return e.tid;
    case Base::comm: return e.comm;
    case Base::kind: return std::string(to_string(e.kind));
    case Base::category: return std::string(to_string(info(e.kind).category));
    case Base::ret: return opt(e.retval);
    case Base::t_entry: return e.t_entry;
    case Base::t_exit: return opt(e.t_exit);
    case Base::seq: return e.seq;
    case Base::arg: return arg_value(e.args, f.arg);
    case Base::file_type:
      return en ? json(std::string(to_string(en->file_type))) : json(nullptr);
    case Base::offset_before: return en ? opt(en->offset_before) : json(nullptr);
    case Base::offset_after: return en ? opt(en->offset_after) : json(nullptr);
    case Base::tag:
      return en && en->tag ? json(to_string(*en->tag)) : json(nullptr);
    case Base::resolved_path: return en ? opt(en->resolved_path) : json(nullptr);
    case Base::path:
      if (en && en->resolved_path) return *en->resolved_path;
      return opt(e.args.path);
  }
  return nullptr;
}

int compare_values(const json& a, const json& b) {
  auto rank = [](const json& v) {
    if (v.is_null()) return 0;
    if (v.is_number()) return 1;
    if (v.is_string()) return 2;
    return 3;
  };
  const int ra = rank(a), rb = rank(b);
  if (ra != rb) return ra < rb ? -1 : 1;
  if (ra == 1) {
    if (a.is_number_integer() && b.is_number_integer()) {
      // Unsigned values above INT64_MAX compare correctly as unsigned.
      if (a.is_number_unsigned() && b.is_number_unsigned()) {
        auto x = a.get<std::uint64_t>(), y = b.get<std::uint64_t>();
        return x < y ? -1 : (y < x ? 1 : 0);
      }
      if (a.is_number_unsigned() && a.get<std::uint64_t>() > INT64_MAX) return 1;
      if (b.is_number_unsigned() && b.get<std::uint64_t>() > INT64_MAX) return -1;
      auto x = a.get<std::int64_t>(), y = b.get<std::int64_t>();
      return x < y ? -1 : (y < x ? 1 : 0);
    }
    auto x = a.get<double>(), y = b.get<double>();
    return x < y ? -1 : (y < x ? 1 : 0);
  }
  if (ra == 2) {
    const auto& x = a.get_ref<const std::string&>();
    const auto& y = b.get_ref<const std::string&>();
    return x < y ? -1 : (y < x ? 1 : 0);
  }
  const auto x = a.dump(), y = b.dump();
  return x < y ? -1 : (y < x ? 1 : 0);
}

// --------------------------------------------------------------- predicates

Predicate Predicate::eq(json v) {
  Predicate p;
  p.op = Op::equals;
  p.values.push_back(std::move(v));
  return p;
}

Predicate Predicate::one_of(std::vector<json> vs) {
  Predicate p;
  p.op = Op::in;
  p.values = std::move(vs);
  return p;
}

Predicate Predicate::starts_with(std::string prefix) {
  Predicate p;
  p.op = Op::prefix;
  p.prefix = std::move(prefix);
  return p;
}

Predicate Predicate::between(std::optional<std::int64_t> lo,
                             std::optional<std::int64_t> hi) {
  Predicate p;
  p.op = Op::range;
  p.lo = lo;
  p.hi = hi;
  return p;
}

namespace {

bool test(const json& v, const Predicate& p) {
  if (v.is_null()) return false;
  switch (p.op) {
    case Predicate::Op::equals:
    case Predicate::Op::in:
      return std::any_of(p.values.begin(), p.values.end(), [&v](const json& x) {
        return compare_values(v, x) == 0;
      });
    case Predicate::Op::prefix:
      return v.is_string() &&
             v.get_ref<const std::string&>().starts_with(p.prefix);
    case Predicate::Op::range: {
      if (!v.is_number_integer()) return false;
      if (v.is_number_unsigned() && v.get<std::uint64_t>() > INT64_MAX)
        return !p.hi;
      const auto x = v.get<std::int64_t>();
      return (!p.lo || x >= *p.lo) && (!p.hi || x < *p.hi);
    }
  }
  return false;
}

struct Compiled {
  std::optional<FieldRef> field;
  const Predicate* pred;
};

std::vector<Compiled> compile(const std::vector<FieldMatch>& match) {
  std::vector<Compiled> out;
  out.reserve(match.size());
  for (const auto& m : match) out.push_back({parse_field(m.field), &m.pred});
  return out;
}

bool test_all(const StoredEvent& ev, const std::vector<Compiled>& cs) {
  for (const auto& c : cs) {
    if (!c.field) return false;
    if (!test(field_value(ev, *c.field), *c.pred)) return false;
  }
  return true;
}

void check_range(std::optional<std::int64_t> lo, std::optional<std::int64_t> hi,
                 const std::string& what) {
  if (lo && hi && *lo > *hi)
    throw MalformedSpec(what + ": range lower bound exceeds upper bound");
}

void validate_match(const std::vector<FieldMatch>& match) {
  for (const auto& m : match) {
    if (m.pred.op == Predicate::Op::equals && m.pred.values.size() != 1)
      throw MalformedSpec(m.field + ": equals takes exactly one value");
    if (m.pred.op == Predicate::Op::range)
      check_range(m.pred.lo, m.pred.hi, m.field);
  }
}

}  // namespace

bool matches(const StoredEvent& ev, const FieldMatch& m) {
  auto f = parse_field(m.field);
  return f && test(field_value(ev, *f), m.pred);
}

void validate(const QuerySpec& spec) {
  validate_match(spec.match);
  if (spec.time_range)
    check_range(spec.time_range->first, spec.time_range->second, "time_range");
}

void validate(const AggSpec& spec) {
  validate_match(spec.match);
  if (spec.time_range)
    check_range(spec.time_range->first, spec.time_range->second, "time_range");
  if (spec.bucket_ns && *spec.bucket_ns <= 0)
    throw MalformedSpec("bucket width must be positive");
  if (spec.metric.kind != Metric::Kind::count) {
    auto f = parse_field(spec.metric.field);
    if (!f || !is_numeric_field(*f))
      throw MalformedSpec("metric needs a numeric field, got '" +
                          spec.metric.field + "'");
  }
  if (spec.metric.kind == Metric::Kind::percentile &&
      !(spec.metric.p > 0.0 && spec.metric.p <= 100.0))
    throw MalformedSpec("percentile must be in (0, 100]");
  if (spec.top_n && *spec.top_n == 0)
    throw MalformedSpec("top_n must be positive");
}

bool query_less(const StoredEvent& a, const StoredEvent& b,
                const FieldRef* field, bool descending) {
  if (field) {
    int c = compare_values(field_value(a, *field), field_value(b, *field));
    if (descending) c = -c;
    if (c != 0) return c < 0;
  }
  if (a.event.seq != b.event.seq) return a.event.seq < b.event.seq;
  return a.id < b.id;
}

// -------------------------------------------------------------- aggregation

namespace {

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

std::int64_t to_i64(const json& v) {
  if (v.is_number_unsigned()) return static_cast<std::int64_t>(v.get<std::uint64_t>());
  return v.get<std::int64_t>();
}

}  // namespace

std::vector<AggRow> aggregate_events(std::span<const StoredEvent* const> events,
                                     const AggSpec& spec) {
  validate(spec);
  std::vector<std::optional<FieldRef>> groups;
  for (const auto& g : spec.group_by) groups.push_back(parse_field(g));
  std::optional<FieldRef> metric_field;
  if (spec.metric.kind != Metric::Kind::count)
    metric_field = parse_field(spec.metric.field);

  struct Cell {
    std::vector<json> group;
    std::optional<std::int64_t> bucket;
    std::uint64_t events = 0;
    std::int64_t sum = 0;
    std::vector<std::int64_t> values;
  };
  std::unordered_map<std::string, Cell> cells;
  std::unordered_map<std::string, std::uint64_t> group_totals;

  for (const StoredEvent* ev : events) {
    std::vector<json> key;
    key.reserve(groups.size());
    for (const auto& g : groups)
      key.push_back(g ? field_value(*ev, *g) : json(nullptr));
    std::optional<std::int64_t> bucket;
    if (spec.bucket_ns)
      bucket = floor_div(ev->event.t_entry, *spec.bucket_ns) * *spec.bucket_ns;
    std::string gkey = json(key).dump();
    std::string ckey = gkey;
    if (bucket) ckey += "@" + std::to_string(*bucket);

    auto [it, fresh] = cells.try_emplace(ckey);
    Cell& c = it->second;
    if (fresh) {
      c.group = std::move(key);
      c.bucket = bucket;
    }
    ++c.events;
    ++group_totals[gkey];
    if (metric_field) {
      json v = field_value(*ev, *metric_field);
      if (v.is_number_integer()) {
        if (spec.metric.kind == Metric::Kind::sum) {
          c.sum += to_i64(v);
        } else {
          c.values.push_back(to_i64(v));
        }
      }
    }
  }

  std::optional<std::unordered_map<std::string, bool>> keep;
  if (spec.top_n && *spec.top_n < group_totals.size()) {
    std::vector<std::pair<std::string, std::uint64_t>> ranked(
        group_totals.begin(), group_totals.end());
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
      if (a.second != b.second) return a.second > b.second;
      const json x = json::parse(a.first), y = json::parse(b.first);
      for (std::size_t i = 0; i < x.size() && i < y.size(); ++i)
        if (int c = compare_values(x[i], y[i]); c != 0) return c < 0;
      return false;
    });
    keep.emplace();
    for (std::size_t i = 0; i < *spec.top_n; ++i) (*keep)[ranked[i].first] = true;
  }

  std::vector<AggRow> rows;
  rows.reserve(cells.size());
  for (auto& [k, c] : cells) {
    if (keep && !keep->contains(json(c.group).dump())) continue;
    AggRow row;
    row.group = c.group;
    row.bucket = c.bucket;
    switch (spec.metric.kind) {
      case Metric::Kind::count:
        row.value = static_cast<std::int64_t>(c.events);
        break;
      case Metric::Kind::sum:
        row.value = c.sum;
        break;
      case Metric::Kind::percentile: {
        if (c.values.empty()) continue;
        std::sort(c.values.begin(), c.values.end());
        const double n = static_cast<double>(c.values.size());
        auto rank = static_cast<std::size_t>(std::ceil(spec.metric.p / 100.0 * n));
        rank = std::clamp<std::size_t>(rank, 1, c.values.size());
        row.value = c.values[rank - 1];
        break;
      }
    }
    rows.push_back(std::move(row));
  }
  std::sort(rows.begin(), rows.end(), [](const AggRow& a, const AggRow& b) {
    for (std::size_t i = 0; i < a.group.size() && i < b.group.size(); ++i) {
      int c = compare_values(a.group[i], b.group[i]);
      if (c != 0) return c < 0;
    }
    return a.bucket < b.bucket;
  });
  return rows;
}

// ---------------------------------------------------------------- json forms

ojson to_json(const StoredEvent& ev) {
  ojson j;
  j["id"] = ev.id;
  const ojson body = to_json(ev.event);
  for (auto& [k, v] : body.items()) j[k] = v;
  return j;
}

ojson filter_to_json(const FilterSpec& f) {
  ojson j = ojson::object();
  if (f.kinds) {
    ojson a = ojson::array();
    for (auto k : *f.kinds) a.push_back(std::string(to_string(k)));
    j["syscalls"] = a;
  }
  if (f.pids) j["pids"] = *f.pids;
  if (f.tids) j["tids"] = *f.tids;
  if (f.path_prefixes) j["paths"] = *f.path_prefixes;
  return j;
}

FilterSpec filter_from_json(const json& j) {
  FilterSpec f;
  if (!j.is_object()) return f;
  if (auto it = j.find("syscalls"); it != j.end() && it->is_array()) {
    f.kinds.emplace();
    for (const auto& k : *it) f.kinds->insert(catalog_lookup(k.get<std::string>()));
  }
  if (auto it = j.find("pids"); it != j.end() && it->is_array())
    f.pids = it->get<std::set<std::int64_t>>();
  if (auto it = j.find("tids"); it != j.end() && it->is_array())
    f.tids = it->get<std::set<std::int64_t>>();
  if (auto it = j.find("paths"); it != j.end() && it->is_array())
    f.path_prefixes = it->get<std::set<std::string>>();
  return f;
}

ojson stats_to_json(const SessionStats& s) {
  ojson j;
  j["produced"] = s.produced;
  j["dropped"] = s.dropped;
  j["stored"] = s.stored;
  j["unresolved"] = s.unresolved;
  j["filtered_out"] = s.filtered_out;
  j["orphan_exits"] = s.orphan_exits;
  j["inconsistencies"] = s.inconsistencies;
  return j;
}

SessionStats stats_from_json(const json& j) {
  SessionStats s;
  s.produced = j.value("produced", std::uint64_t{0});
  s.dropped = j.value("dropped", std::uint64_t{0});
  s.stored = j.value("stored", std::uint64_t{0});
  s.unresolved = j.value("unresolved", std::uint64_t{0});
  s.filtered_out = j.value("filtered_out", std::uint64_t{0});
  s.orphan_exits = j.value("orphan_exits", std::uint64_t{0});
  s.inconsistencies = j.value("inconsistencies", std::uint64_t{0});
  return s;
}

ojson session_to_json(const Session& s) {
  ojson j;
  j["name"] = s.name;
  j["created_at"] = s.created_at;
  j["filter"] = filter_to_json(s.filter);
  j["stats"] = stats_to_json(s.stats);
  return j;
}

bool valid_session_name(std::string_view name) {
  if (name.empty() || name.size() > 128 || name.front() == '.') return false;
  return std::all_of(name.begin(), name.end(), [](char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
           (c >= '0' && c <= '9') || c == '.' || c == '_' || c == '-';
  });
}

// --------------------------------------------------------------------- store

struct Store::SessionData {
  Session meta;
  fs::path dir;
  std::vector<StoredEvent> events;
  // Equality postings for immutable fields: key is field code + value.
  std::unordered_map<std::string, std::vector<std::uint32_t>> index;
  std::FILE* seg = nullptr;
  std::FILE* patches = nullptr;
  std::uint64_t seg_read = 0;
  std::uint64_t patches_read = 0;

  ~SessionData() {
    if (seg) std::fclose(seg);
    if (patches) std::fclose(patches);
  }
};

namespace {

constexpr const char* kMeta = "meta.json";
constexpr const char* kSegment = "events.seg";
constexpr const char* kPatches = "patches.log";

bool is_indexed(const FieldRef& f) {
  return f.base == Base::pid || f.base == Base::tid || f.base == Base::comm ||
         f.base == Base::kind || f.base == Base::arg;
}

char field_code(const FieldRef& f) {
  return f.base == Base::arg
             ? static_cast<char>(64 + static_cast<int>(f.arg))
             : static_cast<char>(static_cast<int>(f.base) + 1);
}

std::string index_key(const FieldRef& f, const json& v) {
  std::string k(1, field_code(f));
  if (v.is_string()) {
    k += 's';
    k += v.get_ref<const std::string&>();
  } else if (v.is_number_integer()) {
    k += 'i';
    k += v.is_number_unsigned() ? std::to_string(v.get<std::uint64_t>())
                                : std::to_string(v.get<std::int64_t>());
  } else {
    k += 'x';
    k += v.dump();
  }
  return k;
}

template <typename T>
void add_posting(std::unordered_map<std::string, std::vector<std::uint32_t>>& idx,
                 const FieldRef& f, const T& v, std::uint32_t pos) {
  idx[index_key(f, json(v))].push_back(pos);
}

void index_event(std::unordered_map<std::string, std::vector<std::uint32_t>>& idx,
                 const SyscallEvent& e, std::uint32_t pos) {
  add_posting(idx, FieldRef{Base::pid}, e.pid, pos);
  add_posting(idx, FieldRef{Base::tid}, e.tid, pos);
  add_posting(idx, FieldRef{Base::comm}, e.comm, pos);
  add_posting(idx, FieldRef{Base::kind}, std::string(to_string(e.kind)), pos);
  const ArgMask present = e.args.present();
  for (std::size_t i = 0; i < kArgFieldCount; ++i) {
    const auto af = static_cast<ArgField>(i);
    if (present & arg_bit(af)) {
      FieldRef f{Base::arg, af};
      idx[index_key(f, arg_value(e.args, af))].push_back(pos);
    }
  }
}

void put_u32(std::vector<std::byte>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::byte>(v >> (8 * i)));
}

std::int64_t now_ns() {
  return std::chrono::duration_cast<std::chrono::nanoseconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

void write_all(std::FILE* f, const void* data, std::size_t n) {
  if (n && std::fwrite(data, 1, n, f) != n) {
    if (errno == ENOSPC) throw StorageFull("store: no space left on device");
    throw Error(std::string("store: write failed: ") + std::strerror(errno));
  }
  if (std::fflush(f) != 0) {
    if (errno == ENOSPC) throw StorageFull("store: no space left on device");
    throw Error(std::string("store: flush failed: ") + std::strerror(errno));
  }
}

std::FILE* open_append(const fs::path& p) {
  std::FILE* f = std::fopen(p.c_str(), "ab");
  if (!f) throw Error("store: cannot open " + p.string() + ": " + std::strerror(errno));
  return f;
}

void set_enrichment(SyscallEvent& e, const FieldRef& f, const json& v) {
  if (!e.enrichment) e.enrichment.emplace();
  auto& en = *e.enrichment;
  switch (f.base) {
    case Base::file_type:
      en.file_type = v.is_null() ? FileType::unknown
                                 : file_type_from_string(v.get<std::string>());
      break;
    case Base::offset_before:
      en.offset_before = v.is_null() ? std::nullopt
                                     : std::optional(v.get<std::int64_t>());
      break;
    case Base::offset_after:
      en.offset_after = v.is_null() ? std::nullopt
                                    : std::optional(v.get<std::int64_t>());
      break;
    case Base::tag:
      en.tag = v.is_null() ? std::nullopt
                           : file_tag_from_string(v.get<std::string>());
      break;
    case Base::resolved_path:
      en.resolved_path = v.is_null() ? std::nullopt
                                     : std::optional(v.get<std::string>());
      break;
    default:
      break;
  }
}

void check_update_value(const FieldRef& f, const json& v) {
  if (v.is_null()) return;
  bool ok = true;
  switch (f.base) {
    case Base::file_type:
    case Base::resolved_path:
      ok = v.is_string();
      break;
    case Base::offset_before:
    case Base::offset_after:
      ok = v.is_number_integer();
      break;
    case Base::tag:
      ok = v.is_string() && file_tag_from_string(v.get<std::string>());
      break;
    default:
      ok = false;
  }
  if (!ok)
    throw MalformedSpec("bad value for " + field_name(f) + ": " + v.dump());
}

}  // namespace

Store::Store(fs::path dir, StoreOptions options)
    : dir_(std::move(dir)), options_(options) {
  std::error_code ec;
  fs::create_directories(dir_ / "sessions", ec);
  if (ec) throw Error("store: cannot create " + dir_.string() + ": " + ec.message());
  refresh();
}

Store::~Store() {
  try {
    sync();
  } catch (...) {
  }
}

Store::SessionData& Store::get(const std::string& name) {
  auto it = sessions_.find(name);
  if (it == sessions_.end()) throw UnknownSession(name);
  return *it->second;
}

const Store::SessionData& Store::get(const std::string& name) const {
  auto it = sessions_.find(name);
  if (it == sessions_.end()) throw UnknownSession(name);
  return *it->second;
}

void Store::write_meta(const SessionData& s) const {
  const fs::path tmp = s.dir / "meta.json.tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    out << session_to_json(s.meta).dump(2) << '\n';
    if (!out) throw Error("store: cannot write " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, s.dir / kMeta, ec);
  if (ec) throw Error("store: cannot write meta for " + s.meta.name);
}

Session Store::create_session(const std::string& name, const FilterSpec& filter,
                              std::optional<std::int64_t> created_at) {
  if (!valid_session_name(name))
    throw Error("invalid session name '" + name +
                "' (use letters, digits, '.', '_' or '-')");
  std::unique_lock lock(mu_);
  if (sessions_.contains(name) || fs::exists(dir_ / "sessions" / name))
    throw DuplicateSession(name);
  auto s = std::make_unique<SessionData>();
  s->meta.name = name;
  s->meta.created_at = created_at.value_or(now_ns());
  s->meta.filter = filter;
  s->dir = dir_ / "sessions" / name;
  fs::create_directories(s->dir);
  write_meta(*s);
  Session out = s->meta;
  sessions_.emplace(name, std::move(s));
  return out;
}

bool Store::has_session(const std::string& name) const {
  std::shared_lock lock(mu_);
  return sessions_.contains(name);
}

Session Store::session(const std::string& name) const {
  std::shared_lock lock(mu_);
  return get(name).meta;
}

std::vector<Session> Store::sessions() const {
  std::shared_lock lock(mu_);
  std::vector<Session> out;
  for (const auto& [n, s] : sessions_) out.push_back(s->meta);
  return out;
}

void Store::set_stats(const std::string& name, const SessionStats& stats) {
  std::unique_lock lock(mu_);
  auto& s = get(name);
  s.meta.stats = stats;
  write_meta(s);
}

std::size_t Store::index_batch(const std::string& session,
                               std::span<const SyscallEvent> events) {
  std::unique_lock lock(mu_);
  auto& s = get(session);
  if (events.empty()) return 0;
  if (options_.max_events && total_events_ + events.size() > *options_.max_events)
    throw StorageFull("store: event limit of " +
                      std::to_string(*options_.max_events) + " reached");
  if (!s.seg) s.seg = open_append(s.dir / kSegment);

  std::vector<std::byte> buf;
  std::vector<std::byte> rec;
  std::vector<StoredEvent> staged;
  staged.reserve(events.size());
  for (const auto& ev : events) {
    StoredEvent st{s.events.size() + staged.size(), ev};
    st.event.session = session;
    rec.clear();
    codec::encode(st.event, rec);
    put_u32(buf, static_cast<std::uint32_t>(rec.size()));
    buf.insert(buf.end(), rec.begin(), rec.end());
    staged.push_back(std::move(st));
  }
  write_all(s.seg, buf.data(), buf.size());
  s.seg_read += buf.size();
  for (auto& st : staged) {
    index_event(s.index, st.event, static_cast<std::uint32_t>(st.id));
    s.events.push_back(std::move(st));
  }
  total_events_ += staged.size();
  s.meta.stats.stored += staged.size();
  write_meta(s);
  return staged.size();
}

std::vector<const StoredEvent*> Store::select(
    const SessionData& s, const std::vector<FieldMatch>& match,
    const std::optional<std::pair<std::int64_t, std::int64_t>>& range) const {
  const auto compiled = compile(match);
  for (const auto& c : compiled)
    if (!c.field) return {};

  // Narrow with the most selective indexed equality predicate.
  const std::vector<std::uint32_t>* best = nullptr;
  std::vector<std::uint32_t> merged;
  bool use_merged = false;
  for (const auto& c : compiled) {
    if (!is_indexed(*c.field)) continue;
    if (c.pred->op == Predicate::Op::equals) {
      auto it = s.index.find(index_key(*c.field, c.pred->values.front()));
      static const std::vector<std::uint32_t> kEmpty;
      const auto* list = it == s.index.end() ? &kEmpty : &it->second;
      if (!best || list->size() < best->size()) {
        best = list;
        use_merged = false;
      }
    } else if (c.pred->op == Predicate::Op::in && !use_merged && !best) {
      for (const auto& v : c.pred->values) {
        auto it = s.index.find(index_key(*c.field, v));
        if (it != s.index.end())
          merged.insert(merged.end(), it->second.begin(), it->second.end());
      }
      std::sort(merged.begin(), merged.end());
      merged.erase(std::unique(merged.begin(), merged.end()), merged.end());
      use_merged = true;
    }
  }

  std::vector<const StoredEvent*> out;
  auto consider = [&](const StoredEvent& ev) {
    if (range && (ev.event.t_entry < range->first ||
                  ev.event.t_entry >= range->second))
      return;
    if (test_all(ev, compiled)) out.push_back(&ev);
  };
  if (best) {
    for (auto pos : *best) consider(s.events[pos]);
  } else if (use_merged) {
    for (auto pos : merged) consider(s.events[pos]);
  } else {
    for (const auto& ev : s.events) consider(ev);
  }
  return out;
}

QueryResult Store::query(const QuerySpec& spec) const {
  validate(spec);
  std::shared_lock lock(mu_);
  const auto& s = get(spec.session);
  auto hits = select(s, spec.match, spec.time_range);
  const auto sort_field = parse_field(spec.sort.field);
  const FieldRef* sf = sort_field ? &*sort_field : nullptr;
  const bool desc = spec.sort.descending;
  std::stable_sort(hits.begin(), hits.end(),
                   [sf, desc](const StoredEvent* a, const StoredEvent* b) {
                     return query_less(*a, *b, sf, desc);
                   });
  QueryResult r;
  r.total = hits.size();
  const std::size_t begin = std::min(spec.offset, hits.size());
  std::size_t end = hits.size();
  if (spec.limit) end = std::min(end, begin + *spec.limit);
  r.events.reserve(end - begin);
  for (std::size_t i = begin; i < end; ++i) r.events.push_back(*hits[i]);
  return r;
}

std::vector<AggRow> Store::aggregate(const AggSpec& spec) const {
  validate(spec);
  std::shared_lock lock(mu_);
  const auto& s = get(spec.session);
  auto hits = select(s, spec.match, spec.time_range);
  return aggregate_events(hits, spec);
}

std::size_t Store::count(const std::string& session) const {
  std::shared_lock lock(mu_);
  return get(session).events.size();
}

void Store::apply_update(SessionData& s, const FieldRef& f, const json& v,
                         std::span<const std::uint64_t> ids, bool persist,
                         std::size_t* changed) {
  std::vector<std::uint64_t> touched;
  for (auto id : ids) {
    if (id >= s.events.size()) continue;
    auto& ev = s.events[id].event;
    const json before = field_value(s.events[id], f);
    const bool had = ev.enrichment.has_value();
    set_enrichment(ev, f, v);
    if (!had || compare_values(before, field_value(s.events[id], f)) != 0)
      touched.push_back(id);
  }
  if (changed) *changed = touched.size();
  if (!persist || touched.empty()) return;
  json line;
  line["field"] = field_name(f);
  line["value"] = v;
  line["ids"] = touched;
  const std::string text = line.dump() + "\n";
  if (!s.patches) s.patches = open_append(s.dir / kPatches);
  write_all(s.patches, text.data(), text.size());
  s.patches_read += text.size();
}

std::size_t Store::update_field(const QuerySpec& spec, const std::string& field,
                                const json& value) {
  validate(spec);
  auto f = parse_field(field);
  if (!f || !is_mutable(*f)) throw ImmutableField(field);
  check_update_value(*f, value);
  std::unique_lock lock(mu_);
  auto& s = get(spec.session);
  auto hits = select(s, spec.match, spec.time_range);
  std::vector<std::uint64_t> ids;
  ids.reserve(hits.size());
  for (const auto* h : hits) ids.push_back(h->id);
  apply_update(s, *f, value, ids, true, nullptr);
  return ids.size();
}

std::size_t Store::update_by_ids(const std::string& session,
                                 const std::string& field, const json& value,
                                 std::span<const std::uint64_t> ids) {
  auto f = parse_field(field);
  if (!f || !is_mutable(*f)) throw ImmutableField(field);
  check_update_value(*f, value);
  std::unique_lock lock(mu_);
  auto& s = get(session);
  std::size_t changed = 0;
  apply_update(s, *f, value, ids, true, &changed);
  return changed;
}

void Store::scan(const std::string& session,
                 const std::function<void(const StoredEvent&)>& fn) const {
  std::shared_lock lock(mu_);
  for (const auto& ev : get(session).events) fn(ev);
}

void Store::read_tail(SessionData& s) {
  // Segment: complete length-prefixed records only; a torn tail waits.
  if (std::ifstream in(s.dir / kSegment, std::ios::binary); in) {
    in.seekg(0, std::ios::end);
    const auto size = static_cast<std::uint64_t>(in.tellg());
    if (size > s.seg_read) {
      std::vector<char> buf(size - s.seg_read);
      in.seekg(static_cast<std::streamoff>(s.seg_read));
      in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
      std::size_t pos = 0;
      while (pos + 4 <= buf.size()) {
        std::uint32_t len = 0;
        for (int i = 0; i < 4; ++i)
          len |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[pos + i]))
                 << (8 * i);
        if (pos + 4 + len > buf.size()) break;
        StoredEvent st;
        st.id = s.events.size();
        st.event = codec::decode(std::span(
            reinterpret_cast<const std::byte*>(buf.data() + pos + 4), len));
        index_event(s.index, st.event, static_cast<std::uint32_t>(st.id));
        s.events.push_back(std::move(st));
        ++total_events_;
        pos += 4 + len;
      }
      s.seg_read += pos;
    }
  }
  if (std::ifstream in(s.dir / kPatches, std::ios::binary); in) {
    in.seekg(static_cast<std::streamoff>(s.patches_read));
    std::string line;
    while (std::getline(in, line)) {
      if (in.eof()) break;  // no newline yet: still being written
      s.patches_read += line.size() + 1;
      if (line.empty()) continue;
      json p = json::parse(line, nullptr, false);
      if (p.is_discarded()) continue;
      auto f = parse_field(p.value("field", std::string()));
      if (!f || !is_mutable(*f)) continue;
      auto ids = p.value("ids", std::vector<std::uint64_t>{});
      apply_update(s, *f, p["value"], ids, false, nullptr);
    }
  }
}

void Store::load_session(const fs::path& sdir) {
  const std::string name = sdir.filename().string();
  std::ifstream in(sdir / kMeta);
  if (!in) return;  // being created by another process
  json meta = json::parse(in, nullptr, false);
  if (meta.is_discarded()) return;
  auto& slot = sessions_[name];
  if (!slot) {
    slot = std::make_unique<SessionData>();
    slot->dir = sdir;
  }
  slot->meta.name = name;
  slot->meta.created_at = meta.value("created_at", std::int64_t{0});
  slot->meta.filter = filter_from_json(meta.value("filter", json::object()));
  slot->meta.stats = stats_from_json(meta.value("stats", json::object()));
  read_tail(*slot);
}

void Store::refresh() {
  std::unique_lock lock(mu_);
  std::error_code ec;
  for (const auto& entry : fs::directory_iterator(dir_ / "sessions", ec)) {
    if (!entry.is_directory() || !valid_session_name(entry.path().filename().string()))
      continue;
    load_session(entry.path());
  }
}

void Store::sync() {
  std::unique_lock lock(mu_);
  for (auto& [n, s] : sessions_) {
    for (std::FILE* f : {s->seg, s->patches}) {
      if (!f) continue;
      std::fflush(f);
      ::fsync(::fileno(f));
    }
  }
}

}  // namespace iodiag
