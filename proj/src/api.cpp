// Copyright 2026 The iodiag Authors
// SPDX-License-Identifier: Apache-2.0

#include "iodiag/api.hpp"

#include <httplib.h>

#include <chrono>
#include <charconv>
#include <mutex>
#include <thread>

#include "iodiag/config.hpp"
#include "iodiag/correlate.hpp"
#include "iodiag/error.hpp"

namespace iodiag {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

namespace {

std::optional<std::int64_t> as_int(const json& v) {
  if (v.is_number_integer()) return v.get<std::int64_t>();
  return std::nullopt;
}

std::pair<std::int64_t, std::int64_t> int_pair(const json& v, const char* what) {
  if (!v.is_array() || v.size() != 2 || !as_int(v[0]) || !as_int(v[1]))
    throw MalformedSpec(std::string(what) + " must be [lo, hi] integers");
  return {*as_int(v[0]), *as_int(v[1])};
}

std::optional<std::pair<std::int64_t, std::int64_t>> time_range_from(const json& body) {
  auto it = body.find("time_range");
  if (it == body.end() || it->is_null()) return std::nullopt;
  return int_pair(*it, "time_range");
}

}  // namespace

std::vector<FieldMatch> match_from_json(const json& m) {
  std::vector<FieldMatch> out;
  if (m.is_null()) return out;
  if (m.is_object()) {
    for (const auto& [k, v] : m.items()) {
      if (v.is_array()) {
        out.push_back({k, Predicate::one_of(v.get<std::vector<json>>())});
      } else {
        out.push_back({k, Predicate::eq(v)});
      }
    }
    return out;
  }
  if (!m.is_array()) throw MalformedSpec("match must be an array or object");
  for (const auto& item : m) {
    if (!item.is_object() || !item.contains("field") || !item["field"].is_string())
      throw MalformedSpec("each match entry needs a \"field\" string");
    FieldMatch fm;
    fm.field = item["field"].get<std::string>();
    if (item.contains("equals")) {
      fm.pred = Predicate::eq(item["equals"]);
    } else if (item.contains("in")) {
      if (!item["in"].is_array()) throw MalformedSpec("\"in\" takes an array");
      fm.pred = Predicate::one_of(item["in"].get<std::vector<json>>());
    } else if (item.contains("prefix")) {
      if (!item["prefix"].is_string()) throw MalformedSpec("\"prefix\" takes a string");
      fm.pred = Predicate::starts_with(item["prefix"].get<std::string>());
    } else if (item.contains("range")) {
      const auto& r = item["range"];
      if (!r.is_array() || r.size() != 2)
        throw MalformedSpec("\"range\" takes [lo, hi]");
      auto bound = [&](const json& b) -> std::optional<std::int64_t> {
        if (b.is_null()) return std::nullopt;
        if (!as_int(b)) throw MalformedSpec("range bounds must be integers or null");
        return *as_int(b);
      };
      fm.pred = Predicate::between(bound(r[0]), bound(r[1]));
    } else {
      throw MalformedSpec("match entry for '" + fm.field +
                          "' needs equals, in, prefix or range");
    }
    out.push_back(std::move(fm));
  }
  return out;
}

QuerySpec query_spec_from_json(const json& body, const std::string& session) {
  if (!body.is_object()) throw MalformedSpec("query body must be a JSON object");
  QuerySpec q;
  q.session = session;
  q.match = match_from_json(body.value("match", json()));
  q.time_range = time_range_from(body);
  if (auto it = body.find("sort"); it != body.end() && !it->is_null()) {
    if (it->is_string()) {
      q.sort.field = it->get<std::string>();
    } else if (it->is_object()) {
      q.sort.field = it->value("field", std::string("t_entry"));
      const auto order = it->value("order", std::string("asc"));
      if (order != "asc" && order != "desc")
        throw MalformedSpec("sort order must be asc or desc");
      q.sort.descending = order == "desc";
    } else {
      throw MalformedSpec("sort must be a field name or {field, order}");
    }
  }
  if (auto it = body.find("limit"); it != body.end() && !it->is_null()) {
    if (!it->is_number_unsigned()) throw MalformedSpec("limit must be a non-negative integer");
    q.limit = it->get<std::size_t>();
  }
  if (auto it = body.find("offset"); it != body.end() && !it->is_null()) {
    if (!it->is_number_unsigned()) throw MalformedSpec("offset must be a non-negative integer");
    q.offset = it->get<std::size_t>();
  }
  if (auto it = body.find("cursor"); it != body.end() && !it->is_null()) {
    if (!it->is_string()) throw MalformedSpec("cursor must be a string");
    const auto& c = it->get_ref<const std::string&>();
    std::size_t off = 0;
    auto [p, ec] = std::from_chars(c.data(), c.data() + c.size(), off);
    if (ec != std::errc() || p != c.data() + c.size()) throw MalformedSpec("bad cursor");
    q.offset = off;
  }
  validate(q);
  return q;
}

AggSpec agg_spec_from_json(const json& body, const std::string& session) {
  if (!body.is_object()) throw MalformedSpec("aggregate body must be a JSON object");
  AggSpec a;
  a.session = session;
  if (auto it = body.find("group_by"); it != body.end() && !it->is_null()) {
    if (it->is_string()) {
      a.group_by.push_back(it->get<std::string>());
    } else if (it->is_array()) {
      for (const auto& g : *it) {
        if (!g.is_string()) throw MalformedSpec("group_by holds field names");
        a.group_by.push_back(g.get<std::string>());
      }
    } else {
      throw MalformedSpec("group_by must be a field name or array");
    }
  }
  if (auto it = body.find("bucket"); it != body.end() && !it->is_null()) {
    if (auto n = as_int(*it)) {
      a.bucket_ns = *n;
    } else if (it->is_string()) {
      auto d = parse_duration_ns(it->get<std::string>());
      if (!d) throw MalformedSpec("bad bucket width '" + it->get<std::string>() + "'");
      a.bucket_ns = *d;
    } else {
      throw MalformedSpec("bucket must be nanoseconds or a duration string");
    }
  }
  if (auto it = body.find("metric"); it != body.end() && !it->is_null()) {
    if (it->is_string() && *it == "count") {
      a.metric.kind = Metric::Kind::count;
    } else if (it->is_object() && it->contains("sum")) {
      a.metric.kind = Metric::Kind::sum;
      a.metric.field = (*it)["sum"].get<std::string>();
    } else if (it->is_object() && it->contains("percentile")) {
      a.metric.kind = Metric::Kind::percentile;
      a.metric.field = (*it)["percentile"].get<std::string>();
      if (!it->contains("p") || !(*it)["p"].is_number())
        throw MalformedSpec("percentile metric needs a numeric \"p\"");
      a.metric.p = (*it)["p"].get<double>();
    } else {
      throw MalformedSpec("metric must be \"count\", {\"sum\": f} or {\"percentile\": f, \"p\": n}");
    }
  }
  if (auto it = body.find("top_n"); it != body.end() && !it->is_null()) {
    if (!it->is_number_unsigned()) throw MalformedSpec("top_n must be a positive integer");
    a.top_n = it->get<std::size_t>();
  }
  a.match = match_from_json(body.value("match", json()));
  a.time_range = time_range_from(body);
  validate(a);
  return a;
}

ojson to_json(const AggRow& r) {
  ojson j;
  j["group"] = r.group;
  j["bucket"] = r.bucket ? ojson(*r.bucket) : ojson(nullptr);
  j["value"] = r.value;
  return j;
}

ojson rows_to_json(const std::vector<AggRow>& rows) {
  ojson arr = ojson::array();
  for (const auto& r : rows) arr.push_back(to_json(r));
  ojson j;
  j["rows"] = arr;
  return j;
}

// -------------------------------------------------------------------- server

struct ApiServer::Impl {
  Store& store;
  ApiOptions opts;
  httplib::Server server;
  std::thread thread;
  bool bound = false;
  int port = 0;
  std::mutex refresh_mu;
  std::chrono::steady_clock::time_point last_refresh{};

  Impl(Store& s, ApiOptions o) : store(s), opts(std::move(o)) {
    // httplib's default sets SO_REUSEPORT, which lets a second server share
    // a port that is already in use.
    server.set_socket_options([](socket_t sock) {
      int yes = 1;
      ::setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
    });
    routes();
  }

  // Picks up writes from other processes at most once per refresh interval.
  void maybe_refresh() {
    std::lock_guard g(refresh_mu);
    const auto now = std::chrono::steady_clock::now();
    if (now - last_refresh < std::chrono::milliseconds(opts.refresh_ms)) return;
    store.refresh();
    last_refresh = now;
  }

  static void reply(httplib::Response& res, int status, const ojson& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  static void error(httplib::Response& res, int status, const std::string& msg) {
    ojson j;
    j["error"] = msg;
    reply(res, status, j);
  }

  template <typename F>
  auto guarded(F f) {
    return [this, f](const httplib::Request& req, httplib::Response& res) {
      try {
        maybe_refresh();
        f(req, res);
      } catch (const UnknownSession& e) {
        error(res, 404, e.what());
      } catch (const MalformedSpec& e) {
        error(res, 400, e.what());
      } catch (const MalformedPattern& e) {
        error(res, 400, e.what());
      } catch (const ImmutableField& e) {
        error(res, 400, e.what());
      } catch (const json::exception& e) {
        error(res, 400, std::string("bad request body: ") + e.what());
      } catch (const std::exception& e) {
        error(res, 500, e.what());
      }
    };
  }

  static json body_of(const httplib::Request& req) {
    if (req.body.empty()) return json::object();
    json j = json::parse(req.body, nullptr, false);
    if (j.is_discarded()) throw MalformedSpec("request body is not valid JSON");
    return j;
  }

  void routes() {
    server.set_default_headers({
        {"Access-Control-Allow-Origin", "*"},
        {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
        {"Access-Control-Allow-Headers", "Content-Type"},
    });
    server.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) {
      res.status = 204;
    });

    server.Get("/sessions", guarded([this](const auto&, auto& res) {
      ojson arr = ojson::array();
      for (const auto& s : store.sessions()) arr.push_back(session_to_json(s));
      reply(res, 200, arr);
    }));

    server.Post(R"(/sessions/([^/]+)/query)", guarded([this](const auto& req, auto& res) {
      const std::string name = req.matches[1];
      QuerySpec q = query_spec_from_json(body_of(req), name);
      if (!q.limit) q.limit = opts.page_size;
      auto r = store.query(q);
      ojson events = ojson::array();
      for (const auto& ev : r.events) events.push_back(to_json(ev));
      ojson j;
      j["events"] = events;
      const std::size_t next = q.offset + r.events.size();
      j["next_cursor"] = next < r.total ? ojson(std::to_string(next)) : ojson(nullptr);
      j["total"] = r.total;
      reply(res, 200, j);
    }));

    server.Post(R"(/sessions/([^/]+)/aggregate)",
                guarded([this](const auto& req, auto& res) {
                  const std::string name = req.matches[1];
                  auto spec = agg_spec_from_json(body_of(req), name);
                  reply(res, 200, rows_to_json(store.aggregate(spec)));
                }));

    server.Post(R"(/sessions/([^/]+)/resolve)", guarded([this](const auto& req, auto& res) {
      const std::string name = req.matches[1];
      auto r = try_resolve_paths(store, name);
      if (!r) return error(res, 409, "resolution already running for " + name);
      ojson j = to_json(*r);
      ojson conflicts = ojson::array();
      for (const auto& c : resolution_conflicts(store, name)) conflicts.push_back(to_json(c));
      j["conflicts"] = conflicts;
      reply(res, 200, j);
    }));

    server.Get(R"(/sessions/([^/]+)/findings/([^/]+))",
               guarded([this](const auto& req, auto& res) {
                 const std::string name = req.matches[1];
                 const std::string detector = req.matches[2];
                 store.session(name);
                 if (detector == "stale-offset") {
                   reply(res, 200, to_json(detect_stale_offset_reads(store, name)));
                 } else if (detector == "contention") {
                   auto p = contention_params(req);
                   ojson arr = ojson::array();
                   for (const auto& c : contention_report(store, name, p))
                     arr.push_back(to_json(c));
                   ojson j;
                   j["findings"] = arr;
                   j["warning"] = nullptr;
                   reply(res, 200, j);
                 } else {
                   error(res, 404, "unknown detector: " + detector);
                 }
               }));

    server.Get(R"(/sessions/([^/]+)/summary)", guarded([this](const auto& req, auto& res) {
      reply(res, 200, to_json(session_summary(store, req.matches[1])));
    }));

    if (!opts.static_dir.empty()) server.set_mount_point("/", opts.static_dir);
  }

  static ContentionParams contention_params(const httplib::Request& req) {
    ContentionParams p;
    if (req.has_param("bucket")) {
      auto d = parse_duration_ns(req.get_param_value("bucket"));
      if (!d || *d <= 0) throw MalformedSpec("bad bucket width");
      p.bucket_ns = *d;
    }
    auto number = [&](const char* key) {
      const auto v = req.get_param_value(key);
      try {
        std::size_t used = 0;
        double d = std::stod(v, &used);
        if (used == v.size()) return d;
      } catch (...) {
      }
      throw MalformedSpec(std::string("bad value for ") + key + ": '" + v + "'");
    };
    if (req.has_param("k")) {
      const double k = number("k");
      if (k < 1 || k != static_cast<double>(static_cast<std::size_t>(k)))
        throw MalformedSpec("k must be a positive integer");
      p.k_threshold = static_cast<std::size_t>(k);
    }
    if (req.has_param("dip")) p.dip_threshold = number("dip");
    if (req.has_param("background")) p.background = req.get_param_value("background");
    if (req.has_param("foreground")) p.foreground = req.get_param_value("foreground");
    return p;
  }
};

ApiServer::ApiServer(Store& store, ApiOptions options)
    : impl_(std::make_unique<Impl>(store, std::move(options))) {}

ApiServer::~ApiServer() { stop(); }

int ApiServer::bind() {
  if (impl_->bound) return impl_->port;
  if (impl_->opts.port == 0) {
    impl_->port = impl_->server.bind_to_any_port(impl_->opts.host);
    if (impl_->port < 0) throw Error("cannot bind " + impl_->opts.host);
  } else {
    if (!impl_->server.bind_to_port(impl_->opts.host, impl_->opts.port))
      throw Error("cannot listen on " + impl_->opts.host + ":" +
                  std::to_string(impl_->opts.port) + " (port in use?)");
    impl_->port = impl_->opts.port;
  }
  impl_->bound = true;
  return impl_->port;
}

void ApiServer::run() {
  bind();
  impl_->server.listen_after_bind();
}

int ApiServer::start() {
  const int port = bind();
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return port;
}

void ApiServer::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace iodiag
