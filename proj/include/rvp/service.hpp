#pragma once

#include <algorithm>
#include <cmath>
#include <condition_variable>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "httplib.h"
#include "json.hpp"
#include "rvp/config.hpp"
#include "rvp/report.hpp"
#include "rvp/version.hpp"

namespace rvp {

struct ServiceOptions {
  // Analyses estimated above this many scenario evaluations run as jobs.
  double job_threshold_cells = 200.0;
  std::size_t job_workers = 2;    // concurrent jobs
  std::size_t sweep_workers = 1;  // workers inside one analysis
  std::size_t cache_entries = 256;
};

struct Response {
  int status = 200;
  std::string body;
};

/// HTTP facade over the engine. Datasets are immutable once uploaded; every
/// analysis goes through the same run_analysis as the CLI. Handlers can be
/// called directly or mounted on an httplib server with install().
class Service {
 public:
  explicit Service(ServiceOptions opt = {}) : opt_(opt) {
    const std::size_t n = std::max<std::size_t>(1, opt_.job_workers);
    for (std::size_t i = 0; i < n; ++i) workers_.emplace_back([this](std::stop_token st) { work(st); });
  }

  ~Service() {
    for (auto& w : workers_) w.request_stop();
    queue_cv_.notify_all();
  }

  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  const ServiceOptions& options() const { return opt_; }

  Response health() const {
    return ok({{"status", "ok"}, {"engine_version", kEngineVersion}, {"schema_version", kSchemaVersion}});
  }

  /// POST /datasets with {"content": "<delimited text>", "schema": {...}}.
  Response upload_dataset_json(const std::string& body) {
    Json j;
    try {
      j = Json::parse(body);
    } catch (const Json::parse_error& e) {
      return error(400, "ConfigError", "Config", std::string("body is not JSON: ") + e.what());
    }
    if (!j.is_object() || !j.contains("content") || !j["content"].is_string())
      return error(400, "ConfigError", "Config", "body needs a string field 'content'");
    return upload_dataset(j["content"].get<std::string>(), j.contains("schema") ? j["schema"] : Json::object());
  }

  Response upload_dataset(const std::string& content, const Json& schema_json) {
    try {
      const Schema schema = schema_from_json(detail::Field(schema_json, "schema"));
      std::istringstream in(content);
      auto pop = std::make_shared<const Population>(load_population(in, schema));
      Json summary = dataset_summary(*pop);
      summary["sha256"] = sha256_hex(content);
      std::lock_guard lock(mu_);
      const std::string id = "ds-" + std::to_string(++dataset_counter_);
      summary["id"] = id;
      datasets_[id] = {pop, summary};
      return ok(summary);
    } catch (const Error& e) {
      return from_error(e, 400);
    }
  }

  Response get_dataset(const std::string& id) const {
    std::lock_guard lock(mu_);
    auto it = datasets_.find(id);
    if (it == datasets_.end()) return error(404, "NotFound", "Config", "unknown dataset '" + id + "'");
    return ok(it->second.summary);
  }

  /// POST /evaluate, /curve, /break-even, /equivalent-cost, /ratio-grid,
  /// /optimize. The body is a scenario document whose data block names an
  /// uploaded dataset; the analysis kind is fixed by the endpoint.
  Response analyze(AnalysisSpec::Kind kind, const std::string& body) {
    Json doc;
    try {
      doc = Json::parse(body, nullptr, true, true);
    } catch (const Json::parse_error& e) {
      return error(400, "ConfigError", "Config", std::string("body is not JSON: ") + e.what());
    }
    if (!doc.is_object()) return error(400, "ConfigError", "Config", "body must be an object");
    if (!doc.contains("analysis")) {
      if (kind != AnalysisSpec::Kind::Evaluate)
        return error(422, "ConfigError", "Config", "analysis: required field is missing", "analysis");
      doc["analysis"] = {{"kind", "evaluate"}};
    }
    if (!doc["analysis"].is_object()) return error(422, "ConfigError", "Config", "analysis: expected an object", "analysis");
    auto& a = doc["analysis"];
    if (!a.contains("kind")) a["kind"] = to_string(kind);
    if (a["kind"] != to_string(kind))
      return error(422, "ConfigError", "Config",
                   "analysis.kind: endpoint runs " + std::string(to_string(kind)) + " analyses", "analysis.kind");
    if (doc.contains("data") && doc["data"].is_object() && doc["data"].contains("dataset") &&
        doc["data"]["dataset"].is_string()) {
      const auto id = doc["data"]["dataset"].get<std::string>();
      std::lock_guard lock(mu_);
      if (!datasets_.count(id)) return error(404, "NotFound", "Config", "unknown dataset '" + id + "'", "data.dataset");
    }
    if (doc.contains("data") && doc["data"].is_object() && doc["data"].contains("path"))
      return error(422, "ConfigError", "Config", "data.path: the service reads uploaded datasets only", "data.path");

    std::shared_ptr<const ScenarioConfig> cfg;
    try {
      ConfigContext ctx;
      ctx.dataset = [this](const std::string& id) -> std::shared_ptr<const Population> {
        std::lock_guard lock(mu_);
        auto it = datasets_.find(id);
        return it == datasets_.end() ? nullptr : it->second.population;
      };
      cfg = std::make_shared<const ScenarioConfig>(build_config(doc, ctx));
    } catch (const Error& e) {
      return from_error(e, 422);
    }

    {
      std::lock_guard lock(mu_);
      if (auto it = cache_.find(cfg->hash); it != cache_.end()) return {200, it->second};
    }

    if (kind != AnalysisSpec::Kind::Evaluate && cfg->analysis.cell_count() > opt_.job_threshold_cells) {
      std::lock_guard lock(mu_);
      const std::string id = "job-" + std::to_string(++job_counter_);
      jobs_[id] = Job{"pending", "", Json(), cfg->hash};
      queue_.push_back({id, cfg});
      queue_cv_.notify_one();
      return {202, Json({{"job_id", id}, {"status", "pending"}, {"config_hash", cfg->hash}}).dump()};
    }

    try {
      const std::string rendered = render_document(run_analysis(*cfg, opt_.sweep_workers).document);
      remember(cfg->hash, rendered);
      return {200, rendered};
    } catch (const Error& e) {
      return from_error(e, 422);
    } catch (const std::exception& e) {
      return error(500, "Internal", "Analysis", e.what());
    }
  }

  /// GET /jobs/{id}. A finished job keeps its result.
  Response get_job(const std::string& id) const {
    std::lock_guard lock(mu_);
    auto it = jobs_.find(id);
    if (it == jobs_.end()) return error(404, "NotFound", "Config", "unknown job '" + id + "'");
    const Job& j = it->second;
    Json out = {{"job_id", id}, {"status", j.status}, {"config_hash", j.config_hash}};
    if (j.status == "done") out["result"] = Json::parse(j.result);
    if (j.status == "failed") out["error"] = j.error;
    return ok(out);
  }

  void install(httplib::Server& srv) {
    auto send = [](httplib::Response& res, const Response& r) {
      res.status = r.status;
      res.set_content(r.body, "application/json");
    };
    srv.Get("/health", [this, send](const httplib::Request&, httplib::Response& res) { send(res, health()); });
    srv.Post("/datasets", [this, send](const httplib::Request& req, httplib::Response& res) {
      if (req.is_multipart_form_data()) {
        if (!req.has_file("file")) {
          send(res, error(400, "ConfigError", "Config", "multipart upload needs a 'file' part"));
          return;
        }
        Json schema = Json::object();
        if (req.has_file("schema")) {
          try {
            schema = Json::parse(req.get_file_value("schema").content);
          } catch (const Json::parse_error& e) {
            send(res, error(400, "ConfigError", "Config", std::string("schema is not JSON: ") + e.what(), "schema"));
            return;
          }
        }
        send(res, upload_dataset(req.get_file_value("file").content, schema));
      } else {
        send(res, upload_dataset_json(req.body));
      }
    });
    srv.Get(R"(/datasets/([^/]+))", [this, send](const httplib::Request& req, httplib::Response& res) {
      send(res, get_dataset(req.matches[1]));
    });
    srv.Get(R"(/jobs/([^/]+))", [this, send](const httplib::Request& req, httplib::Response& res) {
      send(res, get_job(req.matches[1]));
    });
    const std::pair<const char*, AnalysisSpec::Kind> routes[] = {
        {"/evaluate", AnalysisSpec::Kind::Evaluate},     {"/curve", AnalysisSpec::Kind::Curve},
        {"/break-even", AnalysisSpec::Kind::BreakEven},  {"/equivalent-cost", AnalysisSpec::Kind::EquivalentCost},
        {"/ratio-grid", AnalysisSpec::Kind::RatioGrid},  {"/optimize", AnalysisSpec::Kind::Optimize}};
    for (const auto& [path, kind] : routes) {
      srv.Post(path, [this, send, kind = kind](const httplib::Request& req, httplib::Response& res) {
        send(res, analyze(kind, req.body));
      });
    }
  }

  static Json dataset_summary(const Population& pop) {
    double lo = INFINITY, hi = -INFINITY, sum = 0.0, sq = 0.0;
    std::size_t finite = 0;
    for (double w : pop.outcomes()) {
      if (!std::isfinite(w)) continue;
      ++finite;
      lo = std::min(lo, w);
      hi = std::max(hi, w);
      sum += w;
    }
    const double mean = finite ? sum / static_cast<double>(finite) : NAN;
    for (double w : pop.outcomes())
      if (std::isfinite(w)) sq += (w - mean) * (w - mean);
    auto n = [](double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); };
    return {{"n", pop.size()},
            {"labeled", pop.labeled_count()},
            {"label_share", pop.label_share()},
            {"direction", to_string(pop.direction())},
            {"covariates", pop.attributes().covariate_names},
            {"groups", pop.attributes().group_names},
            {"outcome",
             {{"min", n(lo)},
              {"max", n(hi)},
              {"mean", n(mean)},
              {"sd", finite > 1 ? n(std::sqrt(sq / static_cast<double>(finite - 1))) : Json(nullptr)},
              {"missing", pop.size() - finite}}}};
  }

 private:
  struct Dataset {
    std::shared_ptr<const Population> population;
    Json summary;
  };
  struct Job {
    std::string status;  // pending, running, done, failed
    std::string result;
    Json error;
    std::string config_hash;
  };
  struct Task {
    std::string id;
    std::shared_ptr<const ScenarioConfig> cfg;
  };

  static Response ok(const Json& j) { return {200, j.dump()}; }

  static Json error_body(const std::string& kind, const std::string& cat, const std::string& msg,
                         const std::string& path = "") {
    Json e = {{"kind", kind}, {"category", cat}, {"message", msg}};
    if (!path.empty()) e["path"] = path;
    return e;
  }
  static Response error(int status, const std::string& kind, const std::string& cat, const std::string& msg,
                        const std::string& path = "") {
    return {status, Json({{"error", error_body(kind, cat, msg, path)}}).dump()};
  }
  static const char* category_name(ErrorKind k) {
    switch (category(k)) {
      case ErrorCategory::Config: return "Config";
      case ErrorCategory::Data: return "Data";
      case ErrorCategory::Analysis: return "Analysis";
    }
    return "Analysis";
  }
  static Json error_json(const Error& e) {
    Json body = error_body(to_string(e.kind()), category_name(e.kind()), e.what());
    if (const auto* c = dynamic_cast<const ConfigError*>(&e)) body["path"] = c->path();
    if (const auto* r = dynamic_cast<const RowError*>(&e)) body["row"] = r->row();
    return body;
  }
  // Data errors are malformed input (400); everything else is a well-formed
  // request the engine rejects (422 unless `fallback` says otherwise).
  static Response from_error(const Error& e, int fallback) {
    const int status = category(e.kind()) == ErrorCategory::Data ? 400 : fallback;
    return {status, Json({{"error", error_json(e)}}).dump()};
  }

  void remember(const std::string& hash, const std::string& rendered) {
    std::lock_guard lock(mu_);
    if (cache_.size() >= opt_.cache_entries && !cache_.count(hash)) {
      cache_.erase(cache_order_.front());
      cache_order_.pop_front();
    }
    if (cache_.emplace(hash, rendered).second) cache_order_.push_back(hash);
  }

  void work(std::stop_token st) {
    while (true) {
      Task task;
      {
        std::unique_lock lock(mu_);
        queue_cv_.wait(lock, st, [this] { return !queue_.empty(); });
        if (st.stop_requested()) return;
        task = std::move(queue_.front());
        queue_.pop_front();
        jobs_[task.id].status = "running";
      }
      Job done;
      done.config_hash = task.cfg->hash;
      try {
        done.result = render_document(run_analysis(*task.cfg, opt_.sweep_workers).document);
        done.status = "done";
        remember(task.cfg->hash, done.result);
      } catch (const Error& e) {
        done.status = "failed";
        done.error = error_json(e);
      } catch (const std::exception& e) {
        done.status = "failed";
        done.error = error_body("Internal", "Analysis", e.what());
      }
      std::lock_guard lock(mu_);
      jobs_[task.id] = std::move(done);
    }
  }

  ServiceOptions opt_;
  mutable std::mutex mu_;
  std::condition_variable_any queue_cv_;
  std::map<std::string, Dataset> datasets_;
  std::map<std::string, std::string> cache_;
  std::deque<std::string> cache_order_;
  std::map<std::string, Job> jobs_;
  std::deque<Task> queue_;
  std::size_t dataset_counter_ = 0;
  std::size_t job_counter_ = 0;
  std::vector<std::jthread> workers_;  // last member: joined before the rest is destroyed
};

/// Blocks serving HTTP until the server is stopped.
inline bool serve(Service& service, const std::string& host, int port) {
  httplib::Server srv;
  service.install(srv);
  return srv.listen(host, port);
}

}  // namespace rvp
