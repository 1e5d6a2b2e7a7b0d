#include "arena/service.hpp"

#include <httplib.h>

#include <atomic>
#include <condition_variable>
#include <cstdio>
#include <deque>
#include <map>
#include <mutex>
#include <thread>

#include "arena/agent.hpp"
#include "arena/config.hpp"
#include "arena/dreamer.hpp"
#include "arena/errors.hpp"
#include "arena/eval.hpp"
#include "arena/orchestrator.hpp"
#include "json_util.hpp"

#ifndef ARENA_VERSION
#define ARENA_VERSION "0.0.0"
#endif

namespace arena {

using detail::json;

namespace {

void configure_timeouts(httplib::Client& cli, int timeout_ms) {
  const auto d = std::chrono::milliseconds(timeout_ms);
  cli.set_connection_timeout(d);
  cli.set_read_timeout(d);
  cli.set_write_timeout(d);
}

}  // namespace

std::string http_post(const std::string& base_url, const std::string& path,
                      const std::string& body, int timeout_ms) {
  httplib::Client cli(base_url);
  if (!cli.is_valid()) throw TransportError("invalid endpoint '" + base_url + "'", true);
  configure_timeouts(cli, timeout_ms);
  auto res = cli.Post(path, body, "application/json");
  if (!res) {
    throw TransportError("POST " + base_url + path + " failed: " +
                             httplib::to_string(res.error()),
                         true);
  }
  if (res->status < 200 || res->status >= 300) {
    throw ProtocolError("POST " + base_url + path + " returned status " +
                        std::to_string(res->status) + ": " + res->body);
  }
  return res->body;
}

std::pair<int, std::string> http_get(const std::string& base_url,
                                     const std::string& path, int timeout_ms) {
  httplib::Client cli(base_url);
  if (!cli.is_valid()) throw TransportError("invalid endpoint '" + base_url + "'", true);
  configure_timeouts(cli, timeout_ms);
  auto res = cli.Get(path);
  if (!res) {
    throw TransportError("GET " + base_url + path + " failed: " +
                             httplib::to_string(res.error()),
                         true);
  }
  return {res->status, res->body};
}

// ---------------------------------------------------------------------------
// Episode service state

namespace {

struct EpisodeEntry {
  std::string status = "queued";  // queued, running, finished, failed
  SimulationConfig config;
  std::string report;  // EvalReport JSON once finished
  std::string log;
  std::string error;
};

class EpisodeQueue {
 public:
  explicit EpisodeQueue(int workers) {
    for (int i = 0; i < std::max(1, workers); ++i) {
      threads_.emplace_back([this] { work(); });
    }
  }
  ~EpisodeQueue() {
    {
      std::lock_guard lock(mu_);
      stopping_ = true;
      cancel_ = true;
    }
    cv_.notify_all();
    for (auto& t : threads_) t.join();
  }

  std::string submit(SimulationConfig config) {
    std::lock_guard lock(mu_);
    char id[32];
    std::snprintf(id, sizeof id, "ep-%06zu", ++counter_);
    entries_[id].config = std::move(config);
    pending_.push_back(id);
    cv_.notify_one();
    return id;
  }

  std::optional<EpisodeEntry> snapshot(const std::string& id) {
    std::lock_guard lock(mu_);
    auto it = entries_.find(id);
    if (it == entries_.end()) return std::nullopt;
    return it->second;
  }

 private:
  void work() {
    for (;;) {
      std::string id;
      SimulationConfig config;
      {
        std::unique_lock lock(mu_);
        cv_.wait(lock, [&] { return stopping_ || !pending_.empty(); });
        if (stopping_) return;
        id = pending_.front();
        pending_.pop_front();
        entries_[id].status = "running";
        config = entries_[id].config;
      }
      RunOptions options;
      options.episode_id = id;
      options.cancel = &cancel_;
      EpisodeEntry done;
      try {
        EpisodeResult r = run_episode(config, options);
        done.status = "finished";
        done.report = report_json(r.report);
        done.log = std::move(r.log_text);
      } catch (const std::exception& e) {
        done.status = "failed";
        done.error = e.what();
      }
      std::lock_guard lock(mu_);
      auto& entry = entries_[id];
      entry.status = done.status;
      entry.report = std::move(done.report);
      entry.log = std::move(done.log);
      entry.error = std::move(done.error);
    }
  }

  std::mutex mu_;
  std::condition_variable cv_;
  std::map<std::string, EpisodeEntry> entries_;
  std::deque<std::string> pending_;
  std::vector<std::thread> threads_;
  std::atomic<bool> cancel_{false};
  bool stopping_ = false;
  std::size_t counter_ = 0;
};

void reply_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void install_episode_routes(httplib::Server& svr, EpisodeQueue& queue) {
  svr.Get("/healthz", [](const httplib::Request&, httplib::Response& res) {
    reply_json(res, 200,
               {{"status", "ok"},
                {"version", ARENA_VERSION},
                {"protocol_version", std::string(kProtocolVersion)}});
  });
  svr.Post("/episodes", [&queue](const httplib::Request& req, httplib::Response& res) {
    try {
      SimulationConfig config = parse_config(req.body);
      const std::string id = queue.submit(std::move(config));
      reply_json(res, 202, {{"id", id}, {"status", "queued"}});
    } catch (const ValidationError& e) {
      reply_json(res, 422,
                 {{"error", "validation"}, {"field", e.field()}, {"detail", e.what()}});
    } catch (const std::exception& e) {
      reply_json(res, 422, {{"error", "validation"}, {"field", ""}, {"detail", e.what()}});
    }
  });
  svr.Get(R"(/episodes/([^/]+))", [&queue](const httplib::Request& req,
                                           httplib::Response& res) {
    auto entry = queue.snapshot(req.matches[1]);
    if (!entry) {
      reply_json(res, 404, {{"error", "not_found"}});
      return;
    }
    json body{{"id", std::string(req.matches[1])}, {"status", entry->status}};
    if (!entry->report.empty()) {
      body["report"] = json::parse(entry->report);
      body["termination"] = body["report"]["termination"]["kind"];
    }
    if (!entry->error.empty()) body["error"] = entry->error;
    reply_json(res, 200, body);
  });
  svr.Get(R"(/episodes/([^/]+)/log)", [&queue](const httplib::Request& req,
                                               httplib::Response& res) {
    auto entry = queue.snapshot(req.matches[1]);
    if (!entry) {
      reply_json(res, 404, {{"error", "not_found"}});
    } else if (entry->status != "finished") {
      reply_json(res, 409, {{"error", "not_finished"}, {"status", entry->status}});
    } else {
      res.status = 200;
      res.set_content(entry->log, "application/x-ndjson");
    }
  });
}

/// Maps handler failures onto status codes shared by /dream and /plan.
void install_post(httplib::Server& svr, const std::string& path,
                  std::function<std::string(std::string_view)> handler) {
  svr.Post(path, [handler = std::move(handler)](const httplib::Request& req,
                                                httplib::Response& res) {
    try {
      res.set_content(handler(req.body), "application/json");
      res.status = 200;
    } catch (const ProtocolError& e) {
      reply_json(res, 400, {{"error", "protocol"}, {"detail", e.what()}});
    } catch (const std::exception& e) {
      reply_json(res, 500, {{"error", "internal"}, {"detail", e.what()}});
    }
  });
}

}  // namespace

// ---------------------------------------------------------------------------
// BackgroundServer

struct BackgroundServer::Impl {
  httplib::Server server;
  std::unique_ptr<EpisodeQueue> queue;
  std::thread thread;
  std::string host;
  int port = 0;
  bool stopped = false;

  void start(const ServiceOptions& options) {
    host = options.host;
    if (options.port == 0) {
      port = server.bind_to_any_port(host);
    } else {
      port = server.bind_to_port(host, options.port) ? options.port : -1;
    }
    if (port <= 0) {
      throw TransportError("cannot bind " + host + ":" + std::to_string(options.port),
                           true);
    }
    thread = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }
};

BackgroundServer::BackgroundServer(std::unique_ptr<Impl> impl) : impl_(std::move(impl)) {}

BackgroundServer::~BackgroundServer() { stop(); }

int BackgroundServer::port() const { return impl_->port; }

std::string BackgroundServer::url() const {
  return "http://" + impl_->host + ":" + std::to_string(impl_->port);
}

void BackgroundServer::wait() {
  if (impl_->thread.joinable()) impl_->thread.join();
}

void BackgroundServer::stop() {
  if (!impl_ || impl_->stopped) return;
  impl_->stopped = true;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
  impl_->queue.reset();
}

std::unique_ptr<BackgroundServer> BackgroundServer::episode_service(
    const ServiceOptions& options) {
  auto impl = std::make_unique<Impl>();
  impl->queue = std::make_unique<EpisodeQueue>(options.workers);
  install_episode_routes(impl->server, *impl->queue);
  impl->start(options);
  return std::unique_ptr<BackgroundServer>(new BackgroundServer(std::move(impl)));
}

std::unique_ptr<BackgroundServer> BackgroundServer::dreamer(
    const ServiceOptions& options) {
  return custom(options, "/dream", [](std::string_view body) {
    return handle_dream_body(body);
  });
}

std::unique_ptr<BackgroundServer> BackgroundServer::agent(
    const ServiceOptions& options, const std::string& kind) {
  const AgentKind k = agent_kind_from_string(kind);
  if (k != AgentKind::kConstantVelocity && k != AgentKind::kHardLeft) {
    throw ValidationError("agent.kind", "only constant_velocity and hard_left can be served");
  }
  return custom(options, "/plan", [k](std::string_view body) {
    return handle_plan_body(body, k);
  });
}

std::unique_ptr<BackgroundServer> BackgroundServer::custom(
    const ServiceOptions& options, const std::string& path,
    std::function<std::string(std::string_view)> handler) {
  auto impl = std::make_unique<Impl>();
  impl->server.Get("/healthz", [](const httplib::Request&, httplib::Response& res) {
    reply_json(res, 200, {{"status", "ok"}, {"version", ARENA_VERSION}});
  });
  install_post(impl->server, path, std::move(handler));
  impl->start(options);
  return std::unique_ptr<BackgroundServer>(new BackgroundServer(std::move(impl)));
}

}  // namespace arena
