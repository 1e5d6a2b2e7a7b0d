#pragma once

#include <functional>
#include <memory>
#include <string>
#include <string_view>

namespace arena {

/// One POST of a JSON body to `base_url` + `path` (base like
/// http://127.0.0.1:8101). No retries. Connection failures and timeouts
/// throw TransportError; a status outside 2xx throws ProtocolError carrying
/// the status and body.
std::string http_post(const std::string& base_url, const std::string& path,
                      const std::string& body, int timeout_ms);

/// Plain GET returning (status, body); throws TransportError when the
/// server cannot be reached.
std::pair<int, std::string> http_get(const std::string& base_url,
                                     const std::string& path, int timeout_ms);

struct ServiceOptions {
  std::string host = "127.0.0.1";
  int port = 8100;  // 0 picks a free port
  int workers = 1;  // episodes run concurrently, each one sequential
};

/// A running HTTP server on a background thread. Stops on destruction.
class BackgroundServer {
 public:
  /// The simulation service: POST /episodes, GET /episodes/{id},
  /// GET /episodes/{id}/log, GET /healthz.
  static std::unique_ptr<BackgroundServer> episode_service(
      const ServiceOptions& options);
  /// POST /dream answered by the builtin synthetic renderer.
  static std::unique_ptr<BackgroundServer> dreamer(const ServiceOptions& options);
  /// POST /plan answered by a builtin agent (constant_velocity or
  /// hard_left; the rule-based agent needs the world and is not served).
  static std::unique_ptr<BackgroundServer> agent(const ServiceOptions& options,
                                                 const std::string& kind);
  /// POST `path` answered by an arbitrary handler; used to stage faulty
  /// remote peers in tests.
  static std::unique_ptr<BackgroundServer> custom(
      const ServiceOptions& options, const std::string& path,
      std::function<std::string(std::string_view)> handler);

  ~BackgroundServer();
  BackgroundServer(const BackgroundServer&) = delete;
  BackgroundServer& operator=(const BackgroundServer&) = delete;

  int port() const;
  std::string url() const;
  /// Blocks until the server stops (used by the CLI `serve` commands).
  void wait();
  void stop();

  struct Impl;

 private:
  explicit BackgroundServer(std::unique_ptr<Impl> impl);
  std::unique_ptr<Impl> impl_;
};

}  // namespace arena
