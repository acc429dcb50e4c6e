#pragma once

#include <memory>
#include <string>

#include "o4d/pipeline_service.hpp"

namespace o4d {

// HTTP/JSON front end over one fused asset:
//   GET  /meta              T, V, D, per-frame point counts, config
//   GET  /frame/{t}/points  P_t x (x, y, z, r, g, b) little-endian f32
//   POST /query             {"prompts": [...], "tau": x} -> base64 u16 labels
// The asset is never mutated; requests are served concurrently.
class PromptService {
 public:
  explicit PromptService(const FusedAsset& asset);
  ~PromptService();
  PromptService(const PromptService&) = delete;
  PromptService& operator=(const PromptService&) = delete;

  // Binds host:port (port 0 picks a free one) and returns the bound port.
  // Throws Error when binding fails.
  int bind(const std::string& host, int port);
  // Blocks until stop() is called.
  void listen();
  void stop();

  // Request handlers, usable without a socket.
  std::string meta_json() const;
  std::string frame_points(int t) const;
  // Throws ValidationError / UnknownPromptError on bad requests.
  std::string query_json(const std::string& body) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// Parses "HOST:PORT".
std::pair<std::string, int> parse_bind_address(const std::string& address);

}  // namespace o4d
