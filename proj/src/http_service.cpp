#include "o4d/http_service.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <httplib.h>
#include <json.hpp>

#include "o4d/binary_io.hpp"
#include "o4d/errors.hpp"

namespace o4d {

using nlohmann::json;

struct PromptService::Impl {
  explicit Impl(const FusedAsset& a) : asset(a), engine(a) {}

  const FusedAsset& asset;
  QueryEngine engine;
  httplib::Server server;
};

PromptService::PromptService(const FusedAsset& asset) : impl_(std::make_unique<Impl>(asset)) {
  auto& srv = impl_->server;
  srv.Get("/meta", [this](const httplib::Request&, httplib::Response& res) {
    res.set_content(meta_json(), "application/json");
  });
  srv.Get(R"(/frame/(-?\d+)/points)", [this](const httplib::Request& req, httplib::Response& res) {
    try {
      res.set_content(frame_points(std::stoi(req.matches[1].str())), "application/octet-stream");
    } catch (const std::exception& e) {
      res.status = 400;
      res.set_content(json{{"error", e.what()}}.dump(), "application/json");
    }
  });
  srv.Post("/query", [this](const httplib::Request& req, httplib::Response& res) {
    try {
      res.set_content(query_json(req.body), "application/json");
    } catch (const std::exception& e) {
      res.status = 400;
      res.set_content(json{{"error", e.what()}}.dump(), "application/json");
    }
  });
}

PromptService::~PromptService() { stop(); }

int PromptService::bind(const std::string& host, int port) {
  int bound = -1;
  if (port == 0) {
    bound = impl_->server.bind_to_any_port(host);
  } else if (impl_->server.bind_to_port(host, port)) {
    bound = port;
  }
  if (bound <= 0) throw Error("cannot bind " + host + ":" + std::to_string(port));
  return bound;
}

void PromptService::listen() { impl_->server.listen_after_bind(); }

void PromptService::stop() {
  if (impl_ && impl_->server.is_running()) impl_->server.stop();
}

std::string PromptService::meta_json() const {
  const auto& a = impl_->asset;
  json counts = json::array();
  for (const auto& f : a.frames) counts.push_back(f.point_count);
  return json{{"T", a.num_frames},
              {"V", a.num_views},
              {"D", a.dim},
              {"frame_point_counts", counts},
              {"part_names", a.part_names},
              {"content_hash", a.content_hash},
              {"config", json::parse(a.config_json)}}
      .dump();
}

std::string PromptService::frame_points(int t) const {
  const auto& a = impl_->asset;
  if (t < 0 || t >= a.num_frames) throw ValidationError("frame " + std::to_string(t) + " out of range");
  const auto& pts = a.points[static_cast<std::size_t>(t)];
  ByteWriter out;
  for (std::size_t i = 0; i < pts.positions.size(); ++i) {
    out.put_array(std::span<const float>(pts.positions[i]));
    out.put_array(std::span<const float>(pts.colors[i]));
  }
  return out.take();
}

std::string PromptService::query_json(const std::string& body) const {
  json req;
  try {
    req = json::parse(body);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed JSON: ") + e.what());
  }
  if (!req.is_object() || !req.contains("prompts") || !req["prompts"].is_array()) {
    throw ValidationError("body must be {\"prompts\": [string], \"tau\": number}");
  }
  std::vector<std::string> prompts;
  for (const auto& p : req["prompts"]) {
    if (!p.is_string()) throw ValidationError("prompts must be strings");
    prompts.push_back(p.get<std::string>());
  }
  double tau = impl_->asset.config().tau;
  if (req.contains("tau")) {
    if (!req["tau"].is_number()) throw ValidationError("tau must be a number");
    tau = req["tau"].get<double>();
  }
  if (!std::isfinite(tau)) throw ValidationError("tau must be finite");

  const QueryResult result = impl_->engine.run(prompts, tau);
  json frames = json::array();
  for (const auto& f : result.frames) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    double sum = 0.0;
    for (double s : f.scores) {
      lo = std::min(lo, s);
      hi = std::max(hi, s);
      sum += s;
    }
    json scores = f.scores.empty()
                      ? json{{"min", nullptr}, {"max", nullptr}, {"mean", nullptr}}
                      : json{{"min", lo}, {"max", hi}, {"mean", sum / static_cast<double>(f.scores.size())}};
    ByteWriter labels;
    labels.put_array(std::span<const std::uint16_t>(f.labels));
    frames.push_back({{"t", f.frame},
                      {"labels", base64_encode(labels.bytes())},
                      {"scores", scores}});
  }
  return json{{"classes", result.classes}, {"frames", frames}, {"query_ms", result.query_ms}}.dump();
}

std::pair<std::string, int> parse_bind_address(const std::string& address) {
  const auto colon = address.rfind(':');
  if (colon == std::string::npos || colon == 0 || colon + 1 == address.size()) {
    throw ValidationError("bind address must be HOST:PORT, got '" + address + "'");
  }
  int port = 0;
  try {
    std::size_t used = 0;
    port = std::stoi(address.substr(colon + 1), &used);
    if (used != address.size() - colon - 1) throw std::invalid_argument("trailing");
  } catch (const std::exception&) {
    throw ValidationError("invalid port in '" + address + "'");
  }
  if (port < 0 || port > 65535) throw ValidationError("port out of range in '" + address + "'");
  return {address.substr(0, colon), port};
}

}  // namespace o4d
