#include <cmath>
#include <csignal>
#include <cstdio>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "o4d/binary_io.hpp"
#include "o4d/errors.hpp"
#include "o4d/eval_metrics.hpp"
#include "o4d/fixture.hpp"
#include "o4d/http_service.hpp"
#include "o4d/pipeline_service.hpp"
#include "o4d/proposal_engine.hpp"
#include "o4d/scene_model.hpp"
#include "o4d/splat_renderer.hpp"

namespace {

using nlohmann::json;

std::vector<std::string> split_prompts(const std::string& csv) {
  std::vector<std::string> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    out.push_back(b == std::string::npos ? std::string() : item.substr(b, e - b + 1));
  }
  return out;
}

json metrics_json(const o4d::SegmentationMetrics& m, const std::vector<std::string>& classes) {
  json j{{"OA", m.overall_accuracy}, {"mAcc", m.mean_class_accuracy}, {"mIoU", m.mean_iou}};
  if (!m.class_iou.empty()) {
    json per = json::object();
    for (std::size_t c = 0; c < classes.size(); ++c) {
      if (std::isnan(m.class_iou[c])) continue;
      per[classes[c]] = {{"acc", m.class_accuracy[c]}, {"iou", m.class_iou[c]}};
    }
    j["classes"] = per;
  }
  return j;
}

o4d::PromptService* g_service = nullptr;

void on_signal(int) {
  if (g_service) g_service->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"4D open-vocabulary segmentation fusion"};
  app.require_subcommand(1);

  std::string manifest, config_path, out, asset_path, prompts, pred, gt, bind, scenario, dir;
  double tau = std::nan("");
  int points_per_part = 1800;

  auto* build = app.add_subcommand("build", "Precompute a fused asset");
  build->add_option("--manifest", manifest)->required();
  build->add_option("--config", config_path);
  build->add_option("--out", out)->required();

  auto* query = app.add_subcommand("query", "Label every frame for a prompt list");
  query->add_option("--asset", asset_path)->required();
  query->add_option("--prompts", prompts, "comma-separated class prompts")->required();
  query->add_option("--tau", tau);
  query->add_option("--out", out)->required();

  auto* eval = app.add_subcommand("eval", "Compare a label file against ground truth");
  eval->add_option("--pred", pred)->required();
  eval->add_option("--gt", gt)->required();

  auto* serve = app.add_subcommand("serve", "Serve prompt queries over HTTP");
  serve->add_option("--asset", asset_path)->required();
  serve->add_option("--bind", bind)->default_val("127.0.0.1:8080");

  auto* fixture = app.add_subcommand("fixture", "Write a synthetic scene with ground truth");
  fixture->add_option("--scenario", scenario)->required();
  fixture->add_option("--out", dir)->required();
  fixture->add_option("--points-per-part", points_per_part);

  auto* export_tracks = app.add_subcommand("export-tracks", "Write oracle tracks to a file");
  export_tracks->add_option("--manifest", manifest)->required();
  export_tracks->add_option("--config", config_path);
  export_tracks->add_option("--out", out)->required();

  auto* render = app.add_subcommand("render", "Dump the rendered grid as PNGs");
  render->add_option("--manifest", manifest)->required();
  render->add_option("--config", config_path);
  render->add_option("--out", dir)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    const auto config = [&] {
      return config_path.empty() ? o4d::PipelineConfig{} : o4d::load_config(config_path);
    };

    if (*build) {
      const auto asset = o4d::build_asset(manifest, config(), std::filesystem::path(out));
      json timings = json::object();
      for (const auto& t : asset.timings) timings[t.stage] = t.milliseconds;
      std::size_t masks = 0;
      for (const auto& f : asset.frames) masks += f.masks.size();
      std::cout << json{{"asset", out},
                        {"T", asset.num_frames},
                        {"V", asset.num_views},
                        {"D", asset.dim},
                        {"masks", masks},
                        {"content_hash", asset.content_hash},
                        {"build_ms", asset.build_milliseconds()},
                        {"stages_ms", timings}}
                       .dump(2)
                << "\n";
    } else if (*query) {
      const auto asset = o4d::load_fused_asset(asset_path);
      const double t = std::isnan(tau) ? asset.config().tau : tau;
      const auto result = o4d::query(asset, split_prompts(prompts), t);
      o4d::write_label_file(out, result.label_file());
      std::cout << json{{"labels", out}, {"classes", result.classes}, {"query_ms", result.query_ms}}
                       .dump(2)
                << "\n";
    } else if (*eval) {
      const auto report = o4d::evaluate(o4d::read_label_file(pred), o4d::read_label_file(gt));
      json frames = json::array();
      for (const auto& f : report.frames) frames.push_back(metrics_json(f, report.classes));
      std::cout << json{{"pooled", metrics_json(report.pooled, report.classes)},
                        {"per_frame_mean", metrics_json(report.per_frame_mean, report.classes)},
                        {"frames", frames}}
                       .dump(2)
                << "\n";
    } else if (*serve) {
      const auto asset = o4d::load_fused_asset(asset_path);
      const auto [host, port] = o4d::parse_bind_address(bind);
      o4d::PromptService service(asset);
      const int bound = service.bind(host, port);
      g_service = &service;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::cout << "listening on " << host << ":" << bound << std::endl;
      service.listen();
      g_service = nullptr;
    } else if (*fixture) {
      o4d::FixtureOptions options;
      options.points_per_part = points_per_part;
      const auto scene = o4d::make_fixture(scenario, options);
      const auto path = o4d::write_fixture(scene, dir);
      std::size_t points = 0;
      for (const auto& f : scene.frames) points += f.point_count();
      std::cout << json{{"manifest", path.string()},
                        {"T", scene.frames.size()},
                        {"V", scene.cameras.size()},
                        {"points", points}}
                       .dump(2)
                << "\n";
    } else if (*export_tracks) {
      const auto cfg = config();
      const auto asset = o4d::load_sequence(manifest, cfg.splat);
      o4d::export_tracks(o4d::oracle_tracks(asset, {cfg.granularity, cfg.lost_cells}), out);
    } else if (*render) {
      const auto asset = o4d::load_sequence(manifest, config().splat);
      for (int t = 0; t < asset.num_frames(); ++t) {
        for (int v = 0; v < asset.num_views(); ++v) {
          char name[64];
          std::snprintf(name, sizeof(name), "t%03d_v%02d", t, v);
          const std::filesystem::path base = std::filesystem::path(dir) / name;
          std::filesystem::create_directories(dir);
          o4d::write_png_image(base.string() + "_rgb.png", asset.view(t, v));
          o4d::write_png_silhouette(base.string() + "_mask.png", asset.view(t, v));
        }
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
