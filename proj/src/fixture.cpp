#include "o4d/fixture.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <unordered_set>

#include <json.hpp>

#include "o4d/binary_io.hpp"
#include "o4d/errors.hpp"
#include "o4d/fusion_4d.hpp"
#include "o4d/mask_validation.hpp"
#include "o4d/open_vocab_classifier.hpp"
#include "o4d/proposal_engine.hpp"
#include "o4d/scene_model.hpp"
#include "o4d/splat_renderer.hpp"

namespace o4d {

using nlohmann::json;

namespace {

constexpr double kCameraRadius = 3.0;
constexpr double kFocal = 700.0;
constexpr int kViews = 4;
constexpr int kFrames = 5;

struct Blob {
  int part;
  Vec3d center;
  double radius;
  Vec3f color;
};

Vec3d cross(const Vec3d& a, const Vec3d& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}

Vec3d normalized(const Vec3d& a) {
  const double n = std::sqrt(a[0] * a[0] + a[1] * a[1] + a[2] * a[2]);
  return {a[0] / n, a[1] / n, a[2] / n};
}

Camera orbit_camera(int view, int size) {
  const double phi = 2.0 * std::numbers::pi * view / kViews;
  const Vec3d center{kCameraRadius * std::sin(phi), 0.0, kCameraRadius * std::cos(phi)};
  const Vec3d forward = normalized({-center[0], -center[1], -center[2]});
  const Vec3d up{0.0, 1.0, 0.0};
  const Vec3d right = normalized(cross(forward, up));
  const Vec3d down = cross(forward, right);

  Camera cam;
  cam.view_index = view;
  cam.resolution = {size, size};
  const double f = kFocal * size / 512.0;
  cam.intrinsics = {f, f, size / 2.0, size / 2.0};
  auto& r = cam.extrinsics.rotation;
  for (int i = 0; i < 3; ++i) {
    r[i] = right[i];
    r[3 + i] = down[i];
    r[6 + i] = forward[i];
  }
  for (int i = 0; i < 3; ++i) {
    cam.extrinsics.translation[i] =
        -(r[3 * i] * center[0] + r[3 * i + 1] * center[1] + r[3 * i + 2] * center[2]);
  }
  return cam;
}

// Fibonacci lattice on the unit sphere.
std::vector<Vec3d> sphere_lattice(int n) {
  std::vector<Vec3d> out;
  out.reserve(static_cast<std::size_t>(n));
  const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
  for (int i = 0; i < n; ++i) {
    const double y = 1.0 - 2.0 * (i + 0.5) / n;
    const double r = std::sqrt(1.0 - y * y);
    const double a = golden * i;
    out.push_back({r * std::cos(a), y, r * std::sin(a)});
  }
  return out;
}

std::vector<Blob> blobs_at(const std::string& scenario, int t) {
  const double dy = 0.04 * t;
  const double dx = 0.02 * t;
  std::vector<Blob> out{{0, {-0.4 + dx, dy, 0.0}, 0.15, {0.85f, 0.25f, 0.2f}},
                        {1, {0.4 + dx, dy, 0.0}, 0.15, {0.2f, 0.35f, 0.85f}}};
  if (scenario == "appearing" && t >= 2) {
    out.push_back({2, {dx, 0.6 + dy, 0.1}, 0.11, {0.2f, 0.8f, 0.3f}});
  }
  return out;
}

PointCloudFrame raw_frame(const std::string& scenario, int t, int per_part) {
  PointCloudFrame frame;
  frame.frame_index = t;
  std::vector<std::int32_t> ids;
  std::vector<std::int32_t> labels;
  const auto lattice = sphere_lattice(per_part);
  for (const auto& b : blobs_at(scenario, t)) {
    const int n = b.part == 2 ? per_part / 2 : per_part;
    const auto& pts = b.part == 2 ? sphere_lattice(n) : lattice;
    for (int i = 0; i < n; ++i) {
      const auto& p = pts[static_cast<std::size_t>(i)];
      frame.points.push_back({static_cast<float>(b.center[0] + b.radius * p[0]),
                              static_cast<float>(b.center[1] + b.radius * p[1]),
                              static_cast<float>(b.center[2] + b.radius * p[2])});
      const float shade = static_cast<float>(0.85 + 0.15 * p[1]);
      frame.colors.push_back({b.color[0] * shade, b.color[1] * shade, b.color[2] * shade});
      ids.push_back(b.part * 100000 + i);
      labels.push_back(b.part);
    }
  }
  frame.point_ids = std::move(ids);
  frame.part_labels = std::move(labels);
  return frame;
}

PointCloudFrame keep_points(const PointCloudFrame& in, const std::vector<bool>& keep) {
  PointCloudFrame out;
  out.frame_index = in.frame_index;
  std::vector<std::int32_t> ids;
  std::vector<std::int32_t> labels;
  for (std::size_t i = 0; i < in.points.size(); ++i) {
    if (!keep[i]) continue;
    out.points.push_back(in.points[i]);
    out.colors.push_back(in.colors[i]);
    ids.push_back((*in.point_ids)[i]);
    labels.push_back((*in.part_labels)[i]);
  }
  out.point_ids = std::move(ids);
  out.part_labels = std::move(labels);
  return out;
}

void mark_visible(const RenderedView& view, std::vector<bool>& visible) {
  for (auto idx : view.pixel_to_point) {
    if (idx != RenderedView::kNoPoint) visible[static_cast<std::size_t>(idx)] = true;
  }
}

// Every kept point is frontmost somewhere, and every frame-0 survivor is
// frontmost in I(0,0), so each point is reachable by some tracked mask.
std::vector<PointCloudFrame> visible_sequence(const std::string& scenario, int frames_count,
                                              const std::vector<Camera>& cameras,
                                              const SplatConfig& splat, int per_part) {
  std::unordered_set<std::int32_t> seen_at_origin;
  {
    const auto f0 = raw_frame(scenario, 0, per_part);
    std::vector<bool> vis(f0.point_count(), false);
    mark_visible(render_view(f0, cameras.front(), splat), vis);
    for (std::size_t i = 0; i < vis.size(); ++i) {
      if (vis[i]) seen_at_origin.insert((*f0.point_ids)[i]);
    }
  }
  std::vector<PointCloudFrame> out;
  for (int t = 0; t < frames_count; ++t) {
    const auto raw = raw_frame(scenario, t, per_part);
    std::vector<bool> keep(raw.point_count());
    for (std::size_t i = 0; i < keep.size(); ++i) {
      const auto id = (*raw.point_ids)[i];
      keep[i] = (*raw.part_labels)[i] == 2 || seen_at_origin.count(id) > 0;
    }
    auto frame = keep_points(raw, keep);
    std::vector<bool> vis(frame.point_count(), false);
    for (const auto& cam : cameras) mark_visible(render_view(frame, cam, splat), vis);
    out.push_back(keep_points(frame, vis));
  }
  return out;
}

}  // namespace

std::vector<std::string> fixture_scenarios() {
  return {"minimal", "two_part", "flip", "appearing", "lost"};
}

FixtureScene make_fixture(const std::string& scenario, const FixtureOptions& options) {
  const auto known = fixture_scenarios();
  if (std::find(known.begin(), known.end(), scenario) == known.end()) {
    throw ValidationError("unknown fixture scenario '" + scenario + "'");
  }
  if (options.points_per_part < 2 || options.resolution < 16) {
    throw ValidationError("fixture too small");
  }
  FixtureScene scene;
  scene.scenario = scenario;
  scene.config.resolution = Resolution{options.resolution, options.resolution};

  if (scenario == "minimal") {
    scene.cameras.push_back(orbit_camera(0, options.resolution));
    PointCloudFrame f;
    f.points = {{0.0f, 0.0f, 0.0f}};
    f.colors = {{1.0f, 1.0f, 1.0f}};
    f.point_ids = std::vector<std::int32_t>{0};
    f.part_labels = std::vector<std::int32_t>{0};
    scene.frames.push_back(std::move(f));
    scene.part_names = {"part_a"};
    return scene;
  }

  for (int v = 0; v < kViews; ++v) scene.cameras.push_back(orbit_camera(v, options.resolution));
  scene.frames = visible_sequence(scenario, kFrames, scene.cameras, scene.config.splat,
                                  options.points_per_part);
  scene.part_names = {"part_a", "part_b"};
  if (scenario == "appearing") scene.part_names.emplace_back("part_c");
  if (scenario == "flip") {
    for (int v = 1; v < kViews; ++v) scene.config.stub_flips.push_back({1, v, 0, 1});
  }
  if (scenario == "lost") scene.config.lost_cells.push_back({1, 2, 0});
  return scene;
}

std::vector<Mask2D> expected_silhouettes(const std::vector<PointCloudFrame>& frames,
                                         const std::vector<Camera>& cameras,
                                         const SplatConfig& splat) {
  std::vector<Mask2D> out;
  const int r = splat.splat_radius_px;
  for (const auto& frame : frames) {
    for (const auto& cam : cameras) {
      Mask2D m(cam.resolution);
      for (const auto& p : frame.points) {
        const auto& R = cam.extrinsics.rotation;
        const auto& tr = cam.extrinsics.translation;
        const double z = R[6] * p[0] + R[7] * p[1] + R[8] * p[2] + tr[2];
        if (z < splat.depth_epsilon) continue;
        const auto proj = project_point(cam, p);
        const auto row = static_cast<int>(std::floor(proj.row + 0.5));
        const auto col = static_cast<int>(std::floor(proj.col + 0.5));
        for (int dr = -r; dr <= r; ++dr) {
          for (int dc = -r; dc <= r; ++dc) {
            if (dr * dr + dc * dc > r * r) continue;
            const int rr = row + dr;
            const int cc = col + dc;
            if (rr < 0 || cc < 0 || rr >= cam.resolution.height || cc >= cam.resolution.width) {
              continue;
            }
            m.set(rr, cc);
          }
        }
      }
      out.push_back(std::move(m));
    }
  }
  return out;
}

std::filesystem::path write_fixture(const FixtureScene& scene, const std::filesystem::path& dir) {
  const auto manifest = save_sequence(scene.frames, scene.cameras, scene.part_names, dir);
  const SequenceAsset asset(scene.frames, scene.cameras, scene.config.splat, scene.part_names);

  LabelFile gt;
  gt.classes = scene.part_names;
  gt.classes.emplace_back(kNoLabelName);
  for (const auto& f : scene.frames) {
    std::vector<std::uint16_t> labels;
    for (auto l : *f.part_labels) labels.push_back(static_cast<std::uint16_t>(l));
    gt.frames.push_back(std::move(labels));
  }
  write_label_file(dir / "gt.labels", gt);

  json sil;
  const auto res = asset.resolution();
  sil["H"] = res.height;
  sil["W"] = res.width;
  sil["cells"] = json::array();
  const auto expected = expected_silhouettes(scene.frames, scene.cameras, scene.config.splat);
  for (int t = 0; t < asset.num_frames(); ++t) {
    for (int v = 0; v < asset.num_views(); ++v) {
      const auto& m = expected[static_cast<std::size_t>(t * asset.num_views() + v)];
      sil["cells"].push_back({{"t", t}, {"v", v}, {"rle", rle_encode(m)}});
    }
  }
  write_file_bytes(dir / "silhouettes.json", sil.dump());

  const TrackSet tracks =
      oracle_tracks(asset, OracleOptions{scene.config.granularity, scene.config.lost_cells});
  export_tracks(tracks, dir / "tracks.json");

  const StubEmbeddingProvider stub(scene.config.dim, scene.config.stub_flips);
  const TrackSet augmented =
      validate_and_augment(tracks, asset, scene.config.validation_config(res));
  std::vector<EmbeddingRecord> records;
  for (const auto& track : augmented.tracks) {
    for (int t = 0; t < asset.num_frames(); ++t) {
      for (int v = 0; v < asset.num_views(); ++v) {
        const auto& cell = track.cells[static_cast<std::size_t>(t * asset.num_views() + v)];
        if (!cell) continue;
        const CellKey key{track.track_id, t, v};
        if (auto e = stub.embed(asset, key, *cell)) records.push_back({key, std::move(*e)});
      }
    }
  }
  write_embedding_file(dir / "embeddings.bin", scene.config.dim, records);

  const StubTextEncoder text(scene.config.dim, scene.part_names);
  std::vector<VocabularyEntry> vocab;
  for (const auto& name : scene.part_names) vocab.push_back({name, text.encode(name)});
  write_vocabulary_file(dir / "vocab.bin", scene.config.dim, vocab);

  write_file_bytes(dir / "config.json", scene.config.to_json().dump(2));
  PipelineConfig ingest = scene.config;
  ingest.track_source = TrackSource::file;
  ingest.tracks_path = "tracks.json";
  ingest.lost_cells.clear();
  ingest.embedding_source = EmbeddingSource::file;
  ingest.embeddings_path = "embeddings.bin";
  ingest.stub_flips.clear();
  ingest.text_source = TextSource::file;
  ingest.vocabulary_path = "vocab.bin";
  write_file_bytes(dir / "config_ingest.json", ingest.to_json().dump(2));
  return manifest;
}

}  // namespace o4d
