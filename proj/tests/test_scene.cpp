#include <gtest/gtest.h>

#include <fstream>
#include <random>

#include <json.hpp>

#include "o4d/binary_io.hpp"
#include "o4d/errors.hpp"
#include "o4d/ply_io.hpp"
#include "o4d/proposal_engine.hpp"
#include "o4d/scene_model.hpp"
#include "o4d/splat_renderer.hpp"
#include "test_support.hpp"

namespace o4d {
namespace {

using testing::frame_of;
using testing::identity_camera;
using testing::TempDir;

// Disk stamping with a brute-force depth minimum per pixel, no z-buffer.
struct StampOracle {
  Mask2D silhouette;
  std::vector<double> min_depth;
};

StampOracle stamp(const PointCloudFrame& f, const Camera& cam, const SplatConfig& cfg) {
  StampOracle o{Mask2D(cam.resolution),
                std::vector<double>(cam.resolution.pixel_count(), std::numeric_limits<double>::infinity())};
  const int r = cfg.splat_radius_px;
  for (const auto& p : f.points) {
    const auto& R = cam.extrinsics.rotation;
    const double z = R[6] * p[0] + R[7] * p[1] + R[8] * p[2] + cam.extrinsics.translation[2];
    if (z < cfg.depth_epsilon) continue;
    const auto pr = project_point(cam, p);
    const int row = static_cast<int>(std::lround(pr.row));
    const int col = static_cast<int>(std::lround(pr.col));
    for (int y = 0; y < cam.resolution.height; ++y) {
      for (int x = 0; x < cam.resolution.width; ++x) {
        if ((y - row) * (y - row) + (x - col) * (x - col) > r * r) continue;
        o.silhouette.set(y, x);
        auto& d = o.min_depth[o.silhouette.index_of(y, x)];
        d = std::min(d, pr.depth);
      }
    }
  }
  return o;
}

void expect_view_consistent(const RenderedView& view, std::size_t point_count) {
  for (std::size_t i = 0; i < view.resolution.pixel_count(); ++i) {
    const bool on = view.silhouette.test(i);
    EXPECT_EQ(on, view.pixel_to_point[i] != RenderedView::kNoPoint) << i;
    EXPECT_EQ(on, view.depth[i] != RenderedView::kNoDepth) << i;
    if (on) {
      EXPECT_LT(static_cast<std::size_t>(view.pixel_to_point[i]), point_count);
      EXPECT_GE(view.depth[i], 0.0f);
    }
  }
}

TEST(ProjectPoint, OpticalAxisLandsOnPrincipalPoint) {
  const Camera cam = identity_camera(512);
  const auto p = project_point(cam, Vec3d{0.0, 0.0, 2.0});
  EXPECT_DOUBLE_EQ(p.row, 256.0);
  EXPECT_DOUBLE_EQ(p.col, 256.0);
  EXPECT_DOUBLE_EQ(p.depth, 2.0);
}

TEST(ProjectPoint, PinholeEquation) {
  const Camera cam = identity_camera(512, 100.0);
  const auto p = project_point(cam, Vec3d{0.5, 0.0, 1.0});
  EXPECT_NEAR(p.col, 306.0, 1e-12);
  EXPECT_NEAR(p.row, 256.0, 1e-12);
  EXPECT_NEAR(p.depth, 1.0, 1e-12);
  const auto q = project_point(cam, Vec3d{0.0, 0.25, 0.5});
  EXPECT_NEAR(q.row, 256.0 + 100.0 * 0.5, 1e-12);
}

TEST(ProjectPoint, BehindCameraThrows) {
  const Camera cam = identity_camera(64);
  EXPECT_THROW(project_point(cam, Vec3d{0.0, 0.0, -1.0}), BehindCameraError);
  EXPECT_THROW(project_point(cam, Vec3d{0.0, 0.0, 0.0}), BehindCameraError);
}

TEST(RenderView, SinglePointRadiusZero) {
  const Camera cam = identity_camera(64);
  const auto view = render_view(frame_of({{0.0f, 0.0f, 1.0f}}), cam, SplatConfig{0, 1e-3});
  EXPECT_EQ(view.silhouette.area(), 1u);
  EXPECT_TRUE(view.silhouette.test(32, 32));
  EXPECT_EQ(view.pixel_to_point[view.silhouette.index_of(32, 32)], 0);
  EXPECT_FLOAT_EQ(view.depth[view.silhouette.index_of(32, 32)], 1.0f);
}

TEST(RenderView, NearerPointWinsOnSharedRay) {
  const Camera cam = identity_camera(64);
  auto f = frame_of({{0.0f, 0.0f, 3.0f}, {0.0f, 0.0f, 1.5f}});
  f.colors[1] = {1.0f, 0.0f, 0.0f};
  const auto view = render_view(f, cam, SplatConfig{1, 1e-3});
  const auto idx = view.silhouette.index_of(32, 32);
  EXPECT_EQ(view.pixel_to_point[idx], 1);
  EXPECT_EQ(view.image[idx * 3], 255);
  EXPECT_EQ(view.image[idx * 3 + 1], 0);
}

TEST(RenderView, DepthTiesGoToLowerIndex) {
  const Camera cam = identity_camera(64);
  const auto view = render_view(frame_of({{0.0f, 0.0f, 2.0f}, {0.0f, 0.0f, 2.0f}}), cam, SplatConfig{2, 1e-3});
  for (std::size_t i = 0; i < view.pixel_to_point.size(); ++i) {
    if (view.silhouette.test(i)) EXPECT_EQ(view.pixel_to_point[i], 0);
  }
}

TEST(RenderView, SkipsOffImageAndNearPlanePoints) {
  const Camera cam = identity_camera(32);
  const auto view = render_view(frame_of({{10.0f, 0.0f, 1.0f}, {0.0f, 0.0f, -1.0f}, {0.0f, 0.0f, 1e-4f}}),
                                cam, SplatConfig{1, 1e-3});
  EXPECT_TRUE(view.silhouette.empty());
}

TEST(RenderView, DiskFootprintAtImageBorderIsClipped) {
  const Camera cam = identity_camera(16, 10.0);
  // Lands on pixel (8, 0): half the radius-2 disk is off-image.
  const auto view = render_view(frame_of({{-0.8f, 0.0f, 1.0f}}), cam, SplatConfig{2, 1e-3});
  EXPECT_EQ(view.silhouette.area(), 9u);
}

TEST(RenderView, BlobMatchesDiskUnionOracle) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<float> u(-0.3f, 0.3f);
  std::vector<Vec3f> pts;
  for (int i = 0; i < 100; ++i) pts.push_back({u(rng), u(rng), 2.0f + u(rng)});
  const auto f = frame_of(pts);
  const Camera cam = identity_camera(96, 120.0);
  const SplatConfig cfg{2, 1e-3};
  const auto view = render_view(f, cam, cfg);
  const auto oracle = stamp(f, cam, cfg);
  EXPECT_EQ(view.silhouette, oracle.silhouette);
  // Occlusion consistency: the stored depth is the minimum over all splats.
  for (std::size_t i = 0; i < oracle.min_depth.size(); ++i) {
    if (oracle.silhouette.test(i)) EXPECT_NEAR(view.depth[i], oracle.min_depth[i], 1e-6);
  }
  expect_view_consistent(view, f.point_count());
}

TEST(RenderView, RandomScenesAreConsistentAndDeterministic) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<float> u(-0.5f, 0.5f);
  std::uniform_int_distribution<int> radius(0, 3);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Vec3f> pts;
    for (int i = 0; i < 60; ++i) pts.push_back({u(rng), u(rng), 1.5f + u(rng)});
    const auto f = frame_of(pts);
    const Camera cam = identity_camera(48, 60.0);
    const SplatConfig cfg{radius(rng), 1e-3};
    const auto a = render_view(f, cam, cfg);
    const auto b = render_view(f, cam, cfg);
    EXPECT_EQ(a.image, b.image);
    EXPECT_EQ(a.silhouette, b.silhouette);
    EXPECT_EQ(a.pixel_to_point, b.pixel_to_point);
    EXPECT_EQ(std::memcmp(a.depth.data(), b.depth.data(), a.depth.size() * sizeof(float)), 0);
    expect_view_consistent(a, f.point_count());
    const auto oracle = stamp(f, cam, cfg);
    for (std::size_t i = 0; i < oracle.min_depth.size(); ++i) {
      if (oracle.silhouette.test(i)) ASSERT_NEAR(a.depth[i], oracle.min_depth[i], 1e-6);
    }
  }
}

TEST(RenderView, RemovingPointsNeverAddsSilhouettePixels) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<float> u(-0.5f, 0.5f);
  std::bernoulli_distribution keep(0.6);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Vec3f> pts;
    std::vector<Vec3f> subset;
    for (int i = 0; i < 80; ++i) {
      pts.push_back({u(rng), u(rng), 1.5f + u(rng)});
      if (keep(rng)) subset.push_back(pts.back());
    }
    if (subset.empty()) continue;
    const Camera cam = identity_camera(48, 60.0);
    const auto full = render_view(frame_of(pts), cam, SplatConfig{});
    const auto part = render_view(frame_of(subset), cam, SplatConfig{});
    for (std::size_t i = 0; i < full.silhouette.size(); ++i) {
      if (part.silhouette.test(i)) ASSERT_TRUE(full.silhouette.test(i));
    }
  }
}

TEST(SplatConfig, Validation) {
  EXPECT_THROW((SplatConfig{-1, 1e-3}.validate()), ValidationError);
  EXPECT_THROW((SplatConfig{2, 0.0}.validate()), ValidationError);
  EXPECT_NO_THROW((SplatConfig{0, 1e-6}.validate()));
}

TEST(Camera, Validation) {
  Camera cam = identity_camera(64);
  EXPECT_NO_THROW(cam.validate());
  Camera bad_focal = cam;
  bad_focal.intrinsics.focal_x = 0.0;
  EXPECT_THROW(bad_focal.validate(), ValidationError);
  Camera bad_rot = cam;
  bad_rot.extrinsics.rotation[0] = 1.01;
  EXPECT_THROW(bad_rot.validate(), ValidationError);
  Camera reflection = cam;
  reflection.extrinsics.rotation[8] = -1.0;
  EXPECT_THROW(reflection.validate(), ValidationError);
  Camera bad_pp = cam;
  bad_pp.intrinsics.principal_x = 64.0;
  EXPECT_THROW(bad_pp.validate(), ValidationError);
}

TEST(PointCloudFrame, Validation) {
  auto f = frame_of({{0.0f, 0.0f, 1.0f}});
  EXPECT_NO_THROW(f.validate());
  auto bad_colors = f;
  bad_colors.colors.push_back({0.0f, 0.0f, 0.0f});
  EXPECT_THROW(bad_colors.validate(), ValidationError);
  auto out_of_range = f;
  out_of_range.colors[0][1] = 1.5f;
  EXPECT_THROW(out_of_range.validate(), ValidationError);
  auto dup = frame_of({{0.0f, 0.0f, 1.0f}, {0.1f, 0.0f, 1.0f}});
  dup.point_ids = std::vector<std::int32_t>{3, 3};
  EXPECT_THROW(dup.validate(), ValidationError);
  EXPECT_THROW(frame_of({}).validate(), ValidationError);
}

TEST(Ply, BinaryAndAsciiRoundTripBitExact) {
  TempDir dir("ply");
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<float> u(-2.0f, 2.0f);
  PointCloudFrame f;
  for (int i = 0; i < 50; ++i) {
    f.points.push_back({u(rng), u(rng), u(rng)});
    f.colors.push_back({static_cast<float>(i % 256) / 255.0f, 0.0f, 1.0f});
  }
  f.point_ids = std::vector<std::int32_t>(50);
  f.part_labels = std::vector<std::int32_t>(50);
  for (int i = 0; i < 50; ++i) {
    (*f.point_ids)[i] = 1000 - i;
    (*f.part_labels)[i] = i % 3;
  }
  for (auto enc : {PlyEncoding::binary_little_endian, PlyEncoding::ascii}) {
    write_ply(dir / "f.ply", f, enc);
    const auto g = read_ply(dir / "f.ply");
    EXPECT_EQ(g.points, f.points);
    EXPECT_EQ(g.colors, f.colors);
    EXPECT_EQ(g.point_ids, f.point_ids);
    EXPECT_EQ(g.part_labels, f.part_labels);
  }
}

TEST(Ply, ReadsHandWrittenAscii) {
  TempDir dir("ply_ascii");
  std::ofstream(dir / "a.ply") << "ply\nformat ascii 1.0\ncomment hand made\nelement vertex 2\n"
                                  "property float x\nproperty float y\nproperty float z\n"
                                  "property uchar red\nproperty uchar green\nproperty uchar blue\n"
                                  "end_header\n0 0 1 255 0 0\n0.5 -0.5 2 0 128 255\n";
  const auto f = read_ply(dir / "a.ply");
  ASSERT_EQ(f.point_count(), 2u);
  EXPECT_FLOAT_EQ(f.points[1][0], 0.5f);
  EXPECT_FLOAT_EQ(f.colors[0][0], 1.0f);
  EXPECT_FLOAT_EQ(f.colors[1][1], 128.0f / 255.0f);
  EXPECT_FALSE(f.point_ids.has_value());
}

TEST(Ply, MissingAndMalformedFiles) {
  TempDir dir("ply_bad");
  EXPECT_THROW(read_ply(dir / "nope.ply"), LoadError);
  std::ofstream(dir / "b.ply") << "ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nend_header\n0\n";
  EXPECT_THROW(read_ply(dir / "b.ply"), FormatError);
}

TEST(LoadSequence, MinimalSequence) {
  TempDir dir("minimal");
  const auto scene = make_fixture("minimal");
  const auto manifest = write_fixture(scene, dir.path());
  const auto asset = load_sequence(manifest);
  EXPECT_EQ(asset.num_frames(), 1);
  EXPECT_EQ(asset.num_views(), 1);
  const auto& view = asset.view(0, 0);
  EXPECT_EQ(view.silhouette.area(), 13u);  // radius-2 disk
  for (std::size_t i = 0; i < view.silhouette.size(); ++i) {
    if (view.silhouette.test(i)) EXPECT_EQ(view.pixel_to_point[i], 0);
  }
}

TEST(LoadSequence, MissingFrameFileNamesThePath) {
  TempDir dir("missing");
  const auto manifest = write_fixture(make_fixture("minimal"), dir.path());
  std::filesystem::remove(dir / "frames/frame_000.ply");
  try {
    load_sequence(manifest);
    FAIL() << "expected LoadError";
  } catch (const LoadError& e) {
    EXPECT_NE(std::string(e.what()).find("frame_000.ply"), std::string::npos) << e.what();
  }
  EXPECT_THROW(load_sequence(dir / "absent.json"), LoadError);
}

TEST(LoadSequence, RejectsBadCameraAndMismatchedColors) {
  TempDir dir("bad");
  const auto manifest = write_fixture(make_fixture("minimal"), dir.path());
  auto j = nlohmann::json::parse(read_file_bytes(manifest));
  auto bad = j;
  bad["cameras"][0]["rotation"][0] = 2.0;
  write_file_bytes(dir / "bad_rot.json", bad.dump());
  EXPECT_THROW(load_sequence(dir / "bad_rot.json"), ValidationError);

  PointCloudFrame f = frame_of({{0.0f, 0.0f, 0.0f}, {0.1f, 0.0f, 0.0f}});
  f.colors.pop_back();
  EXPECT_THROW(SequenceAsset({f}, {make_fixture("minimal").cameras}, SplatConfig{}), ValidationError);
}

TEST(LoadSequence, RejectsGapsAndMixedResolutions) {
  const auto scene = make_fixture("minimal");
  auto frames = scene.frames;
  frames[0].frame_index = 1;
  EXPECT_THROW(SequenceAsset(frames, scene.cameras, SplatConfig{}), ValidationError);
  auto cams = scene.cameras;
  cams.push_back(cams[0]);
  cams[1].view_index = 1;
  cams[1].resolution = {256, 256};
  cams[1].intrinsics.principal_x = cams[1].intrinsics.principal_y = 128.0;
  EXPECT_THROW(SequenceAsset(scene.frames, cams, SplatConfig{}), ValidationError);
}

TEST(LoadSequence, FixtureSilhouettesMatchGeneratorGroundTruth) {
  TempDir dir("two_part");
  const auto& scene = testing::cached_fixture("two_part");
  const auto manifest = write_fixture(scene, dir.path());
  const auto asset = load_sequence(manifest);
  ASSERT_EQ(asset.num_frames(), 5);
  ASSERT_EQ(asset.num_views(), 4);
  EXPECT_EQ(asset.part_names(), (std::vector<std::string>{"part_a", "part_b"}));

  const auto sil = nlohmann::json::parse(read_file_bytes(dir / "silhouettes.json"));
  ASSERT_EQ(sil["cells"].size(), 20u);
  for (const auto& cell : sil["cells"]) {
    const int t = cell["t"];
    const int v = cell["v"];
    const auto runs = cell["rle"].get<std::vector<std::uint32_t>>();
    const auto expected = rle_decode(runs, asset.resolution());
    EXPECT_EQ(asset.view(t, v).silhouette, expected) << "t=" << t << " v=" << v;
    EXPECT_GT(expected.area(), 1000u);
    expect_view_consistent(asset.view(t, v), asset.frame(t).point_count());
  }
}

TEST(SaveSequence, RoundTripIsBitIdentical) {
  TempDir dir("roundtrip");
  const auto& scene = testing::cached_fixture("appearing");
  const auto manifest = save_sequence(scene.frames, scene.cameras, scene.part_names, dir.path());
  const auto asset = load_sequence(manifest);
  ASSERT_EQ(asset.num_frames(), static_cast<int>(scene.frames.size()));
  for (int t = 0; t < asset.num_frames(); ++t) {
    const auto& a = asset.frame(t);
    const auto& b = scene.frames[static_cast<std::size_t>(t)];
    ASSERT_EQ(a.points.size(), b.points.size());
    EXPECT_EQ(std::memcmp(a.points.data(), b.points.data(), a.points.size() * sizeof(Vec3f)), 0);
    EXPECT_EQ(a.point_ids, b.point_ids);
    EXPECT_EQ(a.part_labels, b.part_labels);
  }
  for (std::size_t v = 0; v < scene.cameras.size(); ++v) {
    EXPECT_EQ(asset.cameras()[v].extrinsics.rotation, scene.cameras[v].extrinsics.rotation);
    EXPECT_EQ(asset.cameras()[v].extrinsics.translation, scene.cameras[v].extrinsics.translation);
  }
}

TEST(Png, WritesValidFiles) {
  TempDir dir("png");
  const Camera cam = identity_camera(32);
  const auto view = render_view(frame_of({{0.0f, 0.0f, 1.0f}}), cam, SplatConfig{});
  write_png_image(dir / "rgb.png", view);
  write_png_silhouette(dir / "mask.png", view);
  for (const char* name : {"rgb.png", "mask.png"}) {
    const auto bytes = read_file_bytes(dir / name);
    ASSERT_GT(bytes.size(), 8u);
    EXPECT_EQ(bytes.substr(1, 3), "PNG");
  }
}

}  // namespace
}  // namespace o4d
