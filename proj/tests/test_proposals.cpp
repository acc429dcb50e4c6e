#include <gtest/gtest.h>

#include <random>
#include <set>

#include <json.hpp>

#include "o4d/binary_io.hpp"
#include "o4d/errors.hpp"
#include "o4d/mask_validation.hpp"
#include "o4d/proposal_engine.hpp"
#include "test_support.hpp"

namespace o4d {
namespace {

using testing::asset_of;
using testing::cached_fixture;
using testing::random_mask;
using testing::TempDir;

Mask2D bits_2x2(std::initializer_list<int> bits) {
  Mask2D m(Resolution{2, 2});
  std::size_t i = 0;
  for (int b : bits) m.set(i++, b != 0);
  return m;
}

// Pixels of view (t, v) whose frontmost point carries ground-truth part p.
Mask2D part_footprint(const SequenceAsset& asset, int t, int v, int part) {
  const auto& view = asset.view(t, v);
  const auto& labels = *asset.frame(t).part_labels;
  Mask2D m(view.resolution);
  for (std::size_t px = 0; px < m.size(); ++px) {
    const auto idx = view.pixel_to_point[px];
    if (idx != RenderedView::kNoPoint && labels[static_cast<std::size_t>(idx)] == part) m.set(px);
  }
  return m;
}

SequenceAsset strip_labels(const FixtureScene& scene) {
  auto frames = scene.frames;
  for (auto& f : frames) {
    f.point_ids.reset();
    f.part_labels.reset();
  }
  return SequenceAsset(frames, scene.cameras, scene.config.splat);
}

TEST(Rle, DocumentedEncodings) {
  EXPECT_EQ(rle_encode(bits_2x2({0, 0, 0, 0})), (std::vector<std::uint32_t>{4}));
  EXPECT_EQ(rle_encode(bits_2x2({1, 1, 1, 1})), (std::vector<std::uint32_t>{0, 4}));
  EXPECT_EQ(rle_encode(bits_2x2({1, 1, 0, 1})), (std::vector<std::uint32_t>{0, 2, 1, 1}));
  EXPECT_EQ(rle_decode(std::vector<std::uint32_t>{0, 2, 1, 1}, {2, 2}), bits_2x2({1, 1, 0, 1}));
}

TEST(Rle, RejectsRunsNotSummingToPixelCount) {
  EXPECT_THROW(rle_decode(std::vector<std::uint32_t>{1, 2}, {2, 2}), FormatError);
  EXPECT_THROW(rle_decode(std::vector<std::uint32_t>{3, 2}, {2, 2}), FormatError);
  EXPECT_THROW(rle_decode(std::vector<std::uint32_t>{}, {2, 2}), FormatError);
}

TEST(Rle, RandomRoundTrip) {
  std::mt19937_64 rng(21);
  std::uniform_int_distribution<int> dim(1, 40);
  std::uniform_real_distribution<double> density(0.0, 1.0);
  for (int trial = 0; trial < 300; ++trial) {
    const Resolution res{dim(rng), dim(rng)};
    const auto m = random_mask(rng, res, density(rng));
    const auto runs = rle_encode(m);
    std::uint64_t total = 0;
    for (auto r : runs) total += r;
    ASSERT_EQ(total, res.pixel_count());
    for (std::size_t i = 1; i < runs.size(); ++i) ASSERT_GT(runs[i], 0u);
    ASSERT_EQ(rle_decode(runs, res), m);
  }
}

TEST(OracleProposals, TwoPartsPartitionTheFirstSilhouette) {
  const auto asset = asset_of(cached_fixture("two_part"));
  const auto masks = oracle_initial_proposals(asset, 1);
  ASSERT_EQ(masks.size(), 2u);
  const auto& sil = asset.view(0, 0).silhouette;
  EXPECT_EQ(coverage_union(masks, sil.resolution()), sil);
  EXPECT_EQ(masks[0], part_footprint(asset, 0, 0, 0));
  EXPECT_EQ(masks[1], part_footprint(asset, 0, 0, 1));
  for (std::size_t i = 0; i < sil.size(); ++i) EXPECT_FALSE(masks[0].test(i) && masks[1].test(i));
}

TEST(OracleProposals, SinglePartGivesTheSilhouette) {
  const auto asset = asset_of(make_fixture("minimal"));
  const auto masks = oracle_initial_proposals(asset, 1);
  ASSERT_EQ(masks.size(), 1u);
  EXPECT_EQ(masks[0], asset.view(0, 0).silhouette);
}

TEST(OracleProposals, GranularitySplitsIntoBands) {
  const auto asset = asset_of(cached_fixture("two_part"));
  const auto masks = oracle_initial_proposals(asset, 3);
  EXPECT_EQ(masks.size(), 6u);
  const auto& sil = asset.view(0, 0).silhouette;
  EXPECT_EQ(coverage_union(masks, sil.resolution()), sil);
  std::size_t area = 0;
  for (const auto& m : masks) area += m.area();
  EXPECT_EQ(area, sil.area());
  EXPECT_THROW(oracle_initial_proposals(asset, 0), ValidationError);
}

TEST(OracleProposals, NonFixtureAssetIsRejected) {
  const auto asset = strip_labels(cached_fixture("two_part"));
  EXPECT_THROW(oracle_initial_proposals(asset, 1), OracleUnavailableError);
  EXPECT_THROW(oracle_propagate(asset, Mask2D(asset.resolution()), 0), OracleUnavailableError);
  EXPECT_THROW(oracle_tracks(asset), OracleUnavailableError);
}

TEST(OraclePropagate, StaticSingleViewSceneRepeatsTheSeed) {
  const auto& two = cached_fixture("two_part");
  std::vector<PointCloudFrame> frames;
  for (int t = 0; t < 3; ++t) {
    frames.push_back(two.frames[0]);
    frames.back().frame_index = t;
  }
  const SequenceAsset asset(frames, {two.cameras[0]}, two.config.splat, two.part_names);
  const auto seeds = oracle_initial_proposals(asset, 1);
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    const auto track = oracle_propagate(asset, seeds[i], static_cast<int>(i));
    ASSERT_EQ(track.cells.size(), 3u);
    for (const auto& cell : track.cells) {
      ASSERT_TRUE(cell.has_value());
      EXPECT_EQ(*cell, seeds[i]);
    }
  }
}

TEST(OraclePropagate, RigidMotionFollowsGroundTruthFootprints) {
  const auto asset = asset_of(cached_fixture("two_part"));
  const auto tracks = oracle_tracks(asset);
  ASSERT_EQ(tracks.tracks.size(), 2u);
  for (int part = 0; part < 2; ++part) {
    const auto& track = tracks.tracks[static_cast<std::size_t>(part)];
    EXPECT_EQ(track.track_id, part);
    EXPECT_EQ(track.origin, TrackOrigin::initial_proposal);
    for (int t = 0; t < asset.num_frames(); ++t) {
      for (int v = 0; v < asset.num_views(); ++v) {
        const auto& cell = track.cells[asset.cell_index(t, v)];
        ASSERT_TRUE(cell.has_value());
        EXPECT_EQ(*cell, part_footprint(asset, t, v, part)) << "part " << part << " t=" << t << " v=" << v;
      }
    }
  }
}

TEST(OraclePropagate, EmptySeedGivesEmptyCells) {
  const auto asset = asset_of(cached_fixture("two_part"));
  const auto track = oracle_propagate(asset, Mask2D(asset.resolution()), 7);
  EXPECT_EQ(track.track_id, 7);
  for (const auto& cell : track.cells) {
    ASSERT_TRUE(cell.has_value());
    EXPECT_TRUE(cell->empty());
  }
}

TEST(OraclePropagate, FirstCellEqualsTheSeedPointFootprint) {
  const auto asset = asset_of(cached_fixture("two_part"));
  const auto& view = asset.view(0, 0);
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<int> coord(0, 511);
  for (int trial = 0; trial < 10; ++trial) {
    int r0 = coord(rng), r1 = coord(rng), c0 = coord(rng), c1 = coord(rng);
    if (r0 > r1) std::swap(r0, r1);
    if (c0 > c1) std::swap(c0, c1);
    Mask2D seed(asset.resolution());
    for (int r = r0; r <= r1; ++r) {
      for (int c = c0; c <= c1; ++c) seed.set(r, c);
    }
    std::set<std::int32_t> seeded;
    for (std::size_t px = 0; px < seed.size(); ++px) {
      if (seed.test(px) && view.pixel_to_point[px] != RenderedView::kNoPoint) seeded.insert(view.pixel_to_point[px]);
    }
    Mask2D footprint(asset.resolution());
    for (std::size_t px = 0; px < seed.size(); ++px) {
      if (view.pixel_to_point[px] != RenderedView::kNoPoint && seeded.count(view.pixel_to_point[px])) footprint.set(px);
    }
    const auto track = oracle_propagate(asset, seed, 0);
    EXPECT_EQ(*track.cells[0], footprint);
    for (std::size_t px = 0; px < seed.size(); ++px) {
      if (seed.test(px) && view.silhouette.test(px)) ASSERT_TRUE(track.cells[0]->test(px));
    }
  }
}

TEST(OracleTracks, LostCellsAreZeroed) {
  const auto asset = asset_of(cached_fixture("two_part"));
  const auto tracks = oracle_tracks(asset, OracleOptions{1, {{1, 2, 0}}});
  EXPECT_TRUE(tracks.tracks[1].cells[asset.cell_index(2, 0)]->empty());
  EXPECT_FALSE(tracks.tracks[1].cells[asset.cell_index(2, 1)]->empty());
  EXPECT_FALSE(tracks.tracks[0].cells[asset.cell_index(2, 0)]->empty());
  EXPECT_THROW(oracle_tracks(asset, OracleOptions{1, {{5, 0, 0}}}), ValidationError);
}

TEST(IngestTracks, SingleFullMask) {
  TempDir dir("ingest_full");
  const auto asset = asset_of(make_fixture("minimal"));
  const auto res = asset.resolution();
  nlohmann::json j{{"T", 1}, {"V", 1}, {"H", res.height}, {"W", res.width}};
  j["tracks"] = {{{"id", 0},
                  {"origin", "initial_proposal"},
                  {"cells", {{{"t", 0}, {"v", 0}, {"rle", {0, res.pixel_count()}}}}}}};
  write_file_bytes(dir / "t.json", j.dump());
  const auto set = ingest_tracks(dir / "t.json", asset);
  ASSERT_EQ(set.tracks.size(), 1u);
  EXPECT_EQ(set.n_initial(), 1u);
  EXPECT_EQ(set.tracks[0].cells[0]->area(), res.pixel_count());

  j["tracks"][0]["cells"][0]["rle"] = {0, res.pixel_count() - 3};
  write_file_bytes(dir / "bad.json", j.dump());
  EXPECT_THROW(ingest_tracks(dir / "bad.json", asset), FormatError);
}

TEST(IngestTracks, AbsentInitialCellsAreAllZero) {
  TempDir dir("ingest_absent");
  const auto asset = asset_of(cached_fixture("two_part"));
  const auto res = asset.resolution();
  nlohmann::json j{{"T", 5}, {"V", 4}, {"H", res.height}, {"W", res.width}};
  j["tracks"] = {{{"id", 3}, {"origin", "initial_proposal"}, {"cells", nlohmann::json::array()}}};
  write_file_bytes(dir / "t.json", j.dump());
  const auto set = ingest_tracks(dir / "t.json", asset);
  ASSERT_EQ(set.tracks[0].cells.size(), 20u);
  for (const auto& c : set.tracks[0].cells) {
    ASSERT_TRUE(c.has_value());
    EXPECT_TRUE(c->empty());
  }
}

TEST(IngestTracks, ShapeAndResolutionMismatch) {
  TempDir dir("ingest_mismatch");
  const auto asset = asset_of(cached_fixture("two_part"));
  const auto tracks = oracle_tracks(asset);
  auto wrong_grid = tracks;
  wrong_grid.num_frames = 4;
  for (auto& t : wrong_grid.tracks) t.cells.resize(16);
  export_tracks(wrong_grid, dir / "grid.json");
  EXPECT_THROW(ingest_tracks(dir / "grid.json", asset), ValidationError);

  const Resolution small{8, 8};
  TrackSet wrong_res;
  wrong_res.num_frames = 5;
  wrong_res.num_views = 4;
  wrong_res.resolution = small;
  wrong_res.tracks.push_back({0, TrackOrigin::initial_proposal, std::vector<std::optional<Mask2D>>(20, Mask2D(small))});
  export_tracks(wrong_res, dir / "res.json");
  EXPECT_THROW(ingest_tracks(dir / "res.json", asset), ValidationError);
  EXPECT_THROW(ingest_tracks(dir / "absent.json", asset), LoadError);
}

TEST(IngestTracks, RandomRoundTrip) {
  TempDir dir("ingest_rt");
  std::mt19937_64 rng(99);
  std::uniform_int_distribution<int> small(1, 4);
  std::uniform_real_distribution<double> density(0.0, 1.0);
  for (int trial = 0; trial < 40; ++trial) {
    TrackSet set;
    set.num_frames = small(rng);
    set.num_views = small(rng);
    set.resolution = {small(rng) * 5, small(rng) * 7};
    const int initial = small(rng);
    for (int i = 0; i < initial; ++i) {
      MaskTrack track{i * 2, TrackOrigin::initial_proposal, {}};
      for (std::size_t c = 0; c < set.cell_count(); ++c) {
        track.cells.emplace_back(random_mask(rng, set.resolution, trial % 5 == 0 ? 0.0 : density(rng)));
      }
      set.tracks.push_back(std::move(track));
    }
    std::uniform_int_distribution<std::size_t> cell(0, set.cell_count() - 1);
    for (int i = 0; i < small(rng); ++i) {
      MaskTrack track{100 + i, TrackOrigin::validation_augment,
                      std::vector<std::optional<Mask2D>>(set.cell_count())};
      track.cells[cell(rng)] = random_mask(rng, set.resolution, density(rng));
      set.tracks.push_back(std::move(track));
    }
    set.validate();
    ASSERT_EQ(parse_tracks(serialize_tracks(set)), set);
    export_tracks(set, dir / "t.json");
    ASSERT_EQ(parse_tracks(read_file_bytes(dir / "t.json")), set);
  }
}

TEST(IngestTracks, OracleExportReingestsIdentically) {
  TempDir dir("ingest_oracle");
  const auto asset = asset_of(cached_fixture("lost"));
  const auto tracks = oracle_tracks(asset, OracleOptions{1, {{1, 2, 0}}});
  export_tracks(tracks, dir / "tracks.json");
  EXPECT_EQ(ingest_tracks(dir / "tracks.json", asset), tracks);
}

TEST(TrackSet, ValidateCatchesBrokenInvariants) {
  const Resolution res{4, 4};
  TrackSet set{1, 2, res, {}};
  set.tracks.push_back({0, TrackOrigin::initial_proposal, {Mask2D(res), Mask2D(res)}});
  EXPECT_NO_THROW(set.validate());
  auto dup = set;
  dup.tracks.push_back(dup.tracks[0]);
  EXPECT_THROW(dup.validate(), ValidationError);
  auto hole = set;
  hole.tracks[0].cells[1].reset();
  EXPECT_THROW(hole.validate(), ValidationError);
  auto augment = set;
  augment.tracks.push_back({1, TrackOrigin::validation_augment, {Mask2D(res), Mask2D(res)}});
  EXPECT_THROW(augment.validate(), ValidationError);
  EXPECT_EQ(set.next_track_id(), 1);
}

}  // namespace
}  // namespace o4d
