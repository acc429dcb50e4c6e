#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "o4d/mask.hpp"
#include "o4d/pipeline_service.hpp"
#include "o4d/scene_types.hpp"

namespace o4d {

// Synthetic moving-blob scenes with exact ground truth.
//   minimal    T=1, V=1, one point
//   two_part   T=5, V=4, parts part_a / part_b
//   flip       two_part with the stub encoder swapping the parts at t=1, v=1..3
//   appearing  two_part plus part_c entering from t=2 (no I(0,0) proposal)
//   lost       two_part with the part_b track dropped at t=2, v=0
struct FixtureScene {
  std::string scenario;
  std::vector<PointCloudFrame> frames;
  std::vector<Camera> cameras;
  std::vector<std::string> part_names;
  PipelineConfig config;  // oracle tracks + stub providers
};

struct FixtureOptions {
  int points_per_part = 1800;
  int resolution = 512;
};

std::vector<std::string> fixture_scenarios();

// Throws ValidationError for an unknown scenario.
FixtureScene make_fixture(const std::string& scenario, const FixtureOptions& options = {});

// S_{t,v} by stamping every projected point's disk, with no depth test.
// Index t * V + v.
std::vector<Mask2D> expected_silhouettes(const std::vector<PointCloudFrame>& frames,
                                         const std::vector<Camera>& cameras,
                                         const SplatConfig& splat);

// Writes manifest.json, frames/, gt.labels (+ sidecar), silhouettes.json,
// tracks.json, embeddings.bin, vocab.bin, config.json (oracle + stub) and
// config_ingest.json (all three inputs from files). Returns the manifest path.
std::filesystem::path write_fixture(const FixtureScene& scene, const std::filesystem::path& dir);

}  // namespace o4d
