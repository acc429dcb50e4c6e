#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "o4d/fusion_4d.hpp"
#include "o4d/mask_validation.hpp"
#include "o4d/open_vocab_classifier.hpp"
#include "o4d/proposal_engine.hpp"
#include "o4d/splat_renderer.hpp"

namespace o4d {

enum class TrackSource { oracle, file };
enum class EmbeddingSource { stub, file };
enum class TextSource { stub, file };

struct PipelineConfig {
  std::optional<Resolution> resolution;  // must match the cameras when set
  SplatConfig splat;

  bool validation_enabled = true;
  Connectivity connectivity = Connectivity::eight;
  std::optional<int> min_component_area_px;  // default scales with resolution

  FusionStrategy strategy = FusionStrategy::attention;
  bool equalize = true;
  double tau = 0.2;

  TrackSource track_source = TrackSource::oracle;
  std::filesystem::path tracks_path;
  int granularity = 1;
  std::vector<CellRef> lost_cells;

  EmbeddingSource embedding_source = EmbeddingSource::stub;
  std::filesystem::path embeddings_path;
  int dim = 8;
  std::vector<StubFlip> stub_flips;

  TextSource text_source = TextSource::stub;
  std::filesystem::path vocabulary_path;

  ValidationConfig validation_config(Resolution res) const;

  nlohmann::json to_json() const;
  static PipelineConfig from_json(const nlohmann::json& j);
  // Makes relative paths absolute against `base`.
  void resolve_paths(const std::filesystem::path& base);
};

// Reads a config file, resolving relative paths against its directory.
PipelineConfig load_config(const std::filesystem::path& path);

struct FramePoints {
  std::vector<Vec3f> positions;
  std::vector<Vec3f> colors;

  friend bool operator==(const FramePoints&, const FramePoints&) = default;
};

struct StageTiming {
  std::string stage;
  double milliseconds = 0.0;
};

// The prompt-independent product of a build: per-frame 3D masks and fused
// embeddings plus everything a query or the viewer needs.
struct FusedAsset {
  std::string config_json;  // verbatim snapshot
  std::vector<std::string> part_names;
  int num_frames = 0;
  int num_views = 0;
  int dim = 0;
  std::vector<FramePoints> points;
  std::vector<FrameProposalSet> frames;
  std::vector<StageTiming> timings;  // not covered by the content hash
  std::uint64_t content_hash = 0;

  PipelineConfig config() const;
  double build_milliseconds() const;
};

// File layout (little-endian):
//   "O4DFUSED" | u32 version |
//   hashed section: config JSON (u32 len + bytes) | part names |
//     u32 T | u32 V | u32 D | per frame: u32 t, u32 P_t, P_t*3 f32 positions,
//     P_t*3 f32 colors, u32 L_t, per mask (u32 track, u32 view, varint count,
//     varint deltas of sorted indices), L_t*D f32 embeddings |
//   timing JSON (u32 len + bytes) | u64 FNV-1a of the hashed section.
std::string serialize_fused_asset(const FusedAsset& asset);
FusedAsset parse_fused_asset(std::string_view bytes);  // verifies the hash
void save_fused_asset(const FusedAsset& asset, const std::filesystem::path& path);
FusedAsset load_fused_asset(const std::filesystem::path& path);
std::uint64_t compute_content_hash(const FusedAsset& asset);

// render -> tracks -> validation -> embedding -> fusion -> assembly, writing
// the asset to `out` when given. Failures surface as StageError.
FusedAsset build_asset(const std::filesystem::path& manifest, const PipelineConfig& config,
                       const std::optional<std::filesystem::path>& out = std::nullopt);

struct QueryResult {
  std::vector<std::string> classes;  // prompts followed by "no label"
  std::vector<LabelField> frames;
  double query_ms = 0.0;

  LabelFile label_file() const;
};

// Answers prompt queries against an immutable asset. Holds the text encoder so
// repeated queries skip vocabulary loading. Safe for concurrent run() calls.
class QueryEngine {
 public:
  explicit QueryEngine(const FusedAsset& asset);

  QueryResult run(std::span<const std::string> prompts, double tau) const;
  const FusedAsset& asset() const { return asset_; }

 private:
  const FusedAsset& asset_;
  std::unique_ptr<TextEncoder> encoder_;
  bool equalize_ = true;
};

QueryResult query(const FusedAsset& asset, std::span<const std::string> prompts, double tau);

}  // namespace o4d
