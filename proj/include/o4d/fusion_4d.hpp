#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "o4d/embedding_matrix.hpp"
#include "o4d/proposal_engine.hpp"
#include "o4d/scene_model.hpp"

namespace o4d {

struct CellKey {
  int track_id = 0;
  int t = 0;
  int v = 0;

  friend auto operator<=>(const CellKey&, const CellKey&) = default;
};

struct MaskEmbedding {
  std::vector<float> vector;
  CellKey source;
};

// Produces a vision embedding for one tracked mask. Implementations must be
// deterministic: equal inputs give bit-equal vectors. An empty optional means
// the cell contributes no memory-bank row.
class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual int dim() const = 0;
  virtual std::optional<std::vector<float>> embed(const SequenceAsset& asset, const CellKey& key,
                                                  const Mask2D& mask) const = 0;
};

// Swaps the identity of two fixture parts as seen by the stub encoder at one
// cell. Emulates the left/right limb confusion of a real encoder.
struct StubFlip {
  int t = 0;
  int v = 0;
  int part_a = 0;
  int part_b = 1;
};

// Unit vector for fixture part `part`: the basis vector e_part when part < dim.
std::vector<float> fixture_centroid(int part, int dim);

// Reproducible pseudo-random unit vector.
std::vector<float> pseudo_random_unit(std::uint64_t seed, int dim);

// Embeds a mask as the centroid of the dominant fixture part under it plus
// small deterministic noise keyed by (t, v, mask bits). Cells with no visible
// point under the mask yield no row.
class StubEmbeddingProvider final : public EmbeddingProvider {
 public:
  static constexpr double kNoiseScale = 0.15;

  explicit StubEmbeddingProvider(int dim, std::vector<StubFlip> flips = {});

  int dim() const override { return dim_; }
  std::optional<std::vector<float>> embed(const SequenceAsset& asset, const CellKey& key,
                                          const Mask2D& mask) const override;

 private:
  int dim_;
  std::vector<StubFlip> flips_;
};

struct EmbeddingRecord {
  CellKey key;
  std::vector<float> vector;

  friend bool operator==(const EmbeddingRecord&, const EmbeddingRecord&) = default;
};

// Binary layout: "O4DE", u32 D, u32 count, then count records of
// (u32 track_id, u16 t, u16 v, D x f32). Little-endian throughout.
std::string serialize_embeddings(int dim, std::span<const EmbeddingRecord> records);
std::vector<EmbeddingRecord> parse_embeddings(const std::string& bytes, int* dim_out = nullptr);
void write_embedding_file(const std::filesystem::path& path, int dim,
                          std::span<const EmbeddingRecord> records);
std::vector<EmbeddingRecord> read_embedding_file(const std::filesystem::path& path,
                                                 int* dim_out = nullptr);

// Looks vectors up by (track_id, t, v); vectors are L2-normalized on load.
class FileEmbeddingProvider final : public EmbeddingProvider {
 public:
  explicit FileEmbeddingProvider(const std::filesystem::path& path);
  FileEmbeddingProvider(int dim, std::span<const EmbeddingRecord> records);

  int dim() const override { return dim_; }
  // Throws MissingEmbeddingError when a non-empty mask has no record.
  std::optional<std::vector<float>> embed(const SequenceAsset& asset, const CellKey& key,
                                          const Mask2D& mask) const override;

 private:
  int dim_ = 0;
  std::map<CellKey, std::vector<float>> table_;
};

// Q_i: one row per embedded cell of a track, in (t, then v) order.
struct MemoryBank {
  int track_id = 0;
  TrackOrigin origin = TrackOrigin::initial_proposal;
  std::vector<std::size_t> cells;  // t * V + v for each row
  EmbeddingMatrix rows;
};

// Row-wise softmax of Q Q^T with the row maximum subtracted first.
std::vector<double> attention_weights(const EmbeddingMatrix& bank);

// softmax(Q Q^T) Q. Output rows are convex combinations and are not
// re-normalized.
EmbeddingMatrix memory_attention(const EmbeddingMatrix& bank);

enum class FusionStrategy { individual, average, attention };

std::string to_string(FusionStrategy s);
FusionStrategy parse_fusion_strategy(const std::string& s);

EmbeddingMatrix fuse_track_embeddings(const EmbeddingMatrix& bank, FusionStrategy strategy);

// Embeds every populated cell of every track, building one bank per track.
std::vector<MemoryBank> build_memory_banks(const TrackSet& tracks, const SequenceAsset& asset,
                                           const EmbeddingProvider& provider);

// Applies the strategy to initial-proposal banks. Augmented masks have no
// correspondences and keep their individual embeddings.
std::vector<MemoryBank> fuse_memory_banks(std::span<const MemoryBank> banks,
                                          FusionStrategy strategy);

struct Mask3D {
  int frame = 0;
  int track_id = 0;
  int view = 0;
  std::vector<std::uint32_t> point_indices;  // sorted, unique

  friend bool operator==(const Mask3D&, const Mask3D&) = default;
};

// Frontmost point indices under the mask's silhouette pixels.
Mask3D unproject_mask(const Mask2D& mask, const RenderedView& view);

// M_t as L_t point-index lists and Q_t as an L_t x D matrix.
struct FrameProposalSet {
  int frame = 0;
  std::uint32_t point_count = 0;
  std::vector<Mask3D> masks;
  EmbeddingMatrix embeddings;

  std::size_t size() const { return masks.size(); }
  friend bool operator==(const FrameProposalSet&, const FrameProposalSet&) = default;
};

// One (Mask3D, embedding) pair per embedded cell of frame t whose unprojection
// is non-empty, ordered by (track_id, v).
FrameProposalSet assemble_frame(int t, const TrackSet& tracks, std::span<const MemoryBank> fused,
                                const SequenceAsset& asset);

}  // namespace o4d
