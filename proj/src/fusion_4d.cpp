#include "o4d/fusion_4d.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include "o4d/binary_io.hpp"
#include "o4d/errors.hpp"
#include "o4d/parallel.hpp"
#include "o4d/stage_counters.hpp"

namespace o4d {

std::vector<float> pseudo_random_unit(std::uint64_t seed, int dim) {
  std::mt19937_64 rng(seed);
  std::vector<float> v(static_cast<std::size_t>(dim));
  do {
    for (auto& x : v) {
      // Top 53 bits -> [0, 1) -> [-1, 1); independent of library distributions.
      const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
      x = static_cast<float>(2.0 * u - 1.0);
    }
  } while (norm(v) == 0.0);
  normalize(v);
  return v;
}

std::vector<float> fixture_centroid(int part, int dim) {
  if (part >= 0 && part < dim) {
    std::vector<float> v(static_cast<std::size_t>(dim), 0.0f);
    v[static_cast<std::size_t>(part)] = 1.0f;
    return v;
  }
  return pseudo_random_unit(0x9e3779b97f4a7c15ULL ^ static_cast<std::uint64_t>(part), dim);
}

StubEmbeddingProvider::StubEmbeddingProvider(int dim, std::vector<StubFlip> flips)
    : dim_(dim), flips_(std::move(flips)) {
  if (dim_ <= 0) throw ValidationError("embedding dimension must be positive");
}

std::optional<std::vector<float>> StubEmbeddingProvider::embed(const SequenceAsset& asset,
                                                               const CellKey& key,
                                                               const Mask2D& mask) const {
  ++stage_counters().embed;
  const auto& frame = asset.frame(key.t);
  if (!frame.part_labels) {
    throw OracleUnavailableError("stub embedding provider needs fixture part labels");
  }
  const RenderedView& view = asset.view(key.t, key.v);
  if (!(mask.resolution() == view.resolution)) {
    throw ValidationError("mask resolution does not match the rendered view");
  }
  std::map<int, std::size_t> votes;
  for (std::size_t px = 0; px < mask.size(); ++px) {
    if (!mask.test(px)) continue;
    const auto idx = view.pixel_to_point[px];
    if (idx == RenderedView::kNoPoint) continue;
    ++votes[(*frame.part_labels)[static_cast<std::size_t>(idx)]];
  }
  if (votes.empty()) return std::nullopt;
  // std::map iterates parts in ascending order, so ties go to the lower part.
  int part = votes.begin()->first;
  std::size_t best = 0;
  for (const auto& [p, n] : votes) {
    if (n > best) {
      best = n;
      part = p;
    }
  }
  for (const auto& flip : flips_) {
    if (flip.t != key.t || flip.v != key.v) continue;
    if (part == flip.part_a) {
      part = flip.part_b;
    } else if (part == flip.part_b) {
      part = flip.part_a;
    }
  }

  ByteWriter seed_bytes;
  seed_bytes.put<std::int32_t>(key.t);
  seed_bytes.put<std::int32_t>(key.v);
  seed_bytes.put_array(mask.bits());
  const auto noise = pseudo_random_unit(fnv1a64(seed_bytes.bytes()), dim_);
  auto out = fixture_centroid(part, dim_);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = static_cast<float>(out[i] + kNoiseScale * noise[i]);
  }
  normalize(out);
  return out;
}

namespace {
constexpr char kEmbeddingMagic[4] = {'O', '4', 'D', 'E'};
}

std::string serialize_embeddings(int dim, std::span<const EmbeddingRecord> records) {
  ByteWriter out;
  out.put_bytes(std::string_view(kEmbeddingMagic, 4));
  out.put<std::uint32_t>(static_cast<std::uint32_t>(dim));
  out.put<std::uint32_t>(static_cast<std::uint32_t>(records.size()));
  for (const auto& r : records) {
    if (r.vector.size() != static_cast<std::size_t>(dim)) {
      throw DimensionError("embedding record length does not match D");
    }
    if (r.key.t < 0 || r.key.t > 0xffff || r.key.v < 0 || r.key.v > 0xffff || r.key.track_id < 0) {
      throw ValidationError("embedding key out of range for the file format");
    }
    out.put<std::uint32_t>(static_cast<std::uint32_t>(r.key.track_id));
    out.put<std::uint16_t>(static_cast<std::uint16_t>(r.key.t));
    out.put<std::uint16_t>(static_cast<std::uint16_t>(r.key.v));
    out.put_array(std::span<const float>(r.vector));
  }
  return out.take();
}

std::vector<EmbeddingRecord> parse_embeddings(const std::string& bytes, int* dim_out) {
  ByteReader in(bytes);
  if (in.get_bytes(4) != std::string_view(kEmbeddingMagic, 4)) {
    throw FormatError("not an embedding file (bad magic)");
  }
  const auto dim = in.get<std::uint32_t>();
  const auto count = in.get<std::uint32_t>();
  if (dim == 0) throw FormatError("embedding file declares D = 0");
  std::vector<EmbeddingRecord> records(count);
  for (auto& r : records) {
    r.key.track_id = static_cast<int>(in.get<std::uint32_t>());
    r.key.t = in.get<std::uint16_t>();
    r.key.v = in.get<std::uint16_t>();
    r.vector.resize(dim);
    in.get_array(std::span<float>(r.vector));
  }
  if (!in.at_end()) throw FormatError("trailing bytes after embedding records");
  if (dim_out) *dim_out = static_cast<int>(dim);
  return records;
}

void write_embedding_file(const std::filesystem::path& path, int dim,
                          std::span<const EmbeddingRecord> records) {
  write_file_bytes(path, serialize_embeddings(dim, records));
}

std::vector<EmbeddingRecord> read_embedding_file(const std::filesystem::path& path, int* dim_out) {
  return parse_embeddings(read_file_bytes(path), dim_out);
}

FileEmbeddingProvider::FileEmbeddingProvider(const std::filesystem::path& path) {
  const auto records = read_embedding_file(path, &dim_);
  *this = FileEmbeddingProvider(dim_, records);
}

FileEmbeddingProvider::FileEmbeddingProvider(int dim, std::span<const EmbeddingRecord> records)
    : dim_(dim) {
  for (const auto& r : records) {
    if (r.vector.size() != static_cast<std::size_t>(dim)) {
      throw DimensionError("embedding record length does not match D");
    }
    auto v = r.vector;
    normalize(v);
    table_[r.key] = std::move(v);
  }
}

std::optional<std::vector<float>> FileEmbeddingProvider::embed(const SequenceAsset&,
                                                               const CellKey& key,
                                                               const Mask2D& mask) const {
  ++stage_counters().embed;
  const auto it = table_.find(key);
  if (it != table_.end()) return it->second;
  if (mask.empty()) return std::nullopt;
  throw MissingEmbeddingError("no embedding for track " + std::to_string(key.track_id) +
                              " at (t=" + std::to_string(key.t) + ", v=" + std::to_string(key.v) +
                              ")");
}

std::vector<double> attention_weights(const EmbeddingMatrix& bank) {
  const std::size_t n = bank.rows();
  std::vector<double> w(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    double row_max = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
      w[i * n + j] = dot(bank.row(i), bank.row(j));
      row_max = std::max(row_max, w[i * n + j]);
    }
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      w[i * n + j] = std::exp(w[i * n + j] - row_max);
      sum += w[i * n + j];
    }
    for (std::size_t j = 0; j < n; ++j) w[i * n + j] /= sum;
  }
  return w;
}

EmbeddingMatrix memory_attention(const EmbeddingMatrix& bank) {
  ++stage_counters().fuse;
  const std::size_t n = bank.rows();
  const std::size_t d = bank.cols();
  const auto w = attention_weights(bank);
  EmbeddingMatrix out(n, d);
  std::vector<double> acc(d);
  for (std::size_t i = 0; i < n; ++i) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      const double wij = w[i * n + j];
      const auto src = bank.row(j);
      for (std::size_t k = 0; k < d; ++k) acc[k] += wij * src[k];
    }
    for (std::size_t k = 0; k < d; ++k) out.at(i, k) = static_cast<float>(acc[k]);
  }
  return out;
}

std::string to_string(FusionStrategy s) {
  switch (s) {
    case FusionStrategy::individual:
      return "individual";
    case FusionStrategy::average:
      return "average";
    case FusionStrategy::attention:
      return "attention";
  }
  return "attention";
}

FusionStrategy parse_fusion_strategy(const std::string& s) {
  if (s == "individual") return FusionStrategy::individual;
  if (s == "average") return FusionStrategy::average;
  if (s == "attention") return FusionStrategy::attention;
  throw ValidationError("unknown fusion strategy '" + s + "'");
}

EmbeddingMatrix fuse_track_embeddings(const EmbeddingMatrix& bank, FusionStrategy strategy) {
  switch (strategy) {
    case FusionStrategy::individual:
      return bank;
    case FusionStrategy::average: {
      ++stage_counters().fuse;
      std::vector<double> mean(bank.cols(), 0.0);
      for (std::size_t i = 0; i < bank.rows(); ++i) {
        for (std::size_t k = 0; k < bank.cols(); ++k) mean[k] += bank.at(i, k);
      }
      EmbeddingMatrix out(bank.rows(), bank.cols());
      for (std::size_t i = 0; i < bank.rows(); ++i) {
        for (std::size_t k = 0; k < bank.cols(); ++k) {
          out.at(i, k) = static_cast<float>(mean[k] / static_cast<double>(bank.rows()));
        }
      }
      return out;
    }
    case FusionStrategy::attention:
      return memory_attention(bank);
  }
  return bank;
}

std::vector<MemoryBank> build_memory_banks(const TrackSet& tracks, const SequenceAsset& asset,
                                           const EmbeddingProvider& provider) {
  std::vector<MemoryBank> banks(tracks.tracks.size());
  const auto n_views = static_cast<std::size_t>(tracks.num_views);
  parallel_for(tracks.tracks.size(), [&](std::size_t i) {
    const MaskTrack& track = tracks.tracks[i];
    MemoryBank bank;
    bank.track_id = track.track_id;
    bank.origin = track.origin;
    bank.rows = EmbeddingMatrix(0, static_cast<std::size_t>(provider.dim()));
    for (std::size_t cell = 0; cell < track.cells.size(); ++cell) {
      if (!track.cells[cell]) continue;
      const CellKey key{track.track_id, static_cast<int>(cell / n_views),
                        static_cast<int>(cell % n_views)};
      auto vec = provider.embed(asset, key, *track.cells[cell]);
      if (!vec) continue;
      if (vec->size() != static_cast<std::size_t>(provider.dim())) {
        throw DimensionError("provider returned a vector of the wrong dimension");
      }
      bank.cells.push_back(cell);
      bank.rows.append_row(*vec);
    }
    banks[i] = std::move(bank);
  });
  return banks;
}

std::vector<MemoryBank> fuse_memory_banks(std::span<const MemoryBank> banks,
                                          FusionStrategy strategy) {
  std::vector<MemoryBank> out(banks.begin(), banks.end());
  parallel_for(out.size(), [&](std::size_t i) {
    if (out[i].origin != TrackOrigin::initial_proposal || out[i].rows.empty()) return;
    out[i].rows = fuse_track_embeddings(out[i].rows, strategy);
  });
  return out;
}

Mask3D unproject_mask(const Mask2D& mask, const RenderedView& view) {
  if (!(mask.resolution() == view.resolution)) {
    throw ValidationError("unproject_mask: resolution mismatch");
  }
  Mask3D out;
  out.frame = view.frame_index;
  out.view = view.view_index;
  for (std::size_t px = 0; px < mask.size(); ++px) {
    if (!mask.test(px) || !view.silhouette.test(px)) continue;
    out.point_indices.push_back(static_cast<std::uint32_t>(view.pixel_to_point[px]));
  }
  std::sort(out.point_indices.begin(), out.point_indices.end());
  out.point_indices.erase(std::unique(out.point_indices.begin(), out.point_indices.end()),
                          out.point_indices.end());
  return out;
}

FrameProposalSet assemble_frame(int t, const TrackSet& tracks, std::span<const MemoryBank> fused,
                                const SequenceAsset& asset) {
  std::map<int, const MemoryBank*> bank_of;
  for (const auto& b : fused) bank_of[b.track_id] = &b;

  std::vector<const MaskTrack*> ordered;
  for (const auto& track : tracks.tracks) ordered.push_back(&track);
  std::sort(ordered.begin(), ordered.end(),
            [](const MaskTrack* a, const MaskTrack* b) { return a->track_id < b->track_id; });

  FrameProposalSet set;
  set.frame = t;
  set.point_count = static_cast<std::uint32_t>(asset.frame(t).point_count());
  std::size_t dim = 0;
  for (const auto& b : fused) dim = std::max(dim, b.rows.cols());
  set.embeddings = EmbeddingMatrix(0, dim);

  for (const MaskTrack* track : ordered) {
    const auto it = bank_of.find(track->track_id);
    if (it == bank_of.end()) continue;
    const MemoryBank& bank = *it->second;
    for (int v = 0; v < tracks.num_views; ++v) {
      const std::size_t cell = asset.cell_index(t, v);
      const auto& mask = track->cells[cell];
      if (!mask || mask->empty()) continue;
      const auto row = std::find(bank.cells.begin(), bank.cells.end(), cell);
      if (row == bank.cells.end()) continue;
      Mask3D m3 = unproject_mask(*mask, asset.view(t, v));
      if (m3.point_indices.empty()) continue;
      m3.track_id = track->track_id;
      set.masks.push_back(std::move(m3));
      set.embeddings.append_row(bank.rows.row(static_cast<std::size_t>(row - bank.cells.begin())));
    }
  }
  return set;
}

}  // namespace o4d
