#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "o4d/mask.hpp"
#include "o4d/scene_model.hpp"

namespace o4d {

enum class TrackOrigin { initial_proposal, validation_augment };

std::string to_string(TrackOrigin origin);
TrackOrigin parse_track_origin(const std::string& s);

// One mask identity across the T x V grid. Cell index is t * V + v.
struct MaskTrack {
  int track_id = 0;
  TrackOrigin origin = TrackOrigin::initial_proposal;
  std::vector<std::optional<Mask2D>> cells;

  friend bool operator==(const MaskTrack&, const MaskTrack&) = default;
};

struct TrackSet {
  int num_frames = 0;
  int num_views = 0;
  Resolution resolution;
  std::vector<MaskTrack> tracks;

  std::size_t cell_count() const {
    return static_cast<std::size_t>(num_frames) * static_cast<std::size_t>(num_views);
  }
  std::size_t n_initial() const;
  int next_track_id() const;

  // Unique ids, T*V cells per track, every initial track fully populated,
  // every augment track populated at exactly one cell, matching resolutions.
  void validate() const;

  friend bool operator==(const TrackSet&, const TrackSet&) = default;
};

// Names a single (track, t, v) cell.
struct CellRef {
  int track_id = 0;
  int t = 0;
  int v = 0;
};

// Stand-in for a class-agnostic proposal model on I(0,0): one mask per fixture
// part visible there, each optionally split into `granularity` column bands.
// Throws OracleUnavailableError when the asset has no part labels.
std::vector<Mask2D> oracle_initial_proposals(const SequenceAsset& asset, int granularity);

// Stand-in for a video tracker: collects the point ids that are frontmost
// under `seed` in I(0,0), then at every cell marks the pixels whose frontmost
// point carries one of those ids. Throws OracleUnavailableError without ids.
MaskTrack oracle_propagate(const SequenceAsset& asset, const Mask2D& seed, int track_id);

struct OracleOptions {
  int granularity = 1;
  // Cells forced to all-zero, emulating a tracker losing its target.
  std::vector<CellRef> lost_cells;
};

// Proposals on I(0,0) propagated to every cell, ids 0..N-1.
TrackSet oracle_tracks(const SequenceAsset& asset, const OracleOptions& options = {});

// Row-major run lengths alternating 0-runs and 1-runs, starting with 0s.
std::vector<std::uint32_t> rle_encode(const Mask2D& mask);
// Throws FormatError when the runs do not sum to H*W.
Mask2D rle_decode(std::span<const std::uint32_t> runs, Resolution resolution);

// Track file: JSON {T, V, H, W, tracks: [{id, origin, cells: [{t, v, rle}]}]}.
// All-zero cells of initial tracks are omitted on export and restored on read.
std::string serialize_tracks(const TrackSet& tracks);
TrackSet parse_tracks(const std::string& text);
void export_tracks(const TrackSet& tracks, const std::filesystem::path& path);

// Reads a track file and checks that T, V and the resolution match the asset.
TrackSet ingest_tracks(const std::filesystem::path& path, const SequenceAsset& asset);

}  // namespace o4d
