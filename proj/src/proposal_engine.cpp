#include "o4d/proposal_engine.hpp"

#include <algorithm>
#include <map>
#include <unordered_set>

#include <json.hpp>

#include "o4d/binary_io.hpp"
#include "o4d/errors.hpp"
#include "o4d/parallel.hpp"
#include "o4d/stage_counters.hpp"

namespace o4d {

using nlohmann::json;

std::string to_string(TrackOrigin origin) {
  return origin == TrackOrigin::initial_proposal ? "initial_proposal" : "validation_augment";
}

TrackOrigin parse_track_origin(const std::string& s) {
  if (s == "initial_proposal") return TrackOrigin::initial_proposal;
  if (s == "validation_augment") return TrackOrigin::validation_augment;
  throw FormatError("unknown track origin '" + s + "'");
}

std::size_t TrackSet::n_initial() const {
  return static_cast<std::size_t>(std::count_if(tracks.begin(), tracks.end(), [](const auto& t) {
    return t.origin == TrackOrigin::initial_proposal;
  }));
}

int TrackSet::next_track_id() const {
  int next = 0;
  for (const auto& t : tracks) next = std::max(next, t.track_id + 1);
  return next;
}

void TrackSet::validate() const {
  std::unordered_set<int> ids;
  for (const auto& track : tracks) {
    const std::string where = "track " + std::to_string(track.track_id) + ": ";
    if (!ids.insert(track.track_id).second) throw ValidationError(where + "duplicate track id");
    if (track.cells.size() != cell_count()) {
      throw ValidationError(where + "cell grid has " + std::to_string(track.cells.size()) +
                            " cells, expected T*V = " + std::to_string(cell_count()));
    }
    std::size_t populated = 0;
    for (const auto& cell : track.cells) {
      if (!cell) continue;
      ++populated;
      if (!(cell->resolution() == resolution)) {
        throw ValidationError(where + "mask resolution does not match the track set");
      }
    }
    if (track.origin == TrackOrigin::initial_proposal && populated != cell_count()) {
      throw ValidationError(where + "initial proposal track must populate every cell");
    }
    if (track.origin == TrackOrigin::validation_augment && populated != 1) {
      throw ValidationError(where + "validation track must populate exactly one cell");
    }
  }
}

namespace {

void require_labels(const SequenceAsset& asset) {
  if (!asset.has_part_labels() || !asset.has_point_ids()) {
    throw OracleUnavailableError("oracle tracker needs fixture point ids and part labels");
  }
}

}  // namespace

std::vector<Mask2D> oracle_initial_proposals(const SequenceAsset& asset, int granularity) {
  require_labels(asset);
  if (granularity < 1) throw ValidationError("granularity must be >= 1");
  const RenderedView& view = asset.view(0, 0);
  const auto& labels = *asset.frame(0).part_labels;
  const Resolution res = view.resolution;

  std::map<int, Mask2D> by_part;
  for (std::size_t px = 0; px < res.pixel_count(); ++px) {
    const auto idx = view.pixel_to_point[px];
    if (idx == RenderedView::kNoPoint) continue;
    const int part = labels[static_cast<std::size_t>(idx)];
    auto [it, _] = by_part.try_emplace(part, res);
    it->second.set(px);
  }

  std::vector<Mask2D> out;
  for (auto& [part, mask] : by_part) {
    if (granularity == 1) {
      out.push_back(std::move(mask));
      continue;
    }
    int col_min = res.width;
    int col_max = -1;
    for (int row = 0; row < res.height; ++row) {
      for (int col = 0; col < res.width; ++col) {
        if (mask.test(row, col)) {
          col_min = std::min(col_min, col);
          col_max = std::max(col_max, col);
        }
      }
    }
    const int span = col_max - col_min + 1;
    for (int band = 0; band < granularity; ++band) {
      const int lo = col_min + span * band / granularity;
      const int hi = col_min + span * (band + 1) / granularity;
      Mask2D sub(res);
      for (int row = 0; row < res.height; ++row) {
        for (int col = lo; col < hi; ++col) {
          if (mask.test(row, col)) sub.set(row, col);
        }
      }
      if (!sub.empty()) out.push_back(std::move(sub));
    }
  }
  return out;
}

MaskTrack oracle_propagate(const SequenceAsset& asset, const Mask2D& seed, int track_id) {
  if (!asset.has_point_ids()) {
    throw OracleUnavailableError("oracle tracker needs fixture point ids");
  }
  ++stage_counters().track;
  const RenderedView& first = asset.view(0, 0);
  if (!(seed.resolution() == first.resolution)) {
    throw ValidationError("seed mask resolution does not match the asset");
  }
  const auto& ids0 = *asset.frame(0).point_ids;
  std::unordered_set<std::int32_t> ids;
  for (std::size_t px = 0; px < seed.size(); ++px) {
    if (!seed.test(px)) continue;
    const auto idx = first.pixel_to_point[px];
    if (idx != RenderedView::kNoPoint) ids.insert(ids0[static_cast<std::size_t>(idx)]);
  }

  MaskTrack track;
  track.track_id = track_id;
  track.origin = TrackOrigin::initial_proposal;
  track.cells.resize(static_cast<std::size_t>(asset.num_frames()) * asset.num_views());
  for (int t = 0; t < asset.num_frames(); ++t) {
    const auto& frame_ids = *asset.frame(t).point_ids;
    for (int v = 0; v < asset.num_views(); ++v) {
      const RenderedView& view = asset.view(t, v);
      Mask2D cell(view.resolution);
      if (!ids.empty()) {
        for (std::size_t px = 0; px < cell.size(); ++px) {
          const auto idx = view.pixel_to_point[px];
          if (idx != RenderedView::kNoPoint && ids.contains(frame_ids[static_cast<std::size_t>(idx)])) {
            cell.set(px);
          }
        }
      }
      track.cells[asset.cell_index(t, v)] = std::move(cell);
    }
  }
  return track;
}

TrackSet oracle_tracks(const SequenceAsset& asset, const OracleOptions& options) {
  const auto seeds = oracle_initial_proposals(asset, options.granularity);
  TrackSet set;
  set.num_frames = asset.num_frames();
  set.num_views = asset.num_views();
  set.resolution = asset.resolution();
  set.tracks.resize(seeds.size());
  parallel_for(seeds.size(), [&](std::size_t i) {
    set.tracks[i] = oracle_propagate(asset, seeds[i], static_cast<int>(i));
  });
  for (const auto& lost : options.lost_cells) {
    if (lost.track_id < 0 || lost.track_id >= static_cast<int>(set.tracks.size()) || lost.t < 0 ||
        lost.t >= set.num_frames || lost.v < 0 || lost.v >= set.num_views) {
      throw ValidationError("lost cell refers to a track or cell that does not exist");
    }
    set.tracks[static_cast<std::size_t>(lost.track_id)].cells[asset.cell_index(lost.t, lost.v)] =
        Mask2D(set.resolution);
  }
  return set;
}

std::vector<std::uint32_t> rle_encode(const Mask2D& mask) {
  std::vector<std::uint32_t> runs;
  std::uint8_t current = 0;
  std::uint32_t length = 0;
  for (const auto b : mask.bits()) {
    const std::uint8_t bit = b != 0;
    if (bit != current) {
      runs.push_back(length);
      current = bit;
      length = 0;
    }
    ++length;
  }
  runs.push_back(length);
  return runs;
}

Mask2D rle_decode(std::span<const std::uint32_t> runs, Resolution resolution) {
  std::uint64_t total = 0;
  for (auto r : runs) total += r;
  if (total != resolution.pixel_count()) {
    throw FormatError("malformed RLE: runs sum to " + std::to_string(total) + ", expected H*W = " +
                      std::to_string(resolution.pixel_count()));
  }
  Mask2D mask(resolution);
  std::size_t pos = 0;
  bool bit = false;
  for (auto r : runs) {
    if (bit) {
      for (std::uint32_t i = 0; i < r; ++i) mask.set(pos + i);
    }
    pos += r;
    bit = !bit;
  }
  return mask;
}

std::string serialize_tracks(const TrackSet& set) {
  json doc;
  doc["T"] = set.num_frames;
  doc["V"] = set.num_views;
  doc["H"] = set.resolution.height;
  doc["W"] = set.resolution.width;
  doc["tracks"] = json::array();
  for (const auto& track : set.tracks) {
    json jt;
    jt["id"] = track.track_id;
    jt["origin"] = to_string(track.origin);
    jt["cells"] = json::array();
    for (std::size_t cell = 0; cell < track.cells.size(); ++cell) {
      const auto& mask = track.cells[cell];
      if (!mask) continue;
      if (track.origin == TrackOrigin::initial_proposal && mask->empty()) continue;
      jt["cells"].push_back({{"t", cell / static_cast<std::size_t>(set.num_views)},
                             {"v", cell % static_cast<std::size_t>(set.num_views)},
                             {"rle", rle_encode(*mask)}});
    }
    doc["tracks"].push_back(std::move(jt));
  }
  return doc.dump();
}

TrackSet parse_tracks(const std::string& text) {
  TrackSet set;
  try {
    const json doc = json::parse(text);
    set.num_frames = doc.at("T").get<int>();
    set.num_views = doc.at("V").get<int>();
    set.resolution = {doc.at("H").get<int>(), doc.at("W").get<int>()};
    if (set.num_frames <= 0 || set.num_views <= 0 || set.resolution.height <= 0 ||
        set.resolution.width <= 0) {
      throw FormatError("track file has non-positive dimensions");
    }
    for (const auto& jt : doc.at("tracks")) {
      MaskTrack track;
      track.track_id = jt.at("id").get<int>();
      track.origin = parse_track_origin(jt.at("origin").get<std::string>());
      track.cells.resize(set.cell_count());
      for (const auto& jc : jt.at("cells")) {
        const int t = jc.at("t").get<int>();
        const int v = jc.at("v").get<int>();
        if (t < 0 || t >= set.num_frames || v < 0 || v >= set.num_views) {
          throw FormatError("track " + std::to_string(track.track_id) + ": cell (" +
                            std::to_string(t) + ", " + std::to_string(v) +
                            ") outside the T x V grid");
        }
        const auto runs = jc.at("rle").get<std::vector<std::uint32_t>>();
        auto& slot = track.cells[static_cast<std::size_t>(t) * set.num_views + v];
        if (slot) throw FormatError("duplicate cell in track " + std::to_string(track.track_id));
        slot = rle_decode(runs, set.resolution);
      }
      if (track.origin == TrackOrigin::initial_proposal) {
        for (auto& cell : track.cells) {
          if (!cell) cell = Mask2D(set.resolution);
        }
      }
      set.tracks.push_back(std::move(track));
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed track file: ") + e.what());
  }
  set.validate();
  return set;
}

void export_tracks(const TrackSet& tracks, const std::filesystem::path& path) {
  write_file_bytes(path, serialize_tracks(tracks));
}

TrackSet ingest_tracks(const std::filesystem::path& path, const SequenceAsset& asset) {
  TrackSet set = parse_tracks(read_file_bytes(path));
  if (!(set.resolution == asset.resolution())) {
    throw ValidationError(path.string() + ": track resolution " +
                          std::to_string(set.resolution.height) + "x" +
                          std::to_string(set.resolution.width) + " does not match the asset");
  }
  if (set.num_frames != asset.num_frames() || set.num_views != asset.num_views()) {
    throw ValidationError(path.string() + ": cell grid " + std::to_string(set.num_frames) + "x" +
                          std::to_string(set.num_views) + " does not match the asset's T x V");
  }
  return set;
}

}  // namespace o4d
