#include "o4d/mask_validation.hpp"

#include <algorithm>
#include <cmath>

#include "o4d/errors.hpp"
#include "o4d/parallel.hpp"
#include "o4d/stage_counters.hpp"

namespace o4d {

std::string to_string(Connectivity c) { return c == Connectivity::four ? "four" : "eight"; }

Connectivity parse_connectivity(const std::string& s) {
  if (s == "four" || s == "4") return Connectivity::four;
  if (s == "eight" || s == "8") return Connectivity::eight;
  throw ValidationError("unknown connectivity '" + s + "'");
}

int ValidationConfig::default_min_area(Resolution resolution) {
  return static_cast<int>(std::lround(static_cast<double>(resolution.pixel_count()) / 16384.0));
}

ValidationConfig ValidationConfig::defaults_for(Resolution resolution) {
  ValidationConfig config;
  config.min_component_area_px = default_min_area(resolution);
  return config;
}

Mask2D coverage_union(std::span<const Mask2D> masks, Resolution resolution) {
  Mask2D out(resolution);
  for (const auto& m : masks) {
    if (!(m.resolution() == resolution)) throw ValidationError("coverage_union: resolution mismatch");
    for (std::size_t px = 0; px < m.size(); ++px) {
      if (m.test(px)) out.set(px);
    }
  }
  return out;
}

Mask2D uncovered_region(const Mask2D& silhouette, const Mask2D& covered) {
  if (!(silhouette.resolution() == covered.resolution())) {
    throw ValidationError("uncovered_region: resolution mismatch");
  }
  Mask2D out(silhouette.resolution());
  for (std::size_t px = 0; px < out.size(); ++px) {
    if (silhouette.test(px) && !covered.test(px)) out.set(px);
  }
  return out;
}

std::vector<Mask2D> connected_components(const Mask2D& mask, const ValidationConfig& config) {
  if (config.min_component_area_px < 0) throw ValidationError("min_component_area_px must be >= 0");
  const int h = mask.height();
  const int w = mask.width();
  std::vector<std::uint8_t> visited(mask.size(), 0);
  std::vector<std::size_t> stack;
  std::vector<std::size_t> pixels;
  std::vector<Mask2D> out;
  const bool eight = config.connectivity == Connectivity::eight;

  for (std::size_t start = 0; start < mask.size(); ++start) {
    if (!mask.test(start) || visited[start]) continue;
    pixels.clear();
    stack.assign(1, start);
    visited[start] = 1;
    while (!stack.empty()) {
      const std::size_t px = stack.back();
      stack.pop_back();
      pixels.push_back(px);
      const int row = static_cast<int>(px / w);
      const int col = static_cast<int>(px % w);
      for (int dr = -1; dr <= 1; ++dr) {
        for (int dc = -1; dc <= 1; ++dc) {
          if (dr == 0 && dc == 0) continue;
          if (!eight && dr != 0 && dc != 0) continue;
          const int r = row + dr;
          const int c = col + dc;
          if (r < 0 || r >= h || c < 0 || c >= w) continue;
          const std::size_t n = static_cast<std::size_t>(r) * w + c;
          if (mask.test(n) && !visited[n]) {
            visited[n] = 1;
            stack.push_back(n);
          }
        }
      }
    }
    if (pixels.size() < static_cast<std::size_t>(config.min_component_area_px)) continue;
    Mask2D component(mask.resolution());
    for (auto px : pixels) component.set(px);
    out.push_back(std::move(component));
  }
  return out;
}

TrackSet validate_and_augment(const TrackSet& tracks, const SequenceAsset& asset,
                              const ValidationConfig& config) {
  ++stage_counters().validate;
  if (!(tracks.resolution == asset.resolution()) || tracks.num_frames != asset.num_frames() ||
      tracks.num_views != asset.num_views()) {
    throw ValidationError("track set does not match the asset grid");
  }
  const std::size_t n_cells = tracks.cell_count();
  std::vector<std::vector<Mask2D>> found(n_cells);
  parallel_for(n_cells, [&](std::size_t cell) {
    Mask2D covered(tracks.resolution);
    for (const auto& track : tracks.tracks) {
      const auto& m = track.cells[cell];
      if (!m) continue;
      for (std::size_t px = 0; px < m->size(); ++px) {
        if (m->test(px)) covered.set(px);
      }
    }
    const int t = static_cast<int>(cell / tracks.num_views);
    const int v = static_cast<int>(cell % tracks.num_views);
    const Mask2D missing = uncovered_region(asset.view(t, v).silhouette, covered);
    if (!missing.empty()) found[cell] = connected_components(missing, config);
  });

  TrackSet out = tracks;
  int next_id = tracks.next_track_id();
  for (std::size_t cell = 0; cell < n_cells; ++cell) {
    for (auto& component : found[cell]) {
      MaskTrack track;
      track.track_id = next_id++;
      track.origin = TrackOrigin::validation_augment;
      track.cells.resize(n_cells);
      track.cells[cell] = std::move(component);
      out.tracks.push_back(std::move(track));
    }
  }
  return out;
}

}  // namespace o4d
