#pragma once

#include <span>
#include <string>
#include <vector>

#include "o4d/mask.hpp"
#include "o4d/proposal_engine.hpp"
#include "o4d/scene_model.hpp"

namespace o4d {

enum class Connectivity { four, eight };

std::string to_string(Connectivity c);
Connectivity parse_connectivity(const std::string& s);

struct ValidationConfig {
  Connectivity connectivity = Connectivity::eight;
  int min_component_area_px = 16;

  // 16 px at 512x512, scaled by H*W / 16384 elsewhere.
  static int default_min_area(Resolution resolution);
  static ValidationConfig defaults_for(Resolution resolution);
};

// Bitwise OR. Throws ValidationError on mixed resolutions.
Mask2D coverage_union(std::span<const Mask2D> masks, Resolution resolution);

// silhouette AND NOT covered.
Mask2D uncovered_region(const Mask2D& silhouette, const Mask2D& covered);

// Maximal connected regions, dropping those smaller than the configured area,
// ordered by their first pixel in row-major scan order.
std::vector<Mask2D> connected_components(const Mask2D& mask, const ValidationConfig& config);

// Appends one validation_augment track per surviving uncovered component of
// every (t, v) cell. Input tracks are carried over unchanged; new ids start
// after the largest existing id, assigned in (t, v, component) order.
TrackSet validate_and_augment(const TrackSet& tracks, const SequenceAsset& asset,
                              const ValidationConfig& config);

}  // namespace o4d
