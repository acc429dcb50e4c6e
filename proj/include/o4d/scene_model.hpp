#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "o4d/scene_types.hpp"
#include "o4d/splat_renderer.hpp"

namespace o4d {

// A T-frame, V-view sequence with every (t, v) cell rendered. Immutable once
// constructed, so concurrent readers need no locking.
class SequenceAsset {
 public:
  // Validates frames and cameras, then renders the full grid.
  SequenceAsset(std::vector<PointCloudFrame> frames, std::vector<Camera> cameras,
                const SplatConfig& splat, std::vector<std::string> part_names = {});

  int num_frames() const { return static_cast<int>(frames_.size()); }
  int num_views() const { return static_cast<int>(cameras_.size()); }
  Resolution resolution() const { return cameras_.front().resolution; }

  const std::vector<PointCloudFrame>& frames() const { return frames_; }
  const PointCloudFrame& frame(int t) const { return frames_.at(static_cast<std::size_t>(t)); }
  const std::vector<Camera>& cameras() const { return cameras_; }
  const RenderedView& view(int t, int v) const {
    return rendered_.at(static_cast<std::size_t>(t) * cameras_.size() +
                        static_cast<std::size_t>(v));
  }
  std::size_t cell_index(int t, int v) const {
    return static_cast<std::size_t>(t) * cameras_.size() + static_cast<std::size_t>(v);
  }
  const SplatConfig& splat_config() const { return splat_; }

  // Fixture class names, indexed by part label. Empty for real captures.
  const std::vector<std::string>& part_names() const { return part_names_; }
  bool has_point_ids() const;
  bool has_part_labels() const;

 private:
  std::vector<PointCloudFrame> frames_;
  std::vector<Camera> cameras_;
  std::vector<RenderedView> rendered_;
  SplatConfig splat_;
  std::vector<std::string> part_names_;
};

// Loads a JSON manifest:
//   { "frames": ["frame_000.ply", ...],
//     "cameras": [{"focal": [fx, fy], "principal": [cx, cy],
//                  "rotation": [9 floats, row-major], "translation": [3],
//                  "resolution": [H, W]}, ...],
//     "part_names": [...] (optional, fixtures only) }
// Frame paths are relative to the manifest's directory.
SequenceAsset load_sequence(const std::filesystem::path& manifest_path,
                            const SplatConfig& splat = {});

// Writes manifest.json and frames/frame_NNN.ply under `dir`. Returns the
// manifest path.
std::filesystem::path save_sequence(std::span<const PointCloudFrame> frames,
                                    std::span<const Camera> cameras,
                                    std::span<const std::string> part_names,
                                    const std::filesystem::path& dir);
std::filesystem::path save_sequence(const SequenceAsset& asset, const std::filesystem::path& dir);

}  // namespace o4d
