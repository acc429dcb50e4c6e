#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "o4d/scene_types.hpp"

namespace o4d {

struct SplatConfig {
  int splat_radius_px = 2;
  // Near plane: points closer than this along the optical axis are skipped.
  double depth_epsilon = 1e-3;

  void validate() const;
};

// Depth differences below this are ties, resolved by lower point index.
inline constexpr double kDepthTieTolerance = 1e-9;

struct Projection {
  double row = 0.0;
  double col = 0.0;
  double depth = 0.0;
};

// Pinhole projection. Throws BehindCameraError when z_cam <= 0.
Projection project_point(const Camera& camera, const Vec3d& point);
Projection project_point(const Camera& camera, const Vec3f& point);

// Z-buffered disk splatting of every point of the frame. Points that land
// off-image or in front of the near plane are skipped.
RenderedView render_view(const PointCloudFrame& frame, const Camera& camera,
                         const SplatConfig& config);

// Renders all T x V cells; result index is t * V + v.
std::vector<RenderedView> render_grid(std::span<const PointCloudFrame> frames,
                                      std::span<const Camera> cameras,
                                      const SplatConfig& config);

// Debug dumps, 8-bit PNG. The silhouette is written as 0/255 grayscale.
void write_png_image(const std::filesystem::path& path, const RenderedView& view);
void write_png_silhouette(const std::filesystem::path& path, const RenderedView& view);

}  // namespace o4d
