#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "o4d/mask.hpp"

namespace o4d {

using Vec3f = std::array<float, 3>;
using Vec3d = std::array<double, 3>;

// One time step of a colored point sequence. Indices are 0-based.
struct PointCloudFrame {
  int frame_index = 0;
  std::vector<Vec3f> points;  // meters
  std::vector<Vec3f> colors;  // RGB in [0, 1]
  // Fixture-only: persistent identity of each point across frames.
  std::optional<std::vector<std::int32_t>> point_ids;
  // Fixture-only: ground-truth part index of each point.
  std::optional<std::vector<std::int32_t>> part_labels;

  std::size_t point_count() const { return points.size(); }

  // Throws ValidationError on length mismatch, empty frames, colors outside
  // [0, 1] or duplicate point ids.
  void validate() const;
};

struct Intrinsics {
  double focal_x = 0.0;
  double focal_y = 0.0;
  double principal_x = 0.0;  // column
  double principal_y = 0.0;  // row
};

// Rigid world -> camera transform: x_cam = R * x_world + t.
struct Extrinsics {
  std::array<double, 9> rotation{1, 0, 0, 0, 1, 0, 0, 0, 1};  // row-major
  Vec3d translation{0, 0, 0};
};

struct Camera {
  int view_index = 0;
  Intrinsics intrinsics;
  Extrinsics extrinsics;
  Resolution resolution;

  // Throws ValidationError for non-positive focal lengths, a rotation that is
  // not orthonormal with det +1 (1e-6), or a principal point outside the image.
  void validate() const;
};

struct RenderedView {
  static constexpr std::int32_t kNoPoint = -1;
  static constexpr float kNoDepth = std::numeric_limits<float>::infinity();

  int frame_index = 0;
  int view_index = 0;
  Resolution resolution;
  std::vector<std::uint8_t> image;           // H*W*3 RGB
  Mask2D silhouette;                         // S_{t,v}
  std::vector<float> depth;                  // kNoDepth on background
  std::vector<std::int32_t> pixel_to_point;  // kNoPoint on background
};

}  // namespace o4d
