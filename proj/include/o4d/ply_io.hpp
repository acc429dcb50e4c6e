#pragma once

#include <filesystem>

#include "o4d/scene_types.hpp"

namespace o4d {

// Reads the vertex element of an ASCII or binary little-endian PLY file.
// Required properties: x, y, z, red, green, blue. Optional integer properties
// `id` and `label` populate point_ids and part_labels. 8-bit colors are
// mapped to [0, 1]; float colors are taken as-is.
PointCloudFrame read_ply(const std::filesystem::path& path);

enum class PlyEncoding { ascii, binary_little_endian };

// Writes float32 positions, uchar colors and, when present, int32 id/label.
void write_ply(const std::filesystem::path& path, const PointCloudFrame& frame,
               PlyEncoding encoding = PlyEncoding::binary_little_endian);

}  // namespace o4d
