#include "o4d/scene_model.hpp"

#include <cmath>
#include <cstdio>
#include <unordered_set>

#include <json.hpp>

#include "o4d/binary_io.hpp"
#include "o4d/errors.hpp"
#include "o4d/ply_io.hpp"

namespace o4d {

using nlohmann::json;

void PointCloudFrame::validate() const {
  const std::string where = "frame " + std::to_string(frame_index) + ": ";
  if (points.empty()) throw ValidationError(where + "no points");
  if (colors.size() != points.size()) {
    throw ValidationError(where + "point count " + std::to_string(points.size()) +
                          " != color count " + std::to_string(colors.size()));
  }
  for (const auto& c : colors) {
    for (float ch : c) {
      if (!(ch >= 0.0f && ch <= 1.0f)) throw ValidationError(where + "color outside [0, 1]");
    }
  }
  for (const auto& p : points) {
    for (float x : p) {
      if (!std::isfinite(x)) throw ValidationError(where + "non-finite point position");
    }
  }
  if (point_ids) {
    if (point_ids->size() != points.size()) {
      throw ValidationError(where + "point_ids length mismatch");
    }
    std::unordered_set<std::int32_t> seen;
    for (auto id : *point_ids) {
      if (!seen.insert(id).second) {
        throw ValidationError(where + "duplicate point id " + std::to_string(id));
      }
    }
  }
  if (part_labels && part_labels->size() != points.size()) {
    throw ValidationError(where + "part_labels length mismatch");
  }
}

void Camera::validate() const {
  const std::string where = "camera " + std::to_string(view_index) + ": ";
  if (!(intrinsics.focal_x > 0.0) || !(intrinsics.focal_y > 0.0)) {
    throw ValidationError(where + "focal lengths must be positive");
  }
  if (resolution.height <= 0 || resolution.width <= 0) {
    throw ValidationError(where + "resolution must be positive");
  }
  if (!(intrinsics.principal_x > 0.0 && intrinsics.principal_x < resolution.width &&
        intrinsics.principal_y > 0.0 && intrinsics.principal_y < resolution.height)) {
    throw ValidationError(where + "principal point outside the image");
  }
  const auto& r = extrinsics.rotation;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      double dot = 0.0;
      for (int k = 0; k < 3; ++k) dot += r[i * 3 + k] * r[j * 3 + k];
      if (std::abs(dot - (i == j ? 1.0 : 0.0)) > 1e-6) {
        throw ValidationError(where + "rotation is not orthonormal");
      }
    }
  }
  const double det = r[0] * (r[4] * r[8] - r[5] * r[7]) - r[1] * (r[3] * r[8] - r[5] * r[6]) +
                     r[2] * (r[3] * r[7] - r[4] * r[6]);
  if (std::abs(det - 1.0) > 1e-6) throw ValidationError(where + "rotation determinant != +1");
}

SequenceAsset::SequenceAsset(std::vector<PointCloudFrame> frames, std::vector<Camera> cameras,
                             const SplatConfig& splat, std::vector<std::string> part_names)
    : frames_(std::move(frames)),
      cameras_(std::move(cameras)),
      splat_(splat),
      part_names_(std::move(part_names)) {
  if (frames_.empty()) throw ValidationError("sequence has no frames");
  if (cameras_.empty()) throw ValidationError("sequence has no cameras");
  splat_.validate();
  for (std::size_t t = 0; t < frames_.size(); ++t) {
    if (frames_[t].frame_index != static_cast<int>(t)) {
      throw ValidationError("frame indices must be contiguous from 0");
    }
    frames_[t].validate();
  }
  for (std::size_t v = 0; v < cameras_.size(); ++v) {
    if (cameras_[v].view_index != static_cast<int>(v)) {
      throw ValidationError("view indices must be contiguous from 0");
    }
    cameras_[v].validate();
    if (!(cameras_[v].resolution == cameras_.front().resolution)) {
      throw ValidationError("all cameras must share one resolution");
    }
  }
  rendered_ = render_grid(frames_, cameras_, splat_);
}

bool SequenceAsset::has_point_ids() const {
  for (const auto& f : frames_) {
    if (!f.point_ids) return false;
  }
  return true;
}

bool SequenceAsset::has_part_labels() const {
  for (const auto& f : frames_) {
    if (!f.part_labels) return false;
  }
  return true;
}

namespace {

template <std::size_t N>
std::array<double, N> json_array(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key) || !j[key].is_array() || j[key].size() != N) {
    throw ValidationError(where + "'" + key + "' must be an array of " + std::to_string(N));
  }
  std::array<double, N> out{};
  for (std::size_t i = 0; i < N; ++i) out[i] = j[key][i].get<double>();
  return out;
}

Camera parse_camera(const json& j, int index) {
  const std::string where = "camera " + std::to_string(index) + ": ";
  Camera cam;
  cam.view_index = index;
  const auto focal = json_array<2>(j, "focal", where);
  const auto principal = json_array<2>(j, "principal", where);
  const auto res = json_array<2>(j, "resolution", where);
  cam.intrinsics = {focal[0], focal[1], principal[0], principal[1]};
  cam.extrinsics.rotation = json_array<9>(j, "rotation", where);
  cam.extrinsics.translation = json_array<3>(j, "translation", where);
  cam.resolution = {static_cast<int>(res[0]), static_cast<int>(res[1])};
  return cam;
}

json camera_to_json(const Camera& c) {
  return {{"focal", {c.intrinsics.focal_x, c.intrinsics.focal_y}},
          {"principal", {c.intrinsics.principal_x, c.intrinsics.principal_y}},
          {"rotation", c.extrinsics.rotation},
          {"translation", c.extrinsics.translation},
          {"resolution", {c.resolution.height, c.resolution.width}}};
}

}  // namespace

SequenceAsset load_sequence(const std::filesystem::path& manifest_path, const SplatConfig& splat) {
  json manifest;
  try {
    manifest = json::parse(read_file_bytes(manifest_path));
  } catch (const json::exception& e) {
    throw FormatError(manifest_path.string() + ": invalid manifest JSON: " + e.what());
  }
  if (!manifest.contains("frames") || !manifest["frames"].is_array()) {
    throw ValidationError(manifest_path.string() + ": manifest lacks a 'frames' array");
  }
  if (!manifest.contains("cameras") || !manifest["cameras"].is_array()) {
    throw ValidationError(manifest_path.string() + ": manifest lacks a 'cameras' array");
  }
  const auto base = manifest_path.parent_path();
  std::vector<PointCloudFrame> frames;
  for (std::size_t t = 0; t < manifest["frames"].size(); ++t) {
    const std::filesystem::path rel = manifest["frames"][t].get<std::string>();
    const auto path = rel.is_absolute() ? rel : base / rel;
    if (!std::filesystem::exists(path)) throw LoadError("missing frame file: " + path.string());
    frames.push_back(read_ply(path));
    frames.back().frame_index = static_cast<int>(t);
  }
  std::vector<Camera> cameras;
  try {
    for (std::size_t v = 0; v < manifest["cameras"].size(); ++v) {
      cameras.push_back(parse_camera(manifest["cameras"][v], static_cast<int>(v)));
    }
  } catch (const json::exception& e) {
    throw ValidationError(manifest_path.string() + ": bad camera entry: " + e.what());
  }
  std::vector<std::string> part_names;
  if (manifest.contains("part_names")) {
    part_names = manifest["part_names"].get<std::vector<std::string>>();
  }
  return SequenceAsset(std::move(frames), std::move(cameras), splat, std::move(part_names));
}

std::filesystem::path save_sequence(std::span<const PointCloudFrame> frames,
                                    std::span<const Camera> cameras,
                                    std::span<const std::string> part_names,
                                    const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "frames");
  json manifest;
  manifest["frames"] = json::array();
  for (std::size_t t = 0; t < frames.size(); ++t) {
    char name[48];
    std::snprintf(name, sizeof(name), "frames/frame_%03zu.ply", t);
    write_ply(dir / name, frames[t]);
    manifest["frames"].push_back(name);
  }
  manifest["cameras"] = json::array();
  for (const auto& c : cameras) manifest["cameras"].push_back(camera_to_json(c));
  if (!part_names.empty()) {
    manifest["part_names"] = std::vector<std::string>(part_names.begin(), part_names.end());
  }
  const auto path = dir / "manifest.json";
  write_file_bytes(path, manifest.dump(2));
  return path;
}

std::filesystem::path save_sequence(const SequenceAsset& asset, const std::filesystem::path& dir) {
  return save_sequence(asset.frames(), asset.cameras(), asset.part_names(), dir);
}

}  // namespace o4d
