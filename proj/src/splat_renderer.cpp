#include "o4d/splat_renderer.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <memory>

#include "o4d/errors.hpp"
#include "o4d/parallel.hpp"
#include "o4d/stage_counters.hpp"

namespace o4d {

void SplatConfig::validate() const {
  if (splat_radius_px < 0) throw ValidationError("splat_radius_px must be >= 0");
  if (!(depth_epsilon > 0.0)) throw ValidationError("depth_epsilon must be > 0");
}

namespace {

Vec3d to_camera(const Camera& camera, const Vec3d& p) {
  const auto& r = camera.extrinsics.rotation;
  const auto& t = camera.extrinsics.translation;
  return {r[0] * p[0] + r[1] * p[1] + r[2] * p[2] + t[0],
          r[3] * p[0] + r[4] * p[1] + r[5] * p[2] + t[1],
          r[6] * p[0] + r[7] * p[1] + r[8] * p[2] + t[2]};
}

Projection project_camera_space(const Intrinsics& k, const Vec3d& c) {
  return {k.principal_y + k.focal_y * (c[1] / c[2]),
          k.principal_x + k.focal_x * (c[0] / c[2]), c[2]};
}

}  // namespace

Projection project_point(const Camera& camera, const Vec3d& point) {
  const Vec3d c = to_camera(camera, point);
  if (!(c[2] > 0.0)) {
    throw BehindCameraError("point projects behind camera " +
                            std::to_string(camera.view_index) +
                            " (z_cam = " + std::to_string(c[2]) + ")");
  }
  return project_camera_space(camera.intrinsics, c);
}

Projection project_point(const Camera& camera, const Vec3f& point) {
  return project_point(camera, Vec3d{point[0], point[1], point[2]});
}

RenderedView render_view(const PointCloudFrame& frame, const Camera& camera,
                         const SplatConfig& config) {
  ++stage_counters().render;

  const Resolution res = camera.resolution;
  const std::size_t n_pixels = res.pixel_count();
  RenderedView view;
  view.frame_index = frame.frame_index;
  view.view_index = camera.view_index;
  view.resolution = res;
  view.image.assign(n_pixels * 3, 0);
  view.silhouette = Mask2D(res);
  view.depth.assign(n_pixels, RenderedView::kNoDepth);
  view.pixel_to_point.assign(n_pixels, RenderedView::kNoPoint);

  // Depth is compared in double; the stored float copy is for consumers.
  std::vector<double> zbuf(n_pixels, std::numeric_limits<double>::infinity());

  const int r = config.splat_radius_px;
  const int r2 = r * r;
  for (std::size_t i = 0; i < frame.points.size(); ++i) {
    const auto& p = frame.points[i];
    const Vec3d c = to_camera(camera, Vec3d{p[0], p[1], p[2]});
    if (c[2] < config.depth_epsilon) continue;
    const Projection proj = project_camera_space(camera.intrinsics, c);
    if (!std::isfinite(proj.row) || !std::isfinite(proj.col)) continue;
    const double row_f = std::floor(proj.row + 0.5);
    const double col_f = std::floor(proj.col + 0.5);
    if (row_f < -r || col_f < -r || row_f > res.height - 1 + r || col_f > res.width - 1 + r) {
      continue;
    }
    const int row0 = static_cast<int>(row_f);
    const int col0 = static_cast<int>(col_f);
    for (int dr = -r; dr <= r; ++dr) {
      const int row = row0 + dr;
      if (row < 0 || row >= res.height) continue;
      for (int dc = -r; dc <= r; ++dc) {
        if (dr * dr + dc * dc > r2) continue;
        const int col = col0 + dc;
        if (col < 0 || col >= res.width) continue;
        const std::size_t px = static_cast<std::size_t>(row) * res.width + col;
        // Points arrive in increasing index order, so the incumbent wins ties.
        if (c[2] < zbuf[px] - kDepthTieTolerance) {
          zbuf[px] = c[2];
          view.pixel_to_point[px] = static_cast<std::int32_t>(i);
        }
      }
    }
  }

  for (std::size_t px = 0; px < n_pixels; ++px) {
    const std::int32_t idx = view.pixel_to_point[px];
    if (idx == RenderedView::kNoPoint) continue;
    view.silhouette.set(px);
    view.depth[px] = static_cast<float>(zbuf[px]);
    const auto& color = frame.colors[static_cast<std::size_t>(idx)];
    for (int ch = 0; ch < 3; ++ch) {
      view.image[px * 3 + ch] =
          static_cast<std::uint8_t>(std::lround(std::clamp(color[ch], 0.0f, 1.0f) * 255.0f));
    }
  }
  return view;
}

std::vector<RenderedView> render_grid(std::span<const PointCloudFrame> frames,
                                      std::span<const Camera> cameras,
                                      const SplatConfig& config) {
  config.validate();
  const std::size_t n_views = cameras.size();
  std::vector<RenderedView> out(frames.size() * n_views);
  parallel_for(out.size(), [&](std::size_t cell) {
    out[cell] = render_view(frames[cell / n_views], cameras[cell % n_views], config);
  });
  return out;
}

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};

void write_png(const std::filesystem::path& path, const Resolution& res, int channels,
               const std::vector<std::uint8_t>& pixels) {
  std::unique_ptr<std::FILE, FileCloser> file(std::fopen(path.c_str(), "wb"));
  if (!file) throw LoadError("cannot write PNG: " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw Error("libpng initialization failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error("libpng write failed: " + path.string());
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, res.width, res.height, 8,
               channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int row = 0; row < res.height; ++row) {
    png_write_row(png, pixels.data() + static_cast<std::size_t>(row) * res.width * channels);
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace

void write_png_image(const std::filesystem::path& path, const RenderedView& view) {
  write_png(path, view.resolution, 3, view.image);
}

void write_png_silhouette(const std::filesystem::path& path, const RenderedView& view) {
  std::vector<std::uint8_t> gray(view.resolution.pixel_count());
  for (std::size_t i = 0; i < gray.size(); ++i) gray[i] = view.silhouette.test(i) ? 255 : 0;
  write_png(path, view.resolution, 1, gray);
}

}  // namespace o4d
