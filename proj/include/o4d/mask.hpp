#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace o4d {

struct Resolution {
  int height = 0;
  int width = 0;

  std::size_t pixel_count() const {
    return static_cast<std::size_t>(height) * static_cast<std::size_t>(width);
  }
  friend bool operator==(const Resolution&, const Resolution&) = default;
};

// H x W binary occupancy, row-major, row 0 at the top.
class Mask2D {
 public:
  Mask2D() = default;
  explicit Mask2D(Resolution resolution)
      : resolution_(resolution), bits_(resolution.pixel_count(), 0) {}

  Resolution resolution() const { return resolution_; }
  int height() const { return resolution_.height; }
  int width() const { return resolution_.width; }
  std::size_t size() const { return bits_.size(); }

  bool test(std::size_t index) const { return bits_[index] != 0; }
  bool test(int row, int col) const { return test(index_of(row, col)); }
  void set(std::size_t index, bool value = true) { bits_[index] = value ? 1 : 0; }
  void set(int row, int col, bool value = true) { set(index_of(row, col), value); }

  std::span<const std::uint8_t> bits() const { return bits_; }

  std::size_t area() const;
  bool empty() const { return area() == 0; }

  std::size_t index_of(int row, int col) const {
    return static_cast<std::size_t>(row) * static_cast<std::size_t>(resolution_.width) +
           static_cast<std::size_t>(col);
  }

  friend bool operator==(const Mask2D&, const Mask2D&) = default;

 private:
  Resolution resolution_;
  std::vector<std::uint8_t> bits_;
};

inline std::size_t Mask2D::area() const {
  std::size_t n = 0;
  for (auto b : bits_) n += b != 0;
  return n;
}

}  // namespace o4d
