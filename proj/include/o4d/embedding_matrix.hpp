#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "o4d/errors.hpp"

namespace o4d {

// Dense row-major float matrix whose rows are embedding vectors.
class EmbeddingMatrix {
 public:
  EmbeddingMatrix() = default;
  EmbeddingMatrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool empty() const { return rows_ == 0; }

  std::span<float> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
  std::span<const float> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }
  float& at(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  float at(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  void append_row(std::span<const float> values) {
    if (rows_ == 0 && cols_ == 0) cols_ = values.size();
    if (values.size() != cols_) throw DimensionError("row length does not match matrix width");
    data_.insert(data_.end(), values.begin(), values.end());
    ++rows_;
  }

  const std::vector<float>& data() const { return data_; }
  std::vector<float>& data() { return data_; }

  friend bool operator==(const EmbeddingMatrix&, const EmbeddingMatrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<float> data_;
};

inline double dot(std::span<const float> a, std::span<const float> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<double>(a[i]) * b[i];
  return s;
}

inline double norm(std::span<const float> a) { return std::sqrt(dot(a, a)); }

inline double cosine(std::span<const float> a, std::span<const float> b) {
  const double na = norm(a);
  const double nb = norm(b);
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot(a, b) / (na * nb);
}

// In-place L2 normalization; zero vectors are left untouched.
inline void normalize(std::span<float> a) {
  const double n = norm(a);
  if (n == 0.0) return;
  for (auto& x : a) x = static_cast<float>(x / n);
}

}  // namespace o4d
