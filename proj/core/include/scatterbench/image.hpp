#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace scatterbench {

/// Row-major 2D grid of single-precision values.
class Image2D {
 public:
  Image2D() = default;
  Image2D(std::size_t height, std::size_t width, float fill = 0.0f);
  Image2D(std::size_t height, std::size_t width, std::vector<float> data);

  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  float& operator()(std::size_t row, std::size_t col) noexcept { return data_[row * width_ + col]; }
  float operator()(std::size_t row, std::size_t col) const noexcept {
    return data_[row * width_ + col];
  }

  std::span<float> pixels() noexcept { return data_; }
  std::span<const float> pixels() const noexcept { return data_; }
  const std::vector<float>& values() const noexcept { return data_; }

  bool same_shape(const Image2D& other) const noexcept {
    return height_ == other.height_ && width_ == other.width_;
  }
  bool all_finite() const noexcept;

  friend bool operator==(const Image2D&, const Image2D&) = default;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<float> data_;
};

// Throws InvalidArgument naming `what` when shapes differ.
void require_same_shape(const Image2D& a, const Image2D& b, const char* what);

}  // namespace scatterbench
