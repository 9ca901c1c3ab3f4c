#include "scatterbench/image.hpp"

#include <cmath>
#include <string>

#include "scatterbench/errors.hpp"

namespace scatterbench {

Image2D::Image2D(std::size_t height, std::size_t width, float fill)
    : height_(height), width_(width), data_(height * width, fill) {}

Image2D::Image2D(std::size_t height, std::size_t width, std::vector<float> data)
    : height_(height), width_(width), data_(std::move(data)) {
  if (data_.size() != height_ * width_) {
    throw InvalidArgument("Image2D: data length " + std::to_string(data_.size()) +
                          " does not match " + std::to_string(height_) + "x" +
                          std::to_string(width_));
  }
}

bool Image2D::all_finite() const noexcept {
  for (float v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

void require_same_shape(const Image2D& a, const Image2D& b, const char* what) {
  if (!a.same_shape(b)) {
    throw InvalidArgument(std::string(what) + ": shape mismatch " + std::to_string(a.height()) +
                          "x" + std::to_string(a.width()) + " vs " + std::to_string(b.height()) +
                          "x" + std::to_string(b.width()));
  }
}

}  // namespace scatterbench
