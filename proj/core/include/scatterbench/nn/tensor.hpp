#pragma once

#include <atomic>
#include <cstddef>
#include <new>
#include <span>
#include <string>
#include <vector>

namespace scatterbench::nn {

/// Process-wide accounting of tensor storage, used for peak-allocation reports.
class AllocationTracker {
 public:
  static void on_allocate(std::size_t bytes) noexcept;
  static void on_release(std::size_t bytes) noexcept;
  static std::size_t current_bytes() noexcept;
  static std::size_t peak_bytes() noexcept;
  // Restarts peak tracking from the current live total.
  static void reset_peak() noexcept;
};

template <class T>
struct TrackedAllocator {
  using value_type = T;
  TrackedAllocator() noexcept = default;
  template <class U>
  TrackedAllocator(const TrackedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) {
    AllocationTracker::on_allocate(n * sizeof(T));
    return static_cast<T*>(::operator new(n * sizeof(T)));
  }
  void deallocate(T* p, std::size_t n) noexcept {
    AllocationTracker::on_release(n * sizeof(T));
    ::operator delete(p);
  }
  template <class U>
  bool operator==(const TrackedAllocator<U>&) const noexcept {
    return true;
  }
};

using Buffer = std::vector<float, TrackedAllocator<float>>;

struct Shape4 {
  std::size_t n = 0;
  std::size_t c = 0;
  std::size_t h = 0;
  std::size_t w = 0;

  std::size_t count() const noexcept { return n * c * h * w; }
  std::size_t plane() const noexcept { return h * w; }
  friend bool operator==(const Shape4&, const Shape4&) = default;
};

std::string to_string(const Shape4& s);

/// Dense NCHW tensor.
class Tensor4 {
 public:
  Tensor4() = default;
  explicit Tensor4(Shape4 shape, float fill = 0.0f) : shape_(shape), data_(shape.count(), fill) {}

  const Shape4& shape() const noexcept { return shape_; }
  std::size_t n() const noexcept { return shape_.n; }
  std::size_t c() const noexcept { return shape_.c; }
  std::size_t h() const noexcept { return shape_.h; }
  std::size_t w() const noexcept { return shape_.w; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  float* data() noexcept { return data_.data(); }
  const float* data() const noexcept { return data_.data(); }
  std::span<float> values() noexcept { return data_; }
  std::span<const float> values() const noexcept { return data_; }

  float* plane(std::size_t n, std::size_t c) noexcept { return data_.data() + (n * shape_.c + c) * shape_.plane(); }
  const float* plane(std::size_t n, std::size_t c) const noexcept {
    return data_.data() + (n * shape_.c + c) * shape_.plane();
  }
  float& operator()(std::size_t n, std::size_t c, std::size_t y, std::size_t x) noexcept {
    return data_[((n * shape_.c + c) * shape_.h + y) * shape_.w + x];
  }
  float operator()(std::size_t n, std::size_t c, std::size_t y, std::size_t x) const noexcept {
    return data_[((n * shape_.c + c) * shape_.h + y) * shape_.w + x];
  }

  bool all_finite() const noexcept;
  void fill(float v) noexcept;
  // Releases storage so the allocation tracker sees it freed.
  void release() noexcept;

 private:
  Shape4 shape_;
  Buffer data_;
};

}  // namespace scatterbench::nn
