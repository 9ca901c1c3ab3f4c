#include "scatterbench/nn/tensor.hpp"

#include <algorithm>
#include <cmath>

namespace scatterbench::nn {

namespace {
std::atomic<std::size_t> g_current{0};
std::atomic<std::size_t> g_peak{0};
}  // namespace

void AllocationTracker::on_allocate(std::size_t bytes) noexcept {
  const std::size_t now = g_current.fetch_add(bytes, std::memory_order_relaxed) + bytes;
  std::size_t peak = g_peak.load(std::memory_order_relaxed);
  while (now > peak && !g_peak.compare_exchange_weak(peak, now, std::memory_order_relaxed)) {
  }
}

void AllocationTracker::on_release(std::size_t bytes) noexcept { g_current.fetch_sub(bytes, std::memory_order_relaxed); }

std::size_t AllocationTracker::current_bytes() noexcept { return g_current.load(std::memory_order_relaxed); }

std::size_t AllocationTracker::peak_bytes() noexcept { return g_peak.load(std::memory_order_relaxed); }

void AllocationTracker::reset_peak() noexcept { g_peak.store(g_current.load(std::memory_order_relaxed)); }

std::string to_string(const Shape4& s) {
  return "(" + std::to_string(s.n) + "," + std::to_string(s.c) + "," + std::to_string(s.h) + "," +
         std::to_string(s.w) + ")";
}

bool Tensor4::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](float v) { return std::isfinite(v); });
}

void Tensor4::fill(float v) noexcept { std::fill(data_.begin(), data_.end(), v); }

void Tensor4::release() noexcept {
  Buffer().swap(data_);
  shape_ = {};
}

}  // namespace scatterbench::nn
