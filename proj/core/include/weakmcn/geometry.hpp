#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace weakmcn {

// Axis-aligned box in pixels, top-left origin.
struct Box {
  double x = 0, y = 0, w = 0, h = 0;

  double center_x() const { return x + w / 2; }
  double center_y() const { return y + h / 2; }
  double area() const { return w * h; }
  friend bool operator==(const Box&, const Box&) = default;
};

// Row-major binary grid.
struct Mask {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> bits;

  Mask() = default;
  Mask(std::size_t h, std::size_t w) : height(h), width(w), bits(h * w, 0) {}

  std::uint8_t at(std::size_t i, std::size_t j) const { return bits[i * width + j]; }
  std::uint8_t& at(std::size_t i, std::size_t j) { return bits[i * width + j]; }
  std::size_t count() const {
    std::size_t n = 0;
    for (auto b : bits) n += b ? 1 : 0;
    return n;
  }
  bool empty() const { return count() == 0; }
  friend bool operator==(const Mask&, const Mask&) = default;
};

// Tight bounding box of the set pixels; zero box for an empty mask.
inline Box tight_box(const Mask& m) {
  std::size_t r0 = m.height, r1 = 0, c0 = m.width, c1 = 0;
  bool any = false;
  for (std::size_t i = 0; i < m.height; ++i) {
    for (std::size_t j = 0; j < m.width; ++j) {
      if (!m.at(i, j)) continue;
      any = true;
      if (i < r0) r0 = i;
      if (i > r1) r1 = i;
      if (j < c0) c0 = j;
      if (j > c1) c1 = j;
    }
  }
  if (!any) return {};
  return Box{static_cast<double>(c0), static_cast<double>(r0), static_cast<double>(c1 - c0 + 1),
             static_cast<double>(r1 - r0 + 1)};
}

}  // namespace weakmcn
