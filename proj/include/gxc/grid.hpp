#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "gxc/group.hpp"

namespace gxc {

struct Coord {
  int x = 0;  // column
  int y = 0;  // row

  friend constexpr bool operator==(const Coord&, const Coord&) = default;
  friend constexpr auto operator<=>(const Coord& a, const Coord& b) {
    return a.y != b.y ? a.y <=> b.y : a.x <=> b.x;
  }
};

/// Spatial activation grid, row-major H x W x C.
class ActivationGrid {
 public:
  ActivationGrid(std::size_t height, std::size_t width, std::size_t channels);
  ActivationGrid(std::size_t height, std::size_t width, std::size_t channels, std::vector<float> data);

  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t channels() const noexcept { return channels_; }

  std::span<const float> at(std::size_t y, std::size_t x) const {
    return std::span<const float>(data_).subspan((y * width_ + x) * channels_, channels_);
  }
  std::span<float> at(std::size_t y, std::size_t x) {
    return std::span<float>(data_).subspan((y * width_ + x) * channels_, channels_);
  }
  std::span<const float> data() const noexcept { return data_; }
  std::span<float> data() noexcept { return data_; }

  bool same_shape(const ActivationGrid& o) const noexcept {
    return height_ == o.height_ && width_ == o.width_ && channels_ == o.channels_;
  }

  friend bool operator==(const ActivationGrid&, const ActivationGrid&) = default;

 private:
  std::size_t height_;
  std::size_t width_;
  std::size_t channels_;
  std::vector<float> data_;
};

/// Disk of grid positions (x - cx)^2 + (y - cy)^2 <= radius^2.
struct CircularMask {
  double radius = 0.0;
  double center_x = 0.0;
  double center_y = 0.0;

  /// Centered on the grid with radius min(H, W) / 2 - 1.
  static CircularMask for_grid(std::size_t height, std::size_t width);
  static CircularMask for_grid(std::size_t height, std::size_t width, double radius);

  bool contains(double x, double y) const noexcept {
    const double dx = x - center_x;
    const double dy = y - center_y;
    return dx * dx + dy * dy <= radius * radius;
  }

  /// In-mask integer positions of an H x W grid, row-major order.
  std::vector<Coord> positions(std::size_t height, std::size_t width) const;
};

using CoordinateSet = std::vector<Coord>;

enum class SampleMode {
  NormWeighted,  // without replacement, P proportional to channel L2 norm
  TopK,          // the n largest norms, ties broken by row-major position
};

/// Rotates counter-clockwise about the grid center by g.rotation * 360 / n degrees
/// (bilinear, zero fill), then flips horizontally if g.reflected. Quarter turns
/// are exact index permutations.
ActivationGrid transform_grid(const ActivationGrid& grid, DihedralElement g, const DihedralGroup& group);

/// Channel vector of transform_grid(grid, g, group) at a single position.
std::vector<float> transformed_at(const ActivationGrid& grid, DihedralElement g, const DihedralGroup& group,
                                  Coord coord);

CoordinateSet sample_coordinates(const ActivationGrid& grid, const CircularMask& mask, std::size_t n_samples,
                                 std::uint64_t seed, SampleMode mode = SampleMode::NormWeighted);

/// x = [a(gI) : g in G]: grids[k] is the activation grid for element(k); each is
/// aligned back with the inverse transform and read at coord.
BlockVector extract_orbit(std::span<const ActivationGrid> grids, Coord coord, const DihedralGroup& group);

}  // namespace gxc
