#include "gxc/grid.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <string>

#include "gxc/error.hpp"

namespace gxc {

ActivationGrid::ActivationGrid(std::size_t height, std::size_t width, std::size_t channels)
    : ActivationGrid(height, width, channels, std::vector<float>(height * width * channels, 0.0f)) {}

ActivationGrid::ActivationGrid(std::size_t height, std::size_t width, std::size_t channels,
                               std::vector<float> data)
    : height_(height), width_(width), channels_(channels), data_(std::move(data)) {
  if (height_ == 0 || width_ == 0 || channels_ == 0) {
    throw Error(Errc::InvalidArgument, "grid dimensions must be positive");
  }
  if (data_.size() != height_ * width_ * channels_) {
    throw Error(Errc::ShapeMismatch, "grid data length != H*W*C");
  }
  for (float v : data_) {
    if (!std::isfinite(v)) throw Error(Errc::InvalidArgument, "grid contains non-finite values");
  }
}

CircularMask CircularMask::for_grid(std::size_t height, std::size_t width) {
  return for_grid(height, width, static_cast<double>(std::min(height, width)) / 2.0 - 1.0);
}

CircularMask CircularMask::for_grid(std::size_t height, std::size_t width, double radius) {
  if (!(radius > 0.0)) throw Error(Errc::InvalidArgument, "mask radius must be positive");
  return {radius, (static_cast<double>(width) - 1.0) / 2.0, (static_cast<double>(height) - 1.0) / 2.0};
}

std::vector<Coord> CircularMask::positions(std::size_t height, std::size_t width) const {
  std::vector<Coord> out;
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      if (contains(static_cast<double>(x), static_cast<double>(y))) {
        out.push_back({static_cast<int>(x), static_cast<int>(y)});
      }
    }
  }
  return out;
}

namespace {

struct Rotation {
  double cos_t;
  double sin_t;
  bool exact;  // quarter turn: source coordinates land on integers
};

Rotation rotation_for(DihedralElement g, const DihedralGroup& group) {
  const int n = group.n_rotations();
  if ((4 * g.rotation) % n == 0) {
    static constexpr double kCos[] = {1.0, 0.0, -1.0, 0.0};
    static constexpr double kSin[] = {0.0, 1.0, 0.0, -1.0};
    const int q = (4 * g.rotation) / n;
    return {kCos[q], kSin[q], true};
  }
  const double theta = 2.0 * std::numbers::pi * g.rotation / n;
  return {std::cos(theta), std::sin(theta), false};
}

// Writes the transformed channel vector at output position (x, y) into out.
void sample_into(const ActivationGrid& grid, const Rotation& rot, bool reflected, std::size_t x, std::size_t y,
                 std::span<float> out) {
  const auto size = static_cast<double>(grid.width());
  const double c = (size - 1.0) / 2.0;
  const double xr = reflected ? size - 1.0 - static_cast<double>(x) : static_cast<double>(x);
  // y axis points down in the array; rotate in a y-up frame so that positive
  // angles are counter-clockwise as displayed.
  const double u = xr - c;
  const double w = c - static_cast<double>(y);
  const double su = rot.cos_t * u + rot.sin_t * w;
  const double sw = -rot.sin_t * u + rot.cos_t * w;
  const double sx = c + su;
  const double sy = c - sw;
  const auto h = static_cast<long>(grid.height());
  const auto wd = static_cast<long>(grid.width());

  if (rot.exact) {
    const long ix = std::lround(sx);
    const long iy = std::lround(sy);
    if (ix < 0 || iy < 0 || ix >= wd || iy >= h) {
      std::fill(out.begin(), out.end(), 0.0f);
      return;
    }
    const auto src = grid.at(static_cast<std::size_t>(iy), static_cast<std::size_t>(ix));
    std::copy(src.begin(), src.end(), out.begin());
    return;
  }

  const double fx0 = std::floor(sx);
  const double fy0 = std::floor(sy);
  const double ax = sx - fx0;
  const double ay = sy - fy0;
  const auto x0 = static_cast<long>(fx0);
  const auto y0 = static_cast<long>(fy0);
  const long xs[2] = {x0, x0 + 1};
  const long ys[2] = {y0, y0 + 1};
  const double wx[2] = {1.0 - ax, ax};
  const double wy[2] = {1.0 - ay, ay};

  for (std::size_t ch = 0; ch < out.size(); ++ch) {
    double acc = 0.0;
    for (int j = 0; j < 2; ++j) {
      if (ys[j] < 0 || ys[j] >= h || wy[j] == 0.0) continue;
      for (int i = 0; i < 2; ++i) {
        if (xs[i] < 0 || xs[i] >= wd || wx[i] == 0.0) continue;
        acc += wy[j] * wx[i] *
               grid.at(static_cast<std::size_t>(ys[j]), static_cast<std::size_t>(xs[i]))[ch];
      }
    }
    out[ch] = static_cast<float>(acc);
  }
}

void require_square(const ActivationGrid& grid) {
  if (grid.height() != grid.width()) {
    throw Error(Errc::NonSquareGrid, std::to_string(grid.height()) + "x" + std::to_string(grid.width()));
  }
}

}  // namespace

ActivationGrid transform_grid(const ActivationGrid& grid, DihedralElement g, const DihedralGroup& group) {
  require_square(grid);
  if (!group.contains(g)) throw Error(Errc::InvalidArgument, "element not in group");
  if (g == DihedralElement::identity()) return grid;
  const Rotation rot = rotation_for(g, group);
  ActivationGrid out(grid.height(), grid.width(), grid.channels());
  for (std::size_t y = 0; y < grid.height(); ++y) {
    for (std::size_t x = 0; x < grid.width(); ++x) {
      sample_into(grid, rot, g.reflected, x, y, out.at(y, x));
    }
  }
  return out;
}

std::vector<float> transformed_at(const ActivationGrid& grid, DihedralElement g, const DihedralGroup& group,
                                  Coord coord) {
  require_square(grid);
  if (!group.contains(g)) throw Error(Errc::InvalidArgument, "element not in group");
  if (coord.x < 0 || coord.y < 0 || static_cast<std::size_t>(coord.x) >= grid.width() ||
      static_cast<std::size_t>(coord.y) >= grid.height()) {
    throw Error(Errc::CoordOutOfBounds,
                "(" + std::to_string(coord.x) + ", " + std::to_string(coord.y) + ")");
  }
  std::vector<float> out(grid.channels());
  const auto x = static_cast<std::size_t>(coord.x);
  const auto y = static_cast<std::size_t>(coord.y);
  if (g == DihedralElement::identity()) {
    const auto src = grid.at(y, x);
    std::copy(src.begin(), src.end(), out.begin());
    return out;
  }
  sample_into(grid, rotation_for(g, group), g.reflected, x, y, out);
  return out;
}

CoordinateSet sample_coordinates(const ActivationGrid& grid, const CircularMask& mask, std::size_t n_samples,
                                 std::uint64_t seed, SampleMode mode) {
  const auto candidates = mask.positions(grid.height(), grid.width());
  if (candidates.size() < n_samples) {
    throw Error(Errc::MaskTooSmall, std::to_string(candidates.size()) + " in-mask positions < " +
                                        std::to_string(n_samples) + " requested");
  }

  std::vector<double> norms(candidates.size());
  bool any_nonzero = false;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    double sq = 0.0;
    for (float v : grid.at(static_cast<std::size_t>(candidates[i].y), static_cast<std::size_t>(candidates[i].x))) {
      sq += static_cast<double>(v) * v;
    }
    norms[i] = std::sqrt(sq);
    any_nonzero = any_nonzero || norms[i] > 0.0;
  }
  if (!any_nonzero) throw Error(Errc::AllZero, "every in-mask position has zero norm");

  std::vector<std::size_t> order(candidates.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  if (mode == SampleMode::TopK) {
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return norms[a] > norms[b]; });
  } else {
    // Exponential race: key = -ln(u) / w, the n smallest keys are a weighted
    // sample without replacement. Zero-weight positions only fill leftover slots.
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    struct Key {
      bool zero;
      double value;
    };
    std::vector<Key> keys(candidates.size());
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      const double u = 1.0 - unif(rng);  // (0, 1]
      keys[i] = norms[i] > 0.0 ? Key{false, -std::log(u) / norms[i]} : Key{true, u};
    }
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_samples), order.end(),
                      [&](std::size_t a, std::size_t b) {
                        if (keys[a].zero != keys[b].zero) return !keys[a].zero;
                        if (keys[a].value != keys[b].value) return keys[a].value < keys[b].value;
                        return a < b;
                      });
  }

  CoordinateSet out;
  out.reserve(n_samples);
  for (std::size_t i = 0; i < n_samples; ++i) out.push_back(candidates[order[i]]);
  return out;
}

BlockVector extract_orbit(std::span<const ActivationGrid> grids, Coord coord, const DihedralGroup& group) {
  if (grids.size() != static_cast<std::size_t>(group.order())) {
    throw Error(Errc::ShapeMismatch, "expected " + std::to_string(group.order()) + " grids, got " +
                                         std::to_string(grids.size()));
  }
  for (const auto& g : grids) {
    if (!g.same_shape(grids.front())) throw Error(Errc::ShapeMismatch, "orbit grids differ in shape");
  }
  const std::size_t channels = grids.front().channels();
  BlockVector x(group, channels);
  for (int k = 0; k < group.order(); ++k) {
    const auto values = transformed_at(grids[static_cast<std::size_t>(k)], inverse(group.element(k), group), group, coord);
    auto block = x.block(static_cast<std::size_t>(k));
    std::copy(values.begin(), values.end(), block.begin());
  }
  return x;
}

}  // namespace gxc
