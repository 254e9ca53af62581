#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gxc/group.hpp"
#include "json.hpp"

namespace gxc {

/// S_ij = max over g of cos(f_i, g f_j), with the maximizing g. Ties go to the
/// first element in canonical order. Zero features get 0 and are listed.
struct SimilarityMatrix {
  std::size_t size = 0;
  std::vector<double> values;             // row-major size x size
  std::vector<DihedralElement> argmax;    // row-major size x size
  std::vector<std::size_t> zero_features;

  double at(std::size_t i, std::size_t j) const { return values.at(i * size + j); }
  DihedralElement argmax_at(std::size_t i, std::size_t j) const { return argmax.at(i * size + j); }
  /// 1 - S, the precomputed metric handed to embedding tools.
  std::vector<double> distance() const;
};

SimilarityMatrix similarity_matrix(std::span<const BlockVector> dictionary, int threads = 0);

/// cos between two vectors; 0 when either is zero.
double cosine(std::span<const double> a, std::span<const double> b);

struct SymmetryReport {
  std::size_t feature_id = 0;
  std::size_t n_blocks = 0;
  std::vector<double> block_cosine;  // n_blocks x n_blocks, canonical block order
  // Smallest divisor t of n_rotations whose mean cos(r^k, r^(k+t)) reaches the
  // threshold; empty if none does (only possible with zero blocks).
  std::optional<int> rotation_period;
  bool reflection_symmetric = false;  // mean cos(r^k, s r^k) >= threshold
  std::vector<std::size_t> zero_blocks;
};

inline constexpr double kDefaultInvarianceThreshold = 0.9;

/// Throws Errc::ZeroVector for an all-zero f.
SymmetryReport symmetry_report(const BlockVector& f, double threshold = kDefaultInvarianceThreshold,
                               std::size_t feature_id = 0);

/// q[j][k]: activation of one feature on transform k of probe image j.
struct TransformProfile {
  std::size_t feature_id = 0;
  DihedralGroup group{1};
  std::size_t n_images = 0;
  std::vector<double> values;  // n_images x |G|, row-major

  std::span<const double> row(std::size_t j) const {
    return std::span<const double>(values).subspan(j * static_cast<std::size_t>(group.order()),
                                                   static_cast<std::size_t>(group.order()));
  }
  friend bool operator==(const TransformProfile&, const TransformProfile&) = default;
};

/// Throws Errc::MissingEntry when a row is short or holds a non-finite value.
TransformProfile transform_profile(std::size_t feature_id, const DihedralGroup& group,
                                   const std::vector<std::vector<double>>& activations);

/// Block permutation of g applied to each image's |G| entries; image order is kept.
TransformProfile act_per_image(DihedralElement g, const TransformProfile& profile);

// ---------------------------------------------------------------------------
// Exports. All writers are byte-deterministic.

/// Header `feature_id,<id...>`, then one row per feature of 1 - S, 9 significant digits.
std::string distance_csv(const SimilarityMatrix& s, std::span<const std::size_t> feature_ids = {});
void export_distance_matrix(const SimilarityMatrix& s, const std::filesystem::path& path,
                            std::span<const std::size_t> feature_ids = {});

struct HeatmapOptions {
  std::string title;
  std::size_t divider = 0;  // draw quadrant lines after this many rows/cols; 0 for none
  nlohmann::json metadata;  // embedded verbatim in a <metadata> element
};

/// Values in [-1, 1] on a fixed blue-white-red ramp, one <rect class="cell"> per entry.
std::string heatmap_svg(std::span<const double> matrix, std::size_t rows, std::size_t cols,
                        const HeatmapOptions& options = {});
void export_heatmap(std::span<const double> matrix, std::size_t rows, std::size_t cols,
                    const std::filesystem::path& path, const HeatmapOptions& options = {});

nlohmann::json to_json(const SymmetryReport& report);
/// JSON array of reports.
void export_symmetry_reports(std::span<const SymmetryReport> reports, const std::filesystem::path& path);

}  // namespace gxc
