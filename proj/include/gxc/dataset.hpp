#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gxc/grid.hpp"
#include "gxc/group.hpp"
#include "json.hpp"

namespace gxc {

struct Manifest {
  std::string source;
  std::uint64_t seed = 0;
  double mask_radius = 0.0;
  std::size_t samples_per_image = 0;
  std::string layer_name;
  std::string model_name;
  // Multiplies every record at training time; 1 means raw activations.
  double normalizer = 1.0;
  std::vector<std::string> skipped;
  // Free-form provenance (run config, tool version).
  nlohmann::json extra = nlohmann::json::object();

  friend bool operator==(const Manifest&, const Manifest&) = default;
};

struct ActivationOrbit {
  BlockVector x;
  std::int64_t image_id = 0;
  Coord coord;

  std::span<const double> x0() const { return x.block(0); }
};

struct RecordInfo {
  std::int64_t image_id = 0;
  Coord coord;

  friend constexpr bool operator==(const RecordInfo&, const RecordInfo&) = default;
};

/// Training corpus X: float32 orbit vectors stored contiguously, one per record.
class OrbitDataset {
 public:
  OrbitDataset(DihedralGroup group, std::size_t block_len, Manifest manifest = {});

  const DihedralGroup& group() const noexcept { return group_; }
  std::size_t block_len() const noexcept { return block_len_; }
  std::size_t dim() const noexcept { return static_cast<std::size_t>(group_.order()) * block_len_; }
  std::size_t size() const noexcept { return info_.size(); }
  bool empty() const noexcept { return info_.empty(); }

  void add(std::span<const float> x, RecordInfo info);
  void add(const BlockVector& x, RecordInfo info);
  void reserve(std::size_t n);

  std::span<const float> record(std::size_t i) const;
  const RecordInfo& info(std::size_t i) const { return info_.at(i); }
  ActivationOrbit orbit(std::size_t i) const;
  std::span<const float> data() const noexcept { return data_; }

  /// Reorders records by (image_id, coord) so that output does not depend on
  /// the order in which images were processed.
  void sort_records();

  Manifest& manifest() noexcept { return manifest_; }
  const Manifest& manifest() const noexcept { return manifest_; }

  friend bool operator==(const OrbitDataset&, const OrbitDataset&) = default;

 private:
  DihedralGroup group_;
  std::size_t block_len_;
  std::vector<float> data_;
  std::vector<RecordInfo> info_;
  Manifest manifest_;
};

/// Scalar s with mean ||s x||^2 = 1 over the dataset (1 for an empty or all-zero set).
double unit_energy_normalizer(const OrbitDataset& ds);

// ---------------------------------------------------------------------------
// Building from activation grids

/// All |G| activation grids of one image, grids[k] for group element k.
struct ImageOrbit {
  std::int64_t image_id = 0;
  std::vector<ActivationGrid> grids;
};

class GridSource {
 public:
  virtual ~GridSource() = default;
  /// Next image, std::nullopt at the end. May throw gxc::Error for an unreadable
  /// image after advancing past it.
  virtual std::optional<ImageOrbit> next() = 0;
};

class VectorGridSource final : public GridSource {
 public:
  explicit VectorGridSource(std::vector<ImageOrbit> images) : images_(std::move(images)) {}
  std::optional<ImageOrbit> next() override;

 private:
  std::vector<ImageOrbit> images_;
  std::size_t pos_ = 0;
};

struct BuildOptions {
  std::size_t n_samples = 10;
  std::uint64_t seed = 0;
  std::optional<double> mask_radius;  // default: CircularMask::for_grid
  SampleMode mode = SampleMode::NormWeighted;
};

/// Samples coordinates on each untransformed grid (per-image seed = seed ^ image_id)
/// and extracts one orbit per coordinate. Images that fail are skipped and listed
/// in manifest().skipped.
OrbitDataset build_dataset(GridSource& source, const DihedralGroup& group, const BuildOptions& options);

// ---------------------------------------------------------------------------
// Synthetic ground truth

struct SyntheticSpec {
  int n_rotations = 8;
  std::size_t n_features = 24;
  std::size_t block_len = 8;
  // Rotation period per feature; each must divide n_rotations and be <= block_len.
  std::vector<int> invariance_orders;
  double sparsity = 1.0;  // expected active features per sample
  double noise_sigma = 0.0;
  std::size_t n_samples = 1000;
  std::uint64_t seed = 0;
};

struct SyntheticCorpus {
  OrbitDataset dataset;
  std::vector<BlockVector> ground_truth;
};

/// Unit-norm feature whose block r^k is base rolled by (k mod period) and whose
/// block s r^k equals block r^(-k), so act_reflection fixes it.
BlockVector synthetic_feature(const DihedralGroup& group, std::span<const double> base, int period);

/// sum_i code[i] * features[i]
BlockVector mix_features(std::span<const BlockVector> features, std::span<const double> code);

SyntheticCorpus generate_synthetic(const SyntheticSpec& spec);

// ---------------------------------------------------------------------------
// GXC1 dataset files

void save_dataset(const OrbitDataset& ds, const std::filesystem::path& path);
OrbitDataset load_dataset(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// GXG1 grid files written by the activation extractor

struct GridFileHeader {
  int n_rotations = 0;
  int g_index = 0;
  std::int64_t image_id = 0;
  std::string layer_name;
  std::string preprocessing;  // free-form, usually JSON

  friend bool operator==(const GridFileHeader&, const GridFileHeader&) = default;
};

struct GridFile {
  GridFileHeader header;
  ActivationGrid grid;
};

void write_grid_file(const std::filesystem::path& path, const GridFileHeader& header, const ActivationGrid& grid);
GridFile read_grid_file(const std::filesystem::path& path);

/// `img{ID}_g{K}.gxg` file name.
std::string grid_file_name(std::int64_t image_id, int g_index);

/// Reads a directory of GXG1 files grouped by image id, in ascending id order.
/// Images with a missing, unreadable, or inconsistent file throw from next().
class DirectoryGridSource final : public GridSource {
 public:
  DirectoryGridSource(const std::filesystem::path& dir, const DihedralGroup& group);

  std::optional<ImageOrbit> next() override;
  std::size_t image_count() const noexcept { return files_.size(); }
  std::size_t file_count() const noexcept { return n_files_; }
  const std::string& layer_name() const noexcept { return layer_name_; }

 private:
  DihedralGroup group_;
  std::map<std::int64_t, std::map<int, std::filesystem::path>> files_;
  std::map<std::int64_t, std::map<int, std::filesystem::path>>::const_iterator it_;
  std::size_t n_files_ = 0;
  std::string layer_name_;
};

}  // namespace gxc
