#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "gxc/dataset.hpp"
#include "gxc/group.hpp"
#include "json.hpp"

namespace gxc {

/// Weights of a G-crosscoder with m features over n-dimensional activations.
/// Also used as the container for gradients and optimizer moments.
struct CrosscoderParams {
  DihedralGroup group{1};
  std::size_t block_len = 0;   // n
  std::size_t n_features = 0;  // m

  std::vector<double> encoder_weights;  // m x n, row-major
  std::vector<double> encoder_bias;     // m
  std::vector<double> decoder_weights;  // |G|n x m, column-major: column i is dictionary vector i
  std::vector<double> decoder_bias;     // |G|n

  CrosscoderParams() = default;
  /// All-zero parameters of the given shape.
  CrosscoderParams(DihedralGroup group, std::size_t block_len, std::size_t n_features);

  std::size_t output_dim() const noexcept { return static_cast<std::size_t>(group.order()) * block_len; }

  double& encoder(std::size_t feature, std::size_t j) { return encoder_weights[feature * block_len + j]; }
  double encoder(std::size_t feature, std::size_t j) const { return encoder_weights[feature * block_len + j]; }
  double& decoder(std::size_t row, std::size_t feature) { return decoder_weights[feature * output_dim() + row]; }
  double decoder(std::size_t row, std::size_t feature) const { return decoder_weights[feature * output_dim() + row]; }

  std::span<const double> decoder_column(std::size_t feature) const {
    return std::span<const double>(decoder_weights).subspan(feature * output_dim(), output_dim());
  }

  /// The four tensors in declared order (W_e, b_e, W_d, b_d).
  std::array<std::span<double>, 4> tensors();
  std::array<std::span<const double>, 4> tensors() const;

  bool same_shape(const CrosscoderParams& o) const noexcept {
    return group == o.group && block_len == o.block_len && n_features == o.n_features;
  }
  bool all_finite() const;

  friend bool operator==(const CrosscoderParams&, const CrosscoderParams&) = default;
};

struct LossTerms {
  double total = 0.0;
  double mse = 0.0;
  double sparsity = 0.0;
};

struct TrainConfig {
  double lambda = 3e-7;
  std::size_t epochs = 1;
  std::size_t batch_size = 256;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int threads = 0;  // 0: OpenMP default

  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

/// Decoder columns uniform on the unit sphere, W_e = identity-block rows of W_d
/// transposed, zero biases.
CrosscoderParams initialize(const DihedralGroup& group, std::size_t block_len, std::size_t n_features,
                            std::uint64_t seed);

/// f = ReLU(W_e x0 + b_e)
std::vector<double> encode(const CrosscoderParams& params, std::span<const double> x0);

/// x_hat = W_d f + b_d
BlockVector decode(const CrosscoderParams& params, std::span<const double> f);

/// mse = mean ||x - x_hat(x0)||^2, sparsity = mean sum_i f_i ||W_d,i||, total = mse + lambda * sparsity.
LossTerms loss(const CrosscoderParams& params, std::span<const ActivationOrbit> batch, double lambda);

/// Analytic gradient of loss().total with respect to every parameter.
CrosscoderParams gradients(const CrosscoderParams& params, std::span<const ActivationOrbit> batch, double lambda);

class Adam {
 public:
  Adam(const CrosscoderParams& shape, double beta1, double beta2, double epsilon);

  void step(CrosscoderParams& params, const CrosscoderParams& grad, double learning_rate);
  std::uint64_t steps() const noexcept { return t_; }

 private:
  CrosscoderParams m_;
  CrosscoderParams v_;
  double beta1_;
  double beta2_;
  double epsilon_;
  std::uint64_t t_ = 0;
};

struct StepRecord {
  std::size_t step = 0;
  double total = 0.0;
  double mse = 0.0;
  double sparsity = 0.0;
  double active_feature_fraction = 0.0;  // features firing on at least one sample of the batch
};

struct TrainResult {
  CrosscoderParams params;
  std::vector<StepRecord> history;
};

using ProgressFn = std::function<void(const StepRecord&, std::size_t total_steps)>;

/// Minibatch Adam over a shuffled dataset. Records are scaled by manifest().normalizer.
/// Deterministic for a given (dataset, m, config), independent of thread count.
TrainResult train(const OrbitDataset& dataset, std::size_t n_features, const TrainConfig& config,
                  const ProgressFn& progress = {});

/// Decoder columns as block vectors.
std::vector<BlockVector> dictionary(const CrosscoderParams& params);

// GXP1 checkpoints
struct Checkpoint {
  CrosscoderParams params;
  nlohmann::json metadata;
};

void save_checkpoint(const CrosscoderParams& params, const nlohmann::json& metadata, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// CSV: step,total,mse,sparsity,active_feature_fraction
void write_history_csv(std::span<const StepRecord> history, const std::filesystem::path& path);

}  // namespace gxc
