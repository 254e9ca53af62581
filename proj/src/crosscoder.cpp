#include "gxc/crosscoder.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <random>
#include <string>

#include "binary_io.hpp"
#include "gxc/error.hpp"
#include "gxc/kernels.hpp"

namespace gxc {

namespace {

constexpr std::uint32_t kCheckpointVersion = 1;

// Moments of idle parameters decay geometrically into the subnormal range, where
// arithmetic is slow. Flushing them moves an update by less than 1e-290.
double flush_subnormal(double v) { return std::abs(v) < std::numeric_limits<double>::min() ? 0.0 : v; }

std::vector<double> flatten_batch(const CrosscoderParams& params, std::span<const ActivationOrbit> batch) {
  if (batch.empty()) throw Error(Errc::EmptyBatch, "batch has no samples");
  std::vector<double> rows;
  rows.reserve(batch.size() * params.output_dim());
  for (const auto& o : batch) {
    if (o.x.size() != params.output_dim() || o.x.block_len() != params.block_len) {
      throw Error(Errc::ShapeMismatch, "orbit does not match crosscoder shape");
    }
    rows.insert(rows.end(), o.x.data().begin(), o.x.data().end());
  }
  return rows;
}

}  // namespace

CrosscoderParams::CrosscoderParams(DihedralGroup g, std::size_t n, std::size_t m)
    : group(g),
      block_len(n),
      n_features(m),
      encoder_weights(m * n, 0.0),
      encoder_bias(m, 0.0),
      decoder_weights(static_cast<std::size_t>(g.order()) * n * m, 0.0),
      decoder_bias(static_cast<std::size_t>(g.order()) * n, 0.0) {
  if (n == 0 || m == 0) throw Error(Errc::InvalidArgument, "block_len and n_features must be positive");
}

std::array<std::span<double>, 4> CrosscoderParams::tensors() {
  return {encoder_weights, encoder_bias, decoder_weights, decoder_bias};
}

std::array<std::span<const double>, 4> CrosscoderParams::tensors() const {
  return {encoder_weights, encoder_bias, decoder_weights, decoder_bias};
}

bool CrosscoderParams::all_finite() const {
  for (const auto& t : tensors()) {
    if (!std::all_of(t.begin(), t.end(), [](double v) { return std::isfinite(v); })) return false;
  }
  return true;
}

nlohmann::json TrainConfig::to_json() const {
  return {{"lambda", lambda},       {"epochs", epochs}, {"batch_size", batch_size}, {"learning_rate", learning_rate},
          {"seed", seed},           {"beta1", beta1},   {"beta2", beta2},           {"epsilon", epsilon}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.lambda = j.at("lambda").get<double>();
  c.epochs = j.at("epochs").get<std::size_t>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.beta1 = j.at("beta1").get<double>();
  c.beta2 = j.at("beta2").get<double>();
  c.epsilon = j.at("epsilon").get<double>();
  return c;
}

CrosscoderParams initialize(const DihedralGroup& group, std::size_t block_len, std::size_t n_features,
                            std::uint64_t seed) {
  CrosscoderParams p(group, block_len, n_features);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const std::size_t dim = p.output_dim();
  for (std::size_t i = 0; i < n_features; ++i) {
    double sq = 0.0;
    do {
      sq = 0.0;
      for (std::size_t r = 0; r < dim; ++r) {
        const double v = normal(rng);
        p.decoder(r, i) = v;
        sq += v * v;
      }
    } while (sq == 0.0);
    const double inv = 1.0 / std::sqrt(sq);
    for (std::size_t r = 0; r < dim; ++r) p.decoder(r, i) *= inv;
    for (std::size_t j = 0; j < block_len; ++j) p.encoder(i, j) = p.decoder(j, i);
  }
  return p;
}

std::vector<double> encode(const CrosscoderParams& params, std::span<const double> x0) {
  if (x0.size() != params.block_len) {
    throw Error(Errc::ShapeMismatch, "x0 has length " + std::to_string(x0.size()) + ", expected " +
                                         std::to_string(params.block_len));
  }
  std::vector<double> f(params.n_features);
  for (std::size_t i = 0; i < params.n_features; ++i) {
    double acc = params.encoder_bias[i];
    for (std::size_t j = 0; j < params.block_len; ++j) acc += params.encoder(i, j) * x0[j];
    f[i] = std::max(acc, 0.0);
  }
  return f;
}

BlockVector decode(const CrosscoderParams& params, std::span<const double> f) {
  if (f.size() != params.n_features) {
    throw Error(Errc::ShapeMismatch, "code has length " + std::to_string(f.size()) + ", expected " +
                                         std::to_string(params.n_features));
  }
  std::vector<double> x(params.decoder_bias);
  for (std::size_t i = 0; i < params.n_features; ++i) {
    if (f[i] == 0.0) continue;
    const auto col = params.decoder_column(i);
    for (std::size_t r = 0; r < x.size(); ++r) x[r] += col[r] * f[i];
  }
  return BlockVector(params.group, params.block_len, std::move(x));
}

LossTerms loss(const CrosscoderParams& params, std::span<const ActivationOrbit> batch, double lambda) {
  const auto rows = flatten_batch(params, batch);
  return kernels::omp::loss_and_gradients(params, rows, batch.size(), lambda).loss;
}

CrosscoderParams gradients(const CrosscoderParams& params, std::span<const ActivationOrbit> batch, double lambda) {
  const auto rows = flatten_batch(params, batch);
  return kernels::omp::loss_and_gradients(params, rows, batch.size(), lambda).grad;
}

Adam::Adam(const CrosscoderParams& shape, double beta1, double beta2, double epsilon)
    : m_(shape.group, shape.block_len, shape.n_features),
      v_(shape.group, shape.block_len, shape.n_features),
      beta1_(beta1),
      beta2_(beta2),
      epsilon_(epsilon) {}

void Adam::step(CrosscoderParams& params, const CrosscoderParams& grad, double learning_rate) {
  if (!params.same_shape(m_) || !grad.same_shape(m_)) throw Error(Errc::ShapeMismatch, "Adam shape mismatch");
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  auto ps = params.tensors();
  const auto gs = grad.tensors();
  auto ms = m_.tensors();
  auto vs = v_.tensors();
  for (std::size_t t = 0; t < ps.size(); ++t) {
    for (std::size_t k = 0; k < ps[t].size(); ++k) {
      const double g = gs[t][k];
      ms[t][k] = flush_subnormal(beta1_ * ms[t][k] + (1.0 - beta1_) * g);
      vs[t][k] = flush_subnormal(beta2_ * vs[t][k] + (1.0 - beta2_) * g * g);
      const double mhat = ms[t][k] / c1;
      const double vhat = vs[t][k] / c2;
      ps[t][k] -= learning_rate * mhat / (std::sqrt(vhat) + epsilon_);
    }
  }
}

TrainResult train(const OrbitDataset& dataset, std::size_t n_features, const TrainConfig& config,
                  const ProgressFn& progress) {
  if (dataset.empty()) throw Error(Errc::InvalidArgument, "dataset is empty");
  if (n_features == 0) throw Error(Errc::InvalidArgument, "n_features must be >= 1");
  if (!(config.lambda >= 0.0)) throw Error(Errc::InvalidArgument, "lambda must be >= 0");
  if (!(config.learning_rate > 0.0)) throw Error(Errc::InvalidArgument, "learning_rate must be > 0");
  if (config.batch_size == 0) throw Error(Errc::InvalidArgument, "batch_size must be >= 1");

  std::mt19937_64 rng(config.seed);
  TrainResult result{initialize(dataset.group(), dataset.block_len(), n_features, rng()), {}};
  Adam adam(result.params, config.beta1, config.beta2, config.epsilon);

  const std::size_t n = dataset.size();
  const std::size_t dim = dataset.dim();
  const std::size_t steps_per_epoch = (n + config.batch_size - 1) / config.batch_size;
  const std::size_t total_steps = steps_per_epoch * config.epochs;
  const double scale = dataset.manifest().normalizer;
  result.history.reserve(total_steps);

  std::vector<std::size_t> order(n);
  std::vector<double> rows;
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < n; start += config.batch_size) {
      const std::size_t count = std::min(config.batch_size, n - start);
      rows.resize(count * dim);
      for (std::size_t b = 0; b < count; ++b) {
        const auto rec = dataset.record(order[start + b]);
        for (std::size_t r = 0; r < dim; ++r) rows[b * dim + r] = scale * rec[r];
      }
      const auto batch = kernels::omp::loss_and_gradients(result.params, rows, count, config.lambda, config.threads);
      if (!std::isfinite(batch.loss.total)) {
        throw Error(Errc::NonFiniteLoss, "step " + std::to_string(step) + ", epoch " + std::to_string(epoch) +
                                             ", batch starting at shuffled position " + std::to_string(start));
      }
      adam.step(result.params, batch.grad, config.learning_rate);
      const StepRecord rec{step, batch.loss.total, batch.loss.mse, batch.loss.sparsity, batch.active_fraction};
      result.history.push_back(rec);
      if (progress) progress(rec, total_steps);
      ++step;
    }
  }
  if (!result.params.all_finite()) throw Error(Errc::NonFiniteLoss, "parameters became non-finite");
  return result;
}

std::vector<BlockVector> dictionary(const CrosscoderParams& params) {
  std::vector<BlockVector> out;
  out.reserve(params.n_features);
  for (std::size_t i = 0; i < params.n_features; ++i) {
    const auto col = params.decoder_column(i);
    out.emplace_back(params.group, params.block_len, std::vector<double>(col.begin(), col.end()));
  }
  return out;
}

void save_checkpoint(const CrosscoderParams& params, const nlohmann::json& metadata, const std::filesystem::path& path) {
  detail::ByteWriter w;
  w.magic("GXP1");
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(params.group.n_rotations()));
  w.u32(static_cast<std::uint32_t>(params.block_len));
  w.u32(static_cast<std::uint32_t>(params.n_features));
  // Declared shapes, row-major: W_e (m x n), b_e (m), W_d (|G|n x m), b_d (|G|n).
  for (double v : params.encoder_weights) w.f32(static_cast<float>(v));
  for (double v : params.encoder_bias) w.f32(static_cast<float>(v));
  for (std::size_t r = 0; r < params.output_dim(); ++r) {
    for (std::size_t i = 0; i < params.n_features; ++i) w.f32(static_cast<float>(params.decoder(r, i)));
  }
  for (double v : params.decoder_bias) w.f32(static_cast<float>(v));
  w.trailer(metadata.dump());
  detail::write_file(path, w.buffer());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const std::string file = detail::read_file(path);
  const std::string ctx = path.string();
  const auto [body, json_text] = detail::split_trailer(file, ctx);
  detail::ByteReader r(body, ctx);
  r.expect_magic("GXP1");
  if (const auto v = r.u32(); v != kCheckpointVersion) r.fail("unsupported version " + std::to_string(v));
  const std::uint32_t n_rot = r.u32();
  const std::uint32_t n = r.u32();
  const std::uint32_t m = r.u32();
  if (n_rot == 0 || n == 0 || m == 0) r.fail("zero dimension in header");
  const std::uint64_t dim = 2ull * n_rot * n;
  const std::uint64_t expected = (std::uint64_t{m} * n + m + dim * m + dim) * 4;
  if (r.remaining() != expected) r.fail("tensor data length does not match header");

  Checkpoint ck{CrosscoderParams(DihedralGroup(static_cast<int>(n_rot)), n, m), {}};
  auto& p = ck.params;
  for (auto& v : p.encoder_weights) v = r.f32();
  for (auto& v : p.encoder_bias) v = r.f32();
  for (std::size_t row = 0; row < p.output_dim(); ++row) {
    for (std::size_t i = 0; i < p.n_features; ++i) p.decoder(row, i) = r.f32();
  }
  for (auto& v : p.decoder_bias) v = r.f32();
  try {
    ck.metadata = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    r.fail(std::string("bad metadata: ") + e.what());
  }
  return ck;
}

void write_history_csv(std::span<const StepRecord> history, const std::filesystem::path& path) {
  std::string out = "step,total,mse,sparsity,active_feature_fraction\n";
  char line[192];
  for (const auto& h : history) {
    std::snprintf(line, sizeof(line), "%zu,%.9g,%.9g,%.9g,%.9g\n", h.step, h.total, h.mse, h.sparsity,
                  h.active_feature_fraction);
    out += line;
  }
  detail::write_file(path, out);
}

}  // namespace gxc
