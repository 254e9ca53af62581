#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>

#include "doctest.h"
#include "gxc/crosscoder.hpp"
#include "gxc/error.hpp"
#include "gxc/kernels.hpp"
#include "oracles.hpp"

using namespace gxc;
namespace fs = std::filesystem;

namespace {

CrosscoderParams random_params(std::mt19937_64& rng, const DihedralGroup& g, std::size_t n, std::size_t m,
                               double bias_scale = 0.1) {
  CrosscoderParams p(g, n, m);
  for (auto& v : p.encoder_weights) v = oracle::random_vector(rng, 1)[0];
  for (auto& v : p.encoder_bias) v = oracle::random_vector(rng, 1, bias_scale)[0];
  for (auto& v : p.decoder_weights) v = oracle::random_vector(rng, 1, 0.5)[0];
  for (auto& v : p.decoder_bias) v = oracle::random_vector(rng, 1, bias_scale)[0];
  return p;
}

std::vector<ActivationOrbit> random_batch(std::mt19937_64& rng, const DihedralGroup& g, std::size_t n,
                                          std::size_t count) {
  std::vector<ActivationOrbit> batch;
  for (std::size_t b = 0; b < count; ++b) {
    batch.push_back({BlockVector(g, n, oracle::random_vector(rng, static_cast<std::size_t>(g.order()) * n)), 0, {}});
  }
  return batch;
}

std::vector<std::vector<double>> as_rows(const std::vector<ActivationOrbit>& batch) {
  std::vector<std::vector<double>> rows;
  for (const auto& o : batch) rows.emplace_back(o.x.data().begin(), o.x.data().end());
  return rows;
}

std::vector<double> flat_rows(const std::vector<ActivationOrbit>& batch) {
  std::vector<double> rows;
  for (const auto& o : batch) rows.insert(rows.end(), o.x.data().begin(), o.x.data().end());
  return rows;
}

double min_abs_preactivation(const CrosscoderParams& p, const std::vector<ActivationOrbit>& batch) {
  double worst = std::numeric_limits<double>::infinity();
  for (const auto& o : batch) {
    for (std::size_t i = 0; i < p.n_features; ++i) {
      double acc = p.encoder_bias[i];
      for (std::size_t j = 0; j < p.block_len; ++j) acc += p.encoder(i, j) * o.x0()[j];
      worst = std::min(worst, std::abs(acc));
    }
  }
  return worst;
}

double max_rel_error(const std::vector<double>& got, const std::vector<double>& want) {
  double scale = 0.0;
  for (double w : want) scale = std::max(scale, std::abs(w));
  double worst = 0.0;
  for (std::size_t k = 0; k < got.size(); ++k) worst = std::max(worst, std::abs(got[k] - want[k]));
  return scale > 0.0 ? worst / scale : worst;
}

}  // namespace

TEST_CASE("encode") {
  const DihedralGroup g(4);
  CrosscoderParams zero(g, 6, 8);
  const std::vector<double> x0 = {1, -2, 3, 0.5, 0, 4};
  for (double f : encode(zero, x0)) CHECK(f == 0.0);

  std::mt19937_64 rng(1);
  auto p = random_params(rng, g, 6, 8);
  for (auto& b : p.encoder_bias) b = -1e6;
  for (double f : encode(p, x0)) CHECK(f == 0.0);

  for (int trial = 0; trial < 20; ++trial) {
    const auto q = random_params(rng, g, 6, 8, 1.0);
    const auto x = oracle::random_vector(rng, 6);
    const auto got = encode(q, x);
    const auto want = oracle::encode(q, x);
    for (std::size_t i = 0; i < got.size(); ++i) {
      REQUIRE(got[i] >= 0.0);
      REQUIRE(std::abs(got[i] - want[i]) <= 1e-6);
    }
  }
  CHECK_THROWS_WITH_AS(encode(zero, std::vector<double>(5)), doctest::Contains("ShapeMismatch"), Error);
}

TEST_CASE("decode") {
  const DihedralGroup g(4);
  std::mt19937_64 rng(2);
  auto p = random_params(rng, g, 6, 8);
  const auto base = decode(p, std::vector<double>(8, 0.0));
  CHECK(std::vector<double>(base.data().begin(), base.data().end()) == p.decoder_bias);

  std::fill(p.decoder_bias.begin(), p.decoder_bias.end(), 0.0);
  std::vector<double> onehot(8, 0.0);
  onehot[5] = 1.0;
  const auto col = p.decoder_column(5);
  const auto hit = decode(p, onehot);
  CHECK(std::vector<double>(hit.data().begin(), hit.data().end()) == std::vector<double>(col.begin(), col.end()));

  for (int trial = 0; trial < 20; ++trial) {
    const auto q = random_params(rng, g, 6, 8);
    const auto f = oracle::random_vector(rng, 8);
    const auto got = decode(q, f);
    const auto want = oracle::decode(q, f);
    for (std::size_t r = 0; r < want.size(); ++r) REQUIRE(std::abs(got.data()[r] - want[r]) <= 1e-6);
  }
  CHECK_THROWS_AS(decode(p, std::vector<double>(3)), Error);
}

TEST_CASE("loss terms") {
  const DihedralGroup g(4);
  std::mt19937_64 rng(3);
  const auto batch = random_batch(rng, g, 6, 5);

  CrosscoderParams zero(g, 6, 8);
  double mean_sq = 0.0;
  for (const auto& o : batch) mean_sq += o.x.norm() * o.x.norm();
  mean_sq /= 5.0;
  const auto z = loss(zero, batch, 0.5);
  CHECK(z.total == doctest::Approx(mean_sq).epsilon(1e-12));
  CHECK(z.sparsity == 0.0);

  const auto p = random_params(rng, g, 6, 8, 1.0);
  const auto l0 = loss(p, batch, 0.0);
  CHECK(l0.total == l0.mse);
  for (double lambda : {0.0, 1e-3, 3e-7, 2.0}) {
    const auto l = loss(p, batch, lambda);
    CHECK(l.total == l.mse + lambda * l.sparsity);
    CHECK(l.mse >= 0.0);
    CHECK(l.sparsity >= 0.0);
    CHECK(l.total == doctest::Approx(oracle::loss(p, as_rows(batch), lambda)).epsilon(1e-12));
  }
  CHECK_THROWS_WITH_AS(loss(p, std::span<const ActivationOrbit>{}, 0.0), doctest::Contains("EmptyBatch"), Error);
}

TEST_CASE("gradients vanish for zero data and zero params") {
  const DihedralGroup g(4);
  CrosscoderParams zero(g, 6, 8);
  std::vector<ActivationOrbit> batch(3, ActivationOrbit{BlockVector(g, 6), 0, {}});
  const auto grad = gradients(zero, batch, 1e-3);
  for (double v : oracle::flatten(grad)) CHECK(v == 0.0);
  CHECK_THROWS_AS(gradients(zero, std::span<const ActivationOrbit>{}, 0.0), Error);
}

TEST_CASE("gradients match central finite differences") {
  const DihedralGroup g(4);  // |G| = 8
  int checked = 0;
  for (std::uint64_t seed = 0; checked < 20; ++seed) {
    std::mt19937_64 rng(seed);
    const auto p = random_params(rng, g, 6, 8, 0.5);
    const auto batch = random_batch(rng, g, 6, 4);
    // A step of h in W_e moves pre-activations by up to h * |x0|; keep clear of kinks.
    if (min_abs_preactivation(p, batch) < 1e-2) continue;
    ++checked;
    for (double lambda : {0.0, 1e-3}) {
      const auto fd = oracle::finite_difference_gradient(p, as_rows(batch), lambda, 1e-4);
      const auto analytic = oracle::flatten(gradients(p, batch, lambda));
      CHECK(max_rel_error(analytic, fd) <= 1e-4);
      const auto serial = kernels::serial::loss_and_gradients(p, flat_rows(batch), batch.size(), lambda);
      CHECK(max_rel_error(oracle::flatten(serial.grad), fd) <= 1e-4);
    }
  }
}

TEST_CASE("sparsity coupling reaches every tensor") {
  const DihedralGroup g(2);
  std::mt19937_64 rng(8);
  const auto p = random_params(rng, g, 3, 4, 1.0);
  const auto batch = random_batch(rng, g, 3, 6);
  const auto a = oracle::flatten(gradients(p, batch, 0.0));
  const auto b = oracle::flatten(gradients(p, batch, 0.5));
  // W_d picks up lambda * f_i * d_i / ||d_i||; W_e and b_e pick up lambda * ||d_i||.
  std::size_t changed = 0;
  for (std::size_t k = 0; k < a.size(); ++k) changed += a[k] != b[k];
  CHECK(changed > p.encoder_weights.size());
}

TEST_CASE("serial and OpenMP kernels agree; OpenMP ignores thread count") {
  const DihedralGroup g(8);
  std::mt19937_64 rng(4);
  const auto p = random_params(rng, g, 5, 12, 0.3);
  const auto batch = random_batch(rng, g, 5, 37);
  const auto rows = flat_rows(batch);
  const auto ref = kernels::serial::loss_and_gradients(p, rows, 37, 1e-2);
  const auto one = kernels::omp::loss_and_gradients(p, rows, 37, 1e-2, 1);
  const auto three = kernels::omp::loss_and_gradients(p, rows, 37, 1e-2, 3);
  CHECK(one.grad == three.grad);
  CHECK(one.loss.total == three.loss.total);
  CHECK(max_rel_error(oracle::flatten(one.grad), oracle::flatten(ref.grad)) <= 1e-12);
  CHECK(one.loss.total == doctest::Approx(ref.loss.total).epsilon(1e-12));
  CHECK(one.active_fraction == ref.active_fraction);
}

TEST_CASE("a small gradient step descends at rate |g|^2") {
  const DihedralGroup g(4);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    std::mt19937_64 rng(100 + seed);
    auto p = random_params(rng, g, 6, 8, 0.5);
    const auto batch = random_batch(rng, g, 6, 8);
    const double lambda = 1e-3;
    const auto grad = gradients(p, batch, lambda);
    const auto gv = oracle::flatten(grad);
    double g2 = 0.0;
    for (double v : gv) g2 += v * v;
    const double before = loss(p, batch, lambda).total;
    const double lr = 1e-7;
    auto ps = p.tensors();
    const auto gs = grad.tensors();
    for (std::size_t t = 0; t < 4; ++t)
      for (std::size_t k = 0; k < ps[t].size(); ++k) ps[t][k] -= lr * gs[t][k];
    const double rate = (loss(p, batch, lambda).total - before) / lr;
    CHECK(rate == doctest::Approx(-g2).epsilon(1e-3));
  }
}

TEST_CASE("initialization") {
  const DihedralGroup g(4);
  const auto p = initialize(g, 6, 10, 7);
  for (std::size_t i = 0; i < 10; ++i) {
    const auto col = p.decoder_column(i);
    double sq = 0.0;
    for (double v : col) sq += v * v;
    CHECK(sq == doctest::Approx(1.0));
    for (std::size_t j = 0; j < 6; ++j) CHECK(p.encoder(i, j) == col[j]);
    CHECK(p.encoder_bias[i] == 0.0);
  }
  for (double v : p.decoder_bias) CHECK(v == 0.0);
  CHECK(initialize(g, 6, 10, 7) == p);
}

TEST_CASE("dictionary columns") {
  const DihedralGroup g(4);
  const auto p = initialize(g, 3, 5, 1);
  const auto dict = dictionary(p);
  REQUIRE(dict.size() == 5);
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(dict[i].size() == 24);
    const auto col = p.decoder_column(i);
    CHECK(std::vector<double>(dict[i].data().begin(), dict[i].data().end()) ==
          std::vector<double>(col.begin(), col.end()));
  }
}

TEST_CASE("training") {
  SyntheticSpec spec;
  spec.n_rotations = 4;
  spec.n_features = 4;
  spec.block_len = 8;
  spec.invariance_orders = {4, 2, 1, 4};
  spec.sparsity = 1.0;
  spec.noise_sigma = 0.0;
  spec.n_samples = 4000;
  spec.seed = 21;
  const auto corpus = generate_synthetic(spec);

  TrainConfig cfg;
  cfg.lambda = 1e-4;
  cfg.batch_size = 64;
  cfg.learning_rate = 3e-3;
  cfg.seed = 5;

  SUBCASE("zero epochs return the initialization") {
    cfg.epochs = 0;
    const auto r = train(corpus.dataset, 8, cfg);
    CHECK(r.history.empty());
    std::mt19937_64 rng(cfg.seed);
    CHECK(r.params == initialize(corpus.dataset.group(), 8, 8, rng()));
  }
  SUBCASE("identical seeds give bit-identical runs for any thread count") {
    cfg.epochs = 1;
    cfg.threads = 1;
    const auto a = train(corpus.dataset, 8, cfg);
    cfg.threads = 4;
    const auto b = train(corpus.dataset, 8, cfg);
    REQUIRE(a.history.size() == b.history.size());
    for (std::size_t s = 0; s < a.history.size(); ++s) {
      REQUIRE(a.history[s].total == b.history[s].total);
      REQUIRE(std::isfinite(a.history[s].total));
    }
    CHECK(a.params == b.params);
  }
  SUBCASE("noiseless data is reconstructed") {
    cfg.epochs = 15;
    const auto r = train(corpus.dataset, 8, cfg);
    double mean_sq = 0.0;
    for (float v : corpus.dataset.data()) mean_sq += static_cast<double>(v) * v;
    mean_sq /= static_cast<double>(corpus.dataset.size());
    std::vector<ActivationOrbit> all;
    for (std::size_t i = 0; i < corpus.dataset.size(); ++i) all.push_back(corpus.dataset.orbit(i));
    const auto final_loss = loss(r.params, all, 0.0);
    CHECK(final_loss.mse <= 1e-3 * mean_sq);
  }
  SUBCASE("non-finite data aborts with a diagnostic") {
    OrbitDataset bad = corpus.dataset;
    std::vector<float> rec(bad.dim(), std::numeric_limits<float>::infinity());
    bad.add(rec, {});
    cfg.epochs = 1;
    CHECK_THROWS_WITH_AS(train(bad, 8, cfg), doctest::Contains("NonFiniteLoss"), Error);
  }
  SUBCASE("argument validation") {
    CHECK_THROWS_AS(train(corpus.dataset, 0, cfg), Error);
    cfg.learning_rate = 0.0;
    CHECK_THROWS_AS(train(corpus.dataset, 4, cfg), Error);
    CHECK_THROWS_AS(train(OrbitDataset(DihedralGroup(4), 8), 4, TrainConfig{}), Error);
  }
}

TEST_CASE("checkpoint and history files") {
  const auto dir = fs::temp_directory_path() / "gxc_test_ckpt";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const DihedralGroup g(4);
  std::mt19937_64 rng(6);
  const auto p = random_params(rng, g, 3, 5);
  const nlohmann::json meta = {{"tool_version", "x"}, {"config", {{"lambda", 3e-7}}}};
  save_checkpoint(p, meta, dir / "c.gxp");
  const auto ck = load_checkpoint(dir / "c.gxp");
  CHECK(ck.metadata == meta);
  REQUIRE(ck.params.same_shape(p));
  const auto a = oracle::flatten(p);
  const auto b = oracle::flatten(ck.params);
  for (std::size_t k = 0; k < a.size(); ++k) REQUIRE(b[k] == static_cast<double>(static_cast<float>(a[k])));

  std::string bytes;
  {
    std::ifstream in(dir / "c.gxp", std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), {});
  }
  {
    std::ofstream out(dir / "t.gxp", std::ios::binary);
    out << bytes.substr(0, bytes.size() - 30);
  }
  CHECK_THROWS_WITH_AS(load_checkpoint(dir / "t.gxp"), doctest::Contains("FormatError"), Error);

  const std::vector<StepRecord> hist = {{0, 1.5, 1.25, 0.25, 0.5}, {1, 0.1, 0.1, 0.0, 0.125}};
  write_history_csv(hist, dir / "h.csv");
  std::ifstream in(dir / "h.csv");
  std::string text((std::istreambuf_iterator<char>(in)), {});
  CHECK(text == "step,total,mse,sparsity,active_feature_fraction\n0,1.5,1.25,0.25,0.5\n1,0.1,0.1,0,0.125\n");
}
