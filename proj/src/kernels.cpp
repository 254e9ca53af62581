#include "gxc/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "gxc/error.hpp"

namespace gxc::kernels {

namespace {

void check_batch(const CrosscoderParams& params, std::span<const double> rows, std::size_t batch_size) {
  if (batch_size == 0) throw Error(Errc::EmptyBatch, "batch has no samples");
  if (rows.size() != batch_size * params.output_dim()) {
    throw Error(Errc::ShapeMismatch, "batch rows hold " + std::to_string(rows.size()) + " values, expected " +
                                         std::to_string(batch_size * params.output_dim()));
  }
}

std::vector<double> column_norms(const CrosscoderParams& p) {
  std::vector<double> norms(p.n_features);
  for (std::size_t i = 0; i < p.n_features; ++i) {
    const auto col = p.decoder_column(i);
    norms[i] = std::sqrt(std::inner_product(col.begin(), col.end(), col.begin(), 0.0));
  }
  return norms;
}

int resolve_threads(int threads) {
#ifdef _OPENMP
  return threads > 0 ? threads : omp_get_max_threads();
#else
  (void)threads;
  return 1;
#endif
}

struct Prepared {
  std::vector<double> norms;
  std::vector<std::vector<int>> perms;  // source block per destination, per element
  std::vector<std::vector<int>> inverse_perms;
};

// Exact maximum; the argmax is the first element within kTieTolerance of it.
void pick_best(std::span<const double> scores, double& value, int& arg) {
  value = *std::max_element(scores.begin(), scores.end());
  for (std::size_t g = 0; g < scores.size(); ++g) {
    if (scores[g] >= value - kTieTolerance) {
      arg = static_cast<int>(g);
      return;
    }
  }
}

Prepared prepare(std::span<const BlockVector> features) {
  Prepared p;
  if (features.empty()) return p;
  const auto& group = features.front().group();
  for (const auto& f : features) {
    if (!(f.group() == group) || f.block_len() != features.front().block_len()) {
      throw Error(Errc::ShapeMismatch, "features differ in shape");
    }
    p.norms.push_back(f.norm());
  }
  for (int g = 0; g < group.order(); ++g) {
    p.perms.push_back(block_permutation(group.element(g), group));
    std::vector<int> inv(p.perms.back().size());
    for (std::size_t a = 0; a < inv.size(); ++a) inv[static_cast<std::size_t>(p.perms.back()[a])] = static_cast<int>(a);
    p.inverse_perms.push_back(std::move(inv));
  }
  return p;
}

}  // namespace

namespace serial {

BatchResult loss_and_gradients(const CrosscoderParams& params, std::span<const double> rows, std::size_t batch_size,
                               double lambda) {
  check_batch(params, rows, batch_size);
  const std::size_t n = params.block_len;
  const std::size_t m = params.n_features;
  const std::size_t dim = params.output_dim();
  const double inv_b = 1.0 / static_cast<double>(batch_size);
  const auto norms = column_norms(params);

  BatchResult out{{}, 0.0, CrosscoderParams(params.group, n, m)};
  auto& g = out.grad;
  std::vector<double> pre(m), f(m), err(dim);
  std::vector<bool> fired(m, false);
  double mse = 0.0;
  double sparsity = 0.0;

  for (std::size_t b = 0; b < batch_size; ++b) {
    const auto x = rows.subspan(b * dim, dim);
    for (std::size_t i = 0; i < m; ++i) {
      double acc = params.encoder_bias[i];
      for (std::size_t j = 0; j < n; ++j) acc += params.encoder(i, j) * x[j];
      pre[i] = acc;
      f[i] = acc > 0.0 ? acc : 0.0;
      if (f[i] > 0.0) fired[i] = true;
      sparsity += f[i] * norms[i];
    }
    for (std::size_t r = 0; r < dim; ++r) {
      double acc = params.decoder_bias[r];
      for (std::size_t i = 0; i < m; ++i) acc += params.decoder(r, i) * f[i];
      err[r] = acc - x[r];
      mse += err[r] * err[r];
      g.decoder_bias[r] += 2.0 * err[r] * inv_b;
    }
    for (std::size_t i = 0; i < m; ++i) {
      double back = 0.0;
      for (std::size_t r = 0; r < dim; ++r) {
        back += params.decoder(r, i) * err[r];
        g.decoder(r, i) += 2.0 * err[r] * f[i] * inv_b;
        if (norms[i] > 0.0) g.decoder(r, i) += lambda * inv_b * f[i] * params.decoder(r, i) / norms[i];
      }
      if (pre[i] > 0.0) {
        const double d = 2.0 * back * inv_b + lambda * inv_b * norms[i];
        g.encoder_bias[i] += d;
        for (std::size_t j = 0; j < n; ++j) g.encoder(i, j) += d * x[j];
      }
    }
  }

  out.loss.mse = mse * inv_b;
  out.loss.sparsity = sparsity * inv_b;
  out.loss.total = out.loss.mse + lambda * out.loss.sparsity;
  out.active_fraction = static_cast<double>(std::count(fired.begin(), fired.end(), true)) / static_cast<double>(m);
  return out;
}

SimilarityResult max_group_similarity(std::span<const BlockVector> features) {
  const auto prep = prepare(features);
  const std::size_t m = features.size();
  SimilarityResult out{std::vector<double>(m * m, 0.0), std::vector<int>(m * m, 0)};
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      if (prep.norms[i] == 0.0 || prep.norms[j] == 0.0) continue;
      const auto& group = features[j].group();
      std::vector<double> scores;
      for (int gi = 0; gi < group.order(); ++gi) {
        const BlockVector moved = act(group.element(gi), features[j]);
        const auto a = features[i].data();
        const auto b = moved.data();
        scores.push_back(std::inner_product(a.begin(), a.end(), b.begin(), 0.0) / (prep.norms[i] * prep.norms[j]));
      }
      pick_best(scores, out.value[i * m + j], out.argmax[i * m + j]);
    }
  }
  return out;
}

}  // namespace serial

namespace omp {

BatchResult loss_and_gradients(const CrosscoderParams& params, std::span<const double> rows, std::size_t batch_size,
                               double lambda, int threads) {
  check_batch(params, rows, batch_size);
  const std::size_t n = params.block_len;
  const std::size_t m = params.n_features;
  const std::size_t dim = params.output_dim();
  const double inv_b = 1.0 / static_cast<double>(batch_size);
  const auto norms = column_norms(params);
  const int nt = resolve_threads(threads);

  // Phase 1, per sample: codes, residuals, and the gradient at the encoder pre-activation.
  std::vector<double> codes(batch_size * m);
  std::vector<double> dpre(batch_size * m);
  std::vector<double> resid(batch_size * dim);
  std::vector<double> sample_mse(batch_size);
  std::vector<double> sample_sparsity(batch_size);
  const auto sb = static_cast<std::ptrdiff_t>(batch_size);

#pragma omp parallel for schedule(static) num_threads(nt)
  for (std::ptrdiff_t sbi = 0; sbi < sb; ++sbi) {
    const auto b = static_cast<std::size_t>(sbi);
    const double* x = rows.data() + b * dim;
    double* f = codes.data() + b * m;
    double* e = resid.data() + b * dim;
    double* dp = dpre.data() + b * m;
    double sp = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      const double* w = params.encoder_weights.data() + i * n;
      double acc = params.encoder_bias[i];
      for (std::size_t j = 0; j < n; ++j) acc += w[j] * x[j];
      f[i] = acc > 0.0 ? acc : 0.0;
      sp += f[i] * norms[i];
    }
    for (std::size_t r = 0; r < dim; ++r) e[r] = params.decoder_bias[r] - x[r];
    for (std::size_t i = 0; i < m; ++i) {
      if (f[i] == 0.0) continue;
      const double* col = params.decoder_weights.data() + i * dim;
      for (std::size_t r = 0; r < dim; ++r) e[r] += col[r] * f[i];
    }
    double se = 0.0;
    for (std::size_t r = 0; r < dim; ++r) se += e[r] * e[r];
    for (std::size_t i = 0; i < m; ++i) {
      if (f[i] == 0.0) {
        dp[i] = 0.0;
        continue;
      }
      const double* col = params.decoder_weights.data() + i * dim;
      double back = 0.0;
      for (std::size_t r = 0; r < dim; ++r) back += col[r] * e[r];
      dp[i] = 2.0 * back * inv_b + lambda * inv_b * norms[i];
    }
    sample_mse[b] = se;
    sample_sparsity[b] = sp;
  }

  // Phase 2, per parameter row: sums over the batch in sample order.
  BatchResult out{{}, 0.0, CrosscoderParams(params.group, n, m)};
  auto& g = out.grad;
  std::vector<char> fired(m, 0);
  const auto sm = static_cast<std::ptrdiff_t>(m);

#pragma omp parallel for schedule(static) num_threads(nt)
  for (std::ptrdiff_t smi = 0; smi < sm; ++smi) {
    const auto i = static_cast<std::size_t>(smi);
    double* gw = g.encoder_weights.data() + i * n;
    double* gd = g.decoder_weights.data() + i * dim;
    double bias = 0.0;
    double code_sum = 0.0;
    for (std::size_t b = 0; b < batch_size; ++b) {
      const double fi = codes[b * m + i];
      if (fi == 0.0) continue;
      const double d = dpre[b * m + i];
      const double* x = rows.data() + b * dim;
      const double* e = resid.data() + b * dim;
      bias += d;
      for (std::size_t j = 0; j < n; ++j) gw[j] += d * x[j];
      for (std::size_t r = 0; r < dim; ++r) gd[r] += fi * e[r];
      code_sum += fi;
    }
    g.encoder_bias[i] = bias;
    fired[i] = code_sum > 0.0 ? 1 : 0;
    const double* col = params.decoder_weights.data() + i * dim;
    const double shrink = norms[i] > 0.0 ? lambda * inv_b * code_sum / norms[i] : 0.0;
    for (std::size_t r = 0; r < dim; ++r) gd[r] = 2.0 * inv_b * gd[r] + shrink * col[r];
  }

  double mse = 0.0;
  double sparsity = 0.0;
  for (std::size_t b = 0; b < batch_size; ++b) {
    const double* e = resid.data() + b * dim;
    for (std::size_t r = 0; r < dim; ++r) g.decoder_bias[r] += e[r];
    mse += sample_mse[b];
    sparsity += sample_sparsity[b];
  }
  for (auto& v : g.decoder_bias) v *= 2.0 * inv_b;

  out.loss.mse = mse * inv_b;
  out.loss.sparsity = sparsity * inv_b;
  out.loss.total = out.loss.mse + lambda * out.loss.sparsity;
  out.active_fraction =
      static_cast<double>(std::accumulate(fired.begin(), fired.end(), 0)) / static_cast<double>(m);
  return out;
}

SimilarityResult max_group_similarity(std::span<const BlockVector> features, int threads) {
  const auto prep = prepare(features);
  const std::size_t m = features.size();
  SimilarityResult out{std::vector<double>(m * m, 0.0), std::vector<int>(m * m, 0)};
  if (m == 0) return out;
  const std::size_t blocks = features.front().n_blocks();
  const std::size_t len = features.front().block_len();
  const int nt = resolve_threads(threads);
  const auto sm = static_cast<std::ptrdiff_t>(m);

#pragma omp parallel num_threads(nt)
  {
    std::vector<double> gram(blocks * blocks);
    std::vector<double> scores_ij(prep.perms.size());
    std::vector<double> scores_ji(prep.perms.size());
#pragma omp for schedule(dynamic, 4)
    for (std::ptrdiff_t si = 0; si < sm; ++si) {
      const auto i = static_cast<std::size_t>(si);
      if (prep.norms[i] == 0.0) continue;
      const double* fi = features[i].data().data();
      for (std::size_t j = i; j < m; ++j) {
        if (prep.norms[j] == 0.0) continue;
        const double* fj = features[j].data().data();
        for (std::size_t a = 0; a < blocks; ++a) {
          for (std::size_t b = 0; b < blocks; ++b) {
            double acc = 0.0;
            for (std::size_t t = 0; t < len; ++t) acc += fi[a * len + t] * fj[b * len + t];
            gram[a * blocks + b] = acc;
          }
        }
        const double denom = prep.norms[i] * prep.norms[j];
        // cos(f_i, g f_j) = sum_a gram[a][perm_g(a)] and cos(f_j, g f_i) = sum_a gram[perm_g^-1(a)][a].
        // Both run over ascending rows of gram, so S_ij and S_ji see bit-identical score sets.
        for (std::size_t gi = 0; gi < prep.perms.size(); ++gi) {
          const auto& perm = prep.perms[gi];
          const auto& inv = prep.inverse_perms[gi];
          double s_ij = 0.0;
          double s_ji = 0.0;
          for (std::size_t a = 0; a < blocks; ++a) {
            s_ij += gram[a * blocks + static_cast<std::size_t>(perm[a])];
            s_ji += gram[a * blocks + static_cast<std::size_t>(inv[a])];
          }
          scores_ij[gi] = s_ij / denom;
          scores_ji[gi] = s_ji / denom;
        }
        pick_best(scores_ij, out.value[i * m + j], out.argmax[i * m + j]);
        pick_best(scores_ji, out.value[j * m + i], out.argmax[j * m + i]);
      }
    }
  }
  return out;
}

}  // namespace omp

}  // namespace gxc::kernels
