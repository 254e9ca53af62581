#pragma once

// Hot loops in two flavors: `serial` is the plain reference kept for tests,
// `omp` is the OpenMP version used by the library. The omp kernels reduce in a
// fixed order, so their results do not depend on the thread count.

#include <cstddef>
#include <span>
#include <vector>

#include "gxc/crosscoder.hpp"
#include "gxc/group.hpp"

namespace gxc::kernels {

struct BatchResult {
  LossTerms loss;
  double active_fraction = 0.0;
  CrosscoderParams grad;
};

/// Row-major similarity output: value[i*m + j] and the canonical index of the
/// maximizing element in argmax[i*m + j]. Zero vectors give 0 and identity.
struct SimilarityResult {
  std::vector<double> value;
  std::vector<int> argmax;
};

// A candidate replaces the running max only when larger by more than this.
inline constexpr double kTieTolerance = 1e-12;

namespace serial {

/// rows: batch_size x |G|n doubles, row-major.
BatchResult loss_and_gradients(const CrosscoderParams& params, std::span<const double> rows, std::size_t batch_size,
                               double lambda);

/// Brute force: materializes act(g, f_j) for every g.
SimilarityResult max_group_similarity(std::span<const BlockVector> features);

}  // namespace serial

namespace omp {

BatchResult loss_and_gradients(const CrosscoderParams& params, std::span<const double> rows, std::size_t batch_size,
                               double lambda, int threads = 0);

/// Uses the |G| x |G| block Gram matrix of each pair.
SimilarityResult max_group_similarity(std::span<const BlockVector> features, int threads = 0);

}  // namespace omp

}  // namespace gxc::kernels
