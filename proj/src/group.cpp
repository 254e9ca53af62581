#include "gxc/group.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "gxc/error.hpp"

namespace gxc {

namespace {

int wrap(int k, int n) {
  const int r = k % n;
  return r < 0 ? r + n : r;
}

// Source-index maps of the two generators, block granularity.
int rotation_source(int dest, int n) {
  return dest < n ? wrap(dest + 1, n) : n + wrap(dest - n + 1, n);
}

int reflection_source(int dest, int n) {
  return dest < n ? n + wrap(-dest, n) : wrap(-(dest - n), n);
}

void check_element(DihedralElement g, const DihedralGroup& group) {
  if (!group.contains(g)) {
    throw Error(Errc::InvalidArgument, "rotation index " + std::to_string(g.rotation) +
                                           " outside [0, " + std::to_string(group.n_rotations()) + ")");
  }
}

}  // namespace

DihedralGroup::DihedralGroup(int n_rotations) : n_rotations_(n_rotations) {
  if (n_rotations < 1) {
    throw Error(Errc::InvalidArgument, "n_rotations must be >= 1");
  }
}

int DihedralGroup::index_of(DihedralElement g) const {
  check_element(g, *this);
  return g.reflected ? n_rotations_ + g.rotation : g.rotation;
}

DihedralElement DihedralGroup::element(int index) const {
  if (index < 0 || index >= order()) {
    throw Error(Errc::InvalidArgument, "element index out of range");
  }
  return index < n_rotations_ ? DihedralElement{index, false}
                              : DihedralElement{index - n_rotations_, true};
}

std::vector<DihedralElement> DihedralGroup::elements() const {
  std::vector<DihedralElement> out;
  out.reserve(static_cast<std::size_t>(order()));
  for (int i = 0; i < order(); ++i) out.push_back(element(i));
  return out;
}

DihedralElement compose(DihedralElement a, DihedralElement b, const DihedralGroup& group) {
  check_element(a, group);
  check_element(b, group);
  const int n = group.n_rotations();
  const int k1 = b.reflected ? -a.rotation : a.rotation;
  return {wrap(k1 + b.rotation, n), a.reflected != b.reflected};
}

DihedralElement inverse(DihedralElement a, const DihedralGroup& group) {
  check_element(a, group);
  if (a.reflected) return a;
  return {wrap(-a.rotation, group.n_rotations()), false};
}

BlockVector::BlockVector(DihedralGroup group, std::size_t block_len)
    : BlockVector(group, block_len,
                  std::vector<double>(static_cast<std::size_t>(group.order()) * block_len, 0.0)) {}

BlockVector::BlockVector(DihedralGroup group, std::size_t block_len, std::vector<double> data)
    : group_(group), block_len_(block_len), data_(std::move(data)) {
  if (block_len_ == 0) throw Error(Errc::InvalidArgument, "block_len must be positive");
  if (data_.size() != static_cast<std::size_t>(group_.order()) * block_len_) {
    throw Error(Errc::ShapeMismatch, "BlockVector data length " + std::to_string(data_.size()) +
                                         " != |G| * block_len = " +
                                         std::to_string(group_.order() * block_len_));
  }
}

std::span<const double> BlockVector::block(std::size_t k) const {
  if (k >= n_blocks()) throw Error(Errc::InvalidArgument, "block index out of range");
  return std::span<const double>(data_).subspan(k * block_len_, block_len_);
}

std::span<double> BlockVector::block(std::size_t k) {
  if (k >= n_blocks()) throw Error(Errc::InvalidArgument, "block index out of range");
  return std::span<double>(data_).subspan(k * block_len_, block_len_);
}

double BlockVector::norm() const {
  // Summing sorted squares makes the result a function of the multiset of
  // entries, so block permutations preserve it bit for bit.
  std::vector<double> sq(data_.size());
  std::transform(data_.begin(), data_.end(), sq.begin(), [](double v) { return v * v; });
  std::sort(sq.begin(), sq.end());
  return std::sqrt(std::accumulate(sq.begin(), sq.end(), 0.0));
}

std::vector<int> block_permutation(DihedralElement g, const DihedralGroup& group) {
  check_element(g, group);
  const int n = group.n_rotations();
  std::vector<int> perm(static_cast<std::size_t>(group.order()));
  std::iota(perm.begin(), perm.end(), 0);
  // act(g) = reflection^d o rotation^k, so a destination index is traced back
  // through the reflection first and then through k rotations.
  for (auto& p : perm) {
    int src = g.reflected ? reflection_source(p, n) : p;
    for (int i = 0; i < g.rotation; ++i) src = rotation_source(src, n);
    p = src;
  }
  return perm;
}

void permute_blocks(std::span<const double> in, std::span<double> out, std::span<const int> perm,
                    std::size_t block_len) {
  if (in.size() != out.size() || in.size() != perm.size() * block_len) {
    throw Error(Errc::ShapeMismatch, "permute_blocks size mismatch");
  }
  for (std::size_t k = 0; k < perm.size(); ++k) {
    const auto src = in.subspan(static_cast<std::size_t>(perm[k]) * block_len, block_len);
    std::copy(src.begin(), src.end(), out.begin() + static_cast<std::ptrdiff_t>(k * block_len));
  }
}

BlockVector act(DihedralElement g, const BlockVector& v) {
  const auto perm = block_permutation(g, v.group());
  BlockVector out(v.group(), v.block_len());
  permute_blocks(v.data(), out.data(), perm, v.block_len());
  return out;
}

BlockVector act_rotation(const BlockVector& v) { return act({1 % v.group().n_rotations(), false}, v); }

BlockVector act_reflection(const BlockVector& v) { return act({0, true}, v); }

}  // namespace gxc
