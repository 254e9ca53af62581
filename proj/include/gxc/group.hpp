#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace gxc {

/// Element s^reflected * r^rotation of a dihedral group.
struct DihedralElement {
  int rotation = 0;
  bool reflected = false;

  static constexpr DihedralElement identity() { return {}; }
  friend constexpr bool operator==(const DihedralElement&, const DihedralElement&) = default;
};

/// The dihedral group with n_rotations rotations and as many reflections,
/// order 2 * n_rotations. D_32 in the usual notation has n_rotations = 16.
///
/// Elements have a canonical index used for block layout everywhere:
/// r^k -> k, s r^k -> n_rotations + k.
class DihedralGroup {
 public:
  explicit DihedralGroup(int n_rotations);

  int n_rotations() const noexcept { return n_rotations_; }
  int order() const noexcept { return 2 * n_rotations_; }

  bool contains(DihedralElement g) const noexcept {
    return g.rotation >= 0 && g.rotation < n_rotations_;
  }
  int index_of(DihedralElement g) const;
  DihedralElement element(int index) const;
  std::vector<DihedralElement> elements() const;

  friend bool operator==(const DihedralGroup&, const DihedralGroup&) = default;

 private:
  int n_rotations_;
};

/// a * b with (k1, d1)(k2, d2) = ((-1)^d2 k1 + k2 mod n, d1 xor d2), from r s = s r^-1.
DihedralElement compose(DihedralElement a, DihedralElement b, const DihedralGroup& group);
DihedralElement inverse(DihedralElement a, const DihedralGroup& group);

/// Vector of |G| contiguous blocks of block_len values, in canonical element order
/// [e, r, ..., r^(n-1), s, sr, ..., sr^(n-1)].
class BlockVector {
 public:
  BlockVector(DihedralGroup group, std::size_t block_len);
  BlockVector(DihedralGroup group, std::size_t block_len, std::vector<double> data);

  const DihedralGroup& group() const noexcept { return group_; }
  std::size_t block_len() const noexcept { return block_len_; }
  std::size_t n_blocks() const noexcept { return static_cast<std::size_t>(group_.order()); }
  std::size_t size() const noexcept { return data_.size(); }

  std::span<const double> block(std::size_t k) const;
  std::span<double> block(std::size_t k);
  std::span<const double> data() const noexcept { return data_; }
  std::span<double> data() noexcept { return data_; }

  double norm() const;

  friend bool operator==(const BlockVector&, const BlockVector&) = default;

 private:
  DihedralGroup group_;
  std::size_t block_len_;
  std::vector<double> data_;
};

/// Left circular shift of both halves: block r^(k+1) moves to position r^k.
BlockVector act_rotation(const BlockVector& v);

/// Swap the halves, then keep the first block of each half and reverse the rest.
/// The result is the involution paired with act_rotation (r s = s r^-1).
BlockVector act_reflection(const BlockVector& v);

/// act_rotation applied g.rotation times, then act_reflection if g.reflected.
BlockVector act(DihedralElement g, const BlockVector& v);

/// Source block for each destination block under act(g, .):
/// act(g, v).block(k) == v.block(perm[k]).
std::vector<int> block_permutation(DihedralElement g, const DihedralGroup& group);

/// Permutes blocks of a flat buffer, out.block(k) = in.block(perm[k]).
void permute_blocks(std::span<const double> in, std::span<double> out, std::span<const int> perm,
                    std::size_t block_len);

}  // namespace gxc
