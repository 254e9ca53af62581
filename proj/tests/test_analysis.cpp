#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <regex>

#include "doctest.h"
#include "gxc/analysis.hpp"
#include "gxc/dataset.hpp"
#include "gxc/error.hpp"
#include "gxc/kernels.hpp"
#include "oracles.hpp"

using namespace gxc;
namespace fs = std::filesystem;

namespace {

BlockVector random_block_vector(std::mt19937_64& rng, const DihedralGroup& g, std::size_t block_len) {
  return BlockVector(g, block_len, oracle::random_vector(rng, static_cast<std::size_t>(g.order()) * block_len));
}

double naive_cosine(const std::vector<double>& a, std::span<const double> b) {
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    ab += a[k] * b[k];
    aa += a[k] * a[k];
    bb += b[k] * b[k];
  }
  return ab / std::sqrt(aa * bb);
}

// Max over all permutation matrices of the regular representation.
std::pair<double, int> brute_force_similarity(const BlockVector& fi, const BlockVector& fj) {
  const int n = fi.group().n_rotations();
  double best = -2.0;
  int arg = -1;
  for (int gi = 0; gi < 2 * n; ++gi) {
    const auto moved = oracle::apply_matrix(oracle::permutation_matrix({gi % n, gi >= n}, n), fj.data(), fj.block_len());
    const double c = naive_cosine(moved, fi.data());
    if (c > best + 1e-12) {
      best = c;
      arg = gi;
    }
  }
  return {best, arg};
}

std::vector<double> roll_right(std::span<const double> base, int shift) {
  const int len = static_cast<int>(base.size());
  std::vector<double> out(base.size());
  for (int t = 0; t < len; ++t) out[static_cast<std::size_t>((t + shift) % len)] = base[static_cast<std::size_t>(t)];
  return out;
}

}  // namespace

TEST_CASE("similarity matrix basics") {
  const DihedralGroup g(8);
  std::mt19937_64 rng(1);
  std::vector<BlockVector> dict;
  for (int i = 0; i < 6; ++i) dict.push_back(random_block_vector(rng, g, 5));
  const auto s = similarity_matrix(dict);
  REQUIRE(s.size == 6);
  CHECK(s.zero_features.empty());
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(s.at(i, i) == 1.0);
    CHECK(s.argmax_at(i, i) == DihedralElement::identity());
    for (std::size_t j = 0; j < 6; ++j) {
      CHECK(s.at(i, j) == s.at(j, i));
      CHECK(s.at(i, j) <= 1.0 + 1e-12);
    }
  }
  const auto d = s.distance();
  for (std::size_t i = 0; i < 6; ++i) CHECK(d[i * 6 + i] == 0.0);
  CHECK(similarity_matrix(std::span<const BlockVector>{}).size == 0);
}

TEST_CASE("similarity matches brute force over permutation matrices") {
  const DihedralGroup g(16);  // 32 elements
  std::mt19937_64 rng(2);
  std::vector<BlockVector> dict;
  for (int i = 0; i < 8; ++i) dict.push_back(random_block_vector(rng, g, 4));
  const auto s = similarity_matrix(dict);
  for (std::size_t i = 0; i < 8; ++i) {
    for (std::size_t j = 0; j < 8; ++j) {
      const auto [best, arg] = brute_force_similarity(dict[i], dict[j]);
      REQUIRE(s.at(i, j) == doctest::Approx(best).epsilon(1e-12));
      REQUIRE(g.index_of(s.argmax_at(i, j)) == arg);
    }
  }
}

TEST_CASE("orbit membership is detected with the planting element") {
  const DihedralGroup g(8);
  std::mt19937_64 rng(3);
  for (int gi = 0; gi < g.order(); ++gi) {
    const auto f = random_block_vector(rng, g, 6);
    const auto g0 = g.element(gi);
    const std::vector<BlockVector> dict = {f, act(g0, f)};
    const auto s = similarity_matrix(dict);
    CHECK(s.at(0, 1) == doctest::Approx(1.0).epsilon(1e-12));
    // Random f has a trivial stabilizer. S_10 compares g0 f with g f, S_01 compares f with g g0 f.
    CHECK(s.argmax_at(1, 0) == g0);
    CHECK(oracle::compose(s.argmax_at(0, 1), g0, 8) == DihedralElement::identity());
  }
}

TEST_CASE("relabeling a feature by a group element leaves S unchanged") {
  const DihedralGroup g(6);
  std::mt19937_64 rng(4);
  std::vector<BlockVector> dict;
  for (int i = 0; i < 5; ++i) dict.push_back(random_block_vector(rng, g, 3));
  const auto before = similarity_matrix(dict);
  for (int gi = 0; gi < g.order(); ++gi) {
    auto moved = dict;
    moved[2] = act(g.element(gi), dict[2]);
    const auto after = similarity_matrix(moved);
    for (std::size_t k = 0; k < 5; ++k) {
      CHECK(after.at(2, k) == doctest::Approx(before.at(2, k)).epsilon(1e-12));
      CHECK(after.at(k, 2) == doctest::Approx(before.at(k, 2)).epsilon(1e-12));
    }
  }
}

TEST_CASE("zero features are flagged and score zero") {
  const DihedralGroup g(4);
  std::mt19937_64 rng(5);
  const std::vector<BlockVector> dict = {random_block_vector(rng, g, 3), BlockVector(g, 3)};
  const auto s = similarity_matrix(dict);
  CHECK(s.zero_features == std::vector<std::size_t>{1});
  CHECK(s.at(0, 1) == 0.0);
  CHECK(s.at(1, 0) == 0.0);
  CHECK(s.at(1, 1) == 0.0);
}

TEST_CASE("serial and OpenMP similarity kernels agree") {
  const DihedralGroup g(8);
  std::mt19937_64 rng(6);
  std::vector<BlockVector> dict;
  for (int i = 0; i < 20; ++i) dict.push_back(random_block_vector(rng, g, 4));
  dict.push_back(act(g.element(11), dict[3]));
  const auto ref = kernels::serial::max_group_similarity(dict);
  const auto one = kernels::omp::max_group_similarity(dict, 1);
  const auto many = kernels::omp::max_group_similarity(dict, 3);
  REQUIRE(ref.value.size() == one.value.size());
  CHECK(one.value == many.value);
  CHECK(one.argmax == many.argmax);
  for (std::size_t k = 0; k < ref.value.size(); ++k) {
    CHECK(one.value[k] == doctest::Approx(ref.value[k]).epsilon(1e-12));
    CHECK(one.argmax[k] == ref.argmax[k]);
  }
}

TEST_CASE("cosine") {
  const std::vector<double> a = {1, 0, 0};
  const std::vector<double> b = {0, 2, 0};
  const std::vector<double> z = {0, 0, 0};
  CHECK(cosine(a, a) == doctest::Approx(1.0));
  CHECK(cosine(a, b) == 0.0);
  CHECK(cosine(a, z) == 0.0);
  CHECK(cosine(z, z) == 0.0);
}

TEST_CASE("symmetry report detects planted rotation periods") {
  std::mt19937_64 rng(7);
  for (int n : {4, 8, 16}) {
    const DihedralGroup g(n);
    for (int p = 1; p <= n; p *= 2) {
      if (static_cast<std::size_t>(p) > 16) continue;
      const auto base = oracle::random_vector(rng, 16);
      const auto f = synthetic_feature(g, base, p);
      const auto r = symmetry_report(f, 0.9, 3);
      CHECK(r.feature_id == 3);
      CHECK(r.n_blocks == static_cast<std::size_t>(2 * n));
      REQUIRE(r.rotation_period.has_value());
      CHECK(*r.rotation_period == p);
      CHECK(n % *r.rotation_period == 0);
      for (int gi = 0; gi < g.order(); ++gi) {
        const auto moved = symmetry_report(act(g.element(gi), f));
        REQUIRE(moved.rotation_period.has_value());
        CHECK(*moved.rotation_period == p);
      }
    }
  }
}

TEST_CASE("symmetry report on a fully invariant feature") {
  const DihedralGroup g(8);
  std::vector<double> data;
  for (int b = 0; b < 16; ++b) data.insert(data.end(), {0.5, -1.0, 2.0});
  const auto r = symmetry_report(BlockVector(g, 3, data));
  CHECK(r.rotation_period == 1);
  CHECK(r.reflection_symmetric);
  CHECK(r.zero_blocks.empty());
  for (double c : r.block_cosine) CHECK(c == doctest::Approx(1.0));
}

TEST_CASE("block cosine matrix is symmetric with a unit diagonal") {
  const DihedralGroup g(4);
  std::mt19937_64 rng(8);
  auto f = random_block_vector(rng, g, 5);
  auto r = symmetry_report(f);
  REQUIRE(r.block_cosine.size() == 64);
  for (std::size_t a = 0; a < 8; ++a) {
    CHECK(r.block_cosine[a * 8 + a] == doctest::Approx(1.0));
    for (std::size_t b = 0; b < 8; ++b) CHECK(r.block_cosine[a * 8 + b] == r.block_cosine[b * 8 + a]);
  }
  CHECK_FALSE(r.reflection_symmetric);

  for (double& v : f.block(2)) v = 0.0;
  r = symmetry_report(f);
  CHECK(r.zero_blocks == std::vector<std::size_t>{2});
  CHECK(r.block_cosine[2 * 8 + 2] == 0.0);
  CHECK(r.block_cosine[2 * 8 + 5] == 0.0);
  CHECK_THROWS_WITH_AS(symmetry_report(BlockVector(g, 5)), doctest::Contains("ZeroVector"), Error);
}

TEST_CASE("reflection symmetry from mirrored blocks") {
  // Blocks r^k and s r^k equal for every k.
  const DihedralGroup g(4);
  std::mt19937_64 rng(9);
  const auto base = oracle::random_vector(rng, 4);
  std::vector<double> data;
  for (int half = 0; half < 2; ++half)
    for (int k = 0; k < 4; ++k) {
      const auto rolled = roll_right(base, k);
      data.insert(data.end(), rolled.begin(), rolled.end());
    }
  const auto r = symmetry_report(BlockVector(g, 4, data));
  CHECK(r.reflection_symmetric);
  CHECK(r.rotation_period == 4);
}

TEST_CASE("transform profiles") {
  const DihedralGroup g(4);
  std::mt19937_64 rng(10);
  std::vector<std::vector<double>> acts;
  for (int j = 0; j < 3; ++j) acts.push_back(oracle::random_vector(rng, 8));
  const auto q = transform_profile(7, g, acts);
  CHECK(q.feature_id == 7);
  CHECK(q.n_images == 3);
  CHECK(std::vector<double>(q.row(1).begin(), q.row(1).end()) == acts[1]);

  CHECK(act_per_image(DihedralElement::identity(), q) == q);
  for (int a = 0; a < 8; ++a) {
    for (int b = 0; b < 8; ++b) {
      const auto ga = g.element(a);
      const auto gb = g.element(b);
      CHECK(act_per_image(ga, act_per_image(gb, q)) == act_per_image(oracle::compose(ga, gb, 4), q));
    }
    // Each row is permuted by the same matrix as a block_len 1 vector; rows never trade places.
    const auto moved = act_per_image(g.element(a), q);
    const auto pm = oracle::permutation_matrix(g.element(a), 4);
    for (std::size_t j = 0; j < 3; ++j) {
      const auto want = oracle::apply_matrix(pm, acts[j], 1);
      CHECK(std::vector<double>(moved.row(j).begin(), moved.row(j).end()) == want);
    }
  }

  const auto single = transform_profile(0, g, {acts[0]});
  for (int a = 0; a < 8; ++a) {
    const auto moved = act_per_image(g.element(a), single);
    const auto vec = act(g.element(a), BlockVector(g, 1, acts[0]));
    CHECK(moved.values == std::vector<double>(vec.data().begin(), vec.data().end()));
  }

  CHECK_THROWS_WITH_AS(transform_profile(0, g, {std::vector<double>(7)}), doctest::Contains("MissingEntry"), Error);
  CHECK_THROWS_AS(transform_profile(0, g, {std::vector<double>(8, std::nan(""))}), Error);
}

TEST_CASE("distance csv") {
  SimilarityMatrix id;
  id.size = 3;
  id.values.assign(9, 1.0);
  id.argmax.assign(9, DihedralElement::identity());
  CHECK(distance_csv(id) == "feature_id,0,1,2\n0,0,0,0\n1,0,0,0\n2,0,0,0\n");
  const std::vector<std::size_t> ids = {4, 9, 12};
  CHECK(distance_csv(id, ids).starts_with("feature_id,4,9,12\n4,0,0,0\n"));

  SimilarityMatrix s;
  s.size = 2;
  s.values = {1.0, 1.0 / 3.0, 1.0 / 3.0, 1.0};
  s.argmax.assign(4, DihedralElement::identity());
  CHECK(distance_csv(s) == "feature_id,0,1\n0,0,0.666666667\n1,0.666666667,0\n");
}

TEST_CASE("heatmap svg") {
  const std::vector<double> m = {1.0, -1.0, 0.0, 0.5};
  HeatmapOptions opt;
  opt.title = "feature 3";
  opt.divider = 1;
  opt.metadata = {{"feature_id", 3}};
  const auto svg = heatmap_svg(m, 2, 2, opt);
  const std::regex cell("<rect class=\"cell\"");
  CHECK(std::distance(std::sregex_iterator(svg.begin(), svg.end(), cell), std::sregex_iterator()) == 4);
  CHECK(svg.find("<metadata>") != std::string::npos);
  CHECK(svg.find("feature 3") != std::string::npos);
  CHECK(heatmap_svg(m, 2, 2, opt) == svg);
  CHECK_THROWS_AS(heatmap_svg(m, 3, 2), Error);
}

TEST_CASE("exports are byte-deterministic") {
  const auto dir = fs::temp_directory_path() / "gxc_test_exports";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const DihedralGroup g(4);
  std::mt19937_64 rng(11);
  std::vector<BlockVector> dict;
  for (int i = 0; i < 4; ++i) dict.push_back(random_block_vector(rng, g, 3));
  const auto s = similarity_matrix(dict);
  std::vector<SymmetryReport> reports;
  for (std::size_t i = 0; i < dict.size(); ++i) reports.push_back(symmetry_report(dict[i], 0.9, i));

  auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), {});
  };
  export_distance_matrix(s, dir / "a.csv");
  export_distance_matrix(s, dir / "b.csv");
  CHECK(slurp(dir / "a.csv") == slurp(dir / "b.csv"));
  export_heatmap(s.values, 4, 4, dir / "a.svg");
  export_heatmap(s.values, 4, 4, dir / "b.svg");
  CHECK(slurp(dir / "a.svg") == slurp(dir / "b.svg"));
  export_symmetry_reports(reports, dir / "a.json");
  export_symmetry_reports(reports, dir / "b.json");
  CHECK(slurp(dir / "a.json") == slurp(dir / "b.json"));

  const auto parsed = nlohmann::json::parse(slurp(dir / "a.json"));
  REQUIRE(parsed.is_array());
  REQUIRE(parsed.size() == 4);
  CHECK(parsed[2]["feature_id"] == 2);
  CHECK(parsed[2]["block_cosine"].size() == 64);
  CHECK(parsed[2].contains("rotation_period"));
  CHECK(parsed[2].contains("reflection_symmetric"));

  CHECK_THROWS_WITH_AS(export_distance_matrix(s, dir / "missing" / "x.csv"), doctest::Contains("IoError"), Error);
}
