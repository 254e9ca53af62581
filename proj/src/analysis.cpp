#include "gxc/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "binary_io.hpp"
#include "gxc/error.hpp"
#include "gxc/kernels.hpp"

namespace gxc {

std::vector<double> SimilarityMatrix::distance() const {
  std::vector<double> d(values.size());
  std::transform(values.begin(), values.end(), d.begin(), [](double s) { return 1.0 - s; });
  return d;
}

SimilarityMatrix similarity_matrix(std::span<const BlockVector> dictionary, int threads) {
  SimilarityMatrix s;
  if (dictionary.empty()) return s;
  const auto raw = kernels::omp::max_group_similarity(dictionary, threads);
  s.size = dictionary.size();
  s.values = raw.value;
  for (double& v : s.values) v = std::clamp(v, -1.0, 1.0);
  s.argmax.reserve(raw.argmax.size());
  for (int idx : raw.argmax) s.argmax.push_back(dictionary.front().group().element(idx));
  for (std::size_t i = 0; i < dictionary.size(); ++i) {
    // The identity attains cos = 1 exactly; pin it so that 1 - S has a zero diagonal.
    if (dictionary[i].norm() == 0.0) {
      s.zero_features.push_back(i);
    } else {
      s.values[i * s.size + i] = 1.0;
    }
  }
  return s;
}

double cosine(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error(Errc::ShapeMismatch, "cosine of vectors with different lengths");
  const double ab = std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
  const double aa = std::inner_product(a.begin(), a.end(), a.begin(), 0.0);
  const double bb = std::inner_product(b.begin(), b.end(), b.begin(), 0.0);
  if (aa == 0.0 || bb == 0.0) return 0.0;
  return ab / (std::sqrt(aa) * std::sqrt(bb));
}

SymmetryReport symmetry_report(const BlockVector& f, double threshold, std::size_t feature_id) {
  if (f.norm() == 0.0) throw Error(Errc::ZeroVector, "feature " + std::to_string(feature_id) + " is zero");
  const std::size_t nb = f.n_blocks();
  const int n = f.group().n_rotations();

  SymmetryReport rep;
  rep.feature_id = feature_id;
  rep.n_blocks = nb;
  rep.block_cosine.assign(nb * nb, 0.0);
  for (std::size_t a = 0; a < nb; ++a) {
    const auto ba = f.block(a);
    if (std::all_of(ba.begin(), ba.end(), [](double v) { return v == 0.0; })) rep.zero_blocks.push_back(a);
    for (std::size_t b = a; b < nb; ++b) {
      const double c = cosine(ba, f.block(b));
      rep.block_cosine[a * nb + b] = c;
      rep.block_cosine[b * nb + a] = c;
    }
  }

  for (int t = 1; t <= n; ++t) {
    if (n % t != 0) continue;
    double mean = 0.0;
    for (int k = 0; k < n; ++k) {
      mean += rep.block_cosine[static_cast<std::size_t>(k) * nb + static_cast<std::size_t>((k + t) % n)];
    }
    if (mean / n >= threshold) {
      rep.rotation_period = t;
      break;
    }
  }

  double refl = 0.0;
  for (int k = 0; k < n; ++k) {
    refl += rep.block_cosine[static_cast<std::size_t>(k) * nb + static_cast<std::size_t>(n + k)];
  }
  rep.reflection_symmetric = refl / n >= threshold;
  return rep;
}

TransformProfile transform_profile(std::size_t feature_id, const DihedralGroup& group,
                                   const std::vector<std::vector<double>>& activations) {
  const auto order = static_cast<std::size_t>(group.order());
  TransformProfile p{feature_id, group, activations.size(), {}};
  p.values.reserve(activations.size() * order);
  for (std::size_t j = 0; j < activations.size(); ++j) {
    const auto& row = activations[j];
    if (row.size() != order) {
      throw Error(Errc::MissingEntry, "image " + std::to_string(j) + " has " + std::to_string(row.size()) +
                                          " transforms, expected " + std::to_string(order));
    }
    for (std::size_t k = 0; k < order; ++k) {
      if (!std::isfinite(row[k])) {
        throw Error(Errc::MissingEntry, "image " + std::to_string(j) + " transform " + std::to_string(k));
      }
    }
    p.values.insert(p.values.end(), row.begin(), row.end());
  }
  return p;
}

TransformProfile act_per_image(DihedralElement g, const TransformProfile& profile) {
  const auto perm = block_permutation(g, profile.group);
  TransformProfile out = profile;
  const auto order = static_cast<std::size_t>(profile.group.order());
  for (std::size_t j = 0; j < profile.n_images; ++j) {
    permute_blocks(profile.row(j), std::span<double>(out.values).subspan(j * order, order), perm, 1);
  }
  return out;
}

// ---------------------------------------------------------------------------

std::string distance_csv(const SimilarityMatrix& s, std::span<const std::size_t> feature_ids) {
  if (!feature_ids.empty() && feature_ids.size() != s.size) {
    throw Error(Errc::ShapeMismatch, "feature id list length != matrix size");
  }
  auto id = [&](std::size_t i) { return feature_ids.empty() ? i : feature_ids[i]; };
  std::string out = "feature_id";
  for (std::size_t j = 0; j < s.size; ++j) out += "," + std::to_string(id(j));
  out += "\n";
  char num[64];
  for (std::size_t i = 0; i < s.size; ++i) {
    out += std::to_string(id(i));
    for (std::size_t j = 0; j < s.size; ++j) {
      // +0.0 folds -0 so identical matrices print identically.
      std::snprintf(num, sizeof(num), ",%.9g", 1.0 - s.at(i, j) + 0.0);
      out += num;
    }
    out += "\n";
  }
  return out;
}

void export_distance_matrix(const SimilarityMatrix& s, const std::filesystem::path& path,
                            std::span<const std::size_t> feature_ids) {
  detail::write_file(path, distance_csv(s, feature_ids));
}

namespace {

struct Rgb {
  double r, g, b;
};

std::string ramp(double v) {
  static constexpr Rgb kLow{59, 76, 192};
  static constexpr Rgb kMid{247, 247, 247};
  static constexpr Rgb kHigh{180, 4, 38};
  if (!std::isfinite(v)) v = 0.0;
  v = std::clamp(v, -1.0, 1.0);
  const Rgb& end = v < 0.0 ? kLow : kHigh;
  const double t = std::abs(v);
  auto mix = [&](double a, double b) { return static_cast<int>(std::lround(a + (b - a) * t)); };
  char buf[16];
  std::snprintf(buf, sizeof(buf), "#%02x%02x%02x", mix(kMid.r, end.r), mix(kMid.g, end.g), mix(kMid.b, end.b));
  return buf;
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

std::string heatmap_svg(std::span<const double> matrix, std::size_t rows, std::size_t cols,
                        const HeatmapOptions& options) {
  if (matrix.size() != rows * cols) throw Error(Errc::ShapeMismatch, "heatmap matrix size mismatch");
  constexpr int kCell = 12;
  constexpr int kTop = 24;
  const std::size_t width = cols * kCell;
  const std::size_t height = rows * kCell + kTop;
  std::string out;
  out += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(width) + "\" height=\"" +
         std::to_string(height) + "\" viewBox=\"0 0 " + std::to_string(width) + " " + std::to_string(height) +
         "\">\n";
  if (!options.metadata.is_null()) out += "<metadata>" + xml_escape(options.metadata.dump()) + "</metadata>\n";
  out += "<title>" + xml_escape(options.title) + "</title>\n";
  out += "<text x=\"2\" y=\"16\" font-family=\"monospace\" font-size=\"12\">" + xml_escape(options.title) +
         "</text>\n";
  char num[32];
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      const double v = matrix[i * cols + j];
      std::snprintf(num, sizeof(num), "%.6f", std::isfinite(v) ? v + 0.0 : 0.0);
      out += "<rect class=\"cell\" x=\"" + std::to_string(j * kCell) + "\" y=\"" +
             std::to_string(i * kCell + kTop) + "\" width=\"" + std::to_string(kCell) + "\" height=\"" +
             std::to_string(kCell) + "\" fill=\"" + ramp(v) + "\"><title>" + std::to_string(i) + "," +
             std::to_string(j) + ": " + num + "</title></rect>\n";
    }
  }
  if (options.divider > 0 && options.divider < std::max(rows, cols)) {
    const auto d = std::to_string(options.divider * kCell);
    const auto dy = std::to_string(options.divider * kCell + kTop);
    out += "<line x1=\"" + d + "\" y1=\"" + std::to_string(kTop) + "\" x2=\"" + d + "\" y2=\"" +
           std::to_string(height) + "\" stroke=\"black\" stroke-width=\"1\"/>\n";
    out += "<line x1=\"0\" y1=\"" + dy + "\" x2=\"" + std::to_string(width) + "\" y2=\"" + dy +
           "\" stroke=\"black\" stroke-width=\"1\"/>\n";
  }
  out += "</svg>\n";
  return out;
}

void export_heatmap(std::span<const double> matrix, std::size_t rows, std::size_t cols,
                    const std::filesystem::path& path, const HeatmapOptions& options) {
  detail::write_file(path, heatmap_svg(matrix, rows, cols, options));
}

nlohmann::json to_json(const SymmetryReport& report) {
  nlohmann::json j;
  j["feature_id"] = report.feature_id;
  j["rotation_period"] = report.rotation_period ? nlohmann::json(*report.rotation_period) : nlohmann::json(nullptr);
  j["reflection_symmetric"] = report.reflection_symmetric;
  j["block_cosine"] = report.block_cosine;
  j["zero_blocks"] = report.zero_blocks;
  return j;
}

void export_symmetry_reports(std::span<const SymmetryReport> reports, const std::filesystem::path& path) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : reports) arr.push_back(to_json(r));
  detail::write_file(path, arr.dump(1) + "\n");
}

}  // namespace gxc
