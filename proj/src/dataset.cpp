#include "gxc/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <regex>

#include "binary_io.hpp"
#include "gxc/error.hpp"

namespace gxc {

namespace {

constexpr std::uint32_t kDatasetVersion = 1;
constexpr std::uint32_t kGridVersion = 1;

}  // namespace

OrbitDataset::OrbitDataset(DihedralGroup group, std::size_t block_len, Manifest manifest)
    : group_(group), block_len_(block_len), manifest_(std::move(manifest)) {
  if (block_len_ == 0) throw Error(Errc::InvalidArgument, "block_len must be positive");
}

void OrbitDataset::add(std::span<const float> x, RecordInfo info) {
  if (x.size() != dim()) {
    throw Error(Errc::ShapeMismatch, "record length " + std::to_string(x.size()) + " != " + std::to_string(dim()));
  }
  data_.insert(data_.end(), x.begin(), x.end());
  info_.push_back(info);
}

void OrbitDataset::add(const BlockVector& x, RecordInfo info) {
  if (!(x.group() == group_) || x.block_len() != block_len_) {
    throw Error(Errc::ShapeMismatch, "orbit shape does not match dataset");
  }
  std::vector<float> tmp(x.data().begin(), x.data().end());
  add(tmp, info);
}

void OrbitDataset::reserve(std::size_t n) {
  data_.reserve(n * dim());
  info_.reserve(n);
}

std::span<const float> OrbitDataset::record(std::size_t i) const {
  if (i >= size()) throw Error(Errc::InvalidArgument, "record index out of range");
  return std::span<const float>(data_).subspan(i * dim(), dim());
}

ActivationOrbit OrbitDataset::orbit(std::size_t i) const {
  const auto r = record(i);
  return {BlockVector(group_, block_len_, std::vector<double>(r.begin(), r.end())), info_[i].image_id,
          info_[i].coord};
}

void OrbitDataset::sort_records() {
  std::vector<std::size_t> order(size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (info_[a].image_id != info_[b].image_id) return info_[a].image_id < info_[b].image_id;
    return info_[a].coord < info_[b].coord;
  });
  std::vector<float> data;
  std::vector<RecordInfo> info;
  data.reserve(data_.size());
  info.reserve(info_.size());
  for (auto i : order) {
    const auto r = record(i);
    data.insert(data.end(), r.begin(), r.end());
    info.push_back(info_[i]);
  }
  data_ = std::move(data);
  info_ = std::move(info);
}

double unit_energy_normalizer(const OrbitDataset& ds) {
  if (ds.empty()) return 1.0;
  double total = 0.0;
  for (float v : ds.data()) total += static_cast<double>(v) * v;
  const double mean = total / static_cast<double>(ds.size());
  return mean > 0.0 ? 1.0 / std::sqrt(mean) : 1.0;
}

// ---------------------------------------------------------------------------

std::optional<ImageOrbit> VectorGridSource::next() {
  if (pos_ >= images_.size()) return std::nullopt;
  return images_[pos_++];
}

OrbitDataset build_dataset(GridSource& source, const DihedralGroup& group, const BuildOptions& options) {
  Manifest manifest;
  manifest.source = "grids";
  manifest.seed = options.seed;
  manifest.samples_per_image = options.n_samples;
  if (options.mask_radius) manifest.mask_radius = *options.mask_radius;

  std::optional<OrbitDataset> out;
  std::vector<std::string> skipped;

  while (true) {
    std::optional<ImageOrbit> image;
    try {
      image = source.next();
    } catch (const Error& e) {
      skipped.push_back(e.what());
      continue;
    }
    if (!image) break;

    try {
      if (image->grids.size() != static_cast<std::size_t>(group.order())) {
        throw Error(Errc::ShapeMismatch, "expected " + std::to_string(group.order()) + " grids");
      }
      const auto& base = image->grids.front();
      const CircularMask mask = options.mask_radius
                                    ? CircularMask::for_grid(base.height(), base.width(), *options.mask_radius)
                                    : CircularMask::for_grid(base.height(), base.width());
      const auto coords = sample_coordinates(base, mask, options.n_samples,
                                             options.seed ^ static_cast<std::uint64_t>(image->image_id), options.mode);
      if (!out) {
        out.emplace(group, base.channels());
        manifest.mask_radius = mask.radius;
      } else if (out->block_len() != base.channels()) {
        throw Error(Errc::ShapeMismatch, "channel count differs from earlier images");
      }
      std::vector<BlockVector> orbits;
      orbits.reserve(coords.size());
      for (const auto& c : coords) orbits.push_back(extract_orbit(image->grids, c, group));
      for (std::size_t i = 0; i < coords.size(); ++i) out->add(orbits[i], {image->image_id, coords[i]});
    } catch (const Error& e) {
      skipped.push_back("image " + std::to_string(image->image_id) + ": " + e.what());
    }
  }

  if (!out) out.emplace(group, 1);
  out->sort_records();
  manifest.skipped = std::move(skipped);
  out->manifest() = std::move(manifest);
  return std::move(*out);
}

// ---------------------------------------------------------------------------

BlockVector synthetic_feature(const DihedralGroup& group, std::span<const double> base, int period) {
  const int n = group.n_rotations();
  const std::size_t len = base.size();
  if (len == 0) throw Error(Errc::InvalidSpec, "empty base pattern");
  if (period < 1 || n % period != 0) {
    throw Error(Errc::InvalidSpec, "period " + std::to_string(period) + " does not divide " + std::to_string(n));
  }
  if (static_cast<std::size_t>(period) > len) {
    throw Error(Errc::InvalidSpec, "period " + std::to_string(period) + " exceeds block_len " + std::to_string(len));
  }
  BlockVector f(group, len);
  for (int k = 0; k < n; ++k) {
    const std::size_t shift = static_cast<std::size_t>(k % period);
    auto rot = f.block(static_cast<std::size_t>(k));
    for (std::size_t j = 0; j < len; ++j) rot[j] = base[(j + len - shift) % len];
  }
  for (int k = 0; k < n; ++k) {
    const auto src = f.block(static_cast<std::size_t>((n - k) % n));
    std::vector<double> tmp(src.begin(), src.end());
    auto refl = f.block(static_cast<std::size_t>(n + k));
    std::copy(tmp.begin(), tmp.end(), refl.begin());
  }
  const double norm = f.norm();
  if (norm == 0.0) throw Error(Errc::InvalidSpec, "zero base pattern");
  for (auto& v : f.data()) v /= norm;
  return f;
}

BlockVector mix_features(std::span<const BlockVector> features, std::span<const double> code) {
  if (features.empty() || features.size() != code.size()) {
    throw Error(Errc::ShapeMismatch, "code length must equal feature count");
  }
  BlockVector x(features.front().group(), features.front().block_len());
  auto out = x.data();
  for (std::size_t i = 0; i < features.size(); ++i) {
    if (code[i] == 0.0) continue;
    const auto d = features[i].data();
    if (d.size() != out.size()) throw Error(Errc::ShapeMismatch, "features differ in shape");
    for (std::size_t j = 0; j < out.size(); ++j) out[j] += code[i] * d[j];
  }
  return x;
}

SyntheticCorpus generate_synthetic(const SyntheticSpec& spec) {
  if (spec.n_rotations < 1) throw Error(Errc::InvalidSpec, "n_rotations must be >= 1");
  if (spec.n_features == 0) throw Error(Errc::InvalidSpec, "n_features must be >= 1");
  if (spec.block_len == 0) throw Error(Errc::InvalidSpec, "block_len must be >= 1");
  if (spec.invariance_orders.size() != spec.n_features) {
    throw Error(Errc::InvalidSpec, "need one invariance order per feature");
  }
  if (!(spec.sparsity > 0.0) || spec.sparsity > static_cast<double>(spec.n_features)) {
    throw Error(Errc::InvalidSpec, "sparsity must lie in (0, n_features]");
  }
  if (!(spec.noise_sigma >= 0.0)) throw Error(Errc::InvalidSpec, "noise_sigma must be >= 0");

  const DihedralGroup group(spec.n_rotations);
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  std::vector<BlockVector> truth;
  truth.reserve(spec.n_features);
  std::vector<double> base(spec.block_len);
  for (std::size_t i = 0; i < spec.n_features; ++i) {
    for (auto& b : base) b = normal(rng);
    truth.push_back(synthetic_feature(group, base, spec.invariance_orders[i]));
  }

  Manifest manifest;
  manifest.source = "synthetic";
  manifest.seed = spec.seed;
  manifest.model_name = "synthetic";
  manifest.extra["synthetic"] = {
      {"n_features", spec.n_features},     {"invariance_orders", spec.invariance_orders},
      {"sparsity", spec.sparsity},         {"noise_sigma", spec.noise_sigma},
      {"n_samples", spec.n_samples},
  };
  SyntheticCorpus corpus{OrbitDataset(group, spec.block_len, manifest), std::move(truth)};
  corpus.dataset.reserve(spec.n_samples);

  const double p_active = spec.sparsity / static_cast<double>(spec.n_features);
  std::vector<double> code(spec.n_features);
  std::vector<float> record(corpus.dataset.dim());
  for (std::size_t s = 0; s < spec.n_samples; ++s) {
    for (auto& c : code) c = unif(rng) < p_active ? std::abs(normal(rng)) : 0.0;
    const BlockVector x = mix_features(corpus.ground_truth, code);
    for (std::size_t j = 0; j < record.size(); ++j) {
      const double noise = spec.noise_sigma > 0.0 ? spec.noise_sigma * normal(rng) : 0.0;
      record[j] = static_cast<float>(x.data()[j] + noise);
    }
    corpus.dataset.add(record, {static_cast<std::int64_t>(s), {}});
  }
  return corpus;
}

// ---------------------------------------------------------------------------

void save_dataset(const OrbitDataset& ds, const std::filesystem::path& path) {
  detail::ByteWriter w;
  w.magic("GXC1");
  w.u32(kDatasetVersion);
  w.u32(static_cast<std::uint32_t>(ds.group().n_rotations()));
  w.u32(static_cast<std::uint32_t>(ds.block_len()));
  w.u64(ds.size());
  w.f32s(ds.data());

  const auto& m = ds.manifest();
  nlohmann::json j;
  j["n_rotations"] = ds.group().n_rotations();
  j["block_len"] = ds.block_len();
  j["record_count"] = ds.size();
  j["source"] = m.source;
  j["seed"] = m.seed;
  j["mask_radius"] = m.mask_radius;
  j["samples_per_image"] = m.samples_per_image;
  j["layer_name"] = m.layer_name;
  j["model_name"] = m.model_name;
  j["normalizer"] = m.normalizer;
  j["skipped"] = m.skipped;
  j["extra"] = m.extra;
  std::vector<std::int64_t> ids;
  std::vector<int> xs;
  std::vector<int> ys;
  ids.reserve(ds.size());
  xs.reserve(ds.size());
  ys.reserve(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    ids.push_back(ds.info(i).image_id);
    xs.push_back(ds.info(i).coord.x);
    ys.push_back(ds.info(i).coord.y);
  }
  j["records"] = {{"image_id", ids}, {"x", xs}, {"y", ys}};
  w.trailer(j.dump());
  detail::write_file(path, w.buffer());
}

OrbitDataset load_dataset(const std::filesystem::path& path) {
  const std::string file = detail::read_file(path);
  const std::string ctx = path.string();
  const auto [body, json_text] = detail::split_trailer(file, ctx);

  detail::ByteReader r(body, ctx);
  r.expect_magic("GXC1");
  if (const auto v = r.u32(); v != kDatasetVersion) r.fail("unsupported version " + std::to_string(v));
  const std::uint32_t n_rot = r.u32();
  const std::uint32_t block_len = r.u32();
  const std::uint64_t count = r.u64();
  if (n_rot == 0 || block_len == 0) r.fail("zero group or block size");
  const std::uint64_t dim = 2ull * n_rot * block_len;
  if (count > r.remaining() / 4 / dim || r.remaining() != count * dim * 4) {
    r.fail("record data length does not match header");
  }

  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
    if (j.at("n_rotations").get<std::uint32_t>() != n_rot || j.at("block_len").get<std::uint32_t>() != block_len ||
        j.at("record_count").get<std::uint64_t>() != count) {
      r.fail("manifest shape disagrees with header");
    }
  } catch (const nlohmann::json::exception& e) {
    r.fail(std::string("bad manifest: ") + e.what());
  }

  Manifest m;
  std::vector<std::int64_t> ids;
  std::vector<int> xs;
  std::vector<int> ys;
  try {
    m.source = j.at("source").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.mask_radius = j.at("mask_radius").get<double>();
    m.samples_per_image = j.at("samples_per_image").get<std::size_t>();
    m.layer_name = j.at("layer_name").get<std::string>();
    m.model_name = j.at("model_name").get<std::string>();
    m.normalizer = j.at("normalizer").get<double>();
    m.skipped = j.at("skipped").get<std::vector<std::string>>();
    m.extra = j.at("extra");
    ids = j.at("records").at("image_id").get<std::vector<std::int64_t>>();
    xs = j.at("records").at("x").get<std::vector<int>>();
    ys = j.at("records").at("y").get<std::vector<int>>();
  } catch (const nlohmann::json::exception& e) {
    r.fail(std::string("bad manifest: ") + e.what());
  }
  if (ids.size() != count || xs.size() != count || ys.size() != count) r.fail("record index length mismatch");

  OrbitDataset ds(DihedralGroup(static_cast<int>(n_rot)), block_len, std::move(m));
  ds.reserve(count);
  std::vector<float> rec(dim);
  for (std::uint64_t i = 0; i < count; ++i) {
    r.f32s(rec);
    ds.add(rec, {ids[i], {xs[i], ys[i]}});
  }
  return ds;
}

// ---------------------------------------------------------------------------

void write_grid_file(const std::filesystem::path& path, const GridFileHeader& header, const ActivationGrid& grid) {
  detail::ByteWriter w;
  w.magic("GXG1");
  w.u32(kGridVersion);
  w.u32(static_cast<std::uint32_t>(header.n_rotations));
  w.u32(static_cast<std::uint32_t>(header.g_index));
  w.u64(static_cast<std::uint64_t>(header.image_id));
  w.u32(static_cast<std::uint32_t>(grid.height()));
  w.u32(static_cast<std::uint32_t>(grid.width()));
  w.u32(static_cast<std::uint32_t>(grid.channels()));
  w.u32(static_cast<std::uint32_t>(header.layer_name.size()));
  w.bytes(header.layer_name);
  w.u32(static_cast<std::uint32_t>(header.preprocessing.size()));
  w.bytes(header.preprocessing);
  w.f32s(grid.data());
  detail::write_file(path, w.buffer());
}

GridFile read_grid_file(const std::filesystem::path& path) {
  const std::string file = detail::read_file(path);
  detail::ByteReader r(file, path.string());
  r.expect_magic("GXG1");
  if (const auto v = r.u32(); v != kGridVersion) r.fail("unsupported version " + std::to_string(v));
  GridFileHeader h;
  h.n_rotations = static_cast<int>(r.u32());
  h.g_index = static_cast<int>(r.u32());
  h.image_id = static_cast<std::int64_t>(r.u64());
  const std::size_t height = r.u32();
  const std::size_t width = r.u32();
  const std::size_t channels = r.u32();
  h.layer_name = std::string(r.take(r.u32()));
  h.preprocessing = std::string(r.take(r.u32()));
  if (height == 0 || width == 0 || channels == 0) r.fail("zero grid dimension");
  if (r.remaining() != height * width * channels * 4) r.fail("grid data length does not match header");
  std::vector<float> data(height * width * channels);
  r.f32s(data);
  try {
    return {std::move(h), ActivationGrid(height, width, channels, std::move(data))};
  } catch (const Error& e) {
    r.fail(e.what());
  }
}

std::string grid_file_name(std::int64_t image_id, int g_index) {
  return "img" + std::to_string(image_id) + "_g" + std::to_string(g_index) + ".gxg";
}

DirectoryGridSource::DirectoryGridSource(const std::filesystem::path& dir, const DihedralGroup& group)
    : group_(group) {
  std::error_code ec;
  if (!std::filesystem::is_directory(dir, ec)) throw Error(Errc::IoError, "not a directory: " + dir.string());
  static const std::regex kName(R"(img(-?\d+)_g(\d+)\.gxg)");
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string name = entry.path().filename().string();
    std::smatch m;
    if (!std::regex_match(name, m, kName)) continue;
    files_[std::stoll(m[1].str())][std::stoi(m[2].str())] = entry.path();
    ++n_files_;
  }
  it_ = files_.cbegin();
}

std::optional<ImageOrbit> DirectoryGridSource::next() {
  if (it_ == files_.cend()) return std::nullopt;
  const auto& [id, by_g] = *it_++;
  const std::string ctx = "image " + std::to_string(id);
  ImageOrbit image{id, {}};
  image.grids.reserve(static_cast<std::size_t>(group_.order()));
  for (int k = 0; k < group_.order(); ++k) {
    const auto f = by_g.find(k);
    if (f == by_g.end()) throw Error(Errc::MissingEntry, ctx + ": missing " + grid_file_name(id, k));
    GridFile gf = read_grid_file(f->second);
    if (gf.header.n_rotations != group_.n_rotations() || gf.header.g_index != k || gf.header.image_id != id) {
      throw Error(Errc::FormatError, ctx + ": header of " + f->second.filename().string() + " disagrees with name");
    }
    if (!image.grids.empty() && !gf.grid.same_shape(image.grids.front())) {
      throw Error(Errc::ShapeMismatch, ctx + ": grid shapes differ across transforms");
    }
    if (layer_name_.empty()) layer_name_ = gf.header.layer_name;
    image.grids.push_back(std::move(gf.grid));
  }
  return image;
}

}  // namespace gxc
