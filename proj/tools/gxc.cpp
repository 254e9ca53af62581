#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "gxc/analysis.hpp"
#include "gxc/crosscoder.hpp"
#include "gxc/dataset.hpp"
#include "gxc/error.hpp"
#include "gxc/version.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct Globals {
  std::uint64_t seed = 0;
  int threads = 0;
  bool quiet = false;
};

struct SynthArgs {
  int rotations = 8;
  std::size_t features = 24;
  std::optional<int> period;
  std::vector<int> periods;
  std::size_t block_len = 8;
  std::size_t samples = 10000;
  double sparsity = 1.0;
  double noise = 0.0;
  bool normalize = false;
  std::string out;
  std::string truth;
};

struct IngestArgs {
  std::string grids;
  std::optional<int> rotations;
  std::optional<double> radius;
  std::size_t samples = 10;
  std::string mode = "weighted";
  bool normalize = false;
  std::string out;
};

struct TrainArgs {
  std::string data;
  std::size_t features = 0;
  double lambda = 3e-7;
  std::size_t epochs = 1;
  std::size_t batch_size = 256;
  double lr = 1e-3;
  std::string out;
  std::string history;
};

struct AnalyzeArgs {
  std::string checkpoint;
  std::string out_dir;
  double threshold = gxc::kDefaultInvarianceThreshold;
  std::vector<std::size_t> features;  // heatmaps for these only; empty for all
};

json provenance(const std::string& command, const Globals& g, json config) {
  config["seed"] = g.seed;
  return {{"tool", "gxc"}, {"tool_version", gxc::kToolVersion}, {"command", command}, {"config", std::move(config)}};
}

// --- synth -----------------------------------------------------------------

int run_synth(const SynthArgs& a, const Globals& g) {
  gxc::SyntheticSpec spec;
  spec.n_rotations = a.rotations;
  spec.n_features = a.features;
  spec.block_len = a.block_len;
  spec.sparsity = a.sparsity;
  spec.noise_sigma = a.noise;
  spec.n_samples = a.samples;
  spec.seed = g.seed;
  std::vector<int> cycle = a.periods;
  if (cycle.empty()) cycle.push_back(a.period.value_or(a.rotations));
  for (std::size_t i = 0; i < a.features; ++i) spec.invariance_orders.push_back(cycle[i % cycle.size()]);

  auto corpus = gxc::generate_synthetic(spec);
  if (a.normalize) corpus.dataset.manifest().normalizer = gxc::unit_energy_normalizer(corpus.dataset);
  const json config = {{"rotations", a.rotations},  {"features", a.features},   {"invariance_orders", spec.invariance_orders},
                       {"block_len", a.block_len},  {"samples", a.samples},     {"sparsity", a.sparsity},
                       {"noise", a.noise},          {"normalize", a.normalize}, {"out", a.out},
                       {"truth", a.truth}};
  corpus.dataset.manifest().extra["run"] = provenance("synth", g, config);
  gxc::save_dataset(corpus.dataset, a.out);

  if (!a.truth.empty()) {
    gxc::Manifest m;
    m.source = "synthetic-ground-truth";
    m.seed = g.seed;
    m.model_name = "synthetic";
    m.extra["invariance_orders"] = spec.invariance_orders;
    m.extra["run"] = provenance("synth", g, config);
    gxc::OrbitDataset truth(corpus.dataset.group(), a.block_len, m);
    for (std::size_t i = 0; i < corpus.ground_truth.size(); ++i) {
      truth.add(corpus.ground_truth[i], {static_cast<std::int64_t>(i), {}});
    }
    gxc::save_dataset(truth, a.truth);
  }
  if (!g.quiet) std::cerr << "wrote " << corpus.dataset.size() << " records to " << a.out << "\n";
  return 0;
}

// --- ingest ----------------------------------------------------------------

std::vector<fs::path> grid_files(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".gxg") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

std::optional<int> rotations_from_files(const std::vector<fs::path>& files) {
  for (const auto& f : files) {
    try {
      return gxc::read_grid_file(f).header.n_rotations;
    } catch (const gxc::Error&) {
    }
  }
  return std::nullopt;
}

int run_ingest(const IngestArgs& a, const Globals& g) {
  if (!fs::is_directory(a.grids)) throw gxc::Error(gxc::Errc::IoError, "not a directory: " + a.grids);
  const auto files = grid_files(a.grids);
  if (files.empty()) {
    std::cerr << "error: no grid files in " << a.grids << "\n";
    return kExitRuntime;
  }
  const auto rotations = a.rotations ? a.rotations : rotations_from_files(files);
  if (!rotations) {
    std::cerr << "error: none of the " << files.size() << " grid files in " << a.grids << " is readable\n";
    for (const auto& f : files) std::cerr << "  " << f.filename().string() << "\n";
    return kExitRuntime;
  }
  const gxc::DihedralGroup group(*rotations);
  gxc::DirectoryGridSource source(a.grids, group);

  gxc::BuildOptions opt;
  opt.n_samples = a.samples;
  opt.seed = g.seed;
  opt.mask_radius = a.radius;
  opt.mode = a.mode == "topk" ? gxc::SampleMode::TopK : gxc::SampleMode::NormWeighted;
  auto ds = gxc::build_dataset(source, group, opt);

  for (const auto& s : ds.manifest().skipped) std::cerr << "warning: skipped " << s << "\n";
  if (!ds.manifest().skipped.empty()) std::cerr << ds.manifest().skipped.size() << " warning(s)\n";
  if (ds.empty()) {
    std::cerr << "error: no usable images in " << a.grids << "\n";
    return kExitRuntime;
  }

  ds.manifest().source = fs::path(a.grids).lexically_normal().string();
  ds.manifest().layer_name = source.layer_name();
  if (a.normalize) ds.manifest().normalizer = gxc::unit_energy_normalizer(ds);
  json config = {{"grids", a.grids},   {"rotations", *rotations}, {"samples", a.samples},
                 {"mode", a.mode},     {"normalize", a.normalize}, {"out", a.out}};
  config["radius"] = a.radius ? json(*a.radius) : json(nullptr);
  ds.manifest().extra["run"] = provenance("ingest", g, config);
  gxc::save_dataset(ds, a.out);
  if (!g.quiet) std::cerr << "wrote " << ds.size() << " records to " << a.out << "\n";
  return 0;
}

// --- train -----------------------------------------------------------------

int run_train(const TrainArgs& a, const Globals& g) {
  const auto ds = gxc::load_dataset(a.data);
  gxc::TrainConfig cfg;
  cfg.lambda = a.lambda;
  cfg.epochs = a.epochs;
  cfg.batch_size = a.batch_size;
  cfg.learning_rate = a.lr;
  cfg.seed = g.seed;
  cfg.threads = g.threads;

  gxc::ProgressFn progress;
  if (!g.quiet) {
    progress = [](const gxc::StepRecord& r, std::size_t total) {
      const std::size_t every = std::max<std::size_t>(1, total / 20);
      if (r.step % every == 0 || r.step + 1 == total) {
        std::cerr << "step " << r.step + 1 << "/" << total << " loss " << r.total << " mse " << r.mse
                  << " active " << r.active_feature_fraction << "\n";
      }
    };
  }
  const auto result = gxc::train(ds, a.features, cfg, progress);

  const std::string history = a.history.empty() ? a.out + ".history.csv" : a.history;
  json config = cfg.to_json();
  config["data"] = a.data;
  config["features"] = a.features;
  config["out"] = a.out;
  config["history"] = history;
  json meta = provenance("train", g, config);
  meta["dataset_manifest"] = {{"source", ds.manifest().source},
                              {"seed", ds.manifest().seed},
                              {"normalizer", ds.manifest().normalizer},
                              {"records", ds.size()}};
  if (!result.history.empty()) {
    const auto& last = result.history.back();
    meta["final"] = {{"total", last.total}, {"mse", last.mse}, {"sparsity", last.sparsity}};
  }
  gxc::save_checkpoint(result.params, meta, a.out);
  gxc::write_history_csv(result.history, history);
  return 0;
}

// --- analyze ---------------------------------------------------------------

int run_analyze(const AnalyzeArgs& a, const Globals& g) {
  const auto ck = gxc::load_checkpoint(a.checkpoint);
  const auto dict = gxc::dictionary(ck.params);
  const std::size_t m = dict.size();
  for (std::size_t f : a.features) {
    if (f >= m) {
      throw gxc::Error(gxc::Errc::InvalidArgument,
                       "feature " + std::to_string(f) + " out of range for " + std::to_string(m) + " features");
    }
  }

  const fs::path dir(a.out_dir);
  fs::create_directories(dir);
  json config = {{"checkpoint", a.checkpoint}, {"out_dir", a.out_dir}, {"threshold", a.threshold},
                 {"features", a.features}};
  const json run = provenance("analyze", g, config);

  const auto s = gxc::similarity_matrix(dict, g.threads);
  gxc::export_distance_matrix(s, dir / "distance.csv");
  gxc::export_heatmap(s.values, m, m, dir / "similarity.svg",
                      {"max-over-group similarity", 0, {{"run", run}, {"matrix", "similarity"}}});

  std::vector<gxc::SymmetryReport> reports;
  std::vector<std::size_t> zero;
  for (std::size_t i = 0; i < m; ++i) {
    try {
      reports.push_back(gxc::symmetry_report(dict[i], a.threshold, i));
    } catch (const gxc::Error& e) {
      if (e.code() != gxc::Errc::ZeroVector) throw;
      zero.push_back(i);
    }
  }
  gxc::export_symmetry_reports(reports, dir / "symmetry_reports.json");

  std::vector<std::size_t> selected = a.features;
  if (selected.empty()) {
    for (const auto& r : reports) selected.push_back(r.feature_id);
  }
  const auto n_blocks = static_cast<std::size_t>(ck.params.group.order());
  std::vector<std::string> heatmaps;
  for (std::size_t f : selected) {
    const auto it = std::find_if(reports.begin(), reports.end(), [f](const auto& r) { return r.feature_id == f; });
    if (it == reports.end()) continue;
    const std::string name = "feature_" + std::to_string(f) + ".svg";
    json meta = {{"run", run}, {"feature_id", f}, {"report", gxc::to_json(*it)}};
    gxc::export_heatmap(it->block_cosine, n_blocks, n_blocks, dir / name,
                        {"feature " + std::to_string(f) + " block cosines", n_blocks / 2, meta});
    heatmaps.push_back(name);
  }

  json manifest = run;
  manifest["checkpoint_metadata"] = ck.metadata;
  manifest["n_features"] = m;
  manifest["zero_features"] = zero;
  manifest["outputs"] = {{"distance", "distance.csv"},
                         {"similarity_heatmap", "similarity.svg"},
                         {"symmetry_reports", "symmetry_reports.json"},
                         {"heatmaps", heatmaps}};
  std::ofstream out(dir / "run_manifest.json", std::ios::binary);
  out << manifest.dump(1) << "\n";
  if (!out) throw gxc::Error(gxc::Errc::IoError, "cannot write " + (dir / "run_manifest.json").string());
  if (!zero.empty()) std::cerr << "warning: " << zero.size() << " zero feature(s) excluded from reports\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Group crosscoder pipeline: synthesize or ingest orbit data, train, analyze."};
  app.set_version_flag("--version", gxc::kToolVersion);
  app.set_config("--config", "", "TOML file with option values; flags on the command line win");
  app.require_subcommand(1);

  Globals g;
  app.add_option("--seed", g.seed, "RNG seed")->capture_default_str();
  app.add_option("--threads", g.threads, "Worker cap, 0 for the OpenMP default")->check(CLI::NonNegativeNumber);
  app.add_flag("--quiet", g.quiet, "No progress output");

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset with planted dihedral features");
  synth->add_option("--rotations", sa.rotations, "n, the group is D_2n")->check(CLI::PositiveNumber)->capture_default_str();
  synth->add_option("--features", sa.features, "Planted feature count")->check(CLI::PositiveNumber)->capture_default_str();
  auto* period = synth->add_option("--period", sa.period, "Rotation period of every feature (default: rotations)");
  synth->add_option("--periods", sa.periods, "Rotation periods assigned to features cyclically")
      ->delimiter(',')
      ->excludes(period);
  synth->add_option("--block-len", sa.block_len, "Block length")->check(CLI::PositiveNumber)->capture_default_str();
  synth->add_option("--samples", sa.samples, "Record count")->capture_default_str();
  synth->add_option("--sparsity", sa.sparsity, "Expected active features per record")->capture_default_str();
  synth->add_option("--noise", sa.noise, "Gaussian noise sigma")->capture_default_str();
  synth->add_flag("--normalize", sa.normalize, "Store a unit-energy normalizer in the manifest");
  synth->add_option("--out", sa.out, "Dataset file")->required();
  synth->add_option("--truth", sa.truth, "Ground-truth feature file (GXC1, one record per feature)");

  IngestArgs ia;
  auto* ingest = app.add_subcommand("ingest", "Build a dataset from a directory of GXG1 grid files");
  ingest->add_option("--grids", ia.grids, "Directory of img{ID}_g{K}.gxg files")->required();
  ingest->add_option("--rotations", ia.rotations, "n (default: from the grid headers)")->check(CLI::PositiveNumber);
  ingest->add_option("--radius", ia.radius, "Mask radius in grid cells (default: min(H, W)/2 - 1)")
      ->check(CLI::PositiveNumber);
  ingest->add_option("--samples", ia.samples, "Positions per image")->capture_default_str();
  ingest->add_option("--mode", ia.mode, "Position sampling")
      ->check(CLI::IsMember({"weighted", "topk"}))
      ->capture_default_str();
  ingest->add_flag("--normalize", ia.normalize, "Store a unit-energy normalizer in the manifest");
  ingest->add_option("--out", ia.out, "Dataset file")->required();

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "Train a group crosscoder");
  train->add_option("--data", ta.data, "Dataset file")->required();
  train->add_option("--features", ta.features, "Dictionary size m")->required()->check(CLI::PositiveNumber);
  train->add_option("--lambda", ta.lambda, "Sparsity coefficient")->check(CLI::NonNegativeNumber)->capture_default_str();
  train->add_option("--epochs", ta.epochs, "Passes over the data")->capture_default_str();
  train->add_option("--batch-size", ta.batch_size, "Minibatch size")->check(CLI::PositiveNumber)->capture_default_str();
  train->add_option("--lr", ta.lr, "Adam learning rate")->check(CLI::PositiveNumber)->capture_default_str();
  train->add_option("--out", ta.out, "Checkpoint file")->required();
  train->add_option("--history", ta.history, "Loss history CSV (default: <out>.history.csv)");

  AnalyzeArgs aa;
  auto* analyze = app.add_subcommand("analyze", "Similarity matrix, symmetry reports and heatmaps for a checkpoint");
  analyze->add_option("--checkpoint", aa.checkpoint, "Checkpoint file")->required();
  analyze->add_option("--out-dir", aa.out_dir, "Output directory")->required();
  analyze->add_option("--threshold", aa.threshold, "Invariance threshold")->capture_default_str();
  analyze->add_option("--features", aa.features, "Render block heatmaps for these features only")->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*synth) return run_synth(sa, g);
    if (*ingest) return run_ingest(ia, g);
    if (*train) return run_train(ta, g);
    if (*analyze) return run_analyze(aa, g);
  } catch (const gxc::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.code() == gxc::Errc::InvalidSpec || e.code() == gxc::Errc::InvalidArgument ? kExitUsage : kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
