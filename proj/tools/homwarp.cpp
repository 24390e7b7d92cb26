// homwarp command-line tool: gen-data, train, eval, stats, bench, sweep and
// make-fixture. Exit codes: 0 ok, 2 input error, 3 training divergence,
// 4 data or checkpoint error.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "homwarp/homwarp.hpp"

namespace fs = std::filesystem;
using namespace homwarp;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;
constexpr int kExitDiverged = 3;
constexpr int kExitData = 4;

int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::DivergedTraining:
    case ErrorKind::NonFiniteUpdate:
    case ErrorKind::NonFiniteActivation:
      return kExitDiverged;
    case ErrorKind::CorruptDataset:
    case ErrorKind::CorruptCheckpoint:
    case ErrorKind::ShapeMismatch:
    case ErrorKind::DimensionMismatch:
      return kExitData;
    default:
      return kExitInput;
  }
}

struct CorpusArgs {
  std::string images;
  std::size_t synthetic = 0;
  std::uint64_t corpus_seed = 0;

  void add(CLI::App* cmd) {
    auto* img = cmd->add_option("--images", images, "directory of source images (PGM/PPM/PNG)");
    auto* syn = cmd->add_option("--synthetic", synthetic, "use N generated texture images instead");
    img->excludes(syn);
    syn->excludes(img);
    cmd->add_option("--corpus-seed", corpus_seed, "seed of the synthetic textures (defaults to --seed for gen-data)");
  }

  [[nodiscard]] bool given() const { return !images.empty() || synthetic > 0; }

  [[nodiscard]] ImageCorpus open() const {
    if (!images.empty()) return ImageCorpus::from_directory(images);
    if (synthetic > 0) return ImageCorpus::synthetic(synthetic, corpus_seed);
    throw Error(ErrorKind::InvalidArgument, "source images needed: pass --images DIR or --synthetic N");
  }
};

struct ModelArgs {
  std::string preset = "desk";
  int fc1 = 0;
  double dropout = -1.0;

  void add(CLI::App* cmd) {
    cmd->add_option("--preset", preset, "paper or desk")->check(CLI::IsMember({"paper", "desk"}));
    cmd->add_option("--fc1", fc1, "override fc1 width");
    cmd->add_option("--dropout", dropout, "override dropout probability");
  }

  [[nodiscard]] RegressorConfig model() const {
    RegressorConfig c = preset == "paper" ? RegressorConfig::paper() : RegressorConfig::desk();
    if (fc1 > 0) c.fc1_units = fc1;
    if (dropout >= 0.0) c.dropout = dropout;
    c.validate();
    return c;
  }
};

unsigned g_threads = 1;

ConfigEcho echo_of(const CLI::App& cmd) {
  ConfigEcho out;
  out.emplace_back("command", cmd.get_name());
  out.emplace_back("threads", std::to_string(g_threads));
  std::istringstream in(cmd.config_to_str(true, false));
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos || line.empty() || line[0] == '[' || line[0] == '#') continue;
    auto trim = [](std::string s) {
      s.erase(0, s.find_first_not_of(" \t"));
      s.erase(s.find_last_not_of(" \t") + 1);
      return s;
    };
    out.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return out;
}

void print_echo(std::ostream& out, const ConfigEcho& echo) { write_config_echo(out, echo); }

std::ofstream open_out(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream f(p, std::ios::binary);
  if (!f) throw Error(ErrorKind::InvalidArgument, p.string() + ": cannot open for writing");
  return f;
}

// ---------------------------------------------------------------------------
// Checkpoint directories: manifest.txt plus stage<i>.stnh

struct Manifest {
  std::string mode = "single";
  int stages = 1;
};

void write_manifest(const fs::path& dir, const Manifest& m, const ConfigEcho& echo) {
  auto f = open_out(dir / "manifest.txt");
  f << "mode = " << m.mode << "\nstages = " << m.stages << '\n';
  print_echo(f, echo);
}

Manifest read_manifest(const fs::path& dir) {
  std::ifstream f(dir / "manifest.txt");
  if (!f) throw Error(ErrorKind::CorruptCheckpoint, (dir / "manifest.txt").string() + ": missing");
  Manifest m;
  std::string line;
  while (std::getline(f, line)) {
    if (line.rfind("mode = ", 0) == 0) m.mode = line.substr(7);
    if (line.rfind("stages = ", 0) == 0) {
      try {
        m.stages = std::stoi(line.substr(9));
      } catch (const std::exception&) {
        throw Error(ErrorKind::CorruptCheckpoint, "manifest stage count unreadable");
      }
    }
  }
  if (m.stages < 1) throw Error(ErrorKind::CorruptCheckpoint, "manifest stage count must be positive");
  return m;
}

fs::path stage_path(const fs::path& dir, int i) { return dir / ("stage" + std::to_string(i) + ".stnh"); }

std::vector<Checkpoint> load_stages(const fs::path& dir, int count) {
  std::vector<Checkpoint> out;
  for (int i = 0; i < count; ++i) out.push_back(load_checkpoint(stage_path(dir, i)));
  return out;
}

template <typename T>
std::vector<StagePredictor<T>> predictors_of(const std::vector<Checkpoint>& cks) {
  std::vector<StagePredictor<T>> out;
  for (const auto& c : cks) {
    if (c.oracle) {
      out.push_back(StagePredictor<T>::oracle());
    } else {
      out.push_back(StagePredictor<T>::network(c.params->template cast<T>()));
    }
  }
  return out;
}

void require_side(const Dataset& ds, const RegressorConfig& c) {
  if (static_cast<int>(ds.patch_side) != c.input_side) {
    throw Error(ErrorKind::ShapeMismatch, "dataset patches are " + std::to_string(ds.patch_side) +
                                              " px but the model expects " + std::to_string(c.input_side) + " px");
  }
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string data;
  std::string mode = "single";
  int stages = 1;
  ModelArgs model;
  CorpusArgs corpus;
  double w2 = 1.0, w1 = 1.0;
  std::uint64_t seed = 0;
  std::string out;
  int batch = 0;
  double lr = -1.0;
  long warmup = -1, decay = -1;
  double supervised = 1.0;
  bool f64 = false;
  int log_every = 50;
};

template <typename T>
void save_stage(const fs::path& dir, int i, const RegressorParams<T>& p) {
  save_checkpoint(stage_path(dir, i), p);
}

template <typename T>
int run_train(const TrainArgs& a, const TrainConfig& tc, const RegressorConfig& mc, const ConfigEcho& echo) {
  const Dataset ds = read_dataset(a.data);
  require_side(ds, mc);
  const fs::path dir(a.out);
  fs::create_directories(dir);
  auto curve_csv = open_out(dir / "curve.csv");
  print_echo(curve_csv, echo);
  auto log = [&](int stage, const CurvePoint& p) {
    if (a.log_every > 0 && (p.step % a.log_every == 0 || p.step + 1 == tc.total_steps())) {
      std::cout << "stage " << stage << " step " << p.step << " lr " << p.lr << " loss " << p.loss
                << " corner_error_px " << p.corner_error << '\n';
    }
  };
  std::vector<CurvePoint> all;
  const EvalMode mode = parse_eval_mode(a.mode);
  if (mode == EvalMode::Hierarchical) {
    const ImageCorpus corpus = a.corpus.open();
    auto res = train_hierarchical<T>(ds.records, corpus, tc, mc, a.stages, log);
    for (int i = 0; i < a.stages; ++i) {
      save_stage(dir, i, res.stages[i]);
      write_curve_csv(curve_csv, res.curves[i], i);
      if (i > 0) {
        Dataset prepared{ds.patch_side, {}};
        for (const auto& s : res.stage_data[i]) prepared.records.push_back(s.record);
        write_dataset(dir / ("stage" + std::to_string(i) + "_data.hstn"), prepared);
      }
    }
    all = res.curves.back();
  } else {
    const int k = mode == EvalMode::Single ? 1 : a.stages;
    const auto samples = to_train_samples<T>(ds.records, tc.supervised_fraction, tc.seed);
    auto res = train_sequence(std::span<const TrainSample<T>>(samples), tc, mc, k,
                              [&](const CurvePoint& p) { log(0, p); });
    for (int i = 0; i < k; ++i) save_stage(dir, i, res.stages[i]);
    write_curve_csv(curve_csv, res.curve, 0);
    all = res.curve;
  }
  auto svg = open_out(dir / "curve.svg");
  write_curve_svg(svg, all);
  write_manifest(dir, {to_string(mode), mode == EvalMode::Single ? 1 : a.stages}, echo);
  std::cout << "final loss " << all.back().loss << "\nwrote " << dir.string() << '\n';
  return kExitOk;
}

template <typename T>
EvalReport run_eval(EvalMode mode, const std::vector<Checkpoint>& cks, const Dataset& ds, const CorpusArgs& corpus,
                    unsigned threads) {
  switch (mode) {
    case EvalMode::Single: {
      const auto preds = predictors_of<T>(cks);
      return evaluate_single(preds.front(), std::span<const SampleRecord>(ds.records), threads);
    }
    case EvalMode::Hierarchical: {
      const auto preds = predictors_of<T>(cks);
      const ImageCorpus c = corpus.open();
      return evaluate_hierarchical<T>(preds, ds.records, c, threads);
    }
    case EvalMode::Sequence: {
      std::vector<RegressorParams<T>> params;
      for (const auto& c : cks) {
        if (c.oracle) throw Error(ErrorKind::CorruptCheckpoint, "sequence evaluation needs trained networks");
        params.push_back(c.params->template cast<T>());
      }
      return evaluate_sequence<T>(params, ds.records, threads);
    }
  }
  throw Error(ErrorKind::InvalidArgument, "unknown mode");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"homwarp: normalized homography regression toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  app.option_defaults()->always_capture_default();
  app.set_config("--config", "", "TOML or INI file with option defaults");
  unsigned threads = default_thread_count();
  app.add_option("--threads", threads, "worker threads (1 = deterministic sequential path)")
      ->check(CLI::PositiveNumber);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic patch-pair dataset");
  CorpusArgs gen_corpus;
  int per_image = 3;
  std::uint64_t gen_seed = 0;
  std::string gen_out, gen_preset = "desk";
  int gen_side = 0;
  gen_corpus.add(gen);
  gen->add_option("--per-image", per_image, "samples drawn from each image")->check(CLI::PositiveNumber);
  gen->add_option("--seed", gen_seed, "master seed");
  gen->add_option("--out", gen_out, "dataset file")->required();
  gen->add_option("--preset", gen_preset, "paper (128 px, +-32) or desk (32 px, +-8)")
      ->check(CLI::IsMember({"paper", "desk"}));
  gen->add_option("--side", gen_side, "patch side; perturbation and margins scale with it");

  // train
  auto* train = app.add_subcommand("train", "train single, hierarchical or sequence models");
  TrainArgs ta;
  train->add_option("--data", ta.data, "training dataset")->required();
  train->add_option("--mode", ta.mode, "single, hierarchical or sequence")
      ->check(CLI::IsMember({"single", "hierarchical", "sequence"}));
  train->add_option("--stages", ta.stages, "number of stages")->check(CLI::PositiveNumber);
  ta.model.add(train);
  ta.corpus.add(train);
  train->add_option("--w2", ta.w2, "L2 loss weight");
  train->add_option("--w1", ta.w1, "L1 photometric loss weight");
  train->add_option("--seed", ta.seed, "training seed");
  train->add_option("--out", ta.out, "output directory")->required();
  train->add_option("--batch", ta.batch, "override batch size");
  train->add_option("--lr", ta.lr, "override base learning rate");
  train->add_option("--warmup", ta.warmup, "override warmup steps");
  train->add_option("--decay-steps", ta.decay, "override cosine decay steps");
  train->add_option("--supervised-fraction", ta.supervised, "share of samples that keep their target");
  train->add_flag("--f64", ta.f64, "train in double precision");
  train->add_option("--log-every", ta.log_every, "progress line interval (0 = quiet)");

  // eval
  auto* eval = app.add_subcommand("eval", "mean corner error of trained models");
  std::string ev_data, ev_ckpt, ev_mode, ev_report;
  CorpusArgs ev_corpus;
  int ev_stages = 0;
  eval->add_option("--data", ev_data, "test dataset")->required();
  eval->add_option("--ckpt", ev_ckpt, "checkpoint directory")->required();
  eval->add_option("--mode", ev_mode, "single, hierarchical or sequence (default: as trained)")
      ->check(CLI::IsMember({"single", "hierarchical", "sequence"}));
  eval->add_option("--stages", ev_stages, "use only the first N stages");
  eval->add_option("--report", ev_report, "per-sample CSV report");
  ev_corpus.add(eval);

  // stats
  auto* stats = app.add_subcommand("stats", "histograms of the eight target elements");
  std::string st_data, st_csv, st_svg;
  stats->add_option("--data", st_data, "dataset file")->required();
  stats->add_option("--out-csv", st_csv, "histogram CSV");
  stats->add_option("--out-svg", st_svg, "histogram panel SVG");

  // bench
  auto* bench = app.add_subcommand("bench", "latency of hierarchical inference");
  std::string bn_ckpt, bn_csv;
  int bn_stages = 1, bn_reps = 100;
  std::uint64_t bn_seed = 0;
  bench->add_option("--ckpt", bn_ckpt, "checkpoint directory")->required();
  bench->add_option("--stages", bn_stages, "chain length")->check(CLI::PositiveNumber);
  bench->add_option("--reps", bn_reps, "repetitions (>= 10)");
  bench->add_option("--seed", bn_seed, "seed of the benchmark image");
  bench->add_option("--csv", bn_csv, "CSV output");

  // sweep
  auto* sweep = app.add_subcommand("sweep", "train one model per (w2, w1) pair and compare");
  std::string sw_data, sw_test, sw_out;
  std::vector<double> sw_pairs;
  ModelArgs sw_model;
  std::uint64_t sw_seed = 0;
  long sw_steps = -1;
  sweep->add_option("--data", sw_data, "training dataset")->required();
  sweep->add_option("--test", sw_test, "test dataset")->required();
  sweep->add_option("--pairs", sw_pairs, "flat list w2,w1,w2,w1,... (default: the standard six)")->delimiter(',');
  sweep->add_option("--seed", sw_seed, "training seed");
  sweep->add_option("--decay-steps", sw_steps, "override cosine decay steps");
  sweep->add_option("--out", sw_out, "CSV output");
  sw_model.add(sweep);

  // make-fixture
  auto* fix = app.add_subcommand("make-fixture", "write an oracle or identity checkpoint directory");
  std::string fx_kind = "identity", fx_out;
  ModelArgs fx_model;
  int fx_stages = 1;
  fix->add_option("--kind", fx_kind, "oracle or identity")->check(CLI::IsMember({"oracle", "identity"}));
  fix->add_option("--out", fx_out, "output directory")->required();
  fix->add_option("--stages", fx_stages, "stage count")->check(CLI::PositiveNumber);
  fx_model.add(fix);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitInput;
  }

  g_threads = threads;
  try {
    if (*gen) {
      DataConfig dc = gen_preset == "paper" ? DataConfig::paper() : DataConfig::desk();
      if (gen_side > 0) dc = DataConfig::scaled(gen_side);
      if (gen_corpus.synthetic > 0 && gen->get_option("--corpus-seed")->count() == 0) {
        gen_corpus.corpus_seed = gen_seed;
      }
      const ImageCorpus corpus = gen_corpus.open();
      Dataset ds{dc.patch_side, generate_dataset(corpus, per_image, gen_seed, dc, threads)};
      write_dataset(gen_out, ds);
      print_echo(std::cout, echo_of(*gen));
      std::cout << "records " << ds.records.size() << '\n';
      write_stats_summary(std::cout, dataset_stats(ds.records));
      return kExitOk;
    }

    if (*train) {
      const RegressorConfig mc = ta.model.model();
      TrainConfig tc = ta.model.preset == "paper" ? TrainConfig::paper() : TrainConfig::desk();
      tc.w2 = ta.w2;
      tc.w1 = ta.w1;
      tc.seed = ta.seed;
      tc.threads = threads;
      tc.supervised_fraction = ta.supervised;
      tc.numeric = ta.f64 ? NumericMode::F64 : NumericMode::F32;
      if (ta.batch > 0) tc.batch_size = ta.batch;
      if (ta.lr >= 0.0) tc.base_lr = ta.lr;
      if (ta.warmup >= 0) tc.warmup_steps = ta.warmup;
      if (ta.decay >= 0) tc.decay_steps = ta.decay;
      tc.validate();
      if (ta.mode == "hierarchical" && !ta.corpus.given()) {
        throw Error(ErrorKind::InvalidArgument, "hierarchical training re-warps the source images: pass --images or --synthetic");
      }
      const ConfigEcho echo = echo_of(*train);
      print_echo(std::cout, echo);
      return ta.f64 ? run_train<double>(ta, tc, mc, echo) : run_train<float>(ta, tc, mc, echo);
    }

    if (*eval) {
      const Dataset ds = read_dataset(ev_data);
      if (ds.records.empty()) throw Error(ErrorKind::CorruptDataset, "test set is empty");
      const Manifest m = read_manifest(ev_ckpt);
      const EvalMode mode = parse_eval_mode(ev_mode.empty() ? m.mode : ev_mode);
      int n = ev_stages > 0 ? ev_stages : m.stages;
      if (n > m.stages) throw Error(ErrorKind::CorruptCheckpoint, "requested more stages than the directory holds");
      if (mode == EvalMode::Single) n = 1;
      const auto cks = load_stages(ev_ckpt, n);
      for (const auto& c : cks) require_side(ds, c.config);
      const bool wide = std::any_of(cks.begin(), cks.end(), [](const Checkpoint& c) { return c.wide; });
      const EvalReport rep = wide ? run_eval<double>(mode, cks, ds, ev_corpus, threads)
                                  : run_eval<float>(mode, cks, ds, ev_corpus, threads);
      const ConfigEcho echo = echo_of(*eval);
      if (!ev_report.empty()) {
        auto f = open_out(ev_report);
        write_eval_csv(f, rep, echo);
      }
      std::cout << "mode " << to_string(mode) << " stages " << n << " records " << rep.rows.size() << '\n';
      std::cout << "mean corner error " << std::fixed << std::setprecision(4) << rep.mean_error << " px\n";
      std::cout << "identity baseline " << identity_baseline_error(ds.records) << " px\n";
      return kExitOk;
    }

    if (*stats) {
      const Dataset ds = read_dataset(st_data);
      const DatasetStats st = dataset_stats(ds.records);
      std::cout << "records " << st.record_count << '\n';
      write_stats_summary(std::cout, st);
      if (!st_csv.empty()) {
        auto f = open_out(st_csv);
        write_stats_csv(f, st);
      }
      if (!st_svg.empty()) {
        auto f = open_out(st_svg);
        write_stats_svg(f, st);
      }
      return kExitOk;
    }

    if (*bench) {
      const Manifest m = read_manifest(bn_ckpt);
      if (bn_stages > m.stages) throw Error(ErrorKind::CorruptCheckpoint, "requested more stages than the directory holds");
      const auto cks = load_stages(bn_ckpt, bn_stages);
      const auto preds = predictors_of<float>(cks);
      const int side = cks.front().config.input_side;
      DataConfig dc = DataConfig::scaled(side);
      const SourceImage img = synth_texture(bn_seed);
      std::mt19937_64 rng(bn_seed);
      const SampleRecord rec = generate_sample(img, rng, dc);
      std::vector<TimingReport> reports;
      for (int n = 1; n <= bn_stages; ++n) {
        reports.push_back(bench_timing<float>(preds, n, bn_reps, img.image, rec.patch_b, rec.rect_x, rec.rect_y));
      }
      const ConfigEcho echo = echo_of(*bench);
      print_echo(std::cout, echo);
      std::cout << std::fixed << std::setprecision(4);
      for (const auto& r : reports) {
        std::cout << "n=" << r.stages << " l_m " << r.l_m * 1e3 << " ms, l_w " << r.l_w * 1e3 << " ms, d_e model "
                  << r.d_e_model * 1e3 << " ms, measured " << r.d_e_measured * 1e3 << " ms (median of "
                  << r.repetitions << ")\n";
      }
      std::cout << "reference GPU latency (published, not measured here): 1 stage " << kReferenceGpuMillis[0]
                << " ms, 2 stages " << kReferenceGpuMillis[1] << " ms, 3 stages " << kReferenceGpuMillis[2]
                << " ms\n";
      if (!bn_csv.empty()) {
        auto f = open_out(bn_csv);
        print_echo(f, echo);
        write_timing_csv(f, reports);
      }
      return kExitOk;
    }

    if (*sweep) {
      const RegressorConfig mc = sw_model.model();
      const Dataset tr = read_dataset(sw_data);
      const Dataset te = read_dataset(sw_test);
      require_side(tr, mc);
      require_side(te, mc);
      TrainConfig tc = sw_model.preset == "paper" ? TrainConfig::paper() : TrainConfig::desk();
      tc.seed = sw_seed;
      tc.threads = threads;
      if (sw_steps >= 0) tc.decay_steps = sw_steps;
      std::vector<WeightPair> pairs = default_weight_pairs();
      if (!sw_pairs.empty()) {
        if (sw_pairs.size() % 2) throw Error(ErrorKind::InvalidArgument, "--pairs needs an even number of values");
        pairs.clear();
        for (std::size_t i = 0; i < sw_pairs.size(); i += 2) pairs.emplace_back(sw_pairs[i], sw_pairs[i + 1]);
      }
      const auto rows = loss_weight_sweep<float>(tr.records, te.records, tc, mc, pairs);
      const ConfigEcho echo = echo_of(*sweep);
      write_sweep_csv(std::cout, rows, echo);
      if (!sw_out.empty()) {
        auto f = open_out(sw_out);
        write_sweep_csv(f, rows, echo);
      }
      return kExitOk;
    }

    if (*fix) {
      const RegressorConfig mc = fx_model.model();
      const fs::path dir(fx_out);
      fs::create_directories(dir);
      for (int i = 0; i < fx_stages; ++i) {
        if (fx_kind == "oracle") {
          save_oracle_checkpoint(stage_path(dir, i), mc);
        } else {
          save_stage(dir, i, identity_params<float>(mc));
        }
      }
      write_manifest(dir, {fx_stages > 1 ? "hierarchical" : "single", fx_stages}, echo_of(*fix));
      std::cout << "wrote " << fx_kind << " fixture to " << dir.string() << '\n';
      return kExitOk;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  }
  return kExitOk;
}
