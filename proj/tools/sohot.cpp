// sohot: command-line front end for data generation, training, evaluation and
// the numerical checks of the alignment library.
//
// Exit codes: 0 success, 1 check failure, 2 usage or input error, 3 divergence.

#include "CLI11.hpp"
#include "json.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "sohot/checkpoint.hpp"
#include "sohot/checks.hpp"
#include "sohot/data.hpp"
#include "sohot/errors.hpp"
#include "sohot/trainer.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr const char* kVersion = "0.1.0";

enum ExitCode : int { kOk = 0, kCheckFailed = 1, kUsage = 2, kDiverged = 3 };

/// A command's outcome plus what goes into its manifest.
struct RunRecord {
  int exit_code = kOk;
  std::optional<fs::path> manifest_path;  ///< no manifest when unset
  json config;
  json artifacts = json::object();
};

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw sohot::ArgumentError("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw sohot::ArgumentError("failed writing " + path.string());
}

// ---- gen --------------------------------------------------------------------

struct GenOptions {
  sohot::ShiftKnobs knobs;
  std::string out;
};

void add_gen(CLI::App& app, GenOptions& o) {
  auto* cmd = app.add_subcommand("gen", "Generate the synthetic domain-shift benchmark as a feature CSV");
  cmd->add_option("--classes", o.knobs.classes, "Number of classes")->check(CLI::PositiveNumber)->capture_default_str();
  cmd->add_option("--dim", o.knobs.dim, "Input dimension")->check(CLI::PositiveNumber)->capture_default_str();
  cmd->add_option("--rot-deg", o.knobs.rot_deg, "Target rotation in degrees, [0, 180)")
      ->check(CLI::Validator(
          [](std::string& v) {
            const double deg = std::stod(v);
            return deg >= 0.0 && deg < 180.0 ? std::string() : "must lie in [0, 180), got " + v;
          },
          "[0, 180)"))
      ->capture_default_str();
  cmd->add_option("--mean-shift", o.knobs.mean_shift, "Norm of the per-class target mean offset")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  cmd->add_option("--scale", o.knobs.scale, "Target covariance scale")->check(CLI::PositiveNumber)->capture_default_str();
  cmd->add_option("--n-src", o.knobs.n_src, "Source training samples per class")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  cmd->add_option("--n-tgt", o.knobs.n_tgt, "Target training samples per class")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  cmd->add_option("--n-test", o.knobs.n_test, "Test samples per class and domain")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  cmd->add_option("--seed", o.knobs.seed, "Random seed")->capture_default_str();
  cmd->add_option("--out", o.out, "Output CSV path")->required();
}

RunRecord run_gen(const GenOptions& o) {
  const sohot::DomainData data = sohot::generate(sohot::make_shift_spec(o.knobs));
  sohot::save_features(data, fs::path(o.out));
  const auto rows = data.source_train.size() + data.source_test.size() + data.target_train.size() +
                    data.target_test.size();
  std::cout << "wrote " << rows << " rows to " << o.out << "\n";

  RunRecord rec;
  rec.manifest_path = fs::path(o.out + ".manifest.json");
  const auto& k = o.knobs;
  rec.config = {{"classes", k.classes}, {"dim", k.dim},     {"rot_deg", k.rot_deg}, {"mean_shift", k.mean_shift},
                {"scale", k.scale},     {"n_src", k.n_src}, {"n_tgt", k.n_tgt},     {"n_test", k.n_test},
                {"seed", k.seed}};
  rec.artifacts = {{"features", o.out}};
  return rec;
}

// ---- train ------------------------------------------------------------------

struct TrainOptions {
  std::string features;
  std::string out = "run";
  int order = 2;
  bool weighted = false;
  double sigma1 = 1e-8;
  double sigma2 = 1e-5;
  double alpha1 = 1e-2;
  double alpha2 = 1e-2;
  bool dual = false;
  double beta_prime = 1e-3;
  std::string stat_scope = "minibatch";
  std::string route = "kernelized";
  int epochs = 60;
  double lr = 0.05;
  double momentum = 0.9;
  int batch_size = 30;
  std::uint64_t seed = 0;
  bool baseline = false;
  int hidden = 32;
  int feat_dim = 16;
  double lambda = 1e-4;
  double lambda_star = 1e-4;
  double tau = 0.0;
  int eval_every = 1;
  bool freeze_first_layer = false;
};

void add_train(CLI::App& app, TrainOptions& o) {
  auto* cmd = app.add_subcommand("train", "Train the two-stream model on a feature CSV");
  cmd->add_option("--features", o.features, "Feature CSV (domain,split,label,f0,...)")->required();
  cmd->add_option("--out", o.out, "Output directory for checkpoint, metrics and manifest")->capture_default_str();
  cmd->add_option("--order", o.order, "Highest statistic order r (>= 2)")->check(CLI::Range(2, 16))->capture_default_str();
  cmd->add_flag("--weighted", o.weighted, "Learn per-class, per-order alignment weights");
  cmd->add_option("--sigma1", o.sigma1, "Scatter alignment strength")->check(CLI::NonNegativeNumber)->capture_default_str();
  cmd->add_option("--sigma2", o.sigma2, "Mean alignment strength")->check(CLI::NonNegativeNumber)->capture_default_str();
  cmd->add_option("--alpha1", o.alpha1, "Scatter weight regularizer")->check(CLI::NonNegativeNumber)->capture_default_str();
  cmd->add_option("--alpha2", o.alpha2, "Mean weight regularizer")->check(CLI::NonNegativeNumber)->capture_default_str();
  cmd->add_flag("--dual-classifier", o.dual, "Separate source and target classifiers coupled by beta'");
  cmd->add_option("--beta-prime", o.beta_prime, "Classifier coupling strength")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  cmd->add_option("--stat-scope", o.stat_scope, "Class statistics per minibatch or over the full split")
      ->check(CLI::IsMember({"minibatch", "fullclass"}))
      ->capture_default_str();
  cmd->add_option("--route", o.route, "Scatter distance evaluation")
      ->check(CLI::IsMember({"kernelized", "explicit"}))
      ->capture_default_str();
  cmd->add_option("--epochs", o.epochs, "Training epochs")->check(CLI::NonNegativeNumber)->capture_default_str();
  cmd->add_option("--lr", o.lr, "Learning rate")->check(CLI::NonNegativeNumber)->capture_default_str();
  cmd->add_option("--momentum", o.momentum, "SGD momentum in [0, 1)")
      ->check(CLI::Range(0.0, 0.999999))
      ->capture_default_str();
  cmd->add_option("--batch-size", o.batch_size, "Source samples per step")->check(CLI::PositiveNumber)->capture_default_str();
  cmd->add_option("--seed", o.seed, "Seed for initialization and shuffling")->capture_default_str();
  cmd->add_flag("--baseline", o.baseline, "Pooled source+target softmax only (S+T)");
  cmd->add_option("--hidden", o.hidden, "Hidden units per stream")->check(CLI::PositiveNumber)->capture_default_str();
  cmd->add_option("--feat-dim", o.feat_dim, "Feature dimension d")->check(CLI::PositiveNumber)->capture_default_str();
  cmd->add_option("--lambda", o.lambda, "L2 strength on W")->check(CLI::NonNegativeNumber)->capture_default_str();
  cmd->add_option("--lambda-star", o.lambda_star, "L2 strength on W* (dual mode)")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  cmd->add_option("--tau", o.tau, "Squared feature-norm cap; 0 selects 16 * feat-dim")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  cmd->add_option("--eval-every", o.eval_every, "Log every k epochs")->check(CLI::PositiveNumber)->capture_default_str();
  cmd->add_flag("--freeze-first-layer", o.freeze_first_layer, "Keep the first stream layer at its initial value");
}

/// Name of the trained configuration in the So/To/Fo notation.
std::string configuration_name(const TrainOptions& o) {
  if (o.baseline) return "S+T";
  static const char* names[] = {"So", "So+To", "So+To+Fo"};
  std::string name = o.order <= 4 ? names[o.order - 2] : "orders 2.." + std::to_string(o.order);
  if (o.weighted) name += "+ζ";
  return name;
}

json train_config_json(const TrainOptions& o, double tau) {
  return {{"features", o.features},
          {"configuration", configuration_name(o)},
          {"order", o.order},
          {"weighted", o.weighted},
          {"sigma1", o.sigma1},
          {"sigma2", o.sigma2},
          {"alpha1", o.alpha1},
          {"alpha2", o.alpha2},
          {"dual_classifier", o.dual},
          {"beta_prime", o.beta_prime},
          {"stat_scope", o.stat_scope},
          {"route", o.route},
          {"epochs", o.epochs},
          {"lr", o.lr},
          {"momentum", o.momentum},
          {"batch_size", o.batch_size},
          {"seed", o.seed},
          {"baseline", o.baseline},
          {"hidden", o.hidden},
          {"feat_dim", o.feat_dim},
          {"lambda", o.lambda},
          {"lambda_star", o.lambda_star},
          {"tau", tau},
          {"eval_every", o.eval_every},
          {"freeze_first_layer", o.freeze_first_layer}};
}

RunRecord run_train(const TrainOptions& o) {
  if (o.baseline && o.dual) throw sohot::ArgumentError("--baseline uses one shared classifier; drop --dual-classifier");
  const sohot::DomainData data = sohot::load_features(fs::path(o.features));
  if (data.source_train.size() == 0 || data.target_train.size() == 0) {
    throw sohot::EmptyDatasetError("training needs source and target training rows");
  }

  sohot::ModelShape shape{data.dim(), o.hidden, o.feat_dim, data.num_classes()};
  sohot::TwoStreamModel model = sohot::TwoStreamModel::init(shape, o.seed, o.dual);
  model.lambda = o.lambda;
  model.lambda_star = o.lambda_star;
  model.beta_prime = o.beta_prime;
  if (o.tau > 0.0) model.tau = o.tau;

  sohot::TrainConfig cfg;
  cfg.epochs = o.epochs;
  cfg.batch_size = o.batch_size;
  cfg.learning_rate = o.lr;
  cfg.momentum = o.momentum;
  cfg.seed = o.seed;
  cfg.stat_scope = o.stat_scope == "fullclass" ? sohot::StatScope::FullClass : sohot::StatScope::MiniBatch;
  cfg.route = o.route == "explicit" ? sohot::DistanceRoute::Explicit : sohot::DistanceRoute::Kernelized;
  cfg.eval_every = o.eval_every;
  cfg.pooled_baseline = o.baseline;
  cfg.freeze_first_layer = o.freeze_first_layer;
  cfg.align = sohot::AlignmentConfig::make(shape.num_classes, o.order, o.weighted);
  cfg.align.sigma1 = o.sigma1;
  cfg.align.sigma2 = o.sigma2;
  cfg.align.alpha1 = o.alpha1;
  cfg.align.alpha2 = o.alpha2;

  const sohot::LabeledSet* eval_set = data.target_test.size() > 0 ? &data.target_test : nullptr;
  const sohot::TrainResult result = sohot::train(model, data.source_train, data.target_train, cfg, eval_set);
  const double accuracy = eval_set != nullptr ? sohot::evaluate(result.model, *eval_set)
                                              : sohot::evaluate(result.model, data.target_train);

  RunRecord rec;
  rec.config = train_config_json(o, model.tau);
  const fs::path dir(o.out);
  fs::create_directories(dir);
  sohot::save_checkpoint({result.model, result.align, rec.config}, dir / "checkpoint.json");
  write_text(dir / "metrics.csv", sohot::metrics_csv(result.log));
  rec.manifest_path = dir / "manifest.json";
  rec.artifacts = {{"checkpoint", (dir / "checkpoint.json").string()}, {"metrics", (dir / "metrics.csv").string()}};

  std::cout << "configuration: " << configuration_name(o) << "\n";
  std::cout << "final target accuracy: " << sohot::format_double(accuracy) << "\n";
  return rec;
}

// ---- eval -------------------------------------------------------------------

struct EvalOptions {
  std::string checkpoint;
  std::string features;
  std::string split = "test";
};

void add_eval(CLI::App& app, EvalOptions& o) {
  auto* cmd = app.add_subcommand("eval", "Score a checkpoint on target data through the target stream");
  cmd->add_option("--checkpoint", o.checkpoint, "checkpoint.json written by train")->required();
  cmd->add_option("--features", o.features, "Feature CSV")->required();
  cmd->add_option("--split", o.split, "Target split to score")
      ->check(CLI::IsMember({"train", "test"}))
      ->capture_default_str();
}

RunRecord run_eval(const EvalOptions& o) {
  const sohot::Checkpoint ck = sohot::load_checkpoint(fs::path(o.checkpoint));
  const sohot::DomainData data = sohot::load_features(fs::path(o.features));
  const sohot::LabeledSet& set = o.split == "train" ? data.target_train : data.target_test;
  if (set.size() == 0) throw sohot::EmptyDatasetError("no target " + o.split + " rows in " + o.features);
  if (set.dim() != ck.model.shape.input_dim) throw sohot::ShapeError("feature dimension does not match the checkpoint");
  for (int y : set.labels) {
    if (y >= ck.model.shape.num_classes) throw sohot::ArgumentError("label outside the checkpoint's class range");
  }
  std::cout << "target " << o.split << " accuracy: " << sohot::format_double(sohot::evaluate(ck.model, set)) << "\n";
  return {};
}

// ---- gradcheck --------------------------------------------------------------

struct GradcheckOptions {
  sohot::GradCheckOptions check;
  double tol = 1e-5;
};

void add_gradcheck(CLI::App& app, GradcheckOptions& o) {
  auto* cmd = app.add_subcommand("gradcheck", "Finite-difference check of every analytic gradient block");
  cmd->add_option("--seed", o.check.seed, "Seed for the random instances")->capture_default_str();
  cmd->add_option("--orders", o.check.orders, "Orders for the kernelized gradient")
      ->delimiter(',')
      ->check(CLI::Range(2, 8))
      ->capture_default_str();
  cmd->add_option("--instances", o.check.instances, "Random instances per block")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_option("--tol", o.tol, "Maximum relative error")->check(CLI::NonNegativeNumber)->capture_default_str();
}

RunRecord run_gradcheck(const GradcheckOptions& o) {
  const auto rows = sohot::run_gradcheck(o.check);
  bool ok = true;
  std::cout << "block,instances,max_rel_err,status\n";
  for (const auto& row : rows) {
    const bool pass = row.max_rel_err <= o.tol;
    ok = ok && pass;
    std::cout << row.block << ',' << row.instances << ',' << sohot::format_double(row.max_rel_err) << ','
              << (pass ? "ok" : "FAIL") << '\n';
  }
  std::cerr << (ok ? "all gradient blocks within " : "gradient check failed at tolerance ")
            << sohot::format_double(o.tol) << "\n";
  RunRecord rec;
  rec.exit_code = ok ? kOk : kCheckFailed;
  return rec;
}

// ---- equiv ------------------------------------------------------------------

struct EquivCliOptions {
  sohot::EquivOptions equiv;
};

void add_equiv(CLI::App& app, EquivCliOptions& o) {
  auto* cmd = app.add_subcommand("equiv", "Kernelized vs explicit tensor distance on random instances");
  cmd->add_option("--dims", o.equiv.dims, "Feature dimensions to draw from")
      ->delimiter(',')
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_option("--orders", o.equiv.orders, "Orders to draw from")
      ->delimiter(',')
      ->check(CLI::Range(1, 16))
      ->capture_default_str();
  cmd->add_option("--trials", o.equiv.trials, "Random instances")->capture_default_str();
  cmd->add_option("--seed", o.equiv.seed, "Seed")->capture_default_str();
  cmd->add_option("--min-samples", o.equiv.min_samples, "Smallest N, N*")->capture_default_str();
  cmd->add_option("--max-samples", o.equiv.max_samples, "Largest N, N*")->capture_default_str();
}

RunRecord run_equiv(const EquivCliOptions& o) {
  constexpr double kTolerance = 1e-9;
  const sohot::EquivReport report = sohot::run_equivalence(o.equiv);
  const bool ok = report.max_rel_dev <= kTolerance;
  std::cout << "trials,max_rel_dev,tolerance,status\n"
            << report.trials << ',' << sohot::format_double(report.max_rel_dev) << ','
            << sohot::format_double(kTolerance) << ',' << (ok ? "ok" : "FAIL") << '\n';
  RunRecord rec;
  rec.exit_code = ok ? kOk : kCheckFailed;
  return rec;
}

// ---- bench ------------------------------------------------------------------

struct BenchCliOptions {
  sohot::BenchOptions bench;
  std::string out;
};

void add_bench(CLI::App& app, BenchCliOptions& o) {
  auto* cmd = app.add_subcommand("bench", "Time explicit and kernelized distances against the cost model");
  cmd->add_option("--dims", o.bench.dims, "Feature dimensions")
      ->delimiter(',')
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_option("--orders", o.bench.orders, "Orders")->delimiter(',')->check(CLI::Range(1, 16))->capture_default_str();
  cmd->add_option("--n-src", o.bench.n_source, "Source samples N")->check(CLI::PositiveNumber)->capture_default_str();
  cmd->add_option("--n-tgt", o.bench.n_target, "Target samples N*")->check(CLI::PositiveNumber)->capture_default_str();
  cmd->add_option("--reps", o.bench.repetitions, "Timed repetitions after one warm-up")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_option("--seed", o.bench.seed, "Seed")->capture_default_str();
  cmd->add_option("--out", o.out, "Write the CSV here instead of stdout");
}

RunRecord run_bench(const BenchCliOptions& o) {
  const auto rows = sohot::run_bench(o.bench);
  const std::string csv = sohot::bench_csv(rows);
  RunRecord rec;
  if (o.out.empty()) {
    std::cout << csv;
  } else {
    write_text(o.out, csv);
    rec.manifest_path = fs::path(o.out + ".manifest.json");
    rec.artifacts = {{"bench", o.out}};
  }
  for (std::size_t i = 0; i + 1 < rows.size(); i += 2) {
    const auto& ex = rows[i];
    const auto& kz = rows[i + 1];
    std::cerr << "d=" << ex.dim << " r=" << ex.order << ": predicted ratio "
              << sohot::format_double(static_cast<double>(ex.predicted_ops) / static_cast<double>(kz.predicted_ops));
    if (ex.wall_ns && kz.wall_ns) {
      std::cerr << ", measured ratio "
                << sohot::format_double(static_cast<double>(*ex.wall_ns) / static_cast<double>(std::max<std::int64_t>(
                                                                               *kz.wall_ns, 1)));
    } else {
      std::cerr << ", explicit infeasible";
    }
    std::cerr << "\n";
  }
  rec.config = {{"dims", o.bench.dims},         {"orders", o.bench.orders}, {"n_src", o.bench.n_source},
                {"n_tgt", o.bench.n_target},    {"reps", o.bench.repetitions}, {"seed", o.bench.seed},
                {"coeff_cap", o.bench.coeff_cap}};
  return rec;
}

// ---- dispatch ---------------------------------------------------------------

int run_args(const std::vector<std::string>& args);

void write_manifest(const RunRecord& rec, const std::string& command, const std::vector<std::string>& args,
                    double seconds) {
  json manifest;
  manifest["tool"] = "sohot";
  manifest["version"] = kVersion;
  manifest["command"] = command;
  manifest["argv"] = args;
  manifest["config"] = rec.config;
  manifest["seed"] = rec.config.contains("seed") ? rec.config["seed"] : json(nullptr);
  manifest["artifacts"] = rec.artifacts;
  manifest["timings"] = {{"wall_seconds", seconds}};
  write_text(*rec.manifest_path, manifest.dump(2) + "\n");
}

/// Replays the argument vector recorded in a manifest, optionally redirecting
/// its --out to a new location.
int run_rerun(const std::string& manifest_path, const std::string& out_override) {
  std::ifstream in(manifest_path);
  if (!in) throw sohot::ArgumentError("cannot open manifest " + manifest_path);
  json manifest;
  try {
    in >> manifest;
  } catch (const json::exception& e) {
    throw sohot::ParseError(0, std::string("malformed manifest: ") + e.what());
  }
  if (!manifest.contains("argv") || !manifest["argv"].is_array()) {
    throw sohot::ParseError(0, "manifest has no argv array");
  }
  auto args = manifest["argv"].get<std::vector<std::string>>();
  if (!out_override.empty()) {
    bool replaced = false;
    for (std::size_t i = 0; i + 1 < args.size(); ++i) {
      if (args[i] == "--out") {
        args[i + 1] = out_override;
        replaced = true;
      }
    }
    if (!replaced) args.insert(args.end(), {"--out", out_override});
  }
  return run_args(args);
}

int run_args(const std::vector<std::string>& args) {
  CLI::App app{"Higher-order scatter alignment toolkit"};
  app.name("sohot");
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  GenOptions gen;
  TrainOptions train;
  EvalOptions eval;
  GradcheckOptions gradcheck;
  EquivCliOptions equiv;
  BenchCliOptions bench;
  add_gen(app, gen);
  add_train(app, train);
  add_eval(app, eval);
  add_gradcheck(app, gradcheck);
  add_equiv(app, equiv);
  add_bench(app, bench);
  std::string manifest_path;
  std::string rerun_out;
  auto* rerun = app.add_subcommand("rerun", "Repeat the run recorded in a manifest");
  rerun->add_option("manifest", manifest_path, "manifest.json of an earlier run")->required();
  rerun->add_option("--out", rerun_out, "Redirect the run's --out");

  std::vector<const char*> argv{"sohot"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  CLI::App* cmd = app.get_subcommands().front();
  const std::string name = cmd->get_name();
  if (name == "rerun") return run_rerun(manifest_path, rerun_out);

  const auto start = std::chrono::steady_clock::now();
  RunRecord rec;
  if (name == "gen") rec = run_gen(gen);
  if (name == "train") rec = run_train(train);
  if (name == "eval") rec = run_eval(eval);
  if (name == "gradcheck") rec = run_gradcheck(gradcheck);
  if (name == "equiv") rec = run_equiv(equiv);
  if (name == "bench") rec = run_bench(bench);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (rec.manifest_path) write_manifest(rec, name, args, seconds);
  return rec.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  try {
    return run_args(args);
  } catch (const sohot::DivergenceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kDiverged;
  } catch (const sohot::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kCheckFailed;
  }
}
