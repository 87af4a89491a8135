// uap: train desk-scale classifiers, generate targeted / random universal
// perturbations, evaluate them and sweep the perturbation rate.
//
// Exit codes: 0 success, 1 runtime or data error, 2 usage error.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "tuap/attack.hpp"
#include "tuap/data.hpp"
#include "tuap/eval.hpp"
#include "tuap/nn.hpp"
#include "tuap/perturbation_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kToolVersion = "0.1.0";

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---- dataset selection -------------------------------------------------------

struct DataOptions {
  std::string source = "synth";  // synth | cifar10 | path to a .uapd file
  std::string data_dir;
  std::size_t cifar_batches = 5;
  std::size_t synth_classes = 10;
  std::size_t synth_per_class = 100;
  std::string synth_shape = "32x32x1";
  double sigma = 0.05;
  std::uint64_t data_seed = 0;
  std::optional<std::size_t> per_class_input;
  std::uint64_t split_seed = 0;

  void add_to(CLI::App& cmd) {
    cmd.add_option("--data", source, "synth, cifar10, or a .uapd dataset file")->capture_default_str();
    cmd.add_option("--data-dir", data_dir, "directory holding the CIFAR-10 binary batches")->envname("UAP_DATA_DIR");
    cmd.add_option("--cifar-batches", cifar_batches, "number of CIFAR-10 training batches to read (1-5)")
        ->check(CLI::Range(1, 5))
        ->capture_default_str();
    cmd.add_option("--synth-classes", synth_classes, "synthetic: number of classes")->capture_default_str();
    cmd.add_option("--synth-per-class", synth_per_class, "synthetic: images per class")->capture_default_str();
    cmd.add_option("--synth-shape", synth_shape, "synthetic: image shape HxWxC")->capture_default_str();
    cmd.add_option("--sigma", sigma, "synthetic: noise standard deviation")->capture_default_str();
    cmd.add_option("--data-seed", data_seed, "synthetic: generator seed")->capture_default_str();
    cmd.add_option("--per-class-input", per_class_input,
                   "input-set images per class (default: 70% of the smallest class; 1000 for CIFAR-10)");
    cmd.add_option("--split-seed", split_seed, "seed of the balanced input/test split")->capture_default_str();
  }
};

tuap::Shape parse_shape(const std::string& s) {
  tuap::Shape shape;
  std::stringstream ss(s);
  std::string part;
  while (std::getline(ss, part, 'x')) {
    try {
      shape.push_back(std::stoul(part));
    } catch (const std::exception&) {
      throw UsageError("bad shape '" + s + "' (expected HxWxC)");
    }
  }
  if (shape.size() != 3) throw UsageError("bad shape '" + s + "' (expected HxWxC)");
  return shape;
}

struct DataBundle {
  tuap::data::LabeledDataset input;
  tuap::data::LabeledDataset test;
  json provenance;
};

DataBundle load_data(const DataOptions& o) {
  using namespace tuap::data;
  DataBundle b;
  json prov{{"source", o.source}, {"split_seed", o.split_seed}};

  auto split_pool = [&](const LabeledDataset& pool, std::size_t default_n) {
    std::size_t n = default_n;
    if (o.per_class_input) n = *o.per_class_input;
    prov["per_class_input"] = n;
    auto s = split_balanced(pool, {n, o.split_seed});
    b.input = std::move(s.input);
    b.test = std::move(s.test);
  };
  auto seventy_percent = [](const LabeledDataset& pool) {
    auto counts = pool.class_counts();
    auto smallest = *std::min_element(counts.begin(), counts.end());
    return std::max<std::size_t>(1, smallest * 7 / 10);
  };

  if (o.source == "synth") {
    auto pool = synth_dataset(o.synth_classes, o.synth_per_class, parse_shape(o.synth_shape), o.sigma, o.data_seed);
    prov.update({{"classes", o.synth_classes},
                 {"per_class", o.synth_per_class},
                 {"shape", o.synth_shape},
                 {"sigma", o.sigma},
                 {"data_seed", o.data_seed},
                 {"clipped_pixels", pool.clipped_pixels}});
    split_pool(pool, seventy_percent(pool));
  } else if (o.source == "cifar10") {
    if (o.data_dir.empty()) throw UsageError("--data cifar10 needs --data-dir or UAP_DATA_DIR");
    std::vector<fs::path> train_files;
    for (std::size_t i = 1; i <= o.cifar_batches; ++i)
      train_files.push_back(fs::path(o.data_dir) / ("data_batch_" + std::to_string(i) + ".bin"));
    auto pool = load_cifar10(train_files);
    prov.update({{"data_dir", o.data_dir}, {"cifar_batches", o.cifar_batches}});
    split_pool(pool, std::min<std::size_t>(1000, seventy_percent(pool)));
    // The designated CIFAR-10 test batch replaces the remainder as the held-out set.
    b.test = load_cifar10({fs::path(o.data_dir) / "test_batch.bin"});
  } else {
    auto pool = load_dataset(o.source);
    prov.update({{"file", o.source}, {"sigma", pool.sigma}, {"data_seed", pool.seed}});
    split_pool(pool, seventy_percent(pool));
  }
  prov["input_images"] = b.input.size();
  prov["test_images"] = b.test.size();
  b.provenance = std::move(prov);
  return b;
}

// ---- outputs -----------------------------------------------------------------

struct RunContext {
  std::string command;
  std::vector<std::string> argv;
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  std::vector<std::string> outputs;
  json config = json::object();

  void write(const fs::path& path, std::span<const std::uint8_t> bytes) {
    tuap::io::write_file_atomic(path, bytes);
    outputs.push_back(path.string());
  }
  void write(const fs::path& path, const std::string& text) {
    tuap::io::write_file_atomic(path, text);
    outputs.push_back(path.string());
  }
  void finish(const fs::path& manifest_path) {
    outputs.push_back(manifest_path.string());
    json m{{"command", command},
           {"argv", argv},
           {"tool_version", kToolVersion},
           {"config", config},
           {"outputs", outputs},
           {"duration_seconds",
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count()}};
    tuap::io::write_file_atomic(manifest_path, m.dump(2) + "\n");
  }
};

std::string default_manifest(const std::string& out, const std::string& given) {
  return given.empty() ? out + ".manifest.json" : given;
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// ---- attack options shared by gen-uap and sweep --------------------------------

struct AttackOptions {
  std::optional<double> eps;
  std::string p = "2";
  std::size_t imax = 10;
  std::uint64_t seed = 0;

  void add_to(CLI::App& cmd) {
    cmd.add_option("--eps", eps, "tFGSM step length in [0,1]-pixel units (default 1.0 for --p 2)");
    cmd.add_option("--p", p, "norm type")->check(CLI::IsMember({"1", "2", "inf"}))->capture_default_str();
    cmd.add_option("--imax", imax, "maximum number of passes over the input set")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    cmd.add_option("--seed", seed, "seed for the visiting order and random UAPs")->capture_default_str();
  }

  tuap::AttackConfig base() const {
    tuap::AttackConfig cfg;
    cfg.p = tuap::parse_norm_type(p);
    if (eps) {
      cfg.epsilon = *eps;
    } else if (cfg.p == tuap::NormType::l2) {
      cfg.epsilon = 1.0;
    } else {
      throw UsageError("--eps is required for --p " + p);
    }
    if (!(cfg.epsilon > 0)) throw UsageError("--eps must be positive");
    cfg.i_max = imax;
    cfg.seed = seed;
    return cfg;
  }

  static json describe(const tuap::AttackConfig& cfg) {
    return {{"target_class", cfg.target_class}, {"epsilon", cfg.epsilon},
            {"xi", cfg.xi},                     {"p", std::string(tuap::to_string(cfg.p))},
            {"i_max", cfg.i_max},               {"seed", cfg.seed}};
  }
};

tuap::nn::Classifier load_model_for(const std::string& path, const DataBundle& data) {
  auto model = tuap::nn::load_model(path);
  if (model.input_shape() != data.input.image_shape())
    throw tuap::shape_error("model input " + tuap::shape_string(model.input_shape()) + " does not match images " +
                            tuap::shape_string(data.input.image_shape()));
  return model;
}

void require_target(std::size_t target, const tuap::nn::Classifier& model) {
  if (target >= model.num_classes())
    throw tuap::domain_error("target class " + std::to_string(target) + " out of range for " +
                             std::to_string(model.num_classes()) + " classes");
}

// ---- commands ------------------------------------------------------------------

struct TrainCmd {
  DataOptions data;
  std::string preset = "mlp";
  std::size_t epochs = 1;  // longer training makes the MLP robust to small-budget UAPs
  double lr = 0.01;
  std::size_t batch = 32;
  std::uint64_t seed = 0;
  std::string out, manifest;

  void add_to(CLI::App& app) {
    auto* cmd = app.add_subcommand("train", "train a preset classifier and write a UAPM model file");
    data.add_to(*cmd);
    cmd->add_option("--preset", preset, "architecture preset")->check(CLI::IsMember({"mlp", "cnn"}))->capture_default_str();
    cmd->add_option("--epochs", epochs, "training epochs")->capture_default_str();
    cmd->add_option("--lr", lr, "SGD learning rate")->check(CLI::PositiveNumber)->capture_default_str();
    cmd->add_option("--batch", batch, "mini-batch size")->check(CLI::PositiveNumber)->capture_default_str();
    cmd->add_option("--seed", seed, "weight-init and batch-order seed")->capture_default_str();
    cmd->add_option("--out", out, "model file to write")->required();
    cmd->add_option("--manifest", manifest, "manifest path (default: <out>.manifest.json)");
  }

  void run(RunContext& ctx) {
    auto d = load_data(data);
    auto model = tuap::nn::make_preset(preset, d.input.image_shape(), d.input.class_count, seed);
    model = tuap::nn::train(model, d.input.images, d.input.labels, {epochs, lr, batch, seed},
                            [&](const tuap::nn::EpochStats& s) {
                              std::cerr << "epoch " << s.epoch + 1 << "/" << epochs << "  loss "
                                        << fmt("%.4f", s.mean_loss) << "  acc " << fmt("%.4f", s.accuracy) << "\n";
                            });
    const double train_acc = tuap::nn::accuracy(model, d.input.images, d.input.labels);
    const double test_acc = d.test.empty() ? 0.0 : tuap::nn::accuracy(model, d.test.images, d.test.labels);
    ctx.write(out, tuap::nn::serialize_model(model));
    std::cout << "train_accuracy " << fmt("%.4f", train_acc) << "\n"
              << "heldout_accuracy " << (d.test.empty() ? std::string("n/a") : fmt("%.4f", test_acc)) << "\n";
    ctx.config = {{"data", d.provenance}, {"preset", preset},          {"epochs", epochs},
                  {"lr", lr},             {"batch", batch},            {"seed", seed},
                  {"model", out},         {"train_accuracy", train_acc}, {"heldout_accuracy", test_acc}};
    ctx.finish(default_manifest(out, manifest));
  }
};

struct GenUapCmd {
  DataOptions data;
  AttackOptions attack;
  std::string model_path, out, csv, manifest;
  std::size_t target = 0;
  std::optional<double> xi, zeta;

  void add_to(CLI::App& app) {
    auto* cmd = app.add_subcommand("gen-uap", "generate a targeted UAP and write a UAPP file");
    data.add_to(*cmd);
    attack.add_to(*cmd);
    cmd->add_option("--model", model_path, "UAPM model file")->required();
    cmd->add_option("--target", target, "target class")->required();
    auto* xi_opt = cmd->add_option("--xi", xi, "perturbation budget in [0,1]-pixel units");
    auto* zeta_opt = cmd->add_option("--zeta", zeta, "perturbation rate in percent (resolved to xi on the input set)");
    xi_opt->excludes(zeta_opt);
    cmd->add_option("--out", out, "perturbation file to write")->required();
    cmd->add_option("--csv", csv, "per-epoch CSV (default: <out>.epochs.csv)");
    cmd->add_option("--manifest", manifest, "manifest path (default: <out>.manifest.json)");
  }

  void run(RunContext& ctx) {
    if (!xi && !zeta) throw UsageError("one of --xi or --zeta is required");
    auto cfg = attack.base();
    auto d = load_data(data);
    auto model = load_model_for(model_path, d);
    require_target(target, model);
    cfg.target_class = target;
    if (zeta) {
      if (!(*zeta > 0)) throw UsageError("--zeta must be positive");
      cfg.xi = tuap::xi_for_zeta(*zeta, d.input.images);
    } else {
      if (!(*xi > 0)) throw UsageError("--xi must be positive");
      cfg.xi = *xi;
    }
    const double ref = tuap::mean_l2_norm(d.input.images);

    std::string rows = "epoch,r_ts_input,r_ts_test,zeta_pct,updates,degenerate_skips\n";
    tuap::UapObserver obs;
    obs.on_epoch_end = [&](const tuap::EpochRecord& rec, const tuap::Tensor& rho) {
      const double test_rate = d.test.empty() ? 0.0 : tuap::success_rate(model, d.test.images, rho, target);
      char buf[160];
      std::snprintf(buf, sizeof buf, "%zu,%.6f,%.6f,%.2f,%zu,%zu\n", rec.epoch + 1, rec.r_ts, test_rate,
                    100.0 * tuap::lp_norm(rho, tuap::NormType::l2) / ref, rec.updates, rec.degenerate_skips);
      rows += buf;
      std::cerr << "epoch " << rec.epoch + 1 << "  r_ts(input) " << fmt("%.4f", rec.r_ts) << "  updates "
                << rec.updates << "\n";
    };
    auto result = tuap::generate_targeted_uap(model, d.input.images, cfg, obs);

    const std::string csv_path = csv.empty() ? out + ".epochs.csv" : csv;
    ctx.write(out, tuap::serialize_perturbation(result.perturbation));
    ctx.write(csv_path, rows);
    const auto& rep = result.report;
    std::cout << "r_ts_input " << fmt("%.6f", rep.epochs.back().r_ts) << "\n"
              << "zeta_pct " << fmt("%.2f", tuap::zeta(result.perturbation.rho, d.input.images)) << "\n"
              << "termination " << tuap::to_string(rep.termination) << "\n";
    ctx.config = {{"data", d.provenance},
                  {"model", model_path},
                  {"attack", AttackOptions::describe(cfg)},
                  {"requested_zeta", zeta ? json(*zeta) : json(nullptr)},
                  {"mean_image_l2", ref},
                  {"epochs_run", rep.epochs.size()},
                  {"termination", std::string(tuap::to_string(rep.termination))},
                  {"images_visited", rep.images_visited},
                  {"updates", rep.updates},
                  {"degenerate_skips", rep.degenerate_skips}};
    ctx.finish(default_manifest(out, manifest));
  }
};

struct EvalCmd {
  DataOptions data;
  std::string model_path, uap_path, set = "test", out, confusion, manifest;
  std::size_t target = 0;

  void add_to(CLI::App& app) {
    auto* cmd = app.add_subcommand("eval", "evaluate a UAPP perturbation on the input or test set");
    data.add_to(*cmd);
    cmd->add_option("--model", model_path, "UAPM model file")->required();
    cmd->add_option("--uap", uap_path, "UAPP perturbation file")->required();
    cmd->add_option("--target", target, "target class")->required();
    cmd->add_option("--set", set, "image set to evaluate on")->check(CLI::IsMember({"input", "test"}))->capture_default_str();
    cmd->add_option("--out", out, "report CSV to write")->required();
    cmd->add_option("--confusion", confusion, "confusion CSV (default: <out>.confusion.csv)");
    cmd->add_option("--manifest", manifest, "manifest path (default: <out>.manifest.json)");
  }

  void run(RunContext& ctx) {
    auto d = load_data(data);
    auto model = load_model_for(model_path, d);
    require_target(target, model);
    auto pert = tuap::load_perturbation(uap_path);
    if (pert.rho.shape() != model.input_shape())
      throw tuap::shape_error("perturbation shape " + tuap::shape_string(pert.rho.shape()) +
                              " does not match model input " + tuap::shape_string(model.input_shape()));
    if (set == "test") tuap::data::require_disjoint(d.input, d.test);
    const auto& images = set == "input" ? d.input : d.test;
    const double ref = tuap::mean_l2_norm(d.input.images);
    auto rep = tuap::evaluate(model, images, set, pert, target, ref, model.num_classes());

    const std::string confusion_path = confusion.empty() ? out + ".confusion.csv" : confusion;
    ctx.write(out, tuap::to_csv(std::span<const tuap::EvalReport>(&rep, 1)));
    ctx.write(confusion_path, tuap::confusion_csv(rep));
    std::cout << "r_ts " << fmt("%.6f", rep.r_ts) << "\n"
              << "zeta_pct " << fmt("%.2f", rep.zeta) << "\n"
              << "out_of_range_pixels " << rep.out_of_range_pixels << "\n";
    ctx.config = {{"data", d.provenance}, {"model", model_path},   {"uap", uap_path},
                  {"target_class", target}, {"set", set},          {"mean_image_l2", ref},
                  {"r_ts", rep.r_ts},     {"hits", rep.hits},       {"out_of_range_pixels", rep.out_of_range_pixels}};
    ctx.finish(default_manifest(out, manifest));
  }
};

struct SweepCmd {
  DataOptions data;
  AttackOptions attack;
  std::string model_path, targets = "all", out, manifest;
  std::vector<double> zeta_grid;

  void add_to(CLI::App& app) {
    auto* cmd = app.add_subcommand("sweep", "success rate versus perturbation rate for targeted and random UAPs");
    data.add_to(*cmd);
    attack.add_to(*cmd);
    cmd->add_option("--model", model_path, "UAPM model file")->required();
    cmd->add_option("--targets", targets, "comma-separated target classes, or 'all'")->capture_default_str();
    cmd->add_option("--zeta-grid", zeta_grid, "ascending perturbation rates in percent, e.g. 2,5,10")
        ->delimiter(',')
        ->required();
    cmd->add_option("--out", out, "CSV to write")->required();
    cmd->add_option("--manifest", manifest, "manifest path (default: <out>.manifest.json)");
  }

  std::vector<std::size_t> resolve_targets(std::size_t k) const {
    std::vector<std::size_t> ts;
    if (targets == "all") {
      for (std::size_t y = 0; y < k; ++y) ts.push_back(y);
      return ts;
    }
    std::stringstream ss(targets);
    std::string part;
    while (std::getline(ss, part, ',')) {
      try {
        ts.push_back(std::stoul(part));
      } catch (const std::exception&) {
        throw UsageError("bad --targets entry '" + part + "'");
      }
    }
    if (ts.empty()) throw UsageError("--targets is empty");
    return ts;
  }

  void run(RunContext& ctx) {
    if (zeta_grid.empty()) throw UsageError("--zeta-grid is empty");
    for (std::size_t i = 1; i < zeta_grid.size(); ++i)
      if (!(zeta_grid[i] > zeta_grid[i - 1])) throw UsageError("--zeta-grid must be strictly ascending");
    auto base = attack.base();
    auto d = load_data(data);
    auto model = load_model_for(model_path, d);
    auto ts = resolve_targets(model.num_classes());
    for (auto t : ts) require_target(t, model);

    std::vector<tuap::EvalReport> rows;
    for (auto t : ts) {
      std::cerr << "target " << t << "\n";
      for (auto& r : tuap::sweep(model, model.num_classes(), d.input, d.test, t, zeta_grid, base))
        rows.push_back(std::move(r.report));
    }
    ctx.write(out, tuap::to_csv(std::span<const tuap::EvalReport>(rows)));
    std::cout << "rows " << rows.size() << "\n";
    ctx.config = {{"data", d.provenance},
                  {"model", model_path},
                  {"targets", ts},
                  {"zeta_grid", zeta_grid},
                  {"attack", AttackOptions::describe(base)},
                  {"mean_image_l2", tuap::mean_l2_norm(d.input.images)}};
    ctx.finish(default_manifest(out, manifest));
  }
};

struct MakeDataCmd {
  DataOptions data;
  std::string out, manifest;

  void add_to(CLI::App& app) {
    auto* cmd = app.add_subcommand("make-data", "write a synthetic dataset as a UAPD file");
    cmd->add_option("--synth-classes", data.synth_classes, "number of classes")->capture_default_str();
    cmd->add_option("--synth-per-class", data.synth_per_class, "images per class")->capture_default_str();
    cmd->add_option("--synth-shape", data.synth_shape, "image shape HxWxC")->capture_default_str();
    cmd->add_option("--sigma", data.sigma, "noise standard deviation")->capture_default_str();
    cmd->add_option("--data-seed", data.data_seed, "generator seed")->capture_default_str();
    cmd->add_option("--out", out, "dataset file to write")->required();
    cmd->add_option("--manifest", manifest, "manifest path (default: <out>.manifest.json)");
  }

  void run(RunContext& ctx) {
    auto d = tuap::data::synth_dataset(data.synth_classes, data.synth_per_class, parse_shape(data.synth_shape),
                                       data.sigma, data.data_seed);
    ctx.write(out, tuap::data::serialize_dataset(d));
    std::cout << "images " << d.size() << "\nclipped_pixels " << d.clipped_pixels << "\n";
    ctx.config = {{"classes", data.synth_classes}, {"per_class", data.synth_per_class}, {"shape", data.synth_shape},
                  {"sigma", data.sigma},           {"data_seed", data.data_seed},       {"clipped_pixels", d.clipped_pixels}};
    ctx.finish(default_manifest(out, manifest));
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Targeted universal adversarial perturbations: train, generate, evaluate, sweep"};
  app.set_version_flag("--version", kToolVersion);
  app.require_subcommand(1);

  TrainCmd train;
  GenUapCmd gen;
  EvalCmd eval;
  SweepCmd sweep;
  MakeDataCmd make_data;
  train.add_to(app);
  gen.add_to(app);
  eval.add_to(app);
  sweep.add_to(app);
  make_data.add_to(app);

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
    return 2;
  }

  RunContext ctx;
  ctx.argv.assign(argv, argv + argc);
  try {
    auto* sub = app.get_subcommands().front();
    ctx.command = sub->get_name();
    if (ctx.command == "train") train.run(ctx);
    else if (ctx.command == "gen-uap") gen.run(ctx);
    else if (ctx.command == "eval") eval.run(ctx);
    else if (ctx.command == "sweep") sweep.run(ctx);
    else if (ctx.command == "make-data") make_data.run(ctx);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
