#include "cli_commands.hpp"

#include "neat/config.hpp"
#include "neat/eval.hpp"
#include "neat/features.hpp"
#include "neat/model.hpp"
#include "neat/trainer.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <optional>
#include <ostream>

namespace neat::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Options {
  std::string config;
  std::string data;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::string checkpoint;
  std::string run_dir;
  std::optional<int> b;
};

RunConfig resolve_config(const Options& opt) {
  RunConfig config = opt.config.empty() ? config_from_json(json::object()) : load_config(opt.config);
  if (opt.seed) {
    config.seed = *opt.seed;
    config.noise_seed.reset();
    config.train_seed.reset();
    config.resolve_seeds();
  }
  return config;
}

void ensure_directory(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

fs::path sidecar_path(const fs::path& file) {
  fs::path p = file;
  p += ".json";
  return p;
}

json noise_json(const Dataset& data) {
  const NoiseReport report = noise_report(data);
  const Mask clean = data.true_clean();
  json doc;
  doc["flipped_per_category"] = report.flipped_per_category;
  doc["open_set_per_category"] = report.open_set_per_category;
  doc["total_noisy"] = report.total_noisy;
  doc["true_clean_count"] = std::count(clean.begin(), clean.end(), std::uint8_t{1});
  doc["instances"] = data.size();
  return doc;
}

Dataset build_dataset(const RunConfig& config) {
  return inject_noise(generate(config.gen), config.noise, config.gen);
}

void print_warnings(const std::vector<std::string>& warnings, std::ostream& err) {
  for (const auto& w : warnings) err << "warning: " << w << '\n';
}

void check_dims(const Dataset& data, const RunConfig& config) {
  if (data.num_categories != config.gen.num_categories || data.dim != config.gen.dim ||
      data.frames != config.gen.frames) {
    throw ConfigError("dataset dimensions (K=" + std::to_string(data.num_categories) +
                      ", T=" + std::to_string(data.frames) + ", d=" + std::to_string(data.dim) +
                      ") do not match the config");
  }
}

int cmd_gen(const Options& opt, std::ostream& out) {
  const RunConfig config = resolve_config(opt);
  if (opt.out.empty()) throw ConfigError("gen requires --out <file>");
  const fs::path path = opt.out;
  if (path.has_parent_path()) ensure_directory(path.parent_path());
  const Dataset data = build_dataset(config);
  save_dataset(data, path);
  json sidecar;
  sidecar["config"] = config_to_json(config);
  sidecar["noise"] = noise_json(data);
  write_json(sidecar, sidecar_path(path));
  out << "wrote " << path.string() << " (" << data.size() << " instances, " << noise_report(data).total_noisy
      << " noisy)\n";
  return kExitOk;
}

int cmd_train(const Options& opt, std::ostream& out, std::ostream& err) {
  const RunConfig config = resolve_config(opt);
  const Dataset data = opt.data.empty() ? build_dataset(config) : load_dataset(opt.data);
  check_dims(data, config);
  const Dataset test = generate(config.test_spec());

  const fs::path dir = opt.out.empty() ? fs::path(config.out_dir) / config.run_name : fs::path(opt.out);
  ensure_directory(dir);
  write_json(config_to_json(config), dir / "config.json");
  const fs::path metrics = dir / "metrics.csv";
  eval::write_metrics_header(metrics);

  train::RunHooks hooks;
  hooks.on_epoch = [&](const eval::EpochMetrics& m) {
    eval::append_metrics_row(metrics, m, config.record_wall_time);
    out << "epoch " << m.epoch << " ce=" << format_number(m.ce_loss) << " ncl=" << format_number(m.ncl_loss)
        << " f1=" << format_number(m.detection_f1) << " acc=" << format_number(m.test_accuracy) << '\n';
  };
  const train::RunResult result = train::run(data, &test, config.train, hooks);
  print_warnings(result.warnings, err);

  model::save_checkpoint(result.state, dir / "checkpoint.bin");
  json sidecar = config_to_json(config);
  sidecar["parameter_hash"] = result.state.params.hash();
  write_json(sidecar, dir / "checkpoint.bin.json");
  trunc::write_split_csv(dir / "split.csv", result.split, data.noisy_label, data.true_clean());
  return kExitOk;
}

int cmd_detect(const Options& opt, std::ostream& out, std::ostream& err) {
  RunConfig config = resolve_config(opt);
  if (opt.data.empty()) throw ConfigError("detect requires --data <file>");
  if (opt.checkpoint.empty()) throw ConfigError("detect requires --checkpoint <file>");
  const Dataset data = load_dataset(opt.data);
  if (opt.b) {
    if (*opt.b == config.train.embed_dim) {
      config.train.ct_mode = trunc::CtMode::ct_all;
    } else {
      config.train.b = *opt.b;
    }
  }
  const model::Architecture arch = config.train.architecture(data.dim, data.num_categories);
  const model::ModelState state = model::load_checkpoint(arch, opt.checkpoint);
  const model::Embedding embedding = model::embed(state, data);

  trunc::DetectionContext context;
  if (config.train.ct_mode == trunc::CtMode::ct_oracle) context.true_clean = data.true_clean();
  if (config.train.ct_mode == trunc::CtMode::ct_star) {
    context.omega = trunc::anchor_reference(data.noisy_label, data.true_clean(), data.num_categories,
                                            config.train.anchors_per_category);
  }
  const trunc::SplitEstimate split = train::detect(embedding.features, data, config.train, context);
  print_warnings(split.warnings, err);

  const fs::path path = opt.out.empty() ? fs::path("split.csv") : fs::path(opt.out);
  if (path.has_parent_path()) ensure_directory(path.parent_path());
  trunc::write_split_csv(path, split, data.noisy_label, data.true_clean());
  const eval::Detection det = eval::detection_metrics(split.clean_mask, data.true_clean());
  out << "estimated clean " << split.clean_count() << "/" << data.size() << ", f1=" << format_number(det.f1)
      << '\n';
  return kExitOk;
}

int cmd_eval(const Options& opt, std::ostream& out) {
  if (opt.run_dir.empty()) throw ConfigError("eval requires a run directory");
  const fs::path dir = opt.run_dir;
  const auto history = eval::read_metrics(dir / "metrics.csv");
  const eval::Summary s = eval::summarize(history);
  json doc;
  doc["epochs"] = s.epochs;
  doc["best_test_accuracy"] = s.best_test_accuracy;
  doc["best_test_epoch"] = s.best_test_epoch;
  doc["best_f1"] = s.best_f1;
  doc["best_f1_epoch"] = s.best_f1_epoch;
  doc["last5_test_accuracy"] = s.last5_test_accuracy;
  doc["last5_f1"] = s.last5_f1;
  const fs::path path = opt.out.empty() ? dir / "summary.json" : fs::path(opt.out);
  write_json(doc, path);
  out << doc.dump(2) << '\n';
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Noisy-label detection and training on synthetic video features"};
  app.require_subcommand(1);
  Options opt;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", opt.config, "Flat JSON run config")->check(CLI::ExistingFile);
    sub->add_option("--seed", opt.seed, "Master seed (overrides the config)");
  };

  CLI::App* gen = app.add_subcommand("gen", "Generate a synthetic dataset with injected label noise");
  add_common(gen);
  gen->add_option("--out", opt.out, "Dataset file to write")->required();

  CLI::App* trn = app.add_subcommand("train", "Run the detection / update training loop");
  add_common(trn);
  trn->add_option("--data", opt.data, "Training dataset (generated from the config if omitted)")
      ->check(CLI::ExistingFile);
  trn->add_option("--out", opt.out, "Run directory (default out_dir/run_name)");

  CLI::App* det = app.add_subcommand("detect", "One detection round on a checkpoint's frozen features");
  add_common(det);
  det->add_option("--data", opt.data, "Dataset file")->required()->check(CLI::ExistingFile);
  det->add_option("--checkpoint", opt.checkpoint, "Model checkpoint")->required()->check(CLI::ExistingFile);
  det->add_option("--out", opt.out, "Split CSV to write (default split.csv)");
  det->add_option("--b", opt.b, "Selected channels; b = embed_dim runs on all channels");

  CLI::App* evl = app.add_subcommand("eval", "Summarize a run directory's metrics.csv");
  evl->add_option("run_dir", opt.run_dir, "Run directory")->required();
  evl->add_option("--out", opt.out, "Summary JSON to write (default run_dir/summary.json)");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitConfig;
  }

  try {
    if (gen->parsed()) return cmd_gen(opt, out);
    if (trn->parsed()) return cmd_train(opt, out, err);
    if (det->parsed()) return cmd_detect(opt, out, err);
    if (evl->parsed()) return cmd_eval(opt, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const IoError& e) {
    err << "I/O error: " << e.what() << '\n';
    return kExitIo;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const InsufficientDataError& e) {
    err << "insufficient data: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return kExitConfig;
}

}  // namespace neat::cli
