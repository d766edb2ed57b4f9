#include "gapkit/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "gapkit/error.hpp"
#include "gapkit/pipeline.hpp"
#include "gapkit/report.hpp"

namespace gapkit {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

namespace {

constexpr int kUsageError = 2;

const std::vector<std::string> kConfigKeys{
    "sizes",       "loops",          "sigmas",           "seeds",
    "num_hparams", "hparam_seed",    "train_steps",      "test_size",
    "lambda_dependent", "lambda_independent", "workers", "root_seed",
    "checkpoint",  "inject_lr"};

std::string flag_for(std::string key) {
  std::replace(key.begin(), key.end(), '_', '-');
  return "--" + key;
}

SpiralSpec parse_spec(const std::string& text) {
  SpiralSpec spec;
  std::map<std::string, std::string> kv;
  std::istringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw ConfigError("--spec entries look like key=value, got '" + item + "'");
    kv[item.substr(0, eq)] = item.substr(eq + 1);
  }
  for (const auto& [k, v] : kv) {
    if (k == "k" || k == "loops")
      spec.loops = std::stoi(v);
    else if (k == "sigma")
      spec.noise_sigma = std::stod(v);
    else if (k == "m")
      spec.num_train = std::stoi(v);
    else if (k == "seed")
      spec.data_seed = std::stoll(v);
    else
      throw ConfigError("--spec: unknown field '" + k + "'");
  }
  if (spec.loops < 1 || spec.num_train < 1 || spec.noise_sigma < 0.0)
    throw ConfigError("--spec: loops and m must be positive, sigma non-negative");
  return spec;
}

std::string dataset_file_name(const SpiralSpec& s, const char* purpose) {
  return "spiral_m" + std::to_string(s.num_train) + "_k" + std::to_string(s.loops) + "_s" +
         format_double(s.noise_sigma) + "_seed" + std::to_string(s.data_seed) + "_" + purpose + ".jsonl";
}

std::vector<GgpFamily> parse_families(const std::string& text) {
  std::vector<GgpFamily> out;
  std::istringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(family_from_string(item));
  if (out.empty()) throw ConfigError("--families: empty list");
  return out;
}

struct GgpFlags {
  std::optional<int> steps;
  std::uint64_t seed = 0;

  GgpTrainerConfig config(const RunConfig& run) const {
    GgpTrainerConfig c = trainer_config_for(run.lambda_dependent, run.lambda_independent);
    c.seed = seed;
    if (steps) {
      c.dnn_steps_dependent = c.dnn_steps_independent = *steps;
      c.rnn_steps_dependent = c.rnn_steps_independent = *steps;
    }
    return c;
  }
};

void add_ggp_flags(CLI::App* cmd, GgpFlags& flags) {
  cmd->add_option("--steps", flags.steps, "Override DNN/RNN predictor training steps");
  cmd->add_option("--ggp-seed", flags.seed, "Seed for predictor initialization and batching");
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"gapkit: margin-signature generalization gap prediction"};
  app.require_subcommand(1);

  // gen-datasets
  auto* gen = app.add_subcommand("gen-datasets", "Write spiral datasets as JSON Lines");
  std::string gen_preset;
  std::vector<std::string> gen_specs;
  std::string gen_out;
  int gen_test_size = 0;
  auto* gen_preset_opt = gen->add_option("--preset", gen_preset, "paper")->check(CLI::IsMember({"paper"}));
  auto* gen_spec_opt = gen->add_option("--spec", gen_specs, "k=..,sigma=..,m=..,seed=..");
  gen_preset_opt->excludes(gen_spec_opt);
  gen->add_option("--out", gen_out, "Output directory")->required();
  gen->add_option("--test-size", gen_test_size, "Also write a test set of this size");

  // sample-hparams
  auto* sample = app.add_subcommand("sample-hparams", "Sample network hyperparameters");
  int sample_count = 100;
  std::uint64_t sample_seed = RunConfig{}.hparam_seed;
  std::string sample_out;
  sample->add_option("--count", sample_count, "Number of configurations");
  sample->add_option("--seed", sample_seed, "Sampling seed");
  sample->add_option("--out", sample_out, "Output file (default stdout)");

  // train-nets
  auto* train_cmd = app.add_subcommand("train-nets", "Train the network population and extract signatures");
  std::string train_config_file;
  std::string train_preset;
  std::string train_out;
  std::map<std::string, std::string> overrides;
  train_cmd->add_option("--config", train_config_file, "Run config file (key = value)");
  train_cmd->add_option("--preset", train_preset, "paper | desk | custom");
  train_cmd->add_option("--out", train_out, "Run output directory");
  for (const auto& key : kConfigKeys) {
    train_cmd->add_option_function<std::string>(
        flag_for(key), [&overrides, key](const std::string& v) { overrides[key] = v; },
        "Override config key '" + key + "'");
  }
  bool train_quiet = false;
  train_cmd->add_flag("--quiet", train_quiet, "No progress output");

  // extract-signatures
  auto* extract = app.add_subcommand("extract-signatures", "Re-extract signatures from checkpoints");
  std::string extract_run;
  double extract_lambda = 0.5;
  std::string extract_out;
  extract->add_option("--run", extract_run, "Run directory")->required();
  extract->add_option("--lambda", extract_lambda, "Squash constant")->required();
  extract->add_option("--out", extract_out, "Output file");

  // train-ggp
  auto* train_ggp = app.add_subcommand("train-ggp", "Fit one generalization gap predictor");
  std::string tg_run, tg_family = "linear", tg_scope = "single-model", tg_labels = "gap", tg_regime, tg_out;
  std::optional<int> tg_fold;
  std::optional<int> tg_variation;
  GgpFlags tg_flags;
  train_ggp->add_option("--run", tg_run, "Run directory")->required();
  train_ggp->add_option("--family", tg_family, "linear | dnn | rnn");
  train_ggp->add_option("--scope", tg_scope, "per-dataset | single-model");
  train_ggp->add_option("--labels", tg_labels, "gap | test_acc");
  train_ggp->add_option("--regime", tg_regime, "Fold regime; with --fold trains on that fold's training split");
  train_ggp->add_option("--fold", tg_fold, "Fold index to hold out");
  train_ggp->add_option("--variation", tg_variation, "Restrict to one spiral variation");
  train_ggp->add_option("--out", tg_out, "Model file")->required();
  add_ggp_flags(train_ggp, tg_flags);

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "Cross-validate one table cell");
  std::string ev_run, ev_scope = "per-dataset", ev_regime = "same-dist", ev_family = "linear",
                      ev_labels = "gap", ev_out, ev_calibration;
  GgpFlags ev_flags;
  evaluate->add_option("--run", ev_run, "Run directory")->required();
  evaluate->add_option("--scope", ev_scope, "per-dataset | single-model");
  evaluate->add_option("--regime", ev_regime, "same-dist | unseen-hparams | unseen-datasets");
  evaluate->add_option("--family", ev_family, "linear | dnn | rnn");
  evaluate->add_option("--labels", ev_labels, "gap | test_acc");
  evaluate->add_option("--out", ev_out, "Write the JSON cell here as well");
  evaluate->add_option("--calibration", ev_calibration, "Write (prediction, label) CSV");
  add_ggp_flags(evaluate, ev_flags);

  // export-analysis
  auto* analysis = app.add_subcommand("export-analysis", "Scatter data of gap vs train accuracy");
  std::string an_run, an_out, an_svg_dir;
  analysis->add_option("--run", an_run, "Run directory")->required();
  analysis->add_option("--out", an_out, "CSV file")->required();
  analysis->add_option("--svg-dir", an_svg_dir, "Also write one SVG scatter per variable");

  // report
  auto* report = app.add_subcommand("report", "All table cells for a run");
  std::string rep_run, rep_labels = "gap", rep_families = "linear,dnn,rnn", rep_out;
  GgpFlags rep_flags;
  report->add_option("--run", rep_run, "Run directory")->required();
  report->add_option("--labels", rep_labels, "gap | test_acc");
  report->add_option("--families", rep_families, "Comma-separated families");
  report->add_option("--out", rep_out, "Report directory (default <run>/report)");
  add_ggp_flags(report, rep_flags);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    err << "run with --help for usage\n";
    return kUsageError;
  }

  try {
    if (*gen) {
      std::vector<SpiralSpec> specs;
      if (!gen_preset.empty()) {
        specs = paper_preset_specs();
      } else {
        for (const auto& s : gen_specs) specs.push_back(parse_spec(s));
      }
      if (specs.empty()) {
        err << "error: gen-datasets needs --preset paper or at least one --spec\n";
        return kUsageError;
      }
      for (const auto& spec : specs) {
        write_dataset(fs::path(gen_out) / dataset_file_name(spec, "train"), generate_train(spec),
                      Purpose::kTrain);
        if (gen_test_size > 0)
          write_dataset(fs::path(gen_out) / dataset_file_name(spec, "test"),
                        generate(spec, gen_test_size, Purpose::kTest), Purpose::kTest);
      }
      out << "wrote " << specs.size() << " dataset(s) to " << gen_out << "\n";
      return 0;
    }

    if (*sample) {
      std::string text;
      for (const auto& hp : sample_hparams(sample_count, sample_seed)) text += hparams_to_json(hp) + "\n";
      if (sample_out.empty())
        out << text;
      else
        write_text_file(sample_out, text);
      return 0;
    }

    if (*train_cmd) {
      RunConfig config = train_config_file.empty()
                             ? RunConfig::desk()
                             : RunConfig::from_text(read_text_file(train_config_file));
      if (!train_preset.empty()) {
        config = RunConfig::for_preset(train_preset);
        if (!train_config_file.empty()) {
          RunConfig from_file = RunConfig::from_text(read_text_file(train_config_file));
          from_file.preset = train_preset;
          config = from_file;
        }
      }
      for (const auto& [k, v] : overrides) config.set(k, v);
      if (!train_out.empty()) config.output_dir = train_out;
      if (config.output_dir.empty()) {
        err << "error: train-nets needs --out or output_dir in the config\n";
        return kUsageError;
      }
      ProgressFn progress;
      if (!train_quiet) {
        progress = [&err](std::size_t done, std::size_t total) {
          if (done == total || done % 25 == 0) err << "\rtrained " << done << "/" << total << std::flush;
          if (done == total) err << "\n";
        };
      }
      const SweepResult result = run_sweep(config, progress);
      std::size_t diverged = 0;
      for (const auto& r : result.records) diverged += r.diverged ? 1 : 0;
      out << "records: " << result.records.size() << "  diverged: " << diverged
          << "  failed: " << result.failures.size() << "  wall: " << result.wall_seconds << "s\n";
      return result.failures.empty() ? 0 : 1;
    }

    if (*extract) {
      const RunData run = load_run(extract_run);
      const fs::path ckpt_dir = fs::path(extract_run) / "checkpoints";
      if (!fs::is_directory(ckpt_dir))
        throw std::runtime_error("no checkpoints in '" + ckpt_dir.string() +
                                 "' (train with --checkpoint true)");
      std::string text;
      std::size_t count = 0;
      for (const auto& rec : run.records) {
        if (rec.diverged) continue;
        const fs::path ckpt = ckpt_dir / ("net_" + std::to_string(rec.net_id) + ".json");
        const Network net = checkpoint_from_json(read_text_file(ckpt));
        const SignatureMatrix sig = extract_signature(net, generate_train(rec.spec), extract_lambda);
        Json j{{"net_id", rec.net_id}, {"lambda", sig.lambda}};
        Json rows = Json::array();
        for (const auto& r : sig.rows) rows.push_back(r);
        j["signature"] = rows;
        text += j.dump() + "\n";
        ++count;
      }
      const fs::path dest = extract_out.empty()
                                ? fs::path(extract_run) / ("signatures_lambda_" + format_double(extract_lambda) + ".jsonl")
                                : fs::path(extract_out);
      write_text_file(dest, text);
      out << "extracted " << count << " signature(s) to " << dest.string() << "\n";
      return 0;
    }

    if (*train_ggp) {
      const RunData run = load_run(tg_run);
      const GgpFamily family = family_from_string(tg_family);
      const Scope scope = scope_from_string(tg_scope);
      const GgpTrainerConfig config = tg_flags.config(run.config);
      const double lambda = cell_lambda(scope, family, config.lambda_dependent, config.lambda_independent);
      ExampleSet set = ggp_examples(run.records, label_mode_from_string(tg_labels), lambda);
      std::vector<GgpExample> train;
      std::optional<FoldPlan> plan;
      if (tg_fold) {
        if (tg_regime.empty()) {
          err << "error: --fold requires --regime\n";
          return kUsageError;
        }
        plan = make_folds(set.examples, regime_from_string(tg_regime), scope);
      }
      for (auto& ex : set.examples) {
        if (tg_variation && ex.variation_id != *tg_variation) continue;
        if (plan && plan->fold_of.at(ex.net_id) == *tg_fold) continue;
        train.push_back(ex);
      }
      const GgpModel model = fit(family, train, task_mode_for(scope), config);
      write_text_file(tg_out, model.to_json() + "\n");
      out << "trained " << to_string(family) << " predictor on " << train.size() << " examples -> "
          << tg_out << "\n";
      return 0;
    }

    if (*evaluate) {
      const RunData run = load_run(ev_run);
      const EvalReport rep =
          evaluate_cell(run.records, scope_from_string(ev_scope), regime_from_string(ev_regime),
                        family_from_string(ev_family), label_mode_from_string(ev_labels),
                        ev_flags.config(run.config));
      const std::string cell = report_to_json(rep);
      out << cell << "\n";
      if (!ev_out.empty()) write_text_file(ev_out, cell + "\n");
      if (!ev_calibration.empty()) write_text_file(ev_calibration, calibration_csv(rep));
      update_manifest(ev_run,
                      "eval_" + to_string(rep.scope) + "_" + to_string(rep.regime) + "_" +
                          to_string(rep.family) + "_" + to_string(rep.label_mode),
                      cell);
      return 0;
    }

    if (*analysis) {
      const RunData run = load_run(an_run);
      write_text_file(an_out, export_analysis(run.records));
      if (!an_svg_dir.empty())
        for (const char* var : {"dropout", "batch_norm", "batch_size", "learning_rate"})
          write_text_file(fs::path(an_svg_dir) / (std::string("gap_vs_train_acc_") + var + ".svg"),
                          analysis_svg(run.records, var));
      out << "wrote " << an_out << "\n";
      return 0;
    }

    if (*report) {
      const RunData run = load_run(rep_run);
      const LabelMode labels = label_mode_from_string(rep_labels);
      const auto cells =
          run_report(run.records, labels, parse_families(rep_families), rep_flags.config(run.config));
      const fs::path dir = rep_out.empty() ? fs::path(rep_run) / "report" : fs::path(rep_out);
      std::string jsonl;
      Json summary = Json::array();
      for (const auto& c : cells) {
        const std::string cell = report_to_json(c);
        jsonl += cell + "\n";
        summary.push_back(Json::parse(cell));
        write_text_file(dir / ("calibration_" + to_string(c.label_mode) + "_" + to_string(c.scope) + "_" +
                               to_string(c.regime) + "_" + to_string(c.family) + ".csv"),
                        calibration_csv(c));
      }
      const std::string table = format_table(cells, labels);
      write_text_file(dir / ("report_" + to_string(labels) + ".jsonl"), jsonl);
      write_text_file(dir / ("table_" + to_string(labels) + ".txt"), table);
      update_manifest(rep_run, "report_" + to_string(labels), summary.dump());
      out << table;
      return 0;
    }
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kUsageError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}

}  // namespace gapkit
