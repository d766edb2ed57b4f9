#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "gapkit/evalkit.hpp"
#include "gapkit/records.hpp"

namespace gapkit {

// Everything that determines a sweep. Text form is one `key = value` per
// line; lists are comma separated and '#' starts a comment.
struct RunConfig {
  std::string preset = "desk";
  std::vector<int> sizes;
  std::vector<int> loops;
  std::vector<double> sigmas;
  std::vector<std::int64_t> seeds;
  int num_hparams = 20;
  std::uint64_t hparam_seed = 2019;
  int train_steps = 10000;
  int test_size = 10000;
  double lambda_dependent = 0.5;
  double lambda_independent = 2.5;
  int workers = 1;
  std::uint64_t root_seed = 0;
  std::string output_dir;
  bool checkpoint = false;
  // net_id -> learning rate that replaces the sampled one (fault injection).
  std::map<std::int64_t, double> inject_lr;

  static RunConfig paper();
  static RunConfig desk();
  static RunConfig for_preset(const std::string& name);

  std::vector<SpiralSpec> specs() const;
  int num_variations() const;
  std::size_t num_units() const;

  // Apply one key/value pair; throws ConfigError on an unknown key or bad value.
  void set(const std::string& key, const std::string& value);
  std::string to_text() const;
  // `preset` (if present) is applied first, remaining keys override it.
  static RunConfig from_text(const std::string& text);
};

// Uniform draws from the hyperparameter space (depth 1-4, independent widths
// from {4,8,16}, optimizer, learning rate, batch size, batch norm, dropout);
// duplicates are redrawn. hparam_id is the draw index.
std::vector<NetHparams> sample_hparams(int count, std::uint64_t sample_seed);

// Number of distinct configurations in the sampling space.
std::uint64_t hparam_space_size();

struct FailedUnit {
  std::int64_t net_id = 0;
  std::string error;
};

struct SweepResult {
  std::vector<TrainedNetRecord> records;  // sorted by net id
  std::vector<FailedUnit> failures;
  double wall_seconds = 0.0;
};

// Seeds for a unit are derive_seed(root_seed, net_id, purpose).
TrainedNetRecord run_unit(const RunConfig& config, const SpiralSpec& spec, const NetHparams& hparams,
                          std::int64_t net_id, int variation_id,
                          const std::filesystem::path& checkpoint_dir = {});

using ProgressFn = std::function<void(std::size_t done, std::size_t total)>;

// Trains every (spec x hparam) unit on a bounded worker pool. When
// config.output_dir is set, writes records.jsonl, manifest.json and
// config.txt there.
SweepResult run_sweep(const RunConfig& config, const ProgressFn& progress = {});

std::string manifest_json(const RunConfig& config, const SweepResult& result);
// Merges `key: value` (a JSON document) into <run_dir>/manifest.json.
void update_manifest(const std::filesystem::path& run_dir, const std::string& key,
                     const std::string& json_value);

struct RunData {
  RunConfig config;
  std::vector<TrainedNetRecord> records;
};

// Throws std::runtime_error naming the missing path.
RunData load_run(const std::filesystem::path& run_dir);

struct ExampleSet {
  std::vector<GgpExample> examples;
  std::size_t excluded_diverged = 0;
};

// GGP examples from non-diverged records, using the signature extracted with
// `lambda` and the requested label.
ExampleSet ggp_examples(const std::vector<TrainedNetRecord>& records, LabelMode label_mode,
                        double lambda);

// Squash constant for a table cell: the dataset-dependent value for
// per-dataset scope and for linear predictors, the dataset-independent one
// for single-model DNN/RNN predictors.
double cell_lambda(Scope scope, GgpFamily family, double lambda_dependent,
                   double lambda_independent);

GgpTrainerConfig trainer_config_for(double lambda_dependent, double lambda_independent);

EvalReport evaluate_cell(const std::vector<TrainedNetRecord>& records, Scope scope, Regime regime,
                         GgpFamily family, LabelMode label_mode, const GgpTrainerConfig& config);

// Rows (train_accuracy, gap, dropout, batch_norm, batch_size, learning_rate)
// for every non-diverged record, with a header line.
std::string export_analysis(const std::vector<TrainedNetRecord>& records);

// Minimal SVG scatter of gap against train accuracy, point size/colour keyed
// by one of dropout, batch_norm, batch_size, learning_rate.
std::string analysis_svg(const std::vector<TrainedNetRecord>& records, const std::string& variable);

}  // namespace gapkit
