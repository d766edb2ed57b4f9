#include "gapkit/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "gapkit/error.hpp"
#include "gapkit/rng.hpp"

namespace gapkit {

using Json = nlohmann::ordered_json;
namespace fs = std::filesystem;

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream ss(s);
  while (std::getline(ss, item, sep)) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <class T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc{} || ptr != end)
    throw ConfigError("config: bad value '" + text + "' for key '" + key + "'");
  return value;
}

template <class T>
std::vector<T> parse_list(const std::string& key, const std::string& text) {
  std::vector<T> out;
  for (const auto& item : split(text, ',')) out.push_back(parse_number<T>(key, item));
  if (out.empty()) throw ConfigError("config: empty list for key '" + key + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw ConfigError("config: bad boolean '" + text + "' for key '" + key + "'");
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

namespace {

template <class T>
std::string join(const std::vector<T>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ",";
    if constexpr (std::is_floating_point_v<T>)
      out += format_double(xs[i]);
    else
      out += std::to_string(xs[i]);
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// RunConfig

RunConfig RunConfig::paper() {
  RunConfig c;
  c.preset = "paper";
  c.sizes = {50, 100, 200};
  c.loops = {1, 2, 3};
  c.sigmas = {0.0, 0.05, 0.15};
  c.seeds = {1, 2, 3, 4, 5};
  c.num_hparams = 100;
  c.train_steps = 1000000;
  c.test_size = 1000000;
  return c;
}

RunConfig RunConfig::desk() {
  RunConfig c;
  c.preset = "desk";
  c.sizes = {50, 100, 200};
  c.loops = {1, 2};
  c.sigmas = {0.0, 0.05};
  c.seeds = {1, 2, 3};
  c.num_hparams = 20;
  c.train_steps = 10000;
  c.test_size = 10000;
  return c;
}

RunConfig RunConfig::for_preset(const std::string& name) {
  if (name == "paper") return paper();
  if (name == "desk" || name == "custom") {
    RunConfig c = desk();
    c.preset = name;
    return c;
  }
  throw ConfigError("unknown preset '" + name + "' (expected paper, desk or custom)");
}

std::vector<SpiralSpec> RunConfig::specs() const { return spec_grid(sizes, loops, sigmas, seeds); }

int RunConfig::num_variations() const {
  return static_cast<int>(sizes.size() * loops.size() * sigmas.size());
}

std::size_t RunConfig::num_units() const {
  return specs().size() * static_cast<std::size_t>(num_hparams);
}

void RunConfig::set(const std::string& raw_key, const std::string& raw_value) {
  std::string key = trim(raw_key);
  std::replace(key.begin(), key.end(), '-', '_');
  const std::string value = trim(raw_value);
  if (key == "preset") {
    for_preset(value);
    preset = value;
  } else if (key == "sizes") {
    sizes = parse_list<int>(key, value);
  } else if (key == "loops") {
    loops = parse_list<int>(key, value);
  } else if (key == "sigmas") {
    sigmas = parse_list<double>(key, value);
  } else if (key == "seeds") {
    seeds = parse_list<std::int64_t>(key, value);
  } else if (key == "num_hparams") {
    num_hparams = parse_number<int>(key, value);
  } else if (key == "hparam_seed") {
    hparam_seed = parse_number<std::uint64_t>(key, value);
  } else if (key == "train_steps") {
    train_steps = parse_number<int>(key, value);
  } else if (key == "test_size") {
    test_size = parse_number<int>(key, value);
  } else if (key == "lambda_dependent") {
    lambda_dependent = parse_number<double>(key, value);
  } else if (key == "lambda_independent") {
    lambda_independent = parse_number<double>(key, value);
  } else if (key == "workers") {
    workers = parse_number<int>(key, value);
  } else if (key == "root_seed") {
    root_seed = parse_number<std::uint64_t>(key, value);
  } else if (key == "output_dir") {
    output_dir = value;
  } else if (key == "checkpoint") {
    checkpoint = parse_bool(key, value);
  } else if (key == "inject_lr") {
    inject_lr.clear();
    for (const auto& item : split(value, ',')) {
      const auto colon = item.find(':');
      if (colon == std::string::npos)
        throw ConfigError("config: inject_lr entries look like <net_id>:<learning_rate>");
      inject_lr[parse_number<std::int64_t>(key, trim(item.substr(0, colon)))] =
          parse_number<double>(key, trim(item.substr(colon + 1)));
    }
  } else {
    throw ConfigError("config: unknown key '" + raw_key + "'");
  }
  if (num_hparams < 1) throw ConfigError("config: num_hparams must be >= 1");
  if (train_steps < 1) throw ConfigError("config: train_steps must be >= 1");
  if (test_size < 1) throw ConfigError("config: test_size must be >= 1");
  if (!(lambda_dependent > 0.0) || !(lambda_independent > 0.0))
    throw ConfigError("config: lambda values must be positive");
  if (workers < 0) throw ConfigError("config: workers must be >= 0");
}

std::string RunConfig::to_text() const {
  std::ostringstream out;
  out << "preset = " << preset << "\n"
      << "sizes = " << join(sizes) << "\n"
      << "loops = " << join(loops) << "\n"
      << "sigmas = " << join(sigmas) << "\n"
      << "seeds = " << join(seeds) << "\n"
      << "num_hparams = " << num_hparams << "\n"
      << "hparam_seed = " << hparam_seed << "\n"
      << "train_steps = " << train_steps << "\n"
      << "test_size = " << test_size << "\n"
      << "lambda_dependent = " << format_double(lambda_dependent) << "\n"
      << "lambda_independent = " << format_double(lambda_independent) << "\n"
      << "workers = " << workers << "\n"
      << "root_seed = " << root_seed << "\n"
      << "checkpoint = " << (checkpoint ? "true" : "false") << "\n";
  if (!output_dir.empty()) out << "output_dir = " << output_dir << "\n";
  if (!inject_lr.empty()) {
    out << "inject_lr = ";
    bool first = true;
    for (const auto& [id, lr] : inject_lr) {
      out << (first ? "" : ",") << id << ":" << format_double(lr);
      first = false;
    }
    out << "\n";
  }
  return out.str();
}

RunConfig RunConfig::from_text(const std::string& text) {
  std::vector<std::pair<std::string, std::string>> entries;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    entries.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  RunConfig config = desk();
  for (const auto& [k, v] : entries)
    if (k == "preset") config = for_preset(v);
  for (const auto& [k, v] : entries)
    if (k != "preset") config.set(k, v);
  return config;
}

// ---------------------------------------------------------------------------
// Hyperparameter sampling

namespace {

constexpr int kWidths[] = {4, 8, 16};
constexpr double kLearningRates[] = {0.1, 0.01, 0.001};
constexpr int kBatchSizes[] = {32, 64, 128};
constexpr double kDropouts[] = {0.0, 0.25, 0.5};

template <class T, std::size_t N>
T pick(Rng& rng, const T (&options)[N]) {
  return options[uniform_index(rng, N)];
}

}  // namespace

std::uint64_t hparam_space_size() {
  std::uint64_t architectures = 0;
  std::uint64_t per_depth = 1;
  for (int depth = 1; depth <= 4; ++depth) {
    per_depth *= std::size(kWidths);
    architectures += per_depth;
  }
  return architectures * 2 * std::size(kLearningRates) * std::size(kBatchSizes) * 2 *
         std::size(kDropouts);
}

std::vector<NetHparams> sample_hparams(int count, std::uint64_t sample_seed) {
  if (count < 1) throw DomainError("sample_hparams: count must be >= 1");
  if (static_cast<std::uint64_t>(count) > hparam_space_size())
    throw DomainError("sample_hparams: count exceeds the number of distinct configurations");
  Rng rng(sample_seed);
  std::vector<NetHparams> out;
  while (static_cast<int>(out.size()) < count) {
    NetHparams hp;
    const int depth = 1 + static_cast<int>(uniform_index(rng, 4));
    hp.layer_widths.clear();
    for (int l = 0; l < depth; ++l) hp.layer_widths.push_back(pick(rng, kWidths));
    hp.optimizer = uniform_index(rng, 2) == 0 ? OptimizerKind::kSgd : OptimizerKind::kAdam;
    hp.learning_rate = pick(rng, kLearningRates);
    hp.batch_size = pick(rng, kBatchSizes);
    hp.batch_norm = uniform_index(rng, 2) == 1;
    hp.dropout_rate = pick(rng, kDropouts);
    const bool duplicate = std::any_of(out.begin(), out.end(),
                                       [&](const NetHparams& o) { return o.same_config(hp); });
    if (duplicate) continue;
    hp.hparam_id = static_cast<int>(out.size());
    out.push_back(std::move(hp));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Sweep

TrainedNetRecord run_unit(const RunConfig& config, const SpiralSpec& spec, const NetHparams& hparams,
                          std::int64_t net_id, int variation_id, const fs::path& checkpoint_dir) {
  const auto id = static_cast<std::uint64_t>(net_id);
  const Dataset train_data = generate_train(spec);
  TrainOptions options;
  if (const auto it = config.inject_lr.find(net_id); it != config.inject_lr.end())
    options.learning_rate_override = it->second;

  TrainOutcome outcome =
      train(Network::init(hparams, derive_seed(config.root_seed, id, purpose::kInit)), train_data,
            config.train_steps, derive_seed(config.root_seed, id, purpose::kTrain), options);

  TrainedNetRecord rec;
  rec.net_id = net_id;
  rec.variation_id = variation_id;
  rec.spec = spec;
  rec.hparams = hparams;
  rec.steps_run = outcome.steps_run;
  rec.diverged = outcome.diverged;
  if (rec.diverged) {
    rec.train_accuracy = rec.test_accuracy = rec.gap = std::nan("");
    return rec;
  }
  const Dataset test_data = generate(spec, config.test_size, Purpose::kTest);
  rec.train_accuracy = accuracy(outcome.net, train_data);
  rec.test_accuracy = accuracy(outcome.net, test_data);
  rec.gap = rec.train_accuracy - rec.test_accuracy;
  rec.signature = extract_signature(outcome.net, train_data, config.lambda_dependent);
  rec.signature_independent = extract_signature(outcome.net, train_data, config.lambda_independent);
  if (!checkpoint_dir.empty())
    write_text_file(checkpoint_dir / ("net_" + std::to_string(net_id) + ".json"),
                    checkpoint_to_json(net_id, outcome.net));
  return rec;
}

SweepResult run_sweep(const RunConfig& config, const ProgressFn& progress) {
  const auto start = std::chrono::steady_clock::now();
  const std::vector<SpiralSpec> specs = config.specs();
  const std::vector<NetHparams> hparams = sample_hparams(config.num_hparams, config.hparam_seed);
  const std::size_t per_variation = config.seeds.size();
  const std::size_t total = specs.size() * hparams.size();

  fs::path checkpoint_dir;
  if (config.checkpoint) {
    if (config.output_dir.empty()) throw ConfigError("checkpointing requires an output directory");
    checkpoint_dir = fs::path(config.output_dir) / "checkpoints";
    fs::create_directories(checkpoint_dir);
  }

  std::vector<std::optional<TrainedNetRecord>> slots(total);
  std::vector<std::string> errors(total);
  std::atomic<std::size_t> next{0};
  std::size_t done = 0;
  std::mutex progress_mutex;

  auto worker = [&] {
    for (;;) {
      const std::size_t unit = next.fetch_add(1);
      if (unit >= total) return;
      const std::size_t spec_index = unit / hparams.size();
      const std::size_t hp_index = unit % hparams.size();
      const auto variation = static_cast<int>(spec_index / per_variation);
      for (int attempt = 0; attempt < 2; ++attempt) {
        try {
          slots[unit] = run_unit(config, specs[spec_index], hparams[hp_index],
                                 static_cast<std::int64_t>(unit), variation, checkpoint_dir);
          break;
        } catch (const std::exception& e) {
          errors[unit] = e.what();
        }
      }
      if (progress) {
        std::lock_guard<std::mutex> lock(progress_mutex);
        progress(++done, total);
      }
    }
  };

  int workers = config.workers > 0 ? config.workers
                                   : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  workers = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(workers), std::max<std::size_t>(total, 1)));
  std::vector<std::thread> pool;
  for (int w = 1; w < workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  SweepResult result;
  for (std::size_t unit = 0; unit < total; ++unit) {
    if (slots[unit])
      result.records.push_back(std::move(*slots[unit]));
    else
      result.failures.push_back({static_cast<std::int64_t>(unit), errors[unit]});
  }
  result.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  if (!config.output_dir.empty()) {
    const fs::path dir(config.output_dir);
    fs::create_directories(dir);
    write_records(dir / "records.jsonl", result.records);
    write_text_file(dir / "config.txt", config.to_text());
    write_text_file(dir / "manifest.json", manifest_json(config, result));
  }
  return result;
}

std::string manifest_json(const RunConfig& config, const SweepResult& result) {
  Json j;
  j["engine_version"] = kEngineVersion;
  j["preset"] = config.preset;
  j["config"] = config.to_text();
  std::size_t diverged = 0;
  Json diverged_ids = Json::array();
  for (const auto& r : result.records) {
    if (r.diverged) {
      ++diverged;
      diverged_ids.push_back(r.net_id);
    }
  }
  j["counts"] = {{"units", config.num_units()},
                 {"records", result.records.size()},
                 {"diverged", diverged},
                 {"failed", result.failures.size()}};
  j["diverged_net_ids"] = diverged_ids;
  Json failures = Json::array();
  for (const auto& f : result.failures) failures.push_back({{"net_id", f.net_id}, {"error", f.error}});
  j["failures"] = failures;
  j["wall_seconds"] = result.wall_seconds;
  j["created_unix"] = std::chrono::duration_cast<std::chrono::seconds>(
                          std::chrono::system_clock::now().time_since_epoch())
                          .count();
  return j.dump(2);
}

void update_manifest(const fs::path& run_dir, const std::string& key, const std::string& json_value) {
  const fs::path path = run_dir / "manifest.json";
  Json j = fs::exists(path) ? Json::parse(read_text_file(path)) : Json::object();
  j[key] = Json::parse(json_value);
  write_text_file(path, j.dump(2));
}

RunData load_run(const fs::path& run_dir) {
  if (!fs::is_directory(run_dir))
    throw std::runtime_error("run directory '" + run_dir.string() + "' does not exist");
  RunData data;
  const fs::path config_path = run_dir / "config.txt";
  data.config = fs::exists(config_path) ? RunConfig::from_text(read_text_file(config_path)) : RunConfig::desk();
  data.records = read_records(run_dir / "records.jsonl");
  return data;
}

// ---------------------------------------------------------------------------
// GGP plumbing

ExampleSet ggp_examples(const std::vector<TrainedNetRecord>& records, LabelMode label_mode,
                        double lambda) {
  ExampleSet set;
  for (const auto& r : records) {
    if (r.diverged) {
      ++set.excluded_diverged;
      continue;
    }
    const SignatureMatrix* sig = nullptr;
    if (r.signature && std::abs(r.signature->lambda - lambda) < 1e-12)
      sig = &*r.signature;
    else if (r.signature_independent && std::abs(r.signature_independent->lambda - lambda) < 1e-12)
      sig = &*r.signature_independent;
    if (sig == nullptr)
      throw ConfigError("record " + std::to_string(r.net_id) + " has no signature at lambda " +
                        format_double(lambda));
    GgpExample ex;
    ex.signature = *sig;
    ex.label = label_mode == LabelMode::kGap ? r.gap : r.test_accuracy;
    ex.net_id = r.net_id;
    ex.variation_id = r.variation_id;
    ex.data_seed = r.spec.data_seed;
    ex.hparam_id = r.hparams.hparam_id;
    set.examples.push_back(std::move(ex));
  }
  return set;
}

double cell_lambda(Scope scope, GgpFamily family, double lambda_dependent, double lambda_independent) {
  if (scope == Scope::kPerDataset || family == GgpFamily::kLinear) return lambda_dependent;
  return lambda_independent;
}

GgpTrainerConfig trainer_config_for(double lambda_dependent, double lambda_independent) {
  GgpTrainerConfig c;
  c.lambda_dependent = lambda_dependent;
  c.lambda_independent = lambda_independent;
  return c;
}

EvalReport evaluate_cell(const std::vector<TrainedNetRecord>& records, Scope scope, Regime regime,
                         GgpFamily family, LabelMode label_mode, const GgpTrainerConfig& config) {
  const double lambda =
      cell_lambda(scope, family, config.lambda_dependent, config.lambda_independent);
  const ExampleSet set = ggp_examples(records, label_mode, lambda);
  if (set.examples.empty()) throw DomainError("evaluate: no non-diverged records to evaluate");
  EvalReport report = evaluate_regime(set.examples, regime, scope, family, label_mode, config);
  report.excluded_diverged = set.excluded_diverged;
  return report;
}

// ---------------------------------------------------------------------------
// Analysis export

std::string export_analysis(const std::vector<TrainedNetRecord>& records) {
  std::string out = "train_accuracy,gap,dropout,batch_norm,batch_size,learning_rate\n";
  for (const auto& r : records) {
    if (r.diverged) continue;
    out += format_double(r.train_accuracy) + "," + format_double(r.gap) + "," +
           format_double(r.hparams.dropout_rate) + "," + (r.hparams.batch_norm ? "1" : "0") + "," +
           std::to_string(r.hparams.batch_size) + "," + format_double(r.hparams.learning_rate) + "\n";
  }
  return out;
}

std::string analysis_svg(const std::vector<TrainedNetRecord>& records, const std::string& variable) {
  static const std::set<std::string> kVariables{"dropout", "batch_norm", "batch_size", "learning_rate"};
  if (kVariables.count(variable) == 0)
    throw DomainError("analysis_svg: unknown variable '" + variable + "'");
  constexpr double kW = 480, kH = 360, kPad = 40;
  double gmin = 0.0, gmax = 0.0;
  for (const auto& r : records) {
    if (r.diverged) continue;
    gmin = std::min(gmin, r.gap);
    gmax = std::max(gmax, r.gap);
  }
  if (gmax - gmin < 1e-9) gmax = gmin + 1.0;
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH << "\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<line x1=\"" << kPad << "\" y1=\"" << kH - kPad << "\" x2=\"" << kW - kPad << "\" y2=\""
      << kH - kPad << "\" stroke=\"black\"/>\n"
      << "<line x1=\"" << kPad << "\" y1=\"" << kPad << "\" x2=\"" << kPad << "\" y2=\"" << kH - kPad
      << "\" stroke=\"black\"/>\n"
      << "<text x=\"" << kW / 2 << "\" y=\"" << kH - 8 << "\" text-anchor=\"middle\">train accuracy</text>\n"
      << "<text x=\"12\" y=\"" << kH / 2 << "\" transform=\"rotate(-90 12 " << kH / 2
      << ")\" text-anchor=\"middle\">gap (" << variable << ")</text>\n";
  for (const auto& r : records) {
    if (r.diverged) continue;
    const double x = kPad + r.train_accuracy * (kW - 2 * kPad);
    const double y = kH - kPad - (r.gap - gmin) / (gmax - gmin) * (kH - 2 * kPad);
    double radius = 2.0;
    std::string colour = "steelblue";
    if (variable == "dropout") radius = 1.5 + 6.0 * r.hparams.dropout_rate;
    if (variable == "batch_size") radius = 1.5 + r.hparams.batch_size / 32.0;
    if (variable == "learning_rate") radius = 1.5 + 3.0 * (3.0 + std::log10(r.hparams.learning_rate));
    if (variable == "batch_norm") colour = r.hparams.batch_norm ? "crimson" : "steelblue";
    svg << "<circle cx=\"" << x << "\" cy=\"" << y << "\" r=\"" << radius << "\" fill=\"" << colour
        << "\" fill-opacity=\"0.5\"/>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace gapkit
