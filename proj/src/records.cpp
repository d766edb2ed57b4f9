#include "gapkit/records.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "gapkit/error.hpp"

namespace gapkit {

using Json = nlohmann::ordered_json;

namespace {

Json spec_json(const SpiralSpec& s) {
  return Json{{"loops", s.loops},
              {"noise_sigma", s.noise_sigma},
              {"num_train", s.num_train},
              {"data_seed", s.data_seed}};
}

SpiralSpec spec_from(const Json& j) {
  SpiralSpec s;
  s.loops = j.at("loops").get<int>();
  s.noise_sigma = j.at("noise_sigma").get<double>();
  s.num_train = j.at("num_train").get<int>();
  s.data_seed = j.at("data_seed").get<std::int64_t>();
  return s;
}

Json hparams_json(const NetHparams& hp) {
  return Json{{"hparam_id", hp.hparam_id},
              {"layer_widths", hp.layer_widths},
              {"optimizer", to_string(hp.optimizer)},
              {"learning_rate", hp.learning_rate},
              {"batch_size", hp.batch_size},
              {"batch_norm", hp.batch_norm},
              {"dropout_rate", hp.dropout_rate}};
}

NetHparams hparams_from(const Json& j) {
  NetHparams hp;
  hp.hparam_id = j.at("hparam_id").get<int>();
  hp.layer_widths = j.at("layer_widths").get<std::vector<int>>();
  hp.optimizer = optimizer_from_string(j.at("optimizer").get<std::string>());
  hp.learning_rate = j.at("learning_rate").get<double>();
  hp.batch_size = j.at("batch_size").get<int>();
  hp.batch_norm = j.at("batch_norm").get<bool>();
  hp.dropout_rate = j.at("dropout_rate").get<double>();
  return hp;
}

Json signature_rows(const SignatureMatrix& sig) {
  Json rows = Json::array();
  for (const auto& r : sig.rows) rows.push_back(r);
  return rows;
}

SignatureMatrix signature_from(const Json& rows, double lambda) {
  SignatureMatrix sig;
  sig.lambda = lambda;
  for (const auto& r : rows) sig.rows.push_back(r.get<SignatureRow>());
  return sig;
}

Json nullable(double v, bool null) { return null ? Json(nullptr) : Json(v); }

double number_or_nan(const Json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

}  // namespace

std::string record_to_json(const TrainedNetRecord& r) {
  Json j;
  j["net_id"] = r.net_id;
  j["variation_id"] = r.variation_id;
  j["spec"] = spec_json(r.spec);
  j["hparams"] = hparams_json(r.hparams);
  j["train_accuracy"] = nullable(r.train_accuracy, r.diverged);
  j["test_accuracy"] = nullable(r.test_accuracy, r.diverged);
  j["gap"] = nullable(r.gap, r.diverged);
  j["diverged"] = r.diverged;
  j["steps_run"] = r.steps_run;
  if (r.signature) {
    j["lambda"] = r.signature->lambda;
    j["signature"] = signature_rows(*r.signature);
  }
  if (r.signature_independent) {
    j["lambda_independent"] = r.signature_independent->lambda;
    j["signature_independent"] = signature_rows(*r.signature_independent);
  }
  j["engine_version"] = r.engine_version;
  return j.dump();
}

TrainedNetRecord record_from_json(const std::string& line) {
  const Json j = Json::parse(line);
  TrainedNetRecord r;
  r.net_id = j.at("net_id").get<std::int64_t>();
  r.variation_id = j.at("variation_id").get<int>();
  r.spec = spec_from(j.at("spec"));
  r.hparams = hparams_from(j.at("hparams"));
  r.train_accuracy = number_or_nan(j.at("train_accuracy"));
  r.test_accuracy = number_or_nan(j.at("test_accuracy"));
  r.gap = number_or_nan(j.at("gap"));
  r.diverged = j.at("diverged").get<bool>();
  r.steps_run = j.value("steps_run", 0);
  if (j.contains("signature"))
    r.signature = signature_from(j["signature"], j.at("lambda").get<double>());
  if (j.contains("signature_independent"))
    r.signature_independent =
        signature_from(j["signature_independent"], j.at("lambda_independent").get<double>());
  r.engine_version = j.value("engine_version", std::string{});
  if (r.diverged == r.signature.has_value())
    throw DomainError("record " + std::to_string(r.net_id) +
                      ": signature must be present exactly when the net did not diverge");
  return r;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw std::runtime_error("failed writing '" + path.string() + "'");
}

void write_records(const std::filesystem::path& path, const std::vector<TrainedNetRecord>& records) {
  std::string text;
  for (const auto& r : records) {
    text += record_to_json(r);
    text += '\n';
  }
  write_text_file(path, text);
}

std::vector<TrainedNetRecord> read_records(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open record store '" + path.string() + "'");
  std::vector<TrainedNetRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(record_from_json(line));
    } catch (const std::exception& e) {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

void write_dataset(const std::filesystem::path& path, const Dataset& data, Purpose purpose) {
  Json header{{"format", "gapkit-spiral"},
              {"spec", spec_json(data.spec)},
              {"purpose", purpose == Purpose::kTrain ? "train" : "test"},
              {"n", data.size()}};
  std::string text = header.dump() + "\n";
  for (const auto& p : data.points) {
    text += Json{{"x", p.x}, {"y", p.y}, {"label", p.label}}.dump();
    text += '\n';
  }
  write_text_file(path, text);
}

Dataset read_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path.string() + ": empty file");
  const Json header = Json::parse(line);
  if (header.value("format", "") != "gapkit-spiral")
    throw std::runtime_error(path.string() + ": missing gapkit-spiral header");
  Dataset data;
  data.spec = spec_from(header.at("spec"));
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const Json j = Json::parse(line);
    data.points.push_back({j.at("x").get<double>(), j.at("y").get<double>(), j.at("label").get<int>()});
  }
  return data;
}

std::string hparams_to_json(const NetHparams& hp) { return hparams_json(hp).dump(); }

NetHparams hparams_from_json(const std::string& line) { return hparams_from(Json::parse(line)); }

std::string checkpoint_to_json(std::int64_t net_id, const Network& net) {
  Json shapes = Json::array();
  const int L = net.depth();
  for (int j = 1; j <= L + 1; ++j) {
    shapes.push_back({{"name", "kernel_" + std::to_string(j)}, {"shape", {net.width(j - 1), net.width(j)}}});
    shapes.push_back({{"name", "bias_" + std::to_string(j)}, {"shape", {net.width(j)}}});
    if (net.hparams().batch_norm && j <= L) {
      shapes.push_back({{"name", "gamma_" + std::to_string(j)}, {"shape", {net.width(j)}}});
      shapes.push_back({{"name", "beta_" + std::to_string(j)}, {"shape", {net.width(j)}}});
    }
  }
  Json j;
  j["format"] = "gapkit-checkpoint";
  j["net_id"] = net_id;
  j["hparams"] = hparams_json(net.hparams());
  j["shape_manifest"] = shapes;
  j["params"] = std::vector<double>(net.parameters().begin(), net.parameters().end());
  j["moving_statistics"] =
      std::vector<double>(net.moving_statistics().begin(), net.moving_statistics().end());
  return j.dump();
}

Network checkpoint_from_json(const std::string& text) {
  const Json j = Json::parse(text);
  if (j.value("format", "") != "gapkit-checkpoint") throw DomainError("not a gapkit checkpoint");
  return Network::from_parameters(hparams_from(j.at("hparams")),
                                  j.at("params").get<std::vector<double>>(),
                                  j.at("moving_statistics").get<std::vector<double>>());
}

}  // namespace gapkit
