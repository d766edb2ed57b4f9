#include "gapkit/report.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include <json.hpp>

#include "gapkit/pipeline.hpp"

namespace gapkit {

using Json = nlohmann::ordered_json;

namespace {

Json number(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

std::string fixed(double v, int decimals) {
  if (!std::isfinite(v)) return "n/a";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.*f", decimals, v);
  return buf;
}

std::string pad(const std::string& s, std::size_t width) {
  return s.size() >= width ? s : std::string(width - s.size(), ' ') + s;
}

}  // namespace

const std::vector<TableColumn>& table_columns() {
  static const std::vector<TableColumn> columns{
      {Scope::kPerDataset, Regime::kSameDist},
      {Scope::kPerDataset, Regime::kUnseenHparams},
      {Scope::kSingleModel, Regime::kSameDist},
      {Scope::kSingleModel, Regime::kUnseenHparams},
      {Scope::kSingleModel, Regime::kUnseenDatasets},
  };
  return columns;
}

std::string report_to_json(const EvalReport& r) {
  Json j;
  j["scope"] = to_string(r.scope);
  j["regime"] = to_string(r.regime);
  j["family"] = to_string(r.family);
  j["label_mode"] = to_string(r.label_mode);
  j["lambda"] = r.lambda;
  j["r2"] = number(r.r2);
  j["l1"] = number(r.l1);
  j["n"] = r.n;
  j["excluded_diverged"] = r.excluded_diverged;
  Json r2s = Json::array(), l1s = Json::array(), ntest = Json::array(), ntrain = Json::array(),
       skipped = Json::array();
  for (const auto& f : r.per_fold) {
    r2s.push_back(number(f.r2));
    l1s.push_back(number(f.l1));
    ntest.push_back(f.n_test);
    ntrain.push_back(f.n_train);
    skipped.push_back(f.skipped_models);
  }
  j["per_fold"] = {{"r2", r2s}, {"l1", l1s}, {"n_test", ntest}, {"n_train", ntrain},
                   {"skipped_models", skipped}};
  j["warnings"] = r.warnings;
  return j.dump();
}

std::string format_table(const std::vector<EvalReport>& cells, LabelMode label_mode) {
  constexpr std::size_t kCol = 8;
  std::ostringstream out;
  out << (label_mode == LabelMode::kGap ? "Predicting generalization gap with margin signatures"
                                        : "Predicting test accuracy from margin signatures")
      << "\n";
  out << pad("", 8) << " | " << pad("One model per dataset", 2 * (2 * kCol + 1) + 3) << " | "
      << "Single model\n";
  out << pad("", 8);
  const char* names[] = {"Same dist.", "Unseen hparams", "Same dist.", "Unseen hparams",
                         "Unseen datasets"};
  for (const char* name : names) out << " | " << pad(name, 2 * kCol + 1);
  out << "\n" << pad("Model", 8);
  for (std::size_t c = 0; c < table_columns().size(); ++c)
    out << " | " << pad("R^2", kCol) << " " << pad("L1", kCol);
  out << "\n" << std::string(8 + table_columns().size() * (2 * kCol + 4), '-') << "\n";
  for (GgpFamily family : {GgpFamily::kLinear, GgpFamily::kDnn, GgpFamily::kRnn}) {
    bool any = false;
    std::ostringstream row;
    const std::string label =
        family == GgpFamily::kLinear ? "Linear" : (family == GgpFamily::kDnn ? "DNN" : "RNN");
    row << pad(label, 8);
    for (const auto& col : table_columns()) {
      const EvalReport* cell = nullptr;
      for (const auto& r : cells)
        if (r.family == family && r.scope == col.scope && r.regime == col.regime) cell = &r;
      if (cell) any = true;
      row << " | " << pad(cell ? fixed(cell->r2, 3) : "-", kCol) << " "
          << pad(cell ? fixed(cell->l1, 4) : "-", kCol);
    }
    if (any) out << row.str() << "\n";
  }
  return out.str();
}

std::string calibration_csv(const EvalReport& report) {
  std::string out = "net_id,prediction,label\n";
  for (std::size_t i = 0; i < report.net_ids.size(); ++i)
    out += std::to_string(report.net_ids[i]) + "," + format_double(report.predictions[i]) + "," +
           format_double(report.labels[i]) + "\n";
  return out;
}

std::vector<EvalReport> run_report(const std::vector<TrainedNetRecord>& records, LabelMode label_mode,
                                   const std::vector<GgpFamily>& families,
                                   const GgpTrainerConfig& config) {
  std::vector<EvalReport> cells;
  for (GgpFamily family : families)
    for (const auto& col : table_columns())
      cells.push_back(evaluate_cell(records, col.scope, col.regime, family, label_mode, config));
  return cells;
}

}  // namespace gapkit
