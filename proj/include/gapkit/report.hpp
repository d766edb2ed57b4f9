#pragma once

#include <string>
#include <vector>

#include "gapkit/evalkit.hpp"
#include "gapkit/records.hpp"

namespace gapkit {

// The five table columns: per-dataset {same_dist, unseen_hparams}, then
// single-model {same_dist, unseen_hparams, unseen_datasets}.
struct TableColumn {
  Scope scope;
  Regime regime;
};
const std::vector<TableColumn>& table_columns();

// One JSON object per cell: scope, regime, family, label_mode, lambda, r2, l1,
// n, excluded_diverged, per_fold arrays and warnings. Full precision; NaN as null.
std::string report_to_json(const EvalReport& report);

// Text table, one row per family and an (R^2, L1) pair per column. R^2 is
// rounded to 3 decimals and L1 to 4.
std::string format_table(const std::vector<EvalReport>& cells, LabelMode label_mode);

// "net_id,prediction,label" rows for calibration plots.
std::string calibration_csv(const EvalReport& report);

// Every (family x column) cell for the given records.
std::vector<EvalReport> run_report(const std::vector<TrainedNetRecord>& records, LabelMode label_mode,
                                   const std::vector<GgpFamily>& families,
                                   const GgpTrainerConfig& config);

}  // namespace gapkit
