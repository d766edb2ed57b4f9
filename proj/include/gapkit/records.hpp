#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "gapkit/margin.hpp"
#include "gapkit/spiral.hpp"
#include "gapkit/tinynet.hpp"

namespace gapkit {

inline constexpr const char* kEngineVersion = "gapkit-1.0.0";

// Outcome of one training unit. Diverged records carry no accuracies and no
// signatures (NaN in memory, null on disk).
struct TrainedNetRecord {
  std::int64_t net_id = 0;
  int variation_id = 0;
  SpiralSpec spec;
  NetHparams hparams;
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
  double gap = 0.0;
  bool diverged = false;
  int steps_run = 0;
  // Signature at the dataset-dependent lambda, and at the dataset-independent
  // lambda for the single-model DNN/RNN predictors.
  std::optional<SignatureMatrix> signature;
  std::optional<SignatureMatrix> signature_independent;
  std::string engine_version = kEngineVersion;
};

// One JSON object per line, no trailing newline.
std::string record_to_json(const TrainedNetRecord& record);
TrainedNetRecord record_from_json(const std::string& line);

void write_records(const std::filesystem::path& path, const std::vector<TrainedNetRecord>& records);
// Throws std::runtime_error naming the path when the file is missing or malformed.
std::vector<TrainedNetRecord> read_records(const std::filesystem::path& path);

// Spiral datasets: a header line {"format":"gapkit-spiral","spec":{...},...}
// then one {"x","y","label"} object per point.
void write_dataset(const std::filesystem::path& path, const Dataset& data, Purpose purpose);
Dataset read_dataset(const std::filesystem::path& path);

// Hparam lists: one JSON object per line.
std::string hparams_to_json(const NetHparams& hp);
NetHparams hparams_from_json(const std::string& line);

// Weight checkpoint: hparams, a shape manifest and flat parameter arrays.
std::string checkpoint_to_json(std::int64_t net_id, const Network& net);
Network checkpoint_from_json(const std::string& text);

// Shortest decimal form that round-trips to the same double.
std::string format_double(double v);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace gapkit
