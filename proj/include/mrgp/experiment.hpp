#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mrgp/evaluation.hpp"
#include "mrgp/model.hpp"
#include "mrgp/trainer.hpp"

namespace mrgp {

// Parses "R=30:d=2,R=1:d=2" into one spec per component. Throws
// InvalidConfig on anything else.
std::vector<ComponentSpec> parse_components(const std::string& text);
std::string format_components(const std::vector<ComponentSpec>& specs);

struct HoldoutConfig {
  std::vector<ComponentSpec> components;
  InitConfig init;
  TrainConfig train;
  double split = 0.5;  // fraction of rows used for training
  int predict_samples = 50;
};

struct HoldoutResult {
  TrainResult fit;
  Prediction prediction;  // normalized units, whole sequence
  Metrics test;           // rows after the split
  Eigen::Index train_rows = 0;
  bool finite = true;  // false if training or prediction produced non-finite values
};

// Normalizes with statistics of the leading `split` fraction, trains on
// those rows, free-runs the trained model from t = 0 over the full sequence
// and scores the remaining rows in normalized units.
HoldoutResult run_holdout(const Dataset& raw, const HoldoutConfig& cfg, std::uint64_t seed);

}  // namespace mrgp
