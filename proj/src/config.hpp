#pragma once

#include <cstdint>
#include <string>

#include "inference.hpp"
#include "neighbor_sim.hpp"

namespace npad {

// Every tunable of a fit/score/evaluate/ablate run. Parsed from a JSON
// object; unknown keys are rejected so a typo never falls back to a default.
struct RunConfig {
  Hyperparameters hp;
  std::uint64_t seed = 0;
  std::size_t max_points = 100000;
  BcForm bc_form = BcForm::Simplified;
  WeightScheme weighting = WeightScheme::Similarity;
  bool nonzero_abs = false;
  bool medoid = false;
  bool feature_shift = false;  // shift feature maps when the manifest has no variants
  double smooth_sigma = 0.0;
  std::size_t limit_train = 0;  // 0 = all training entries
  double memory_budget_gb = 8.0;
  double fpr_cap = 0.3;
  std::size_t pro_thresholds = 200;

  // Execution-only settings; never echoed into outputs.
  int threads = 1;
  std::string dump_weights;

  static RunConfig from_json(const std::string& text);
  // Applies the keys present in `text` on top of this config.
  RunConfig merged(const std::string& text) const;
  void validate() const;
  // Effective model and evaluation parameters as a JSON object string.
  std::string echo() const;
};

const char* to_string(BcForm form);
const char* to_string(WeightScheme scheme);

}  // namespace npad
