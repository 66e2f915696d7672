#include "config.hpp"

#include <cmath>

#include "json.hpp"

namespace npad {

using nlohmann::json;

const char* to_string(BcForm form) { return form == BcForm::Full ? "full" : "simplified"; }

const char* to_string(WeightScheme scheme) {
  switch (scheme) {
    case WeightScheme::Similarity: return "similarity";
    case WeightScheme::Uniform: return "uniform";
    case WeightScheme::Random: return "random";
  }
  return "?";
}

namespace {

template <class T>
T get_as(const json& value, const std::string& key) {
  try {
    if constexpr (std::is_same_v<T, bool>) {
      if (!value.is_boolean()) throw std::invalid_argument("expected a boolean");
    } else if constexpr (std::is_integral_v<T>) {
      if (!value.is_number_integer()) throw std::invalid_argument("expected an integer");
      if constexpr (std::is_unsigned_v<T>)
        if (value.get<long long>() < 0) throw std::invalid_argument("expected a non-negative integer");
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!value.is_number()) throw std::invalid_argument("expected a number");
    } else {
      if (!value.is_string()) throw std::invalid_argument("expected a string");
    }
    return value.get<T>();
  } catch (const std::exception& e) {
    fail(ErrorCode::Config, "config key '" + key + "': " + e.what());
  }
}

void apply_keys(RunConfig& c, const json& doc) {
  if (!doc.is_object()) fail(ErrorCode::Config, "config must be a JSON object");
  for (const auto& [key, value] : doc.items()) {
    if (key == "p") c.hp.p = get_as<std::size_t>(value, key);
    else if (key == "q") c.hp.q = get_as<std::size_t>(value, key);
    else if (key == "r") c.hp.r = get_as<int>(value, key);
    else if (key == "gamma") c.hp.gamma = get_as<double>(value, key);
    else if (key == "epsilon") c.hp.epsilon = get_as<double>(value, key);
    else if (key == "d") c.hp.d = get_as<std::size_t>(value, key);
    else if (key == "k_top") c.hp.k_top = get_as<std::size_t>(value, key);
    else if (key == "ratio") c.hp.ratio = get_as<double>(value, key);
    else if (key == "seed") c.seed = get_as<std::uint64_t>(value, key);
    else if (key == "max_points") c.max_points = get_as<std::size_t>(value, key);
    else if (key == "bc_form") {
      const auto s = get_as<std::string>(value, key);
      if (s == "simplified") c.bc_form = BcForm::Simplified;
      else if (s == "full") c.bc_form = BcForm::Full;
      else fail(ErrorCode::Config, "bc_form must be 'simplified' or 'full'");
    } else if (key == "weighting") {
      const auto s = get_as<std::string>(value, key);
      if (s == "similarity") c.weighting = WeightScheme::Similarity;
      else if (s == "uniform") c.weighting = WeightScheme::Uniform;
      else if (s == "random") c.weighting = WeightScheme::Random;
      else fail(ErrorCode::Config, "weighting must be similarity, uniform or random");
    } else if (key == "nonzero_abs") c.nonzero_abs = get_as<bool>(value, key);
    else if (key == "medoid") c.medoid = get_as<bool>(value, key);
    else if (key == "feature_shift") c.feature_shift = get_as<bool>(value, key);
    else if (key == "smooth_sigma") c.smooth_sigma = get_as<double>(value, key);
    else if (key == "limit_train") c.limit_train = get_as<std::size_t>(value, key);
    else if (key == "memory_budget_gb") c.memory_budget_gb = get_as<double>(value, key);
    else if (key == "fpr_cap") c.fpr_cap = get_as<double>(value, key);
    else if (key == "pro_thresholds") c.pro_thresholds = get_as<std::size_t>(value, key);
    else if (key == "threads") c.threads = get_as<int>(value, key);
    else if (key == "dump_weights") c.dump_weights = get_as<std::string>(value, key);
    else fail(ErrorCode::Config, "unknown config key '" + key + "'");
  }
}

json parse(const std::string& text) {
  if (text.empty()) return json::object();
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorCode::Config, std::string("config is not valid JSON: ") + e.what());
  }
}

}  // namespace

RunConfig RunConfig::from_json(const std::string& text) { return RunConfig{}.merged(text); }

RunConfig RunConfig::merged(const std::string& text) const {
  RunConfig out = *this;
  apply_keys(out, parse(text));
  out.validate();
  return out;
}

void RunConfig::validate() const {
  auto check = [](bool ok, const char* message) {
    if (!ok) fail(ErrorCode::Config, message);
  };
  check(hp.p >= 1, "p must be at least 1");
  check(hp.q >= 1, "q must be at least 1");
  check(hp.r >= 0, "r must be non-negative");
  check(hp.gamma > 0.0 && std::isfinite(hp.gamma), "gamma must be positive");
  check(hp.epsilon > 0.0 && std::isfinite(hp.epsilon), "epsilon must be positive");
  check(hp.d >= 1, "d must be at least 1");
  check(hp.k_top >= 1, "k_top must be at least 1");
  check(hp.ratio > 0.0 && hp.ratio <= 1.0, "ratio must lie in (0, 1]");
  check(max_points >= 1, "max_points must be positive");
  check(smooth_sigma >= 0.0, "smooth_sigma must be non-negative");
  check(memory_budget_gb > 0.0, "memory_budget_gb must be positive");
  check(fpr_cap > 0.0 && fpr_cap <= 1.0, "fpr_cap must lie in (0, 1]");
  check(pro_thresholds >= 2, "pro_thresholds must be at least 2");
  check(threads >= 1, "threads must be at least 1");
}

std::string RunConfig::echo() const {
  json doc = {
      {"p", hp.p},
      {"q", hp.q},
      {"r", hp.r},
      {"gamma", hp.gamma},
      {"epsilon", hp.epsilon},
      {"d", hp.d},
      {"k_top", hp.k_top},
      {"ratio", hp.ratio},
      {"seed", seed},
      {"max_points", max_points},
      {"bc_form", to_string(bc_form)},
      {"weighting", to_string(weighting)},
      {"nonzero_abs", nonzero_abs},
      {"medoid", medoid},
      {"feature_shift", feature_shift},
      {"smooth_sigma", smooth_sigma},
      {"limit_train", limit_train},
      {"memory_budget_gb", memory_budget_gb},
      {"fpr_cap", fpr_cap},
      {"pro_thresholds", pro_thresholds},
  };
  return doc.dump();
}

}  // namespace npad
