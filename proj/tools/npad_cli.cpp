// npad: fit, score, evaluate, synth and ablate from the command line.
// A JSON config file supplies defaults; flags given on the command line win.

#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "npad/npad.h"

using nlohmann::json;

namespace {

struct CliError {
  int status;
};

void check(npad_status status) {
  if (status != NPAD_OK) {
    std::cerr << "error: " << npad_status_string(status) << ": " << npad_last_error() << "\n";
    throw CliError{static_cast<int>(status)};
  }
}

json read_json_file(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream in(path);
  if (!in) {
    std::cerr << "error: cannot open config '" << path << "'\n";
    throw CliError{NPAD_ERR_IO};
  }
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    std::cerr << "error: config '" << path << "' is not valid JSON: " << e.what() << "\n";
    throw CliError{NPAD_ERR_CONFIG};
  }
}

// Flag overrides, applied only when the flag was given.
struct Overrides {
  json values = json::object();
  std::vector<std::function<void()>> setters;

  template <class T>
  void add(CLI::App* app, const std::string& flag, const std::string& key, const std::string& help) {
    auto value = std::make_shared<T>();
    auto* opt = app->add_option(flag, *value, help);
    setters.push_back([this, value, opt, key] {
      if (opt->count() > 0) values[key] = *value;
    });
  }

  void add_flag(CLI::App* app, const std::string& flag, const std::string& key, const std::string& help) {
    auto* opt = app->add_flag(flag, help);
    setters.push_back([this, opt, key] {
      if (opt->count() > 0) values[key] = true;
    });
  }

  json merged_onto(json base) {
    for (auto& s : setters) s();
    for (const auto& [k, v] : values.items()) base[k] = v;
    return base;
  }
};

void add_model_flags(CLI::App* app, Overrides& o) {
  o.add<std::size_t>(app, "--p", "p", "Neighborhood size for training");
  o.add<std::size_t>(app, "--d", "d", "Number of channels kept");
  o.add<double>(app, "--gamma", "gamma", "Similarity balancing parameter");
  o.add<double>(app, "--epsilon", "epsilon", "Covariance regularizer");
  o.add<double>(app, "--ratio", "ratio", "Centroid count as a fraction of the pool");
  o.add<std::uint64_t>(app, "--seed", "seed", "Seed for k-means and random weights");
  o.add<std::size_t>(app, "--max-points", "max_points", "k-means pool subsample size");
  o.add<std::string>(app, "--bc-form", "bc_form", "Bhattacharyya form: simplified or full");
  o.add<std::string>(app, "--weighting", "weighting", "similarity, uniform or random");
  o.add_flag(app, "--nonzero-abs", "nonzero_abs", "Count |x| > 0 for channel selection");
  o.add_flag(app, "--medoid", "medoid", "Snap centroids to the nearest pool member");
  o.add<std::size_t>(app, "--limit-train", "limit_train", "Use only the first N train entries");
  o.add<double>(app, "--memory-budget-gb", "memory_budget_gb", "Warn above this projected memory");
}

void add_inference_flags(CLI::App* app, Overrides& o) {
  o.add<std::size_t>(app, "--q", "q", "Neighborhood size for inference");
  o.add<int>(app, "--r", "r", "Shift size");
  o.add<std::size_t>(app, "--k-top", "k_top", "Top-k pixels for the image score");
  o.add_flag(app, "--feature-shift", "feature_shift",
             "Approximate shift variants in feature space when the manifest has none");
  o.add<double>(app, "--smooth-sigma", "smooth_sigma", "Gaussian smoothing of anomaly maps");
}

void add_eval_flags(CLI::App* app, Overrides& o) {
  o.add<double>(app, "--fpr-cap", "fpr_cap", "FPR integration limit for PRO");
  o.add<std::size_t>(app, "--pro-thresholds", "pro_thresholds", "Number of PRO thresholds");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"N-pad anomaly detection over feature-map tensors"};
  app.require_subcommand(1);
  app.set_version_flag("--version", npad_version());

  int threads = 1;
  std::string config_path, manifest, out, bundle, scores, data, curves, dump_weights;

  auto* fit = app.add_subcommand("fit", "Fit a model bundle from nominal train entries");
  Overrides fit_o;
  fit->add_option("--config", config_path, "JSON config file");
  fit->add_option("--manifest", manifest, "Manifest with train entries")->required();
  fit->add_option("--out", out, "Bundle directory")->required();
  fit->add_option("--dump-weights", dump_weights, "Write the similarity weights as JSON");
  add_model_flags(fit, fit_o);
  add_inference_flags(fit, fit_o);
  add_eval_flags(fit, fit_o);

  auto* score = app.add_subcommand("score", "Score test entries with a bundle");
  Overrides score_o;
  score->add_option("--bundle", bundle, "Bundle directory")->required();
  score->add_option("--manifest", manifest, "Manifest with test entries")->required();
  score->add_option("--out", out, "Output directory")->required();
  add_inference_flags(score, score_o);

  auto* evaluate = app.add_subcommand("evaluate", "Compute AUROC and PRO for a score directory");
  Overrides eval_o;
  evaluate->add_option("--config", config_path, "JSON config file");
  evaluate->add_option("--scores", scores, "Score directory")->required();
  evaluate->add_option("--manifest", manifest, "Manifest with test entries")->required();
  evaluate->add_option("--out", out, "Report path (JSON)");
  evaluate->add_option("--curves", curves, "Write ROC and PRO curves as CSV");
  add_eval_flags(evaluate, eval_o);

  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
  Overrides synth_o;
  synth->add_option("--config", config_path, "JSON synthetic config file");
  synth->add_option("--out", out, "Dataset directory")->required();
  synth_o.add<std::size_t>(synth, "--n-train", "n_train", "Nominal train maps");
  synth_o.add<std::size_t>(synth, "--n-test-nominal", "n_test_nominal", "Nominal test maps");
  synth_o.add<std::size_t>(synth, "--n-test-anomalous", "n_test_anomalous", "Anomalous test maps");
  synth_o.add<std::size_t>(synth, "--height", "height", "Feature map height");
  synth_o.add<std::size_t>(synth, "--width", "width", "Feature map width");
  synth_o.add<std::size_t>(synth, "--channels", "channels", "Channels");
  synth_o.add<std::size_t>(synth, "--image-scale", "image_scale", "Image pixels per feature pixel");
  synth_o.add<double>(synth, "--amplitude", "amplitude", "Anomaly shift in standard deviations");
  synth_o.add<int>(synth, "--jitter", "jitter", "Per-image misalignment in feature pixels");
  synth_o.add<int>(synth, "--shift-r", "shift_r", "Also emit shifted test variants for this r");
  synth_o.add<std::uint64_t>(synth, "--seed", "seed", "Random seed");

  auto* ablate = app.add_subcommand("ablate", "Run the module and weighting ablations");
  Overrides ablate_o;
  ablate->add_option("--config", config_path, "JSON config file");
  ablate->add_option("--data", data, "Directory with train.json and test.json")->required();
  ablate->add_option("--out", out, "CSV output path")->required();
  add_model_flags(ablate, ablate_o);
  add_inference_flags(ablate, ablate_o);

  for (auto* sub : {fit, score, evaluate, ablate})
    sub->add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*fit) {
      auto cfg = fit_o.merged_onto(read_json_file(config_path));
      cfg["threads"] = threads;
      if (!dump_weights.empty()) cfg["dump_weights"] = dump_weights;
      char hash[65] = {0};
      check(npad_fit(cfg.dump().c_str(), manifest.c_str(), out.c_str(), hash));
      std::cout << "bundle " << out << " content_hash " << hash << "\n";
    } else if (*score) {
      auto cfg = score_o.merged_onto(json::object());
      cfg["threads"] = threads;
      check(npad_score(bundle.c_str(), manifest.c_str(), cfg.dump().c_str(), out.c_str()));
      std::cout << "scores written to " << out << "\n";
    } else if (*evaluate) {
      auto cfg = eval_o.merged_onto(read_json_file(config_path));
      cfg["threads"] = threads;
      char* report = nullptr;
      check(npad_evaluate(scores.c_str(), manifest.c_str(), cfg.dump().c_str(),
                          out.empty() ? nullptr : out.c_str(),
                          curves.empty() ? nullptr : curves.c_str(), &report));
      const auto doc = json::parse(report);
      npad_string_free(report);
      for (const char* key : {"image_auroc", "pixel_auroc", "pro_score"})
        std::cout << key << " " << (doc[key].is_null() ? std::string("n/a") : doc[key].dump()) << "\n";
    } else if (*synth) {
      auto cfg = synth_o.merged_onto(read_json_file(config_path));
      check(npad_synth(cfg.dump().c_str(), out.c_str()));
      std::cout << "dataset written to " << out << "\n";
    } else if (*ablate) {
      auto cfg = ablate_o.merged_onto(read_json_file(config_path));
      cfg["threads"] = threads;
      char* rows = nullptr;
      check(npad_ablate(cfg.dump().c_str(), data.c_str(), out.c_str(), &rows));
      const auto doc = json::parse(rows);
      npad_string_free(rows);
      std::string table;
      for (const auto& row : doc) {
        if (row["table"] != table) {
          table = row["table"];
          std::cout << (table == "modules" ? "Module combinations" : "Weighting schemes")
                    << " (pixel AUROC)\n";
        }
        std::printf("  %-22s %.4f\n", row["method"].get<std::string>().c_str(),
                    row["pixel_auroc"].get<double>());
      }
    }
  } catch (const CliError& e) {
    return e.status;
  }
  return 0;
}
