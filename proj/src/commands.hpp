#pragma once

// End-to-end commands behind the CLI and the C API: fit, score, evaluate,
// ablate. Each command is deterministic for fixed inputs and seeds,
// independent of the thread count.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "bundle.hpp"
#include "config.hpp"
#include "evaluation.hpp"
#include "inference.hpp"
#include "neighbor_sim.hpp"
#include "tensor_store.hpp"

namespace npad {

struct FitArtifacts {
  ModelBundle model;
  WeightField weights;
};

// Channel selection, weighted field, aggregate field and centroid bank from
// raw (unreduced) nominal feature maps.
FitArtifacts fit_model(std::span<const FeatureMap> train_raw, const RunConfig& config);

// Reads the train entries of a manifest (honoring limit_train).
std::vector<FeatureMap> load_train_features(const DatasetManifest& manifest,
                                            const RunConfig& config);

struct ImageResult {
  AnomalyMap d1;
  AnomalyMap d2;
  AnomalyMap map;  // geometric mean of d1 and d2
  ImageScore score;
};

// Scores one channel-reduced feature map against a fitted model.
ImageResult score_reduced(const ModelBundle& model, const CentroidIndex& index,
                          const FeatureMap& reduced, std::size_t q, std::size_t k_top);

// A test image and its shift variants, in manifest order.
struct TestImage {
  std::string id;
  std::optional<int> label;
  std::optional<std::filesystem::path> mask;
  std::vector<std::pair<ShiftOffset, std::filesystem::path>> variants;
};

std::vector<TestImage> group_test_images(const DatasetManifest& manifest);

struct ScoredImage {
  std::string id;
  std::optional<int> label;
  AnomalyMap map;
  double score = 0.0;
};

// Scores a grouped test image, aggregating shift variants (manifest-supplied,
// or generated in feature space when config.feature_shift is set).
ScoredImage score_image(const ModelBundle& model, const CentroidIndex& index,
                        const TestImage& image, const DatasetManifest& manifest,
                        const RunConfig& config);

// Returns the bundle content hash.
std::string cmd_fit(const RunConfig& config, const std::filesystem::path& manifest_path,
                    const std::filesystem::path& out_dir);

// `overrides` is a JSON object applied on top of the bundle's configuration.
void cmd_score(const std::filesystem::path& bundle_dir,
               const std::filesystem::path& manifest_path, const std::string& overrides,
               const std::filesystem::path& out_dir);

struct EvaluationReport {
  std::optional<double> image_auroc;
  std::optional<double> pixel_auroc;
  std::optional<double> pro_score;
  std::string json;
};

EvaluationReport cmd_evaluate(const std::filesystem::path& scores_dir,
                              const std::filesystem::path& manifest_path,
                              const RunConfig& config, const std::filesystem::path& out_path,
                              const std::filesystem::path& curves_path = {});

struct AblationRow {
  std::string table;   // "modules" or "sampling"
  std::string method;
  double pixel_auroc = 0.0;
};

// Module combinations (Exper1..Exper5 and the full pipeline) and weighting
// schemes (uniform, two random seeds, similarity), scored by pixel AUROC on
// data_dir/train.json and data_dir/test.json.
std::vector<AblationRow> cmd_ablate(const RunConfig& config,
                                    const std::filesystem::path& data_dir,
                                    const std::filesystem::path& out_csv);

// Pooled pixel AUROC of feature-resolution maps against image-resolution
// masks (nominal images without masks count as all-zero).
double pixel_auroc(std::span<const AnomalyMap> maps, std::span<const Mask> masks);

Mask load_mask(const std::optional<std::filesystem::path>& path, std::size_t height,
               std::size_t width);

}  // namespace npad
