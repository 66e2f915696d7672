#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "feature_map.hpp"

namespace npad {

// Binary H x W mask with values in {0, 1}.
struct Mask {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> values;

  Mask() = default;
  Mask(std::size_t h, std::size_t w, std::vector<std::uint8_t> v);
  Mask(std::size_t h, std::size_t w) : height(h), width(w), values(h * w, 0) {}
};

// Bilinear resize with corner-aligned sampling.
AnomalyMap upsample_map(const AnomalyMap& map, std::size_t out_h, std::size_t out_w);

// Mann-Whitney AUROC; tied scores count one half.
double auroc(std::span<const double> scores, std::span<const std::uint8_t> labels);

struct RocCurve {
  std::vector<double> thresholds;  // descending; the first point is (0, 0)
  std::vector<double> tpr;
  std::vector<double> fpr;
};

RocCurve roc_curve(std::span<const double> scores, std::span<const std::uint8_t> labels);

struct Components {
  std::size_t count = 0;
  std::vector<std::int32_t> labels;  // 0 = background, 1..count in first-seen row-major order
};

// 8-connected labeling.
Components connected_components(const Mask& mask);

struct ProCurve {
  std::vector<double> thresholds;  // descending
  std::vector<double> fpr;         // starts at 0 with the empty prediction
  std::vector<double> overlap;
  double score = 0.0;  // area up to fpr_cap divided by fpr_cap
};

// Thresholds are n_thresholds evenly spaced quantiles (linear interpolation)
// of the pooled scores. Per threshold, overlap is the mean over every
// anomalous component in the dataset of |pred & component| / |component|
// and FPR is taken over all nominal pixels.
ProCurve pro_curve(std::span<const AnomalyMap> maps, std::span<const Mask> masks,
                   double fpr_cap = 0.3, std::size_t n_thresholds = 200);

double pro_score(std::span<const AnomalyMap> maps, std::span<const Mask> masks,
                 double fpr_cap = 0.3, std::size_t n_thresholds = 200);

}  // namespace npad
