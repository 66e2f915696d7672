#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "aggregate_bank.hpp"
#include "channel_reduce.hpp"
#include "feature_map.hpp"
#include "gaussian_field.hpp"
#include "tensor_store.hpp"

namespace npad {

struct Hyperparameters {
  std::size_t p = 3;        // training neighborhood
  std::size_t q = 2;        // inference neighborhood
  int r = 4;                // shift size
  double gamma = 0.25;
  double epsilon = 0.01;
  std::size_t d = 550;      // requested channel count (clamped to C)
  std::size_t k_top = 5;
  double ratio = 0.1;
};

struct ModelBundle {
  ChannelSelection selection;
  GaussianField weighted;   // similarity-weighted field
  GaussianField aggregate;  // field over aggregated features
  CentroidBank bank;
  Hyperparameters hp;
};

// Minimum Mahalanobis distance from e^(h,w) to the weighted Gaussians of
// every pixel in its q-neighborhood.
AnomalyMap score_d1(const FeatureMap& fm, const GaussianField& weighted, std::size_t q);

// Mahalanobis distance of the p-aggregated test features to the aggregate
// field.
AnomalyMap score_d2(const FeatureMap& fm, const GaussianField& aggregate, std::size_t p);

// Pointwise geometric mean.
AnomalyMap combine_maps(const AnomalyMap& d1, const AnomalyMap& d2);

struct ImageScore {
  double value = 0.0;
  std::vector<Pixel> top_pixels;  // k_top largest D1, descending (row-major on ties)
  std::vector<double> e_k;        // nearest-centroid distances, ascending
  std::vector<double> q_k;        // top D1 values, ascending
};

// Sum over i of sort(E_k)[i] * sort(Q_k)[i].
ImageScore image_score(const AnomalyMap& d1, const FeatureMap& fm_aggregated,
                       const CentroidIndex& bank, std::size_t k_top);
ImageScore image_score(const AnomalyMap& d1, const FeatureMap& fm_aggregated,
                       const CentroidBank& bank, std::size_t k_top);

// All (a, b) with a, b in [-floor(r/2), floor(r/2)], row-major.
std::vector<ShiftOffset> shift_offsets(int r);

// out[h - a][w - b] = map[h][w] for a fractional (a, b) via bilinear
// sampling with edge replication. Integer offsets copy values exactly.
FeatureMap shift_feature_map(const FeatureMap& fm, double a, double b);

// Undo a shift on a score map: out[h][w] = map[h - a][w - b], replicating
// the edge.
AnomalyMap translate_back(const AnomalyMap& map, int a, int b);

struct ShiftVariant {
  ShiftOffset offset;  // image-scale pixels
  AnomalyMap map;
  double score = 0.0;
};

struct ShiftedResult {
  AnomalyMap map;
  double score = 0.0;
};

// Means of the variant maps (each translated back by its offset converted to
// feature pixels, truncated toward zero) and of the variant scores.
// feature_per_image_* convert image offsets to feature offsets.
ShiftedResult shifted_manifest_scores(std::span<const ShiftVariant> variants, int r,
                                      double feature_per_image_h = 1.0,
                                      double feature_per_image_w = 1.0);

// Separable Gaussian blur with edge replication, kernel radius ceil(4 sigma).
AnomalyMap gaussian_smooth(const AnomalyMap& map, double sigma);

}  // namespace npad
