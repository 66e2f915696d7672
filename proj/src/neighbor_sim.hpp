#pragma once

// Similarity-weighted per-pixel Gaussians. Each pixel's distribution is
// re-estimated from the features of its square neighborhood, with every
// neighbor weighted by exp(-BC / gamma), where BC compares the neighbor's
// plain Gaussian against the center pixel's.

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "feature_map.hpp"
#include "gaussian_field.hpp"

namespace npad {

struct Neighborhood {
  Pixel center;
  std::size_t radius = 0;
  std::vector<Pixel> members;  // row-major, clipped to the grid
};

// All pixels within Chebyshev distance floor(p/2) of (h, w) that lie in an
// H x W grid. Even p uses the same radius as p + 1.
Neighborhood neighborhood(std::size_t h, std::size_t w, std::size_t p, std::size_t height,
                          std::size_t width);

enum class BcForm { Simplified, Full };

// Bhattacharyya term between N(mean1, cov1) and N(mean2, cov2) with
// Sigma' = (cov1 + cov2) / 2. Simplified keeps only the Mahalanobis part,
// (1/8) dmu^T Sigma'^-1 dmu; Full adds (1/2) log(det Sigma' / sqrt(det1 det2)).
// Covariances are dense row-major d x d.
double bhattacharyya_bc(std::span<const double> mean1, std::span<const double> cov1,
                        std::span<const double> mean2, std::span<const double> cov2,
                        BcForm form = BcForm::Simplified);

// exp(-bc / gamma).
double similarity_weight(double bc, double gamma);

enum class WeightScheme {
  Similarity,  // exp(-BC / gamma) against the center pixel
  Uniform,     // 1 / |neighborhood|
  Random,      // seeded uniform draws in (0, 1], normalized
};

struct WeightOptions {
  WeightScheme scheme = WeightScheme::Similarity;
  BcForm form = BcForm::Simplified;
  std::uint64_t seed = 0;  // Random scheme only
};

// Normalized neighbor weights for every pixel of a grid.
class WeightField {
 public:
  WeightField() = default;
  WeightField(std::size_t height, std::size_t width, std::vector<std::size_t> offsets,
              std::vector<Pixel> members, std::vector<double> weights);

  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }

  std::span<const Pixel> members(std::size_t h, std::size_t w) const;
  std::span<const double> weights(std::size_t h, std::size_t w) const;

  // {"height", "width", "pixels": [{"h", "w", "members": [[h, w, weight], ...]}]}
  std::string to_json() const;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<std::size_t> offsets_;  // pixels + 1
  std::vector<Pixel> members_;
  std::vector<double> weights_;
};

WeightField compute_weights(const GaussianField& base, std::size_t p, double gamma,
                            const WeightOptions& options = {});

// Weighted mean (1/N) sum_i sum_a m'_a e_i^a and covariance
// sum_i sum_a m'_a (e_i^a - mu)(e_i^a - mu)^T / (N - sum_a m'_a^2), plus
// epsilon * I.
GaussianField fit_with_weights(std::span<const FeatureMap> train_features,
                               const WeightField& weights, double epsilon);

struct WeightedFit {
  WeightField weights;
  GaussianField field;
};

// `base` must be the plain field fitted on the same train_features.
WeightedFit fit_weighted_field(std::span<const FeatureMap> train_features,
                               const GaussianField& base, std::size_t p, double gamma,
                               double epsilon, const WeightOptions& options = {});

}  // namespace npad
