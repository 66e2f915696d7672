#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "feature_map.hpp"

namespace npad {

// Per-pixel multivariate Gaussians over an H x W grid with cached lower
// Cholesky factors (L L^T = covariance). Immutable once built.
class GaussianField {
 public:
  GaussianField() = default;

  // `covariance` must already include the epsilon * I term. Factorizes every
  // pixel; throws Numerical naming the first pixel that is not positive
  // definite.
  GaussianField(std::size_t height, std::size_t width, std::size_t dim, double epsilon,
                std::vector<double> mean, std::vector<double> covariance);

  // Adds epsilon * I to each scatter-derived covariance before factorizing.
  static GaussianField from_moments(std::size_t height, std::size_t width, std::size_t dim,
                                    double epsilon, std::vector<double> mean,
                                    std::vector<double> covariance_unregularized);

  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  std::size_t dim() const { return dim_; }
  double epsilon() const { return epsilon_; }

  std::span<const double> mean(std::size_t h, std::size_t w) const;
  std::span<const double> covariance(std::size_t h, std::size_t w) const;
  std::span<const double> cholesky(std::size_t h, std::size_t w) const;

  const std::vector<double>& means() const { return mean_; }
  const std::vector<double>& covariances() const { return covariance_; }

  // sqrt((x - mu)^T Sigma^-1 (x - mu)) via a triangular solve against L.
  double mahalanobis(std::span<const double> x, std::size_t h, std::size_t w) const;

  // Same without the finiteness check; callers validate inputs in bulk.
  double mahalanobis_unchecked(std::span<const double> x, std::size_t h, std::size_t w) const;

  // log det Sigma at a pixel, from the Cholesky diagonal.
  double log_det(std::size_t h, std::size_t w) const;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::size_t dim_ = 0;
  double epsilon_ = 0.0;
  std::vector<double> mean_;        // H*W*d
  std::vector<double> covariance_;  // H*W*d*d
  std::vector<double> chol_;        // H*W*d*d, lower triangle, zeros above
};

struct FitOptions {
  // With a single map, treat the sample scatter as zero (covariance = eps*I)
  // instead of rejecting the input. Used by few-shot fitting.
  bool allow_single_sample = false;
};

// Sample mean and (N-1)-normalized covariance plus epsilon * I at every pixel.
GaussianField fit_pixel_gaussians(std::span<const FeatureMap> train_features, double epsilon,
                                  FitOptions options = {});

// Bytes held by one field: mean + covariance + Cholesky factor.
std::size_t field_memory_bytes(std::size_t height, std::size_t width, std::size_t dim);

// Throws if feature maps differ in shape or the sequence is empty.
void check_same_shape(std::span<const FeatureMap> maps, const char* what);

}  // namespace npad
