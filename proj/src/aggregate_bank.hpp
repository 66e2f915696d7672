#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "feature_map.hpp"
#include "gaussian_field.hpp"

namespace npad {

// Mean of the feature vectors over each pixel's clipped neighborhood (an
// adaptive average pool with stride 1).
FeatureMap aggregate_features(const FeatureMap& fm, std::size_t p);

// Plain Gaussian field over aggregated training features.
GaussianField fit_aggregate_field(std::span<const FeatureMap> train_features, std::size_t p,
                                  double epsilon, FitOptions options = {});

struct CentroidBank {
  std::size_t dim = 0;
  std::vector<double> centroids;  // K x dim, row-major
  double ratio = 0.0;
  std::uint64_t seed = 0;
  double inertia = 0.0;
  std::vector<double> inertia_history;  // after each assignment step
  std::size_t iterations = 0;
  std::size_t pool_size = 0;

  std::size_t size() const { return dim == 0 ? 0 : centroids.size() / dim; }
  std::span<const double> centroid(std::size_t k) const { return {centroids.data() + k * dim, dim}; }
};

struct BankOptions {
  double ratio = 0.1;
  std::uint64_t seed = 0;
  std::size_t max_points = 100000;
  std::size_t max_iterations = 100;
  double tolerance = 1e-4;
  bool medoid = false;  // snap each centroid to its nearest pool member
};

// k-means (k-means++ seeding, Lloyd iterations) over every pixel vector of
// the aggregated training maps, subsampled to at most max_points.
// K = max(1, ceil(ratio * pool size)).
CentroidBank build_centroid_bank(std::span<const FeatureMap> train_features_aggregated,
                                 const BankOptions& options);

// Same, over an explicit point pool (row-major n x dim).
CentroidBank build_centroid_bank(std::vector<double> pool, std::size_t dim,
                                 const BankOptions& options);

// Exact minimum Euclidean distance from v to the bank. Centroids are scanned
// outward from the one whose norm is closest to |v|; the scan stops once the
// norm gap alone exceeds the best distance found.
class CentroidIndex {
 public:
  explicit CentroidIndex(const CentroidBank& bank);

  double nearest_distance(std::span<const double> v) const;
  // Index of the nearest centroid (lowest index on ties) and squared distance.
  std::pair<std::size_t, double> nearest(std::span<const double> v) const;

 private:
  const CentroidBank* bank_;
  std::vector<std::size_t> order_;  // centroid ids sorted by norm
  std::vector<double> norms_;       // sorted
};

double nearest_centroid_distance(std::span<const double> v, const CentroidBank& bank);

}  // namespace npad
