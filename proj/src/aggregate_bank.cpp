#include "aggregate_bank.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "neighbor_sim.hpp"
#include "parallel.hpp"
#include "random.hpp"

namespace npad {

namespace {

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double sum = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double diff = a[k] - b[k];
    sum += diff * diff;
  }
  return sum;
}

double norm_of(std::span<const double> v) {
  double sum = 0.0;
  for (double x : v) sum += x * x;
  return std::sqrt(sum);
}

}  // namespace

FeatureMap aggregate_features(const FeatureMap& fm, std::size_t p) {
  require(p >= 1, ErrorCode::Config, "neighborhood size p must be at least 1");
  const std::size_t height = fm.height();
  const std::size_t width = fm.width();
  const std::size_t d = fm.channels();
  FeatureMap out(height, width, d);
  parallel_for(height * width, [&](std::size_t px) {
    const auto n = neighborhood(px / width, px % width, p, height, width);
    auto dst = out.at(px / width, px % width);
    for (const auto& m : n.members) {
      const auto src = fm.at(m.h, m.w);
      for (std::size_t k = 0; k < d; ++k) dst[k] += src[k];
    }
    const double count = static_cast<double>(n.members.size());
    for (std::size_t k = 0; k < d; ++k) dst[k] /= count;
  });
  return out;
}

GaussianField fit_aggregate_field(std::span<const FeatureMap> train_features, std::size_t p,
                                  double epsilon, FitOptions options) {
  check_same_shape(train_features, "fit_aggregate_field");
  std::vector<FeatureMap> aggregated;
  aggregated.reserve(train_features.size());
  for (const auto& fm : train_features) aggregated.push_back(aggregate_features(fm, p));
  return fit_pixel_gaussians(aggregated, epsilon, options);
}

CentroidIndex::CentroidIndex(const CentroidBank& bank) : bank_(&bank) {
  const std::size_t k = bank.size();
  std::vector<double> norms(k);
  for (std::size_t i = 0; i < k; ++i) norms[i] = norm_of(bank.centroid(i));
  order_.resize(k);
  std::iota(order_.begin(), order_.end(), 0);
  std::stable_sort(order_.begin(), order_.end(),
                   [&](std::size_t a, std::size_t b) { return norms[a] < norms[b]; });
  norms_.resize(k);
  for (std::size_t i = 0; i < k; ++i) norms_[i] = norms[order_[i]];
}

std::pair<std::size_t, double> CentroidIndex::nearest(std::span<const double> v) const {
  require(bank_->size() > 0, ErrorCode::InvalidArgument, "centroid bank is empty");
  require(v.size() == bank_->dim, ErrorCode::ShapeMismatch,
          "vector length does not match the centroid bank");
  const double vnorm = norm_of(v);
  const std::size_t k = norms_.size();
  std::size_t right = static_cast<std::size_t>(
      std::lower_bound(norms_.begin(), norms_.end(), vnorm) - norms_.begin());
  std::size_t left = right;  // next candidate on the left is left - 1

  std::size_t best = std::numeric_limits<std::size_t>::max();
  double best_sq = std::numeric_limits<double>::infinity();
  double best_dist = std::numeric_limits<double>::infinity();

  auto visit = [&](std::size_t pos) {
    const std::size_t id = order_[pos];
    const double sq = squared_distance(v, bank_->centroid(id));
    if (sq < best_sq || (sq == best_sq && id < best)) {
      best_sq = sq;
      best = id;
      best_dist = std::sqrt(sq);
    }
  };
  // Slack keeps rounding in the norm gap from pruning an exact tie.
  auto pruned = [&](double gap) { return gap > best_dist * (1.0 + 1e-12) + 1e-300; };

  while (left > 0 || right < k) {
    const double gap_left = left > 0 ? vnorm - norms_[left - 1]
                                     : std::numeric_limits<double>::infinity();
    const double gap_right = right < k ? norms_[right] - vnorm
                                       : std::numeric_limits<double>::infinity();
    if (pruned(gap_left) && pruned(gap_right)) break;
    if (gap_left <= gap_right) visit(--left);
    else visit(right++);
  }
  return {best, best_sq};
}

double CentroidIndex::nearest_distance(std::span<const double> v) const {
  for (double x : v)
    require(std::isfinite(x), ErrorCode::InvalidArgument, "non-finite feature value");
  return std::sqrt(nearest(v).second);
}

double nearest_centroid_distance(std::span<const double> v, const CentroidBank& bank) {
  return CentroidIndex(bank).nearest_distance(v);
}

CentroidBank build_centroid_bank(std::span<const FeatureMap> train_features_aggregated,
                                 const BankOptions& options) {
  check_same_shape(train_features_aggregated, "build_centroid_bank");
  const std::size_t dim = train_features_aggregated.front().channels();
  std::vector<double> pool;
  pool.reserve(train_features_aggregated.size() * train_features_aggregated.front().values().size());
  for (const auto& fm : train_features_aggregated)
    pool.insert(pool.end(), fm.values().begin(), fm.values().end());
  return build_centroid_bank(std::move(pool), dim, options);
}

CentroidBank build_centroid_bank(std::vector<double> pool, std::size_t dim,
                                 const BankOptions& options) {
  require(options.ratio > 0.0 && options.ratio <= 1.0, ErrorCode::Config,
          "centroid ratio must lie in (0, 1]");
  require(options.max_points >= 1, ErrorCode::Config, "max_points must be positive");
  require(dim > 0 && pool.size() % dim == 0, ErrorCode::ShapeMismatch,
          "centroid pool size is not a multiple of the dimension");
  require(!pool.empty(), ErrorCode::InvalidArgument, "centroid pool is empty");

  Rng rng(options.seed);
  std::size_t n = pool.size() / dim;
  if (n > options.max_points) {
    // Partial Fisher-Yates for a uniform subset, then restore pool order.
    std::vector<std::size_t> ids(n);
    std::iota(ids.begin(), ids.end(), 0);
    for (std::size_t i = 0; i < options.max_points; ++i)
      std::swap(ids[i], ids[i + uniform_index(rng, n - i)]);
    ids.resize(options.max_points);
    std::sort(ids.begin(), ids.end());
    std::vector<double> sub(ids.size() * dim);
    for (std::size_t i = 0; i < ids.size(); ++i)
      std::copy_n(pool.begin() + static_cast<std::ptrdiff_t>(ids[i] * dim), dim,
                  sub.begin() + static_cast<std::ptrdiff_t>(i * dim));
    pool = std::move(sub);
    n = options.max_points;
  }
  auto point = [&](std::size_t i) { return std::span<const double>(pool.data() + i * dim, dim); };

  // The small offset absorbs ratio * n landing an ulp above an integer.
  const auto k = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::ceil(options.ratio * static_cast<double>(n) - 1e-9)), 1, n);

  CentroidBank bank;
  bank.dim = dim;
  bank.ratio = options.ratio;
  bank.seed = options.seed;
  bank.pool_size = n;
  bank.centroids.reserve(k * dim);

  // k-means++ seeding.
  std::vector<double> min_sq(n, std::numeric_limits<double>::infinity());
  std::size_t chosen = uniform_index(rng, n);
  for (std::size_t c = 0; c < k; ++c) {
    bank.centroids.insert(bank.centroids.end(), point(chosen).begin(), point(chosen).end());
    if (c + 1 == k) break;
    const auto centre = bank.centroid(c);
    parallel_for(n, [&](std::size_t i) {
      min_sq[i] = std::min(min_sq[i], squared_distance(point(i), centre));
    });
    double total = 0.0;
    for (double v : min_sq) total += v;
    if (total <= 0.0) {
      // Fewer distinct points than clusters; reuse points in order.
      chosen = (chosen + 1) % n;
      continue;
    }
    const double target = uniform01(rng) * total;
    double running = 0.0;
    chosen = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (min_sq[i] <= 0.0) continue;
      running += min_sq[i];
      chosen = i;
      if (running > target) break;
    }
  }

  // Convergence is measured against the pool's RMS spread.
  std::vector<double> centre(dim, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t d = 0; d < dim; ++d) centre[d] += pool[i * dim + d];
  for (auto& v : centre) v /= static_cast<double>(n);
  double spread = 0.0;
  for (std::size_t i = 0; i < n; ++i) spread += squared_distance(point(i), centre);
  spread = std::sqrt(spread / static_cast<double>(n));
  const double shift_limit = options.tolerance * spread;

  std::vector<std::size_t> assignment(n);
  std::vector<double> dist_sq(n);
  auto assign = [&] {
    const CentroidIndex index(bank);
    parallel_for(n, [&](std::size_t i) {
      std::tie(assignment[i], dist_sq[i]) = index.nearest(point(i));
    });
    double inertia = 0.0;
    for (double v : dist_sq) inertia += v;
    return inertia;
  };

  for (std::size_t iter = 0; iter < options.max_iterations; ++iter) {
    bank.inertia_history.push_back(assign());
    ++bank.iterations;

    std::vector<double> sums(k * dim, 0.0);
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      ++counts[assignment[i]];
      for (std::size_t d = 0; d < dim; ++d) sums[assignment[i] * dim + d] += pool[i * dim + d];
    }
    std::vector<double> updated(k * dim);
    std::vector<char> taken(n, 0);
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] > 0) {
        for (std::size_t d = 0; d < dim; ++d)
          updated[c * dim + d] = sums[c * dim + d] / static_cast<double>(counts[c]);
        continue;
      }
      // Empty cluster: re-seed from the point farthest from its centroid.
      std::size_t far = n;
      for (std::size_t i = 0; i < n; ++i)
        if (!taken[i] && (far == n || dist_sq[i] > dist_sq[far])) far = i;
      taken[far] = 1;
      std::copy_n(point(far).begin(), dim, updated.begin() + static_cast<std::ptrdiff_t>(c * dim));
    }
    double max_shift = 0.0;
    for (std::size_t c = 0; c < k; ++c)
      max_shift = std::max(max_shift, std::sqrt(squared_distance(
                                          {updated.data() + c * dim, dim}, bank.centroid(c))));
    bank.centroids = std::move(updated);
    if (max_shift <= shift_limit) break;
  }

  if (options.medoid) {
    const CentroidBank snapshot = bank;
    parallel_for(k, [&](std::size_t c) {
      std::size_t best = 0;
      double best_sq = std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < n; ++i) {
        const double sq = squared_distance(point(i), snapshot.centroid(c));
        if (sq < best_sq) {
          best_sq = sq;
          best = i;
        }
      }
      std::copy_n(point(best).begin(), dim,
                  bank.centroids.begin() + static_cast<std::ptrdiff_t>(c * dim));
    });
  }
  bank.inertia = assign();
  if (!options.medoid) bank.inertia_history.push_back(bank.inertia);
  return bank;
}

}  // namespace npad
