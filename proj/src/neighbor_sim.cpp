#include "neighbor_sim.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <optional>
#include <string>

#include "json.hpp"
#include "parallel.hpp"
#include "random.hpp"

namespace npad {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;
using MatrixMap = Eigen::Map<RowMatrix>;

double log_det_of(const Eigen::LLT<Eigen::MatrixXd>& llt) {
  return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

Eigen::LLT<Eigen::MatrixXd> factorize(std::span<const double> cov, std::size_t d,
                                      const char* what) {
  Eigen::LLT<Eigen::MatrixXd> llt(ConstMatrixMap(cov.data(), d, d));
  if (llt.info() != Eigen::Success)
    fail(ErrorCode::Numerical, std::string(what) + " is not positive definite");
  return llt;
}

// logdet1/logdet2 may be supplied from cached factors; only used by Full.
double bc_impl(std::span<const double> mean1, std::span<const double> cov1,
               std::span<const double> mean2, std::span<const double> cov2, BcForm form,
               std::optional<double> logdet1, std::optional<double> logdet2) {
  const std::size_t d = mean1.size();
  Eigen::MatrixXd avg(d, d);
  for (std::size_t r = 0; r < d; ++r)
    for (std::size_t c = 0; c < d; ++c) avg(r, c) = 0.5 * (cov1[r * d + c] + cov2[r * d + c]);
  Eigen::LLT<Eigen::MatrixXd> llt(avg);
  if (llt.info() != Eigen::Success)
    fail(ErrorCode::Numerical, "averaged covariance is singular");

  Eigen::VectorXd diff(d);
  for (std::size_t k = 0; k < d; ++k) diff[k] = mean1[k] - mean2[k];
  llt.matrixL().solveInPlace(diff);
  double bc = 0.125 * diff.squaredNorm();

  if (form == BcForm::Full) {
    const double ld1 = logdet1 ? *logdet1 : log_det_of(factorize(cov1, d, "covariance 1"));
    const double ld2 = logdet2 ? *logdet2 : log_det_of(factorize(cov2, d, "covariance 2"));
    bc += 0.5 * (log_det_of(llt) - 0.5 * (ld1 + ld2));
  }
  return bc;
}

}  // namespace

Neighborhood neighborhood(std::size_t h, std::size_t w, std::size_t p, std::size_t height,
                          std::size_t width) {
  require(p >= 1, ErrorCode::InvalidArgument, "neighborhood size must be at least 1");
  require(h < height && w < width, ErrorCode::InvalidArgument, "pixel outside the grid");
  Neighborhood n;
  n.center = {h, w};
  n.radius = p / 2;
  const std::size_t h0 = h >= n.radius ? h - n.radius : 0;
  const std::size_t w0 = w >= n.radius ? w - n.radius : 0;
  const std::size_t h1 = std::min(height - 1, h + n.radius);
  const std::size_t w1 = std::min(width - 1, w + n.radius);
  for (std::size_t y = h0; y <= h1; ++y)
    for (std::size_t x = w0; x <= w1; ++x) n.members.push_back({y, x});
  return n;
}

double bhattacharyya_bc(std::span<const double> mean1, std::span<const double> cov1,
                        std::span<const double> mean2, std::span<const double> cov2,
                        BcForm form) {
  const std::size_t d = mean1.size();
  require(d > 0 && mean2.size() == d && cov1.size() == d * d && cov2.size() == d * d,
          ErrorCode::ShapeMismatch, "Gaussian parameter sizes disagree");
  return bc_impl(mean1, cov1, mean2, cov2, form, std::nullopt, std::nullopt);
}

double similarity_weight(double bc, double gamma) {
  require(gamma > 0.0 && std::isfinite(gamma), ErrorCode::Config,
          "gamma must be a positive finite number");
  // The full form can land a rounding error below zero.
  require(bc >= -1e-12, ErrorCode::InvalidArgument, "Bhattacharyya term must be non-negative");
  return std::exp(-std::max(bc, 0.0) / gamma);
}

WeightField::WeightField(std::size_t height, std::size_t width, std::vector<std::size_t> offsets,
                         std::vector<Pixel> members, std::vector<double> weights)
    : height_(height), width_(width), offsets_(std::move(offsets)), members_(std::move(members)),
      weights_(std::move(weights)) {
  require(offsets_.size() == height * width + 1 && members_.size() == weights_.size() &&
              offsets_.back() == members_.size(),
          ErrorCode::ShapeMismatch, "weight field layout is inconsistent");
}

std::span<const Pixel> WeightField::members(std::size_t h, std::size_t w) const {
  const std::size_t px = h * width_ + w;
  return {members_.data() + offsets_[px], offsets_[px + 1] - offsets_[px]};
}

std::span<const double> WeightField::weights(std::size_t h, std::size_t w) const {
  const std::size_t px = h * width_ + w;
  return {weights_.data() + offsets_[px], offsets_[px + 1] - offsets_[px]};
}

std::string WeightField::to_json() const {
  nlohmann::json pixels = nlohmann::json::array();
  for (std::size_t h = 0; h < height_; ++h)
    for (std::size_t w = 0; w < width_; ++w) {
      nlohmann::json members = nlohmann::json::array();
      const auto m = this->members(h, w);
      const auto wt = weights(h, w);
      for (std::size_t k = 0; k < m.size(); ++k) members.push_back({m[k].h, m[k].w, wt[k]});
      pixels.push_back({{"h", h}, {"w", w}, {"members", std::move(members)}});
    }
  nlohmann::json doc = {{"height", height_}, {"width", width_}, {"pixels", std::move(pixels)}};
  return doc.dump();
}

WeightField compute_weights(const GaussianField& base, std::size_t p, double gamma,
                            const WeightOptions& options) {
  require(p >= 1, ErrorCode::Config, "neighborhood size p must be at least 1");
  if (options.scheme == WeightScheme::Similarity)
    require(gamma > 0.0 && std::isfinite(gamma), ErrorCode::Config,
            "gamma must be a positive finite number");
  const std::size_t height = base.height();
  const std::size_t width = base.width();
  const std::size_t pixels = height * width;
  std::vector<std::size_t> offsets(pixels + 1, 0);
  std::vector<Pixel> members;
  for (std::size_t px = 0; px < pixels; ++px) {
    auto n = neighborhood(px / width, px % width, p, height, width);
    members.insert(members.end(), n.members.begin(), n.members.end());
    offsets[px + 1] = members.size();
  }

  // Raw (unnormalized) weights, one per (pixel, member).
  std::vector<double> raw(members.size(), 1.0);
  switch (options.scheme) {
    case WeightScheme::Uniform: break;
    case WeightScheme::Random: {
      Rng rng(options.seed);
      for (auto& v : raw) v = 1.0 - uniform01(rng);  // (0, 1]
      break;
    }
    case WeightScheme::Similarity: {
      std::vector<double> log_dets;
      if (options.form == BcForm::Full) {
        log_dets.resize(pixels);
        for (std::size_t px = 0; px < pixels; ++px)
          log_dets[px] = base.log_det(px / width, px % width);
      }
      // BC is symmetric, so each unordered pair is evaluated once: a pixel
      // owns the pairs whose other member comes later in row-major order.
      std::vector<double> bc(members.size(), 0.0);
      parallel_for(pixels, [&](std::size_t px) {
        const Pixel c{px / width, px % width};
        for (std::size_t k = offsets[px]; k < offsets[px + 1]; ++k) {
          const Pixel m = members[k];
          const std::size_t mpx = m.h * width + m.w;
          if (mpx <= px) continue;
          std::optional<double> ld1, ld2;
          if (!log_dets.empty()) {
            ld1 = log_dets[px];
            ld2 = log_dets[mpx];
          }
          bc[k] = bc_impl(base.mean(c.h, c.w), base.covariance(c.h, c.w), base.mean(m.h, m.w),
                          base.covariance(m.h, m.w), options.form, ld1, ld2);
        }
      });
      for (std::size_t px = 0; px < pixels; ++px) {
        for (std::size_t k = offsets[px]; k < offsets[px + 1]; ++k) {
          const Pixel m = members[k];
          const std::size_t mpx = m.h * width + m.w;
          double value = 0.0;
          if (mpx > px) {
            value = bc[k];
          } else if (mpx < px) {
            // Look up the pair from the member's side.
            for (std::size_t j = offsets[mpx]; j < offsets[mpx + 1]; ++j)
              if (members[j].h * width + members[j].w == px) {
                value = bc[j];
                break;
              }
          }
          raw[k] = similarity_weight(value, gamma);
        }
      }
      break;
    }
  }

  std::vector<double> weights(members.size());
  for (std::size_t px = 0; px < pixels; ++px) {
    double total = 0.0;
    for (std::size_t k = offsets[px]; k < offsets[px + 1]; ++k) total += raw[k];
    for (std::size_t k = offsets[px]; k < offsets[px + 1]; ++k) weights[k] = raw[k] / total;
  }
  return WeightField(height, width, std::move(offsets), std::move(members), std::move(weights));
}

GaussianField fit_with_weights(std::span<const FeatureMap> train_features,
                               const WeightField& weights, double epsilon) {
  check_same_shape(train_features, "fit_with_weights");
  const auto& first = train_features.front();
  require(first.height() == weights.height() && first.width() == weights.width(),
          ErrorCode::ShapeMismatch, "weight field does not match the feature grid");
  const std::size_t n = train_features.size();
  const std::size_t height = first.height();
  const std::size_t width = first.width();
  const std::size_t d = first.channels();

  // Check every denominator up front so the error is independent of threads.
  for (std::size_t px = 0; px < height * width; ++px) {
    double sum_sq = 0.0;
    for (double m : weights.weights(px / width, px % width)) sum_sq += m * m;
    const double denom = static_cast<double>(n) - sum_sq;
    if (!(denom > 0.0))
      fail(ErrorCode::InvalidArgument,
           "weighted covariance denominator N - sum(m'^2) = " + std::to_string(denom) +
               " at pixel (" + std::to_string(px / width) + "," + std::to_string(px % width) +
               ") is not positive; use more training maps (with a single map, uniform weighting keeps it positive for p > 1)");
  }

  std::vector<double> mean(height * width * d, 0.0);
  std::vector<double> cov(height * width * d * d, 0.0);
  parallel_for(height * width, [&](std::size_t px) {
    const std::size_t h = px / width;
    const std::size_t w = px % width;
    const auto members = weights.members(h, w);
    const auto m = weights.weights(h, w);
    double* mu = mean.data() + px * d;
    for (const auto& fm : train_features)
      for (std::size_t a = 0; a < members.size(); ++a) {
        const auto x = fm.at(members[a].h, members[a].w);
        for (std::size_t k = 0; k < d; ++k) mu[k] += m[a] * x[k];
      }
    for (std::size_t k = 0; k < d; ++k) mu[k] /= static_cast<double>(n);

    // Rows sqrt(m'_a) (e_i^a - mu) so that rows^T rows is the weighted scatter.
    RowMatrix rows(n * members.size(), d);
    double sum_sq = 0.0;
    for (std::size_t a = 0; a < members.size(); ++a) sum_sq += m[a] * m[a];
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t a = 0; a < members.size(); ++a) {
        const auto x = train_features[i].at(members[a].h, members[a].w);
        const double s = std::sqrt(m[a]);
        for (std::size_t k = 0; k < d; ++k) rows(i * members.size() + a, k) = s * (x[k] - mu[k]);
      }
    MatrixMap sigma(cov.data() + px * d * d, d, d);
    sigma.noalias() = rows.transpose() * rows;
    sigma /= static_cast<double>(n) - sum_sq;
    sigma.triangularView<Eigen::StrictlyLower>() = sigma.transpose();
  });
  return GaussianField::from_moments(height, width, d, epsilon, std::move(mean), std::move(cov));
}

WeightedFit fit_weighted_field(std::span<const FeatureMap> train_features,
                               const GaussianField& base, std::size_t p, double gamma,
                               double epsilon, const WeightOptions& options) {
  check_same_shape(train_features, "fit_weighted_field");
  require(train_features.front().height() == base.height() &&
              train_features.front().width() == base.width() &&
              train_features.front().channels() == base.dim(),
          ErrorCode::ShapeMismatch, "base field does not match the training features");
  auto weights = compute_weights(base, p, gamma, options);
  auto field = fit_with_weights(train_features, weights, epsilon);
  return {std::move(weights), std::move(field)};
}

}  // namespace npad
