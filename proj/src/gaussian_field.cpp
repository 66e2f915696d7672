#include "gaussian_field.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <cmath>
#include <string>

#include "parallel.hpp"

namespace npad {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstVectorMap = Eigen::Map<const Eigen::VectorXd>;

std::string pixel_name(std::size_t h, std::size_t w) {
  return "(" + std::to_string(h) + "," + std::to_string(w) + ")";
}

}  // namespace

void check_same_shape(std::span<const FeatureMap> maps, const char* what) {
  require(!maps.empty(), ErrorCode::InvalidArgument, std::string(what) + ": no feature maps");
  for (const auto& fm : maps)
    require(fm.same_shape(maps.front()), ErrorCode::ShapeMismatch,
            std::string(what) + ": feature maps differ in shape");
}

GaussianField::GaussianField(std::size_t height, std::size_t width, std::size_t dim,
                             double epsilon, std::vector<double> mean,
                             std::vector<double> covariance)
    : height_(height), width_(width), dim_(dim), epsilon_(epsilon), mean_(std::move(mean)),
      covariance_(std::move(covariance)) {
  const std::size_t pixels = height * width;
  require(dim > 0, ErrorCode::InvalidArgument, "Gaussian field dimension must be positive");
  require(mean_.size() == pixels * dim && covariance_.size() == pixels * dim * dim,
          ErrorCode::ShapeMismatch, "Gaussian field storage does not match its dimensions");

  chol_.assign(covariance_.size(), 0.0);
  std::vector<char> failed(pixels, 0);
  parallel_for(pixels, [&](std::size_t px) {
    const std::size_t offset = px * dim_ * dim_;
    ConstMatrixMap cov(covariance_.data() + offset, dim_, dim_);
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() != Eigen::Success) {
      failed[px] = 1;
      return;
    }
    MatrixMap(chol_.data() + offset, dim_, dim_) = llt.matrixL();
  });
  for (std::size_t px = 0; px < pixels; ++px)
    if (failed[px])
      fail(ErrorCode::Numerical, "covariance at pixel " + pixel_name(px / width, px % width) +
                                     " is not positive definite; increase epsilon");
}

GaussianField GaussianField::from_moments(std::size_t height, std::size_t width,
                                          std::size_t dim, double epsilon,
                                          std::vector<double> mean,
                                          std::vector<double> covariance_unregularized) {
  require(epsilon > 0.0 && std::isfinite(epsilon), ErrorCode::Config,
          "epsilon must be a positive finite number");
  const std::size_t pixels = height * width;
  for (std::size_t px = 0; px < pixels; ++px)
    for (std::size_t k = 0; k < dim; ++k)
      covariance_unregularized[(px * dim + k) * dim + k] += epsilon;
  return GaussianField(height, width, dim, epsilon, std::move(mean),
                       std::move(covariance_unregularized));
}

std::span<const double> GaussianField::mean(std::size_t h, std::size_t w) const {
  return {mean_.data() + (h * width_ + w) * dim_, dim_};
}

std::span<const double> GaussianField::covariance(std::size_t h, std::size_t w) const {
  return {covariance_.data() + (h * width_ + w) * dim_ * dim_, dim_ * dim_};
}

std::span<const double> GaussianField::cholesky(std::size_t h, std::size_t w) const {
  return {chol_.data() + (h * width_ + w) * dim_ * dim_, dim_ * dim_};
}

double GaussianField::mahalanobis(std::span<const double> x, std::size_t h,
                                  std::size_t w) const {
  require(x.size() == dim_, ErrorCode::ShapeMismatch, "vector length does not match field");
  require(h < height_ && w < width_, ErrorCode::InvalidArgument, "pixel outside the grid");
  for (double v : x)
    require(std::isfinite(v), ErrorCode::InvalidArgument, "non-finite feature value");
  return mahalanobis_unchecked(x, h, w);
}

double GaussianField::mahalanobis_unchecked(std::span<const double> x, std::size_t h,
                                            std::size_t w) const {
  const auto mu = mean(h, w);
  Eigen::VectorXd diff(dim_);
  for (std::size_t k = 0; k < dim_; ++k) diff[k] = x[k] - mu[k];
  ConstMatrixMap lower(cholesky(h, w).data(), dim_, dim_);
  lower.triangularView<Eigen::Lower>().solveInPlace(diff);
  return diff.norm();
}

double GaussianField::log_det(std::size_t h, std::size_t w) const {
  const auto l = cholesky(h, w);
  double sum = 0.0;
  for (std::size_t k = 0; k < dim_; ++k) sum += std::log(l[k * dim_ + k]);
  return 2.0 * sum;
}

GaussianField fit_pixel_gaussians(std::span<const FeatureMap> train_features, double epsilon,
                                  FitOptions options) {
  check_same_shape(train_features, "fit_pixel_gaussians");
  const std::size_t n = train_features.size();
  require(n >= 2 || options.allow_single_sample, ErrorCode::InvalidArgument,
          "fitting a covariance needs at least 2 training maps, got " + std::to_string(n));

  const auto& first = train_features.front();
  const std::size_t height = first.height();
  const std::size_t width = first.width();
  const std::size_t d = first.channels();
  std::vector<double> mean(height * width * d, 0.0);
  std::vector<double> cov(height * width * d * d, 0.0);

  parallel_for(height * width, [&](std::size_t px) {
    const std::size_t h = px / width;
    const std::size_t w = px % width;
    double* mu = mean.data() + px * d;
    for (const auto& fm : train_features) {
      const auto x = fm.at(h, w);
      for (std::size_t k = 0; k < d; ++k) mu[k] += x[k];
    }
    for (std::size_t k = 0; k < d; ++k) mu[k] /= static_cast<double>(n);
    if (n < 2) return;

    RowMatrix centered(n, d);
    for (std::size_t i = 0; i < n; ++i) {
      const auto x = train_features[i].at(h, w);
      for (std::size_t k = 0; k < d; ++k) centered(i, k) = x[k] - mu[k];
    }
    MatrixMap sigma(cov.data() + px * d * d, d, d);
    sigma.noalias() = centered.transpose() * centered;
    sigma /= static_cast<double>(n - 1);
    sigma.triangularView<Eigen::StrictlyLower>() = sigma.transpose();
  });
  return GaussianField::from_moments(height, width, d, epsilon, std::move(mean), std::move(cov));
}

std::size_t field_memory_bytes(std::size_t height, std::size_t width, std::size_t dim) {
  return height * width * (dim + 2 * dim * dim) * sizeof(double);
}

}  // namespace npad
