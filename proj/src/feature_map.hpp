#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "error.hpp"

namespace npad {

struct Pixel {
  std::size_t h = 0;
  std::size_t w = 0;

  friend bool operator==(const Pixel&, const Pixel&) = default;
};

// H x W grid of channel vectors, stored row-major as (h, w, c).
class FeatureMap {
 public:
  FeatureMap() = default;
  FeatureMap(std::size_t height, std::size_t width, std::size_t channels)
      : height_(height), width_(width), channels_(channels),
        values_(height * width * channels, 0.0) {}
  FeatureMap(std::size_t height, std::size_t width, std::size_t channels,
             std::vector<double> values)
      : height_(height), width_(width), channels_(channels), values_(std::move(values)) {
    require(values_.size() == height * width * channels, ErrorCode::ShapeMismatch,
            "feature map value count does not match its shape");
  }

  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  std::size_t channels() const { return channels_; }
  std::size_t pixels() const { return height_ * width_; }

  std::span<const double> at(std::size_t h, std::size_t w) const {
    return {values_.data() + (h * width_ + w) * channels_, channels_};
  }
  std::span<double> at(std::size_t h, std::size_t w) {
    return {values_.data() + (h * width_ + w) * channels_, channels_};
  }

  const std::vector<double>& values() const { return values_; }
  std::vector<double>& values() { return values_; }

  bool same_shape(const FeatureMap& other) const {
    return height_ == other.height_ && width_ == other.width_ && channels_ == other.channels_;
  }

  friend bool operator==(const FeatureMap&, const FeatureMap&) = default;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::size_t channels_ = 0;
  std::vector<double> values_;
};

// H x W map of non-negative anomaly scores.
class AnomalyMap {
 public:
  AnomalyMap() = default;
  AnomalyMap(std::size_t height, std::size_t width, double fill = 0.0)
      : height_(height), width_(width), values_(height * width, fill) {}
  AnomalyMap(std::size_t height, std::size_t width, std::vector<double> values)
      : height_(height), width_(width), values_(std::move(values)) {
    require(values_.size() == height * width, ErrorCode::ShapeMismatch,
            "anomaly map value count does not match its shape");
  }

  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  std::size_t size() const { return values_.size(); }

  double operator()(std::size_t h, std::size_t w) const { return values_[h * width_ + w]; }
  double& operator()(std::size_t h, std::size_t w) { return values_[h * width_ + w]; }

  const std::vector<double>& values() const { return values_; }
  std::vector<double>& values() { return values_; }

  bool same_shape(const AnomalyMap& other) const {
    return height_ == other.height_ && width_ == other.width_;
  }

  friend bool operator==(const AnomalyMap&, const AnomalyMap&) = default;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<double> values_;
};

}  // namespace npad
