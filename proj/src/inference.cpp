#include "inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <string>

#include "neighbor_sim.hpp"
#include "parallel.hpp"

namespace npad {

namespace {

void check_field(const FeatureMap& fm, const GaussianField& field, const char* what) {
  if (fm.height() != field.height() || fm.width() != field.width() ||
      fm.channels() != field.dim())
    fail(ErrorCode::ShapeMismatch,
         std::string(what) + ": test features are " + std::to_string(fm.height()) + "x" +
             std::to_string(fm.width()) + "x" + std::to_string(fm.channels()) +
             ", model expects " + std::to_string(field.height()) + "x" +
             std::to_string(field.width()) + "x" + std::to_string(field.dim()));
  for (double v : fm.values())
    require(std::isfinite(v), ErrorCode::InvalidArgument,
            std::string(what) + ": non-finite feature value");
}

std::size_t clamp_index(long long i, std::size_t n) {
  return static_cast<std::size_t>(std::clamp<long long>(i, 0, static_cast<long long>(n) - 1));
}

}  // namespace

AnomalyMap score_d1(const FeatureMap& fm, const GaussianField& weighted, std::size_t q) {
  require(q >= 1, ErrorCode::Config, "inference neighborhood q must be at least 1");
  check_field(fm, weighted, "score_d1");
  const std::size_t height = fm.height();
  const std::size_t width = fm.width();
  AnomalyMap out(height, width);
  parallel_for(height * width, [&](std::size_t px) {
    const std::size_t h = px / width;
    const std::size_t w = px % width;
    const auto x = fm.at(h, w);
    double best = std::numeric_limits<double>::infinity();
    for (const auto& a : neighborhood(h, w, q, height, width).members)
      best = std::min(best, weighted.mahalanobis_unchecked(x, a.h, a.w));
    out(h, w) = best;
  });
  return out;
}

AnomalyMap score_d2(const FeatureMap& fm, const GaussianField& aggregate, std::size_t p) {
  check_field(fm, aggregate, "score_d2");
  const auto agg = aggregate_features(fm, p);
  const std::size_t width = fm.width();
  AnomalyMap out(fm.height(), width);
  parallel_for(fm.pixels(), [&](std::size_t px) {
    const std::size_t h = px / width;
    const std::size_t w = px % width;
    out(h, w) = aggregate.mahalanobis_unchecked(agg.at(h, w), h, w);
  });
  return out;
}

AnomalyMap combine_maps(const AnomalyMap& d1, const AnomalyMap& d2) {
  require(d1.same_shape(d2), ErrorCode::ShapeMismatch, "anomaly maps differ in shape");
  AnomalyMap out(d1.height(), d1.width());
  for (std::size_t i = 0; i < d1.size(); ++i)
    out.values()[i] = std::sqrt(d1.values()[i] * d2.values()[i]);
  return out;
}

ImageScore image_score(const AnomalyMap& d1, const FeatureMap& fm_aggregated,
                       const CentroidIndex& bank, std::size_t k_top) {
  require(k_top >= 1 && k_top <= d1.size(), ErrorCode::InvalidArgument,
          "k_top must lie in [1, H*W], got " + std::to_string(k_top));
  require(d1.height() == fm_aggregated.height() && d1.width() == fm_aggregated.width(),
          ErrorCode::ShapeMismatch, "D1 map and aggregated features differ in shape");

  std::vector<std::size_t> order(d1.size());
  std::iota(order.begin(), order.end(), 0);
  const auto& v = d1.values();
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k_top),
                    order.end(), [&](std::size_t a, std::size_t b) {
                      return v[a] > v[b] || (v[a] == v[b] && a < b);
                    });

  ImageScore score;
  for (std::size_t i = 0; i < k_top; ++i) {
    const Pixel px{order[i] / d1.width(), order[i] % d1.width()};
    score.top_pixels.push_back(px);
    score.q_k.push_back(v[order[i]]);
    score.e_k.push_back(bank.nearest_distance(fm_aggregated.at(px.h, px.w)));
  }
  std::sort(score.q_k.begin(), score.q_k.end());
  std::sort(score.e_k.begin(), score.e_k.end());
  for (std::size_t i = 0; i < k_top; ++i) score.value += score.e_k[i] * score.q_k[i];
  return score;
}

ImageScore image_score(const AnomalyMap& d1, const FeatureMap& fm_aggregated,
                       const CentroidBank& bank, std::size_t k_top) {
  return image_score(d1, fm_aggregated, CentroidIndex(bank), k_top);
}

std::vector<ShiftOffset> shift_offsets(int r) {
  require(r >= 0, ErrorCode::Config, "shift size r must be non-negative");
  const int half = r / 2;
  std::vector<ShiftOffset> out;
  for (int a = -half; a <= half; ++a)
    for (int b = -half; b <= half; ++b) out.push_back({a, b});
  return out;
}

FeatureMap shift_feature_map(const FeatureMap& fm, double a, double b) {
  const std::size_t height = fm.height();
  const std::size_t width = fm.width();
  const std::size_t d = fm.channels();
  FeatureMap out(height, width, d);
  const double fa = std::floor(a);
  const double fb = std::floor(b);
  const double ta = a - fa;
  const double tb = b - fb;
  for (std::size_t h = 0; h < height; ++h)
    for (std::size_t w = 0; w < width; ++w) {
      const long long y = static_cast<long long>(h) + static_cast<long long>(fa);
      const long long x = static_cast<long long>(w) + static_cast<long long>(fb);
      const auto y0 = clamp_index(y, height), y1 = clamp_index(y + 1, height);
      const auto x0 = clamp_index(x, width), x1 = clamp_index(x + 1, width);
      auto dst = out.at(h, w);
      const auto v00 = fm.at(y0, x0), v01 = fm.at(y0, x1), v10 = fm.at(y1, x0),
                 v11 = fm.at(y1, x1);
      for (std::size_t k = 0; k < d; ++k) {
        if (ta == 0.0 && tb == 0.0) {
          dst[k] = v00[k];
          continue;
        }
        const double top = v00[k] * (1.0 - tb) + v01[k] * tb;
        const double bottom = v10[k] * (1.0 - tb) + v11[k] * tb;
        dst[k] = top * (1.0 - ta) + bottom * ta;
      }
    }
  return out;
}

AnomalyMap translate_back(const AnomalyMap& map, int a, int b) {
  AnomalyMap out(map.height(), map.width());
  for (std::size_t h = 0; h < map.height(); ++h)
    for (std::size_t w = 0; w < map.width(); ++w)
      out(h, w) = map(clamp_index(static_cast<long long>(h) - a, map.height()),
                      clamp_index(static_cast<long long>(w) - b, map.width()));
  return out;
}

ShiftedResult shifted_manifest_scores(std::span<const ShiftVariant> variants, int r,
                                      double feature_per_image_h, double feature_per_image_w) {
  require(r >= 0, ErrorCode::Config, "shift size r must be non-negative");
  require(!variants.empty(), ErrorCode::InvalidArgument, "no shift variants supplied");
  const int half = r / 2;
  std::set<ShiftOffset> seen;
  for (const auto& v : variants) {
    require(std::abs(v.offset.a) <= half && std::abs(v.offset.b) <= half,
            ErrorCode::Validation,
            "shift (" + std::to_string(v.offset.a) + "," + std::to_string(v.offset.b) +
                ") lies outside [-" + std::to_string(half) + "," + std::to_string(half) + "]^2");
    require(seen.insert(v.offset).second, ErrorCode::Validation,
            "duplicate shift (" + std::to_string(v.offset.a) + "," + std::to_string(v.offset.b) +
                ")");
    require(v.map.same_shape(variants.front().map), ErrorCode::ShapeMismatch,
            "shift variant maps differ in shape");
  }
  require(seen.count(ShiftOffset{0, 0}) == 1, ErrorCode::Validation,
          "shift variants must include the unshifted (0,0) image");

  ShiftedResult result;
  result.map = AnomalyMap(variants.front().map.height(), variants.front().map.width());
  for (const auto& v : variants) {
    const int fa = static_cast<int>(std::trunc(v.offset.a * feature_per_image_h));
    const int fb = static_cast<int>(std::trunc(v.offset.b * feature_per_image_w));
    const auto back = (fa == 0 && fb == 0) ? v.map : translate_back(v.map, fa, fb);
    for (std::size_t i = 0; i < back.size(); ++i) result.map.values()[i] += back.values()[i];
    result.score += v.score;
  }
  const double count = static_cast<double>(variants.size());
  for (auto& x : result.map.values()) x /= count;
  result.score /= count;
  return result;
}

AnomalyMap gaussian_smooth(const AnomalyMap& map, double sigma) {
  require(sigma >= 0.0, ErrorCode::Config, "smoothing sigma must be non-negative");
  if (sigma == 0.0) return map;
  const int radius = static_cast<int>(std::ceil(4.0 * sigma));
  std::vector<double> kernel(2 * radius + 1);
  double total = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[i + radius] = std::exp(-0.5 * (i * i) / (sigma * sigma));
    total += kernel[i + radius];
  }
  for (auto& k : kernel) k /= total;

  const std::size_t height = map.height();
  const std::size_t width = map.width();
  AnomalyMap rows(height, width), out(height, width);
  for (std::size_t h = 0; h < height; ++h)
    for (std::size_t w = 0; w < width; ++w) {
      double s = 0.0;
      for (int i = -radius; i <= radius; ++i)
        s += kernel[i + radius] * map(h, clamp_index(static_cast<long long>(w) + i, width));
      rows(h, w) = s;
    }
  for (std::size_t h = 0; h < height; ++h)
    for (std::size_t w = 0; w < width; ++w) {
      double s = 0.0;
      for (int i = -radius; i <= radius; ++i)
        s += kernel[i + radius] * rows(clamp_index(static_cast<long long>(h) + i, height), w);
      out(h, w) = s;
    }
  return out;
}

}  // namespace npad
