#include "evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "parallel.hpp"

namespace npad {

Mask::Mask(std::size_t h, std::size_t w, std::vector<std::uint8_t> v)
    : height(h), width(w), values(std::move(v)) {
  require(values.size() == h * w, ErrorCode::ShapeMismatch, "mask size does not match shape");
  for (auto x : values)
    require(x <= 1, ErrorCode::Validation, "mask values must be 0 or 1");
}

AnomalyMap upsample_map(const AnomalyMap& map, std::size_t out_h, std::size_t out_w) {
  require(map.size() > 0, ErrorCode::InvalidArgument, "cannot resize an empty map");
  require(out_h >= map.height() && out_w >= map.width(), ErrorCode::InvalidArgument,
          "upsampling target is smaller than the map");
  if (out_h == map.height() && out_w == map.width()) return map;

  auto coord = [](std::size_t i, std::size_t in, std::size_t out) {
    return out == 1 ? 0.0
                    : static_cast<double>(i) * static_cast<double>(in - 1) /
                          static_cast<double>(out - 1);
  };
  AnomalyMap out(out_h, out_w);
  for (std::size_t y = 0; y < out_h; ++y) {
    const double sy = coord(y, map.height(), out_h);
    const auto y0 = static_cast<std::size_t>(std::floor(sy));
    const std::size_t y1 = std::min(y0 + 1, map.height() - 1);
    const double ty = sy - static_cast<double>(y0);
    for (std::size_t x = 0; x < out_w; ++x) {
      const double sx = coord(x, map.width(), out_w);
      const auto x0 = static_cast<std::size_t>(std::floor(sx));
      const std::size_t x1 = std::min(x0 + 1, map.width() - 1);
      const double tx = sx - static_cast<double>(x0);
      const double top = map(y0, x0) + tx * (map(y0, x1) - map(y0, x0));
      const double bottom = map(y1, x0) + tx * (map(y1, x1) - map(y1, x0));
      double v = top + ty * (bottom - top);
      // Interpolation stays inside the four corner values.
      const double lo = std::min({map(y0, x0), map(y0, x1), map(y1, x0), map(y1, x1)});
      const double hi = std::max({map(y0, x0), map(y0, x1), map(y1, x0), map(y1, x1)});
      out(y, x) = std::clamp(v, lo, hi);
    }
  }
  return out;
}

namespace {

void check_labels(std::span<const double> scores, std::span<const std::uint8_t> labels,
                  std::size_t& positives) {
  require(scores.size() == labels.size(), ErrorCode::ShapeMismatch,
          "scores and labels differ in length");
  positives = 0;
  for (auto l : labels) {
    require(l <= 1, ErrorCode::Validation, "labels must be 0 or 1");
    positives += l;
  }
  require(positives > 0 && positives < labels.size(), ErrorCode::InvalidArgument,
          "AUROC needs both nominal and anomalous samples");
}

}  // namespace

double auroc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  std::size_t positives = 0;
  check_labels(scores, labels, positives);
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Sum of (1-based, tie-averaged) ranks of the positives. Average ranks are
  // half-integers, so the sum is exact in double for any realistic n.
  double rank_sum = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j + 1);
    for (std::size_t k = i; k <= j; ++k)
      if (labels[order[k]]) rank_sum += avg_rank;
    i = j + 1;
  }
  const double n1 = static_cast<double>(positives);
  const double n0 = static_cast<double>(n - positives);
  return (rank_sum - n1 * (n1 + 1.0) / 2.0) / (n1 * n0);
}

RocCurve roc_curve(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  std::size_t positives = 0;
  check_labels(scores, labels, positives);
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  const double n1 = static_cast<double>(positives);
  const double n0 = static_cast<double>(n - positives);

  RocCurve curve;
  curve.thresholds.push_back(std::numeric_limits<double>::infinity());
  curve.tpr.push_back(0.0);
  curve.fpr.push_back(0.0);
  std::size_t tp = 0, fp = 0, i = 0;
  while (i < n) {
    const double t = scores[order[i]];
    while (i < n && scores[order[i]] == t) {
      (labels[order[i]] ? tp : fp) += 1;
      ++i;
    }
    curve.thresholds.push_back(t);
    curve.tpr.push_back(static_cast<double>(tp) / n1);
    curve.fpr.push_back(static_cast<double>(fp) / n0);
  }
  return curve;
}

Components connected_components(const Mask& mask) {
  Components out;
  out.labels.assign(mask.values.size(), 0);
  std::vector<std::size_t> stack;
  for (std::size_t start = 0; start < mask.values.size(); ++start) {
    if (!mask.values[start] || out.labels[start]) continue;
    const auto label = static_cast<std::int32_t>(++out.count);
    out.labels[start] = label;
    stack.push_back(start);
    while (!stack.empty()) {
      const std::size_t cur = stack.back();
      stack.pop_back();
      const long long h = static_cast<long long>(cur / mask.width);
      const long long w = static_cast<long long>(cur % mask.width);
      for (long long dh = -1; dh <= 1; ++dh)
        for (long long dw = -1; dw <= 1; ++dw) {
          const long long y = h + dh, x = w + dw;
          if (y < 0 || x < 0 || y >= static_cast<long long>(mask.height) ||
              x >= static_cast<long long>(mask.width))
            continue;
          const auto idx = static_cast<std::size_t>(y) * mask.width + static_cast<std::size_t>(x);
          if (mask.values[idx] && !out.labels[idx]) {
            out.labels[idx] = label;
            stack.push_back(idx);
          }
        }
    }
  }
  return out;
}

ProCurve pro_curve(std::span<const AnomalyMap> maps, std::span<const Mask> masks,
                   double fpr_cap, std::size_t n_thresholds) {
  require(maps.size() == masks.size() && !maps.empty(), ErrorCode::InvalidArgument,
          "PRO needs one mask per map");
  require(fpr_cap > 0.0 && fpr_cap <= 1.0, ErrorCode::Config, "FPR cap must lie in (0, 1]");
  require(n_thresholds >= 2, ErrorCode::Config, "PRO needs at least 2 thresholds");

  // Pool every pixel with its component id (global, 1-based) or 0 = nominal.
  std::vector<double> scores;
  std::vector<std::uint32_t> component;
  std::vector<std::size_t> component_size(1, 0);
  std::size_t nominal = 0;
  std::vector<Components> labeled(maps.size());
  parallel_for(maps.size(), [&](std::size_t i) { labeled[i] = connected_components(masks[i]); });
  for (std::size_t i = 0; i < maps.size(); ++i) {
    require(maps[i].height() == masks[i].height && maps[i].width() == masks[i].width,
            ErrorCode::ShapeMismatch,
            "anomaly map " + std::to_string(i) + " does not match its mask resolution");
    const std::size_t base = component_size.size() - 1;
    component_size.resize(component_size.size() + labeled[i].count, 0);
    for (std::size_t k = 0; k < maps[i].size(); ++k) {
      scores.push_back(maps[i].values()[k]);
      const auto label = labeled[i].labels[k];
      const std::uint32_t id = label ? static_cast<std::uint32_t>(base + label) : 0;
      component.push_back(id);
      if (id) ++component_size[id];
      else ++nominal;
    }
  }
  const std::size_t n_components = component_size.size() - 1;
  require(n_components > 0, ErrorCode::InvalidArgument,
          "PRO needs at least one anomalous region");
  require(nominal > 0, ErrorCode::InvalidArgument, "PRO needs nominal pixels");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] > scores[b] || (scores[a] == scores[b] && a < b);
  });
  std::vector<double> sorted(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) sorted[i] = scores[order[scores.size() - 1 - i]];

  ProCurve curve;
  curve.fpr.push_back(0.0);
  curve.overlap.push_back(0.0);
  curve.thresholds.push_back(std::numeric_limits<double>::infinity());

  std::vector<std::size_t> hits(n_components + 1, 0);
  std::size_t false_positives = 0;
  std::size_t cursor = 0;
  const double n = static_cast<double>(sorted.size());
  for (std::size_t j = n_thresholds; j-- > 0;) {
    const double pos = static_cast<double>(j) / static_cast<double>(n_thresholds - 1) * (n - 1.0);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double t = sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
    while (cursor < order.size() && scores[order[cursor]] >= t) {
      const auto id = component[order[cursor]];
      if (id) ++hits[id];
      else ++false_positives;
      ++cursor;
    }
    double overlap = 0.0;
    for (std::size_t c = 1; c <= n_components; ++c)
      overlap += static_cast<double>(hits[c]) / static_cast<double>(component_size[c]);
    curve.thresholds.push_back(t);
    curve.overlap.push_back(overlap / static_cast<double>(n_components));
    curve.fpr.push_back(static_cast<double>(false_positives) / static_cast<double>(nominal));
  }

  double area = 0.0;
  for (std::size_t i = 1; i < curve.fpr.size(); ++i) {
    const double x0 = curve.fpr[i - 1], x1 = curve.fpr[i];
    const double y0 = curve.overlap[i - 1], y1 = curve.overlap[i];
    if (x0 >= fpr_cap) break;
    if (x1 <= fpr_cap) {
      area += 0.5 * (x1 - x0) * (y0 + y1);
    } else {
      const double y_cap = y0 + (y1 - y0) * (fpr_cap - x0) / (x1 - x0);
      area += 0.5 * (fpr_cap - x0) * (y0 + y_cap);
      break;
    }
  }
  curve.score = area / fpr_cap;
  return curve;
}

double pro_score(std::span<const AnomalyMap> maps, std::span<const Mask> masks, double fpr_cap,
                 std::size_t n_thresholds) {
  return pro_curve(maps, masks, fpr_cap, n_thresholds).score;
}

}  // namespace npad
