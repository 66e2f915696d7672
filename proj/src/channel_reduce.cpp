#include "channel_reduce.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "parallel.hpp"

namespace npad {

std::vector<std::uint64_t> count_nonzero_per_channel(std::span<const FeatureMap> train_features,
                                                     bool use_abs) {
  require(!train_features.empty(), ErrorCode::InvalidArgument,
          "channel counting needs at least one feature map");
  const auto& first = train_features.front();
  for (const auto& fm : train_features)
    require(fm.same_shape(first), ErrorCode::ShapeMismatch,
            "all training feature maps must share one shape");

  const std::size_t channels = first.channels();
  std::vector<std::vector<std::uint64_t>> per_map(train_features.size(),
                                                  std::vector<std::uint64_t>(channels, 0));
  parallel_for(train_features.size(), [&](std::size_t i) {
    const auto& values = train_features[i].values();
    auto& counts = per_map[i];
    for (std::size_t k = 0; k < values.size(); ++k) {
      const double v = use_abs ? std::abs(values[k]) : values[k];
      if (v > 0.0) ++counts[k % channels];
    }
  });

  std::vector<std::uint64_t> total(channels, 0);
  for (const auto& counts : per_map)
    for (std::size_t c = 0; c < channels; ++c) total[c] += counts[c];
  return total;
}

ChannelSelection select_channels(std::span<const std::uint64_t> counts, std::size_t d) {
  require(d >= 1, ErrorCode::InvalidArgument, "channel count d must be positive");
  require(d <= counts.size(), ErrorCode::InvalidArgument,
          "cannot select " + std::to_string(d) + " of " + std::to_string(counts.size()) +
              " channels");
  std::vector<std::size_t> order(counts.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return counts[a] < counts[b]; });
  order.resize(d);
  std::sort(order.begin(), order.end());
  return {std::move(order), counts.size()};
}

FeatureMap apply_selection(const FeatureMap& fm, const ChannelSelection& selection) {
  require(fm.channels() == selection.source_channels, ErrorCode::ShapeMismatch,
          "feature map has " + std::to_string(fm.channels()) + " channels, selection expects " +
              std::to_string(selection.source_channels));
  FeatureMap out(fm.height(), fm.width(), selection.size());
  for (std::size_t h = 0; h < fm.height(); ++h)
    for (std::size_t w = 0; w < fm.width(); ++w) {
      const auto src = fm.at(h, w);
      auto dst = out.at(h, w);
      for (std::size_t k = 0; k < selection.size(); ++k) dst[k] = src[selection.indices[k]];
    }
  return out;
}

}  // namespace npad
