#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "feature_map.hpp"

namespace npad {

struct ChannelSelection {
  std::vector<std::size_t> indices;  // strictly increasing
  std::size_t source_channels = 0;

  std::size_t size() const { return indices.size(); }
  friend bool operator==(const ChannelSelection&, const ChannelSelection&) = default;
};

// counts[c] = number of entries in channel c that are > 0 (or |x| > 0 when
// use_abs is set, for features exported before the activation).
std::vector<std::uint64_t> count_nonzero_per_channel(std::span<const FeatureMap> train_features,
                                                     bool use_abs = false);

// The d channels with the fewest nonzero values; ties go to the lower index.
ChannelSelection select_channels(std::span<const std::uint64_t> counts, std::size_t d);

FeatureMap apply_selection(const FeatureMap& fm, const ChannelSelection& selection);

}  // namespace npad
