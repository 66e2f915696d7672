#include "channel_reduce.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace npad;

TEST_CASE("nonzero counts per channel") {
  // One 1x2 map with two channels: channel 0 = [0, 3], channel 1 = [1, 1]
  // stored pixel-major as (0,1 | 3,1); the 2x2 example below mirrors it.
  const FeatureMap fm(1, 2, 2, {0, 1, 3, 1});
  const std::vector<FeatureMap> one{fm};
  CHECK(count_nonzero_per_channel(one) == std::vector<std::uint64_t>{1, 2});

  const FeatureMap grid(2, 2, 2, {0, 1, 0, 1, 3, 1, 0, 1});
  const std::vector<FeatureMap> g{grid};
  CHECK(count_nonzero_per_channel(g) == std::vector<std::uint64_t>{1, 4});

  const std::vector<FeatureMap> zeros{FeatureMap(3, 3, 4)};
  CHECK(count_nonzero_per_channel(zeros) == std::vector<std::uint64_t>(4, 0));

  std::mt19937_64 rng(5);
  const auto r = oracle::random_map(rng, 4, 4, 6);
  const std::vector<FeatureMap> single{r}, twice{r, r};
  const auto c1 = count_nonzero_per_channel(single);
  const auto c2 = count_nonzero_per_channel(twice);
  for (std::size_t c = 0; c < 6; ++c) CHECK(c2[c] == 2 * c1[c]);
}

TEST_CASE("negative values count only with the absolute-value rule") {
  const std::vector<FeatureMap> maps{FeatureMap(1, 2, 1, {-2.0, 0.5})};
  CHECK(count_nonzero_per_channel(maps, false) == std::vector<std::uint64_t>{1});
  CHECK(count_nonzero_per_channel(maps, true) == std::vector<std::uint64_t>{2});
}

TEST_CASE("channel selection keeps the fewest-nonzero channels") {
  const std::vector<std::uint64_t> a{5, 0, 3}, b{2, 2, 2}, c{7, 1, 4, 1};
  CHECK(select_channels(a, 2).indices == std::vector<std::size_t>{1, 2});
  CHECK(select_channels(b, 2).indices == std::vector<std::size_t>{0, 1});
  CHECK(select_channels(c, 3).indices == std::vector<std::size_t>{1, 2, 3});
  CHECK(select_channels(c, 3).source_channels == 4);
  CHECK_THROWS_AS(select_channels(c, 5), Error);
  CHECK_THROWS_AS(select_channels(c, 0), Error);
}

TEST_CASE("selection matches a sort-by-(count, index) oracle and is permutation stable") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng() % 20;
    std::vector<std::uint64_t> counts(n);
    for (auto& v : counts) v = rng() % 5;
    const std::size_t d = 1 + rng() % n;
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t x, std::size_t y) {
      return std::pair(counts[x], x) < std::pair(counts[y], y);
    });
    idx.resize(d);
    std::sort(idx.begin(), idx.end());
    const auto sel = select_channels(counts, d);
    REQUIRE(sel.indices == idx);

    // Shuffling the counts never changes the multiset of chosen counts.
    auto shuffled = counts;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    const auto sel2 = select_channels(shuffled, d);
    std::vector<std::uint64_t> chosen1, chosen2;
    for (auto i : sel.indices) chosen1.push_back(counts[i]);
    for (auto i : sel2.indices) chosen2.push_back(shuffled[i]);
    std::sort(chosen1.begin(), chosen1.end());
    std::sort(chosen2.begin(), chosen2.end());
    CHECK(chosen1 == chosen2);
  }
}

TEST_CASE("apply_selection gathers channels exactly") {
  std::mt19937_64 rng(2);
  const auto fm = oracle::random_map(rng, 3, 5, 6);
  ChannelSelection all{{0, 1, 2, 3, 4, 5}, 6};
  CHECK(apply_selection(fm, all) == fm);

  ChannelSelection sel{{1, 4}, 6};
  const auto out = apply_selection(fm, sel);
  REQUIRE(out.channels() == 2);
  for (std::size_t h = 0; h < 3; ++h)
    for (std::size_t w = 0; w < 5; ++w) {
      CHECK(out.at(h, w)[0] == fm.at(h, w)[1]);
      CHECK(out.at(h, w)[1] == fm.at(h, w)[4]);
    }
  CHECK_THROWS_AS(apply_selection(fm, ChannelSelection{{0}, 5}), Error);
}
