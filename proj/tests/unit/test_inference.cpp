#include "aggregate_bank.hpp"
#include "doctest.h"
#include "inference.hpp"
#include "oracles.hpp"
#include "parallel.hpp"

using namespace npad;

namespace {

GaussianField field_from(const std::vector<FeatureMap>& maps) { return fit_pixel_gaussians(maps, 0.01); }

std::vector<FeatureMap> random_maps(std::mt19937_64& rng, int n, std::size_t h, std::size_t w,
                                    std::size_t c) {
  std::vector<FeatureMap> maps;
  for (int i = 0; i < n; ++i) maps.push_back(oracle::random_map(rng, h, w, c));
  return maps;
}

}  // namespace

TEST_CASE("D1 with q = 1 is the plain Mahalanobis map") {
  std::mt19937_64 rng(61);
  const auto f = field_from(random_maps(rng, 6, 3, 4, 2));
  const auto x = oracle::random_map(rng, 3, 4, 2);
  const auto d1 = score_d1(x, f, 1);
  for (std::size_t h = 0; h < 3; ++h)
    for (std::size_t w = 0; w < 4; ++w)
      CHECK(oracle::rel_err(d1(h, w), oracle::mahalanobis(x.at(h, w), f.mean(h, w),
                                                          f.covariance(h, w))) <= 1e-9);
}

TEST_CASE("D1 with q = 2 is the minimum over the clipped neighborhood") {
  std::mt19937_64 rng(62);
  const auto f = field_from(random_maps(rng, 5, 2, 2, 2));
  const auto x = oracle::random_map(rng, 2, 2, 2);
  const auto d1 = score_d1(x, f, 2);
  for (std::size_t h = 0; h < 2; ++h)
    for (std::size_t w = 0; w < 2; ++w) {
      double best = 1e300;
      for (std::size_t y = 0; y < 2; ++y)
        for (std::size_t z = 0; z < 2; ++z)
          best = std::min(best, oracle::mahalanobis(x.at(h, w), f.mean(y, z), f.covariance(y, z)));
      CHECK(oracle::rel_err(d1(h, w), best) <= 1e-9);
    }
  const auto bigger = field_from(random_maps(rng, 5, 5, 6, 3));
  const auto y = oracle::random_map(rng, 5, 6, 3);
  const auto q1 = score_d1(y, bigger, 1), q2 = score_d1(y, bigger, 2);
  for (std::size_t i = 0; i < q1.size(); ++i) CHECK(q2.values()[i] <= q1.values()[i]);
}

TEST_CASE("D2 aggregates then measures") {
  std::mt19937_64 rng(63);
  const auto train = random_maps(rng, 8, 4, 4, 2);
  const auto agg = fit_aggregate_field(train, 3, 0.01);
  const auto x = oracle::random_map(rng, 4, 4, 2);
  const auto d2 = score_d2(x, agg, 3);
  const auto pooled = oracle::pool(x, 3);
  for (std::size_t h = 0; h < 4; ++h)
    for (std::size_t w = 0; w < 4; ++w) {
      CHECK(d2(h, w) >= 0.0);
      CHECK(oracle::rel_err(d2(h, w), oracle::mahalanobis(pooled.at(h, w), agg.mean(h, w),
                                                          agg.covariance(h, w))) <= 1e-9);
    }
  // The training mean map scores zero with p = 1.
  const auto plain = fit_aggregate_field(train, 1, 0.01);
  FeatureMap mean(4, 4, 2, plain.means());
  const auto at_mean = score_d2(mean, plain, 1);
  for (double v : at_mean.values()) CHECK(v == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("geometric mean combination") {
  const AnomalyMap a(1, 2, std::vector<double>{4.0, 1.0}), b(1, 2, std::vector<double>{9.0, 1.0});
  const auto m = combine_maps(a, b);
  CHECK(m(0, 0) == doctest::Approx(6.0));
  CHECK(m(0, 1) == 1.0);
  CHECK(combine_maps(a, a) == a);
  std::mt19937_64 rng(64);
  std::uniform_real_distribution<double> u(0.0, 10.0);
  AnomalyMap x(3, 3), y(3, 3);
  for (auto& v : x.values()) v = u(rng);
  for (auto& v : y.values()) v = u(rng);
  const auto z = combine_maps(x, y);
  for (std::size_t i = 0; i < 9; ++i) {
    CHECK(z.values()[i] >= std::min(x.values()[i], y.values()[i]) - 1e-12);
    CHECK(z.values()[i] <= std::max(x.values()[i], y.values()[i]) + 1e-12);
  }
  CHECK_THROWS_AS(combine_maps(AnomalyMap(1, 2), AnomalyMap(2, 1)), Error);
}

TEST_CASE("image score hand instance") {
  // D1 = [.1 .5 / .9 .3]; the top two pixels are (1,0) and (0,1) whose
  // aggregated features sit at distance 2 and 1 from the single centroid.
  const AnomalyMap d1(2, 2, std::vector<double>{0.1, 0.5, 0.9, 0.3});
  const FeatureMap agg(2, 2, 1, {0.0, 1.0, 2.0, 0.0});
  CentroidBank bank;
  bank.dim = 1;
  bank.centroids = {0.0};
  const auto s = image_score(d1, agg, bank, 2);
  CHECK(s.value == doctest::Approx(2.3).epsilon(1e-15));
  CHECK(s.q_k == std::vector<double>{0.5, 0.9});
  CHECK(s.e_k == std::vector<double>{1.0, 2.0});
  REQUIRE(s.top_pixels.size() == 2);
  CHECK(s.top_pixels[0] == Pixel{1, 0});

  const auto one = image_score(d1, agg, bank, 1);
  CHECK(one.value == doctest::Approx(0.9 * 2.0));

  AnomalyMap scaled = d1;
  for (auto& v : scaled.values()) v *= 3.0;
  CHECK(image_score(scaled, agg, bank, 2).value == doctest::Approx(3.0 * 2.3));
  CHECK_THROWS_AS(image_score(d1, agg, bank, 0), Error);
  CHECK_THROWS_AS(image_score(d1, agg, bank, 5), Error);
}

TEST_CASE("image score ties break by row-major order and equal a sort-then-dot oracle") {
  const AnomalyMap d1(2, 2, std::vector<double>{0.7, 0.7, 0.7, 0.1});
  const FeatureMap agg(2, 2, 1, {1.0, 2.0, 3.0, 4.0});
  CentroidBank bank;
  bank.dim = 1;
  bank.centroids = {0.0};
  const auto s = image_score(d1, agg, bank, 2);
  CHECK(s.top_pixels[0] == Pixel{0, 0});
  CHECK(s.top_pixels[1] == Pixel{0, 1});
  CHECK(s.value == doctest::Approx(0.7 * 1.0 + 0.7 * 2.0));

  std::mt19937_64 rng(65);
  std::uniform_real_distribution<double> u(0.0, 5.0);
  for (int trial = 0; trial < 50; ++trial) {
    AnomalyMap m(4, 5);
    for (auto& v : m.values()) v = u(rng);
    const auto fm = oracle::random_map(rng, 4, 5, 3);
    CentroidBank b;
    b.dim = 3;
    b.centroids.resize(3 * 7);
    for (auto& v : b.centroids) v = u(rng) - 2.5;
    const std::size_t k = 1 + trial % 10;
    std::vector<std::size_t> idx(20);
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t a, std::size_t c) { return m.values()[a] > m.values()[c]; });
    std::vector<double> q, e;
    for (std::size_t i = 0; i < k; ++i) {
      q.push_back(m.values()[idx[i]]);
      e.push_back(std::sqrt(oracle::nearest_brute(fm.at(idx[i] / 5, idx[i] % 5), b.centroids, 3).second));
    }
    std::sort(q.begin(), q.end());
    std::sort(e.begin(), e.end());
    double dot = 0.0;
    for (std::size_t i = 0; i < k; ++i) dot += q[i] * e[i];
    CHECK(oracle::rel_err(image_score(m, fm, b, k).value, dot) <= 1e-12);
  }
}

TEST_CASE("shift offsets enumerate the square") {
  CHECK(shift_offsets(0) == std::vector<ShiftOffset>{{0, 0}});
  const auto r4 = shift_offsets(4);
  CHECK(r4.size() == 25);
  CHECK(r4.front() == ShiftOffset{-2, -2});
  CHECK(r4.back() == ShiftOffset{2, 2});
  CHECK(shift_offsets(1).size() == 1);
  CHECK(shift_offsets(3).size() == 9);
}

TEST_CASE("shift aggregation") {
  const AnomalyMap m(2, 2, std::vector<double>{1, 2, 3, 4});
  SUBCASE("single unshifted variant passes through") {
    const std::vector<ShiftVariant> v{{{0, 0}, m, 2.5}};
    const auto out = shifted_manifest_scores(v, 0);
    CHECK(out.map == m);
    CHECK(out.score == 2.5);
  }
  SUBCASE("identical variants average to themselves") {
    std::vector<ShiftVariant> v;
    for (const auto& off : shift_offsets(4)) v.push_back({off, m, 1.5});
    const auto out = shifted_manifest_scores(v, 4, 0.25, 0.25);
    CHECK(out.map == m);
    CHECK(out.score == 1.5);
  }
  SUBCASE("maps are translated back before averaging") {
    const AnomalyMap base(1, 3, std::vector<double>{1, 2, 3});
    // The (0,1) variant content is the original shifted left by one column.
    const AnomalyMap shifted(1, 3, std::vector<double>{2, 3, 3});
    const std::vector<ShiftVariant> v{{{0, 0}, base, 1.0}, {{0, 1}, shifted, 3.0}};
    const auto out = shifted_manifest_scores(v, 2);
    CHECK(out.map(0, 1) == doctest::Approx(2.0));
    CHECK(out.map(0, 2) == doctest::Approx(3.0));
    CHECK(out.score == 2.0);
  }
  SUBCASE("validation") {
    CHECK_THROWS_AS(shifted_manifest_scores(std::vector<ShiftVariant>{{{1, 0}, m, 0}}, 2), Error);
    CHECK_THROWS_AS(
        shifted_manifest_scores(std::vector<ShiftVariant>{{{0, 0}, m, 0}, {{0, 0}, m, 0}}, 2),
        Error);
    CHECK_THROWS_AS(
        shifted_manifest_scores(std::vector<ShiftVariant>{{{0, 0}, m, 0}, {{2, 0}, m, 0}}, 2),
        Error);
  }
}

TEST_CASE("feature shifts and translate-back") {
  std::mt19937_64 rng(66);
  const auto fm = oracle::random_map(rng, 4, 5, 2);
  CHECK(shift_feature_map(fm, 0.0, 0.0) == fm);
  const auto s = shift_feature_map(fm, 1.0, -1.0);
  CHECK(s.at(0, 1)[0] == fm.at(1, 0)[0]);
  CHECK(s.at(3, 0)[1] == fm.at(3, 0)[1]);  // replicated edge
  const auto half = shift_feature_map(fm, 0.5, 0.0);
  CHECK(half.at(1, 2)[0] == doctest::Approx(0.5 * (fm.at(1, 2)[0] + fm.at(2, 2)[0])));

  const AnomalyMap m(2, 2, std::vector<double>{1, 2, 3, 4});
  const auto t = translate_back(m, 1, 0);
  CHECK(t(1, 0) == 1.0);
  CHECK(t(0, 0) == 1.0);
}

TEST_CASE("smoothing keeps constants and is off at sigma 0") {
  const AnomalyMap c(5, 5, 3.0);
  const auto smoothed = gaussian_smooth(c, 2.0);
  for (double v : smoothed.values()) CHECK(v == doctest::Approx(3.0));
  const AnomalyMap m(1, 3, std::vector<double>{0, 9, 0});
  CHECK(gaussian_smooth(m, 0.0) == m);
  CHECK(gaussian_smooth(m, 1.0)(0, 1) < 9.0);
}

TEST_CASE("maps are finite, non-negative and independent of the worker count") {
  std::mt19937_64 rng(67);
  const auto train = random_maps(rng, 10, 6, 7, 3);
  const auto f = field_from(train);
  const auto agg = fit_aggregate_field(train, 3, 0.01);
  const auto x = oracle::random_map(rng, 6, 7, 3, 3.0);
  set_max_threads(1);
  const auto a1 = score_d1(x, f, 2), a2 = score_d2(x, agg, 3);
  set_max_threads(4);
  const auto b1 = score_d1(x, f, 2), b2 = score_d2(x, agg, 3);
  set_max_threads(1);
  CHECK(a1 == b1);
  CHECK(a2 == b2);
  const auto combined = combine_maps(a1, a2);
  for (double v : combined.values()) {
    CHECK(std::isfinite(v));
    CHECK(v >= 0.0);
  }
}
