#include "doctest.h"
#include "neighbor_sim.hpp"
#include "oracles.hpp"

using namespace npad;

namespace {

// Eq.-style weighted moments straight from the definition.
oracle::Moments weighted_oracle(const std::vector<FeatureMap>& maps, const WeightField& wf,
                                double eps) {
  const std::size_t H = maps[0].height(), W = maps[0].width(), d = maps[0].channels();
  const double N = static_cast<double>(maps.size());
  oracle::Moments m{std::vector<double>(H * W * d, 0.0), std::vector<double>(H * W * d * d, 0.0)};
  for (std::size_t h = 0; h < H; ++h)
    for (std::size_t w = 0; w < W; ++w) {
      const auto mem = wf.members(h, w);
      const auto wt = wf.weights(h, w);
      double* mu = &m.mean[(h * W + w) * d];
      for (std::size_t c = 0; c < d; ++c) {
        double s = 0.0;
        for (const auto& fm : maps)
          for (std::size_t a = 0; a < mem.size(); ++a) s += wt[a] * fm.at(mem[a].h, mem[a].w)[c];
        mu[c] = s / N;
      }
      double sq = 0.0;
      for (double x : wt) sq += x * x;
      for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) {
          double s = 0.0;
          for (const auto& fm : maps)
            for (std::size_t a = 0; a < mem.size(); ++a) {
              const auto e = fm.at(mem[a].h, mem[a].w);
              s += wt[a] * (e[i] - mu[i]) * (e[j] - mu[j]);
            }
          m.cov[((h * W + w) * d + i) * d + j] = s / (N - sq) + (i == j ? eps : 0.0);
        }
    }
  return m;
}

}  // namespace

TEST_CASE("neighborhoods clip at the border") {
  CHECK(neighborhood(2, 2, 1, 4, 4).members.size() == 1);
  CHECK(neighborhood(2, 2, 1, 4, 4).members[0] == Pixel{2, 2});
  CHECK(neighborhood(1, 1, 3, 4, 4).members.size() == 9);
  const auto corner = neighborhood(0, 0, 3, 4, 4);
  REQUIRE(corner.members.size() == 4);
  CHECK(corner.members[0] == Pixel{0, 0});
  CHECK(corner.members[1] == Pixel{0, 1});
  CHECK(corner.members[2] == Pixel{1, 0});
  CHECK(corner.members[3] == Pixel{1, 1});
  CHECK(neighborhood(0, 0, 2, 4, 4).members.size() == 4);
  CHECK(neighborhood(2, 2, 5, 5, 5).members.size() == 25);
  CHECK(neighborhood(0, 0, 3, 1, 1).members.size() == 1);
}

TEST_CASE("Bhattacharyya hand values") {
  const std::vector<double> m0{0.0}, m2{2.0}, one{1.0};
  CHECK(bhattacharyya_bc(m0, one, m2, one) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(bhattacharyya_bc(m0, one, m2, one, BcForm::Full) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(bhattacharyya_bc(m0, one, m0, one) == 0.0);
  CHECK(bhattacharyya_bc(m0, one, m0, one, BcForm::Full) == doctest::Approx(0.0));
  CHECK(similarity_weight(0.0, 0.25) == 1.0);
  CHECK(similarity_weight(0.5, 0.25) == doctest::Approx(std::exp(-2.0)).epsilon(1e-15));
  CHECK(similarity_weight(3.0, 1e12) == doctest::Approx(1.0));
  CHECK_THROWS_AS(similarity_weight(0.5, 0.0), Error);
}

TEST_CASE("Bhattacharyya matches the oracle and is symmetric") {
  std::mt19937_64 rng(31);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t d = 1 + trial % 6;
    std::vector<double> a(d), b(d);
    for (auto& v : a) v = n(rng);
    for (auto& v : b) v = n(rng);
    const auto ca = oracle::random_spd(rng, d, 0.2);
    const auto cb = oracle::random_spd(rng, d, 0.2);
    for (auto form : {BcForm::Simplified, BcForm::Full}) {
      const double ab = bhattacharyya_bc(a, ca, b, cb, form);
      CHECK(ab == bhattacharyya_bc(b, cb, a, ca, form));
      CHECK(oracle::rel_err(ab, oracle::bhattacharyya(a, ca, b, cb, form == BcForm::Full)) <= 1e-9);
      CHECK(ab >= 0.0);
    }
    // The log-det term vanishes with equal covariances.
    CHECK(oracle::rel_err(bhattacharyya_bc(a, ca, b, ca, BcForm::Full),
                          bhattacharyya_bc(a, ca, b, ca, BcForm::Simplified)) <= 1e-9);
  }
}

TEST_CASE("similarity weight is strictly decreasing in BC") {
  double prev = 2.0;
  for (double bc = 0.0; bc < 5.0; bc += 0.05) {
    const double w = similarity_weight(bc, 0.25);
    CHECK(w < prev);
    CHECK(w > 0.0);
    CHECK(w <= 1.0);
    prev = w;
  }
}

TEST_CASE("weights are normalized with self-similarity 1 before normalization") {
  std::mt19937_64 rng(41);
  std::vector<FeatureMap> maps;
  for (int i = 0; i < 8; ++i) maps.push_back(oracle::random_map(rng, 4, 5, 3));
  const auto base = fit_pixel_gaussians(maps, 0.01);
  for (auto scheme : {WeightScheme::Similarity, WeightScheme::Uniform, WeightScheme::Random}) {
    const auto wf = compute_weights(base, 3, 0.25, {scheme, BcForm::Simplified, 9});
    for (std::size_t h = 0; h < 4; ++h)
      for (std::size_t w = 0; w < 5; ++w) {
        const auto wt = wf.weights(h, w);
        const auto mem = wf.members(h, w);
        double s = 0.0;
        for (double x : wt) {
          CHECK(x > 0.0);
          CHECK(x <= 1.0);
          s += x;
        }
        CHECK(std::abs(s - 1.0) <= 1e-9);
        if (scheme == WeightScheme::Uniform)
          for (double x : wt) CHECK(x == doctest::Approx(1.0 / static_cast<double>(wt.size())));
        if (scheme != WeightScheme::Similarity) continue;
        // Raw weights: exp(-BC/gamma) against the center, 1 for the center.
        std::vector<double> raw;
        double total = 0.0;
        for (const auto& m : mem) {
          raw.push_back(std::exp(-oracle::bhattacharyya(base.mean(h, w), base.covariance(h, w),
                                                        base.mean(m.h, m.w),
                                                        base.covariance(m.h, m.w), false) /
                                 0.25));
          total += raw.back();
        }
        for (std::size_t k = 0; k < mem.size(); ++k) {
          if (mem[k] == Pixel{h, w}) CHECK(raw[k] == 1.0);
          CHECK(std::abs(wt[k] - raw[k] / total) <= 1e-12);
        }
      }
  }
}

TEST_CASE("random weights depend on the seed only") {
  std::mt19937_64 rng(42);
  std::vector<FeatureMap> maps;
  for (int i = 0; i < 4; ++i) maps.push_back(oracle::random_map(rng, 3, 3, 2));
  const auto base = fit_pixel_gaussians(maps, 0.01);
  const auto a = compute_weights(base, 3, 0.25, {WeightScheme::Random, BcForm::Simplified, 1});
  const auto b = compute_weights(base, 3, 0.25, {WeightScheme::Random, BcForm::Simplified, 1});
  const auto c = compute_weights(base, 3, 0.25, {WeightScheme::Random, BcForm::Simplified, 2});
  CHECK(a.to_json() == b.to_json());
  CHECK(a.to_json() != c.to_json());
}

TEST_CASE("p = 1 reduces the weighted field to the plain field") {
  std::mt19937_64 rng(43);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<FeatureMap> maps;
    const std::size_t n = 2 + trial % 9;
    for (std::size_t i = 0; i < n; ++i) maps.push_back(oracle::random_map(rng, 3, 4, 1 + trial % 6));
    const auto base = fit_pixel_gaussians(maps, 0.01);
    const auto wf = fit_weighted_field(maps, base, 1, 0.25, 0.01);
    for (std::size_t i = 0; i < base.means().size(); ++i)
      CHECK(oracle::rel_err(wf.field.means()[i], base.means()[i]) <= 1e-9);
    for (std::size_t i = 0; i < base.covariances().size(); ++i)
      CHECK(std::abs(wf.field.covariances()[i] - base.covariances()[i]) <=
            1e-9 * std::max(1.0, std::abs(base.covariances()[i])));
  }
}

TEST_CASE("hand-evaluated weighted moments on a 2x1 grid") {
  // Pixel (0,0) sees {0, 2}, pixel (1,0) sees {2, 4}.
  const std::vector<FeatureMap> maps{FeatureMap(2, 1, 1, {0.0, 2.0}),
                                     FeatureMap(2, 1, 1, {2.0, 4.0})};
  const auto base = fit_pixel_gaussians(maps, 0.01);
  CHECK(base.covariance(0, 0)[0] == doctest::Approx(2.01));
  const auto wf = fit_weighted_field(maps, base, 3, 0.25, 0.01);

  const double bc = 0.125 * 4.0 / 2.01;
  const double e = std::exp(-bc / 0.25);
  const double m_self = 1.0 / (1.0 + e), m_other = e / (1.0 + e);
  // Pixel (0,0): members (0,0) self and (1,0) other.
  const double mu0 = 0.5 * ((m_self * 0 + m_other * 2) + (m_self * 2 + m_other * 4));
  const double scatter0 = m_self * (0 - mu0) * (0 - mu0) + m_other * (2 - mu0) * (2 - mu0) +
                          m_self * (2 - mu0) * (2 - mu0) + m_other * (4 - mu0) * (4 - mu0);
  const double cov0 = scatter0 / (2.0 - (m_self * m_self + m_other * m_other)) + 0.01;
  CHECK(wf.weights.weights(0, 0)[0] == doctest::Approx(m_self).epsilon(1e-14));
  CHECK(wf.field.mean(0, 0)[0] == doctest::Approx(mu0).epsilon(1e-14));
  CHECK(wf.field.covariance(0, 0)[0] == doctest::Approx(cov0).epsilon(1e-14));
  // Pixel (1,0): member (0,0) is the other pixel, (1,0) itself.
  CHECK(wf.weights.weights(1, 0)[1] == doctest::Approx(m_self).epsilon(1e-14));
  CHECK(wf.field.mean(1, 0)[0] == doctest::Approx(3.0 * m_self + m_other).epsilon(1e-14));
}

TEST_CASE("weighted field matches the definition on random instances") {
  std::mt19937_64 rng(44);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<FeatureMap> maps;
    const std::size_t n = 2 + trial;
    for (std::size_t i = 0; i < n; ++i) maps.push_back(oracle::random_map(rng, 4, 3, 1 + trial % 4));
    const auto base = fit_pixel_gaussians(maps, 0.01);
    for (auto form : {BcForm::Simplified, BcForm::Full}) {
      const auto wf = fit_weighted_field(maps, base, 3, 0.25, 0.01, {WeightScheme::Similarity, form, 0});
      const auto ref = weighted_oracle(maps, wf.weights, 0.01);
      for (std::size_t i = 0; i < ref.mean.size(); ++i)
        CHECK(std::abs(wf.field.means()[i] - ref.mean[i]) <= 1e-10);
      for (std::size_t i = 0; i < ref.cov.size(); ++i)
        CHECK(std::abs(wf.field.covariances()[i] - ref.cov[i]) <= 1e-10);
    }
  }
}

TEST_CASE("the weighted denominator rejects N = 1 with p = 1") {
  const std::vector<FeatureMap> one{FeatureMap(2, 2, 1, {1, 2, 3, 4})};
  const auto base = fit_pixel_gaussians(one, 0.01, {.allow_single_sample = true});
  CHECK_THROWS_AS(fit_weighted_field(one, base, 1, 0.25, 0.01), Error);
  // Uniform weights over a larger neighborhood leave 1 - 1/|N| > 0.
  CHECK_NOTHROW(fit_weighted_field(one, base, 3, 0.25, 0.01, {WeightScheme::Uniform}));
  // Similarity weights collapse onto the center when the single-map base
  // field (eps * I) separates the neighbors, and the denominator reaches 0.
  CHECK_THROWS_AS(fit_weighted_field(one, base, 3, 0.25, 0.01), Error);
}

TEST_CASE("weight dump lists every pixel") {
  const std::vector<FeatureMap> maps{FeatureMap(2, 2, 1, {1, 2, 3, 4}),
                                     FeatureMap(2, 2, 1, {2, 2, 1, 4})};
  const auto base = fit_pixel_gaussians(maps, 0.01);
  const auto json = compute_weights(base, 3, 0.25).to_json();
  CHECK(json.find("\"pixels\"") != std::string::npos);
  CHECK(json.find("\"height\":2") != std::string::npos);
}
