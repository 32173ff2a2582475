#include <doctest.h>

#include <cmath>
#include <vector>

#include "prefpo/error.hpp"
#include "prefpo/rng.hpp"
#include "prefpo/stats.hpp"

using namespace prefpo;
using namespace prefpo::stats;

TEST_CASE("percentile uses linear interpolation") {
  const std::vector<double> v{1, 2, 3, 4};
  CHECK(percentile_sorted(v, 0.0) == 1.0);
  CHECK(percentile_sorted(v, 1.0) == 4.0);
  CHECK(percentile_sorted(v, 0.5) == doctest::Approx(2.5));
  CHECK(percentile_sorted(v, 0.025) == doctest::Approx(1.075));
  const std::vector<double> same{0.7, 0.7};
  CHECK(percentile_sorted(same, 0.3) == 0.7);
}

TEST_CASE("mean and sd") {
  const std::vector<double> v{2, 4, 4, 4, 5, 5, 7, 9};
  const auto [m, sd] = mean_sd(v);
  CHECK(m == doctest::Approx(5.0));
  CHECK(sd == doctest::Approx(2.138089935299395));
  CHECK(mean_sd(std::vector<double>{3.0}).second == 0.0);
  CHECK_THROWS_AS(mean_sd(std::vector<double>{}), EmptyInput);
}

TEST_CASE("normal interval") {
  const std::vector<double> v{0, 1, 1, 1};
  const auto ci = normal_ci(v);
  CHECK(ci.mean == doctest::Approx(0.75));
  CHECK(ci.half_width() == doctest::Approx(1.96 * 0.5 / 2.0));
  CHECK(ci.method == CiMethod::normal_approx);
  CHECK_THROWS_AS(normal_ci(std::vector<double>{1.0}), TooFewValues);
}

TEST_CASE("bootstrap is reproducible and thread-independent") {
  std::vector<double> v;
  for (int i = 0; i < 148; ++i) v.push_back(i < 125 ? 1.0 : 0.0);
  const auto a = bootstrap_ci(v, 10000, 99);
  const auto b = bootstrap_ci(v, 10000, 99, 4);
  CHECK(a.lower == b.lower);
  CHECK(a.upper == b.upper);
  CHECK(a.mean == doctest::Approx(125.0 / 148.0));
  CHECK(a.half_width() == doctest::Approx(0.057).epsilon(0.015 / 0.057));
  CHECK(a.resamples == 10000);
  CHECK(a.seed == 99u);
}

TEST_CASE("bootstrap edge cases") {
  const std::vector<double> one{0.5};
  const auto ci = bootstrap_ci(one, 100, 1);
  CHECK(ci.lower == 0.5);
  CHECK(ci.upper == 0.5);
  CHECK_THROWS_AS(bootstrap_ci(std::vector<double>{}, 100, 1), EmptyInput);
  CHECK_THROWS_AS(bootstrap_ci(one, 0, 1), PreconditionError);
}

TEST_CASE("clipping only affects the displayed bounds") {
  ConfidenceInterval ci{0.98, 0.95, 1.01, CiMethod::normal_approx, std::nullopt, std::nullopt};
  CHECK(ci.clipped().second == 1.0);
  CHECK(ci.upper == 1.01);
}

TEST_CASE("bootstrap coverage on a small simulation") {
  Rng rng(11);
  int covered = 0;
  const int datasets = 100;
  for (int d = 0; d < datasets; ++d) {
    std::vector<double> v(148);
    for (auto& x : v) x = rng.uniform() < 0.8 ? 1.0 : 0.0;
    const auto ci = bootstrap_ci(v, 1000, static_cast<std::uint64_t>(d));
    covered += (ci.lower <= 0.8 && 0.8 <= ci.upper) ? 1 : 0;
  }
  CHECK(covered >= 85);
}
