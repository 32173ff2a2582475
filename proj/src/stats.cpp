#include "prefpo/stats.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include "prefpo/error.hpp"
#include "prefpo/rng.hpp"

namespace prefpo::stats {

std::string_view to_string(CiMethod m) {
  return m == CiMethod::bootstrap_percentile ? "bootstrap_percentile" : "normal_approx";
}

std::pair<double, double> ConfidenceInterval::clipped(double lo, double hi) const noexcept {
  return {std::clamp(lower, lo, hi), std::clamp(upper, lo, hi)};
}

double percentile_sorted(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw EmptyInput("percentile of an empty sample");
  const double h = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = h - static_cast<double>(lo);
  if (frac == 0.0 || sorted[lo] == sorted[hi]) return sorted[lo];
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

namespace {

double mean_of(std::span<const double> values) {
  double sum = 0.0;
  for (double v : values) sum += v;
  return sum / static_cast<double>(values.size());
}

double resample_mean(std::span<const double> values, std::uint64_t seed, std::uint64_t r) {
  Rng rng = Rng::stream(seed, r);
  const auto n = values.size();
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) sum += values[rng.below(n)];
  return sum / static_cast<double>(n);
}

}  // namespace

ConfidenceInterval bootstrap_ci(std::span<const double> values, int resamples, std::uint64_t seed,
                                unsigned threads) {
  if (values.empty()) throw EmptyInput("bootstrap_ci needs at least one value");
  if (resamples < 1) throw PreconditionError("bootstrap_ci needs resamples >= 1");

  std::vector<double> means(static_cast<std::size_t>(resamples));
  const unsigned workers = std::clamp(threads, 1u, static_cast<unsigned>(resamples));
  if (workers == 1) {
    for (std::size_t r = 0; r < means.size(); ++r) means[r] = resample_mean(values, seed, r);
  } else {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t r = w; r < means.size(); r += workers) means[r] = resample_mean(values, seed, r);
      });
    }
  }
  std::sort(means.begin(), means.end());

  ConfidenceInterval ci;
  ci.mean = mean_of(values);
  ci.lower = percentile_sorted(means, 0.025);
  ci.upper = percentile_sorted(means, 0.975);
  ci.method = CiMethod::bootstrap_percentile;
  ci.resamples = resamples;
  ci.seed = seed;
  return ci;
}

std::pair<double, double> mean_sd(std::span<const double> values) {
  if (values.empty()) throw EmptyInput("mean_sd of an empty sample");
  const double mean = mean_of(values);
  if (values.size() == 1) return {mean, 0.0};
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / static_cast<double>(values.size() - 1))};
}

ConfidenceInterval normal_ci(std::span<const double> values) {
  if (values.size() < 2) throw TooFewValues("normal_ci needs at least two values");
  const auto [mean, sd] = mean_sd(values);
  const double half = 1.96 * sd / std::sqrt(static_cast<double>(values.size()));
  ConfidenceInterval ci;
  ci.mean = mean;
  ci.lower = mean - half;
  ci.upper = mean + half;
  ci.method = CiMethod::normal_approx;
  return ci;
}

void to_json(Json& j, const ConfidenceInterval& v) {
  j = Json{{"mean", v.mean}, {"lower", v.lower}, {"upper", v.upper}, {"method", to_string(v.method)}};
  j["resamples"] = v.resamples ? Json(*v.resamples) : Json(nullptr);
  j["seed"] = v.seed ? Json(*v.seed) : Json(nullptr);
}

}  // namespace prefpo::stats
