#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "prefpo/domain.hpp"

namespace prefpo::stats {

enum class CiMethod { bootstrap_percentile, normal_approx };
std::string_view to_string(CiMethod m);

struct ConfidenceInterval {
  double mean = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  CiMethod method = CiMethod::bootstrap_percentile;
  std::optional<int> resamples;
  std::optional<std::uint64_t> seed;

  double half_width() const noexcept { return (upper - lower) / 2.0; }
  /// Bounds clipped to [lo, hi] for display; the stored bounds stay raw.
  std::pair<double, double> clipped(double lo = 0.0, double hi = 1.0) const noexcept;
};

/// Linear-interpolation percentile (R type 7 / numpy default) of sorted data.
/// q in [0, 1].
double percentile_sorted(std::span<const double> sorted, double q);

/// Percentile bootstrap of the mean. Resample r draws from the counter-based
/// substream (seed, r), so the result does not depend on `threads`.
ConfidenceInterval bootstrap_ci(std::span<const double> values, int resamples, std::uint64_t seed,
                                unsigned threads = 1);

/// mean +- 1.96 * sd / sqrt(n), with the n-1 sample standard deviation.
ConfidenceInterval normal_ci(std::span<const double> values);

/// (mean, sample sd); sd is 0 for a single value.
std::pair<double, double> mean_sd(std::span<const double> values);

void to_json(Json& j, const ConfidenceInterval& v);

}  // namespace prefpo::stats
