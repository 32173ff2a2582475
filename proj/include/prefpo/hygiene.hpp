#pragma once

#include <cstddef>
#include <string_view>
#include <vector>

#include "prefpo/domain.hpp"

namespace prefpo::hygiene {

struct HygieneMetrics {
  std::size_t length_chars = 0;
  double repetition = 0.0;
  double similarity_to_seed = 0.0;
  double length_ratio = 0.0;
  double repetition_increase = 0.0;

  bool operator==(const HygieneMetrics&) const = default;
};

/// Unicode scalar values, whitespace included.
std::size_t length_chars(std::string_view text);

/// Share of word trigrams that occur more than once.
///
/// Tokens are whitespace-separated and case-preserving. Every occurrence of a
/// repeated trigram counts, so "a b c a b c" scores 1.0. Texts with fewer
/// than three tokens score 0.
double repetition_ratio(std::string_view text);

/// Character-level overlap of `candidate` against `reference`:
/// 2 * matched / (|reference| + |candidate|), where matched is the total size
/// of the Ratcliff/Obershelp matching blocks. Characters occurring in more than
/// 1% of a candidate of 200+ code points are not used to seed matches (the
/// usual "autojunk" heuristic). Not symmetric; identical texts give 1.0.
double lexical_similarity(std::string_view reference, std::string_view candidate);

/// Throws EmptySeed if the seed text is empty.
HygieneMetrics hygiene_report(const Prompt& prompt, const Prompt& seed);

struct FieldSummary {
  double mean = 0.0;
  double sd = 0.0;
};

struct PoolSummary {
  std::size_t n = 0;
  FieldSummary length_chars;
  FieldSummary repetition;
  FieldSummary similarity_to_seed;
  FieldSummary length_ratio;
  FieldSummary repetition_increase;
};

/// Mean and sample SD of every field; throws EmptyInput on an empty list.
PoolSummary summarize(const std::vector<HygieneMetrics>& rows);

void to_json(Json& j, const HygieneMetrics& v);
void to_json(Json& j, const FieldSummary& v);
void to_json(Json& j, const PoolSummary& v);

}  // namespace prefpo::hygiene
