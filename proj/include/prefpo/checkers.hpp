#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "prefpo/domain.hpp"

namespace prefpo {

/// Built-in kinds and their params:
///
///   keyword_min_count            {keyword, min_count}   whole-word, case-insensitive
///   keyword_max_count            {keyword, max_count}   passes when count <= max_count
///   keywords_all                 {keywords: [..]}        every keyword at least once
///   forbidden_words              {words: [..]}
///   letter_min_count             {letter, min_count}    case-insensitive tally
///   letter_max_count             {letter, max_count}
///   word_min / word_max          {min_words} / {max_words}          whitespace tokens
///   sentence_min / sentence_max  {min_sentences} / {max_sentences}
///   paragraph_count_with_divider {divider, count}
///   no_commas                    {}
///   end_phrase_exact             {phrase}
///   min_highlighted_sections     {min_count}
///
/// All *_max kinds are inclusive.
enum class CheckStatus { passed, failed, indeterminate };
std::string_view to_string(CheckStatus s);

struct CheckResult {
  std::size_t criterion_index = 0;
  CheckStatus status = CheckStatus::indeterminate;
  std::string detail;

  bool passed() const noexcept { return status == CheckStatus::passed; }
  bool operator==(const CheckResult&) const = default;
};

struct CheckOutcome {
  CheckStatus status;
  std::string detail;
};

struct CheckerDef {
  /// Returns schema violations of `params`; empty means valid.
  std::function<std::vector<std::string>(const Json& params)> validate;
  std::function<CheckOutcome(std::string_view text, const Json& params)> check;
};

/// Registers (or replaces) a checker for `kind`. Not thread-safe against
/// concurrent checks; register during startup.
void register_checker(std::string kind, CheckerDef def);
bool is_registered(std::string_view kind);
std::vector<std::string> registered_kinds();

struct CheckOptions {
  /// When false, unregistered kinds throw UnknownKind instead of yielding
  /// an indeterminate result.
  bool allow_unknown = true;
};

/// Params violations for a registered kind; unknown kinds yield none.
std::vector<std::string> criterion_violations(const Criterion& c);

/// Throws PreconditionError if the params do not fit the kind's schema.
CheckResult check(std::string_view output_text, const Criterion& criterion, std::size_t index = 0,
                  CheckOptions opts = {});

struct CheckAllResult {
  bool passed = false;
  std::vector<CheckResult> results;
  std::size_t indeterminate = 0;
};

/// Conjunction over the determinate items. Indeterminate items are reported
/// but never count as passes. Throws EmptyCriteria when there are no items or
/// when every item is indeterminate.
CheckAllResult check_all(std::string_view output_text, const Criteria& criteria, CheckOptions opts = {});

// Counting primitives, exposed for reports and tests.
namespace count {
std::size_t keyword(std::string_view text, std::string_view keyword);
std::size_t letter(std::string_view text, char letter);
std::size_t words(std::string_view text);
std::size_t sentences(std::string_view text);
std::size_t highlighted_sections(std::string_view text);
/// Paragraph count for a divider line, or -1 if an inner paragraph is empty.
long paragraphs(std::string_view text, std::string_view divider);
}  // namespace count

void to_json(Json& j, const CheckResult& v);

}  // namespace prefpo
