#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "prefpo/domain.hpp"
#include "prefpo/model_gateway.hpp"

namespace prefpo::judge {

inline constexpr int kRuns = 3;

struct HygieneScores {
  std::array<int, 3> axes{};  // readability, specification quality, maintainability
  std::string reasoning;
};

struct HygieneGrade {
  double readability = 0.0;
  double specification_quality = 0.0;
  double maintainability = 0.0;
  double total = 0.0;
  std::vector<std::array<int, 3>> per_run;
  std::vector<std::string> reasoning;
};

struct HackVerdict {
  std::array<bool, 3> votes{};  // true = hacking detected ("fail")
  bool verdict = false;
  bool unanimous = true;
  std::vector<std::string> reasonings;
};

/// Prompt rendered the way the judge exemplars show it: JSON string escaping
/// with non-ASCII as \uXXXX, without the surrounding quotes.
std::string escape_prompt(std::string_view text);

Transcript render_hygiene_judge(const Prompt& prompt, const Criteria& criteria);
Transcript render_hacking_judge(const Prompt& prompt, const Criteria& criteria);

/// Reads the last "Scores:" block; every axis needs an `Axis: n/2` line with
/// n in {0, 1, 2}. Throws ParseError.
HygieneScores parse_hygiene_scores(std::string_view raw);

/// Reads the last "Grade: pass|fail" line; returns (hacking detected, reasoning).
/// Throws ParseError.
std::pair<bool, std::string> parse_hack_grade(std::string_view raw);

HygieneGrade aggregate_grade(const std::vector<HygieneScores>& runs);
HackVerdict aggregate_votes(const std::array<bool, 3>& votes, std::vector<std::string> reasonings = {});

/// Three independent judge calls; each may take up to three attempts. A run
/// that never parses fails the whole grade with ParseError.
HygieneGrade grade_hygiene(const Prompt& prompt, const Criteria& criteria, const Gateway& gateway,
                           const ModelSpec& judge_model, int max_concurrency = 1);
HackVerdict judge_hacking(const Prompt& prompt, const Criteria& criteria, const Gateway& gateway,
                          const ModelSpec& judge_model, int max_concurrency = 1);

struct CorpusRow {
  std::string prompt_id;
  std::optional<HygieneGrade> grade;
  std::optional<HackVerdict> verdict;
  std::optional<std::string> error;
};

struct CorpusReport {
  std::vector<CorpusRow> rows;
  std::size_t graded = 0;
  std::size_t judged = 0;
  std::size_t failed = 0;
  std::optional<double> mean_hygiene_total;
  std::optional<double> hacking_flag_rate;
  std::optional<double> unanimity_rate;
};

struct CorpusOptions {
  bool hygiene = true;
  bool hacking = true;
  int max_concurrency = 1;
};

/// Per-prompt failures are recorded in the row; aggregates cover successes.
CorpusReport judge_corpus(const std::vector<std::pair<Prompt, Criteria>>& corpus, const Gateway& gateway,
                          const ModelSpec& judge_model, CorpusOptions opts = {});

/// Recomputes the aggregate fields from `rows`.
void compute_aggregates(CorpusReport& report);

void to_json(Json& j, const HygieneGrade& v);
void to_json(Json& j, const HackVerdict& v);
void to_json(Json& j, const CorpusRow& v);
/// Aggregates only.
Json aggregates_json(const CorpusReport& r);

}  // namespace prefpo::judge
