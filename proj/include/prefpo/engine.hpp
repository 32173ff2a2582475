#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "prefpo/domain.hpp"
#include "prefpo/model_gateway.hpp"
#include "prefpo/rng.hpp"

namespace prefpo {

struct EloState {
  std::map<std::string, double> ratings;
  double r0 = 1500.0;
  double k_factor = 32.0;

  bool operator==(const EloState&) const = default;
};

/// Expected score of i against j: 1 / (1 + 10^((r_j - r_i) / 400)).
double elo_expected(double r_i, double r_j);

/// Zero-sum update after `winner_id` beats `loser_id`. Throws UnknownPromptId.
EloState elo_update(const EloState& state, const std::string& winner_id, const std::string& loser_id);

/// Uniform: a uniformly random pair of distinct prompts. Elo: the two
/// highest-rated prompts, ties going to the earlier prompt. Either way the
/// returned order is a fair coin flip. Throws PoolTooSmall.
std::pair<Prompt, Prompt> sample_pair(const PromptPool& pool, Sampling strategy, const EloState* elo, Rng& rng);

/// With one seed, asks the variant role for a rewrite (up to `attempts`
/// tries) and returns {seed, variant}; with more, returns the seeds as is.
PromptPool bootstrap_pool(const std::vector<Prompt>& seeds, const Criteria& criteria, const Gateway& gateway,
                          const ModelSpec& variant_model, int attempts = 3);

enum class IterationOutcome { inserted, skipped, dedup_suppressed };
std::string_view to_string(IterationOutcome o);

struct IterationLog {
  int iteration = 0;
  std::string prompt_a_id;  // shown as version / output 1
  std::string prompt_b_id;  // shown as version / output 2
  std::optional<ComparisonRecord> verdict;
  IterationOutcome outcome = IterationOutcome::skipped;
  std::optional<std::string> new_prompt_id;
  std::optional<std::string> skip_reason;
  int discriminator_attempts = 0;
  int optimizer_attempts = 0;
  std::optional<std::map<std::string, double>> elo;

  bool operator==(const IterationLog&) const = default;
};

void to_json(Json& j, const IterationLog& v);
void from_json(const Json& j, IterationLog& v);

struct RunResult {
  PromptPool pool;
  std::vector<IterationLog> logs;
  int skipped = 0;
  int dedup_suppressed = 0;
};

/// Number of discriminator / optimizer attempts before an iteration is skipped.
inline constexpr int kParseAttempts = 3;

/// Runs the optimization loop. `train` is required in labeled_qa mode; in
/// criteria_only mode, supplying it switches to the question/response
/// transcript without expected answers. `on_iteration` sees every log record
/// as soon as it is final. Throws AbortedRun when the config is invalid, the
/// pool is too small, or more than a third of the iterations skip.
RunResult run(const RunConfig& cfg, const Gateway& gateway, PromptPool pool, const Criteria& criteria,
              const std::vector<TaskSample>* train = nullptr,
              const std::function<void(const IterationLog&)>& on_iteration = {});

}  // namespace prefpo
