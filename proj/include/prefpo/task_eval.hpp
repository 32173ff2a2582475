#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "prefpo/checkers.hpp"
#include "prefpo/domain.hpp"
#include "prefpo/engine.hpp"
#include "prefpo/model_gateway.hpp"

namespace prefpo {

/// Task-model context shared by the evaluation operations.
struct TaskRunner {
  const Gateway& gateway;
  ModelSpec model;
  int max_concurrency = 1;
  CheckOptions check_options{};
};

/// One task-model call. Without a sample the prompt is the whole user
/// message; with one, the message is prompt + "\n" + input. In labeled_qa
/// mode a sample is required.
GeneratedOutput generate(const TaskRunner& runner, const Prompt& prompt, Mode mode,
                         const TaskSample* sample = nullptr, std::optional<std::size_t> sample_index = {},
                         int run_index = 0);

// ---------------------------------------------------------------------------
// Labeled QA

/// Binary-task aliases: spelled answer (lowercase) -> canonical answer.
using AnswerAliases = std::map<std::string, std::string>;
const AnswerAliases& default_answer_aliases();

/// Payload of the last "ANSWER:" line (case-insensitive), normalized for the
/// task kind. Absent when no line matches or the payload does not normalize.
std::optional<std::string> extract_answer(std::string_view response, AnswerKind kind,
                                          const AnswerAliases& aliases = default_answer_aliases());

/// Normalizes a bare answer string (used for expected labels).
std::optional<std::string> normalize_answer(std::string_view answer, AnswerKind kind,
                                            const AnswerAliases& aliases = default_answer_aliases());

struct LabeledScore {
  std::string prompt_id;
  std::size_t correct = 0;
  std::size_t total = 0;
  double accuracy = 0.0;
  std::vector<bool> per_sample;
};

/// Samples without task_kind use `fallback_kind`.
LabeledScore score_labeled(const TaskRunner& runner, const Prompt& prompt, const std::vector<TaskSample>& samples,
                           AnswerKind fallback_kind = AnswerKind::exact_match,
                           const AnswerAliases& aliases = default_answer_aliases());

// ---------------------------------------------------------------------------
// Criteria pass statistics

struct PassStats {
  std::string prompt_id;
  int k = 0;
  int passes = 0;
  int worst_at_k = 0;
  double average_at_k = 0.0;

  bool operator==(const PassStats&) const = default;
};

/// Pure aggregation of per-run pass flags.
PassStats pass_stats_from(std::string prompt_id, const std::vector<bool>& runs);

PassStats pass_stats(const TaskRunner& runner, const Prompt& prompt, const Criteria& criteria, int k);

// ---------------------------------------------------------------------------
// Selection and curation

struct Selection {
  Prompt prompt;
  /// Score of every evaluated prompt (accuracy or average@k), creation order.
  std::vector<std::pair<std::string, double>> evaluated;
  std::optional<PassStats> stats;
};

Selection select_final(const TaskRunner& runner, const PromptPool& pool, Mode mode,
                       const std::vector<TaskSample>* validation, const Criteria* criteria, int k,
                       AnswerKind fallback_kind = AnswerKind::exact_match,
                       const AnswerAliases& aliases = default_answer_aliases());

/// A criteria-mode dataset record: the task prompt and its checks.
struct CriteriaRecord {
  std::optional<std::string> key;
  std::string prompt;
  Criteria criteria;

  bool operator==(const CriteriaRecord&) const = default;
};

struct CurationResult {
  std::vector<CriteriaRecord> kept;
  std::vector<PassStats> stats;  // one per input record
};

/// Keeps exactly the records whose worst@k is 0.
CurationResult curate_hard_subset(const TaskRunner& runner, const std::vector<CriteriaRecord>& records, int k);

// ---------------------------------------------------------------------------
// Component effectiveness

struct ComponentStats {
  double discriminator_accuracy = 0.0;
  double optimizer_accuracy = 0.0;
  double mean_improvement = 0.0;
  std::size_t compared = 0;   // iterations with a verdict
  std::size_t optimized = 0;  // iterations that inserted a prompt
};

/// Discriminator accuracy is taken over iterations with a verdict; optimizer
/// accuracy and mean improvement over iterations that inserted a prompt.
/// Throws MissingScore when a referenced prompt has no score.
ComponentStats component_stats(const std::vector<IterationLog>& logs,
                               const std::map<std::string, double>& per_prompt_scores);

// ---------------------------------------------------------------------------
// Datasets

std::vector<TaskSample> load_qa_dataset(const std::filesystem::path& path);
std::vector<CriteriaRecord> load_criteria_dataset(const std::filesystem::path& path);
void save_criteria_dataset(const std::filesystem::path& path, const std::vector<CriteriaRecord>& records);

/// Converts one public IFEval record ({key?, prompt, instruction_id_list,
/// kwargs}) to a CriteriaRecord. Unmapped instruction ids keep their id as
/// the kind, which checks as indeterminate.
CriteriaRecord convert_ifeval_record(const Json& record);

void to_json(Json& j, const CriteriaRecord& v);
void from_json(const Json& j, CriteriaRecord& v);
void to_json(Json& j, const PassStats& v);
void to_json(Json& j, const LabeledScore& v);
void to_json(Json& j, const ComponentStats& v);

}  // namespace prefpo
