#include "prefpo/task_eval.hpp"

#include <cctype>
#include <fstream>

#include "prefpo/error.hpp"
#include "prefpo/parallel.hpp"
#include "prefpo/text.hpp"

namespace prefpo {

GeneratedOutput generate(const TaskRunner& runner, const Prompt& prompt, Mode mode, const TaskSample* sample,
                         std::optional<std::size_t> sample_index, int run_index) {
  if (mode == Mode::labeled_qa && sample == nullptr) {
    throw PreconditionError("labeled_qa generation needs a task sample");
  }
  std::string user = prompt.text;
  if (sample != nullptr) user += "\n" + sample->input;
  auto reply = runner.gateway.complete(runner.model, {{ChatRole::user, std::move(user)}});
  return {prompt.id, sample != nullptr ? sample_index : std::nullopt, std::move(reply.content), run_index};
}

// ---------------------------------------------------------------------------
// Answer extraction

const AnswerAliases& default_answer_aliases() {
  static const AnswerAliases aliases{{"yes", "yes"},           {"no", "no"},
                                     {"valid", "valid"},       {"invalid", "invalid"},
                                     {"plausible", "plausible"}, {"implausible", "implausible"},
                                     {"true", "true"},         {"false", "false"}};
  return aliases;
}

namespace {

std::string_view strip_punct(std::string_view s) {
  constexpr std::string_view kPunct = "()[]{}<>.,;:!?*\"'`";
  while (!s.empty() && kPunct.find(s.front()) != std::string_view::npos) s.remove_prefix(1);
  while (!s.empty() && kPunct.find(s.back()) != std::string_view::npos) s.remove_suffix(1);
  return s;
}

}  // namespace

std::optional<std::string> normalize_answer(std::string_view answer, AnswerKind kind, const AnswerAliases& aliases) {
  const auto trimmed = text::trim(answer);
  if (kind == AnswerKind::exact_match) {
    if (trimmed.empty()) return std::nullopt;
    return std::string(trimmed);
  }
  const auto tokens = text::split_whitespace(trimmed);
  if (tokens.empty()) return std::nullopt;
  const auto token = strip_punct(tokens.front());
  if (kind == AnswerKind::multiple_choice) {
    if (token.size() != 1 || !std::isalpha(static_cast<unsigned char>(token[0]))) return std::nullopt;
    return std::string(1, static_cast<char>(std::toupper(static_cast<unsigned char>(token[0]))));
  }
  auto it = aliases.find(text::ascii_lower(token));
  if (it == aliases.end()) return std::nullopt;
  return it->second;
}

std::optional<std::string> extract_answer(std::string_view response, AnswerKind kind, const AnswerAliases& aliases) {
  const auto lines = text::lines(response);
  for (auto it = lines.rbegin(); it != lines.rend(); ++it) {
    const std::string lower = text::ascii_lower(*it);
    const auto pos = lower.find("answer:");
    if (pos == std::string::npos) continue;
    return normalize_answer(it->substr(pos + 7), kind, aliases);
  }
  return std::nullopt;
}

LabeledScore score_labeled(const TaskRunner& runner, const Prompt& prompt, const std::vector<TaskSample>& samples,
                           AnswerKind fallback_kind, const AnswerAliases& aliases) {
  for (const auto& s : samples) {
    if (!s.expected) throw PreconditionError("score_labeled needs labeled samples");
  }
  LabeledScore score;
  score.prompt_id = prompt.id;
  score.total = samples.size();
  std::vector<char> ok(samples.size(), 0);
  parallel_for(samples.size(), runner.max_concurrency, [&](std::size_t i) {
    const auto& s = samples[i];
    const AnswerKind kind = s.task_kind.value_or(fallback_kind);
    const auto out = generate(runner, prompt, Mode::labeled_qa, &s, i);
    const auto got = extract_answer(out.text, kind, aliases);
    const auto want = normalize_answer(*s.expected, kind, aliases);
    ok[i] = got && want && text::ascii_lower(*got) == text::ascii_lower(*want);
  });
  for (char c : ok) {
    score.per_sample.push_back(c != 0);
    score.correct += c != 0;
  }
  score.accuracy = samples.empty() ? 0.0 : static_cast<double>(score.correct) / static_cast<double>(score.total);
  return score;
}

// ---------------------------------------------------------------------------
// Pass statistics

PassStats pass_stats_from(std::string prompt_id, const std::vector<bool>& runs) {
  if (runs.empty()) throw PreconditionError("pass statistics need k >= 1 runs");
  PassStats s;
  s.prompt_id = std::move(prompt_id);
  s.k = static_cast<int>(runs.size());
  for (bool r : runs) s.passes += r ? 1 : 0;
  s.worst_at_k = s.passes == s.k ? 1 : 0;
  s.average_at_k = static_cast<double>(s.passes) / static_cast<double>(s.k);
  return s;
}

PassStats pass_stats(const TaskRunner& runner, const Prompt& prompt, const Criteria& criteria, int k) {
  if (k < 1) throw PreconditionError("pass_stats needs k >= 1");
  std::vector<char> ok(static_cast<std::size_t>(k), 0);
  parallel_for(ok.size(), runner.max_concurrency, [&](std::size_t i) {
    const auto out = generate(runner, prompt, Mode::criteria_only, nullptr, std::nullopt, static_cast<int>(i));
    ok[i] = check_all(out.text, criteria, runner.check_options).passed;
  });
  return pass_stats_from(prompt.id, std::vector<bool>(ok.begin(), ok.end()));
}

// ---------------------------------------------------------------------------
// Selection and curation

Selection select_final(const TaskRunner& runner, const PromptPool& pool, Mode mode,
                       const std::vector<TaskSample>* validation, const Criteria* criteria, int k,
                       AnswerKind fallback_kind, const AnswerAliases& aliases) {
  if (pool.empty()) throw PreconditionError("cannot select from an empty pool");
  Selection sel;
  std::size_t best = 0;
  double best_score = -1.0;
  if (mode == Mode::labeled_qa) {
    if (validation == nullptr || validation->empty()) throw MissingValidation("labeled selection needs a validation set");
    for (std::size_t i = 0; i < pool.size(); ++i) {
      const double acc = score_labeled(runner, pool[i], *validation, fallback_kind, aliases).accuracy;
      sel.evaluated.emplace_back(pool[i].id, acc);
      if (acc > best_score) {
        best = i;
        best_score = acc;
      }
    }
    sel.prompt = pool[best];
    return sel;
  }
  if (criteria == nullptr) throw EmptyCriteria("criteria selection needs criteria");
  std::optional<PassStats> best_stats;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    auto st = pass_stats(runner, pool[i], *criteria, k);
    sel.evaluated.emplace_back(pool[i].id, st.average_at_k);
    if (st.worst_at_k == 1) {
      sel.prompt = pool[i];
      sel.stats = st;
      return sel;
    }
    if (st.average_at_k > best_score) {
      best = i;
      best_score = st.average_at_k;
      best_stats = st;
    }
  }
  sel.prompt = pool[best];
  sel.stats = best_stats;
  return sel;
}

CurationResult curate_hard_subset(const TaskRunner& runner, const std::vector<CriteriaRecord>& records, int k) {
  if (k < 1) throw PreconditionError("curation needs k >= 1");
  CurationResult r;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const Prompt p{records[i].key.value_or("r" + std::to_string(i + 1)), records[i].prompt, Origin::seed, {}, 0};
    r.stats.push_back(pass_stats(runner, p, records[i].criteria, k));
    if (r.stats.back().worst_at_k == 0) r.kept.push_back(records[i]);
  }
  return r;
}

// ---------------------------------------------------------------------------
// Component effectiveness

ComponentStats component_stats(const std::vector<IterationLog>& logs,
                               const std::map<std::string, double>& per_prompt_scores) {
  auto score = [&](const std::string& id) {
    auto it = per_prompt_scores.find(id);
    if (it == per_prompt_scores.end()) throw MissingScore("no score for prompt '" + id + "'");
    return it->second;
  };
  ComponentStats s;
  std::size_t disc_ok = 0;
  std::size_t opt_ok = 0;
  double improvement = 0.0;
  for (const auto& log : logs) {
    if (!log.verdict) continue;
    ++s.compared;
    if (score(log.verdict->preferred_id()) >= score(log.verdict->non_preferred_id())) ++disc_ok;
    if (log.outcome != IterationOutcome::inserted) continue;
    ++s.optimized;
    const double delta = score(*log.new_prompt_id) - score(log.verdict->non_preferred_id());
    if (delta > 0.0) ++opt_ok;
    improvement += delta;
  }
  if (s.compared > 0) s.discriminator_accuracy = static_cast<double>(disc_ok) / static_cast<double>(s.compared);
  if (s.optimized > 0) {
    s.optimizer_accuracy = static_cast<double>(opt_ok) / static_cast<double>(s.optimized);
    s.mean_improvement = improvement / static_cast<double>(s.optimized);
  }
  return s;
}

// ---------------------------------------------------------------------------
// Datasets

namespace {

template <typename T, typename Decode>
std::vector<T> load_jsonl(const std::filesystem::path& path, Decode decode) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open dataset " + path.string());
  std::vector<T> out;
  std::string line;
  for (int n = 1; std::getline(in, line); ++n) {
    if (text::trim(line).empty()) continue;
    try {
      out.push_back(decode(Json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(path.string() + ":" + std::to_string(n) + ": " + e.what());
    } catch (const FormatError& e) {
      throw FormatError(path.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace

std::vector<TaskSample> load_qa_dataset(const std::filesystem::path& path) {
  return load_jsonl<TaskSample>(path, [](const Json& j) { return j.get<TaskSample>(); });
}

std::vector<CriteriaRecord> load_criteria_dataset(const std::filesystem::path& path) {
  return load_jsonl<CriteriaRecord>(path, [](const Json& j) { return j.get<CriteriaRecord>(); });
}

void save_criteria_dataset(const std::filesystem::path& path, const std::vector<CriteriaRecord>& records) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  for (const auto& r : records) out << Json(r).dump() << "\n";
}

void to_json(Json& j, const CriteriaRecord& v) {
  j = Json::object();
  if (v.key) j["key"] = *v.key;
  j["prompt"] = v.prompt;
  j["criteria"] = v.criteria.items;
  if (v.criteria.freeform) j["freeform"] = *v.criteria.freeform;
}

void from_json(const Json& j, CriteriaRecord& v) {
  if (!j.is_object() || !j.contains("prompt") || !j.at("prompt").is_string()) {
    throw FormatError("criteria record needs a 'prompt' string");
  }
  v.key = j.contains("key") && !j.at("key").is_null()
              ? std::optional(j.at("key").is_string() ? j.at("key").get<std::string>() : j.at("key").dump())
              : std::nullopt;
  v.prompt = j.at("prompt").get<std::string>();
  if (v.prompt.empty()) throw FormatError("criteria record prompt must be non-empty");
  const Json criteria = j.value("criteria", Json::array());
  if (criteria.is_object()) {
    v.criteria = criteria.get<Criteria>();
  } else {
    v.criteria.items = criteria.get<std::vector<Criterion>>();
    v.criteria.freeform = std::nullopt;
  }
  if (j.contains("freeform") && !j.at("freeform").is_null()) v.criteria.freeform = j.at("freeform").get<std::string>();
  if (v.criteria.empty()) throw FormatError("criteria record needs at least one criterion");
  for (const auto& c : v.criteria.items) {
    if (const auto bad = criterion_violations(c); !bad.empty()) {
      throw FormatError("criterion '" + c.kind + "': " + bad.front());
    }
  }
}

namespace {

long kwarg_int(const Json& kw, const char* key) {
  if (!kw.contains(key) || !kw.at(key).is_number_integer()) {
    throw FormatError(std::string("IFEval kwargs lack integer '") + key + "'");
  }
  return kw.at(key).get<long>();
}

std::string kwarg_str(const Json& kw, const char* key) {
  if (!kw.contains(key) || !kw.at(key).is_string()) {
    throw FormatError(std::string("IFEval kwargs lack string '") + key + "'");
  }
  return kw.at(key).get<std::string>();
}

std::string join(const Json& list) {
  std::string out;
  for (const auto& w : list) out += (out.empty() ? "" : ", ") + w.get<std::string>();
  return out;
}

// IFEval "less than N" becomes an inclusive maximum of N - 1.
Criterion bounded(const std::string& relation, long n, const char* min_kind, const char* max_kind,
                  const char* min_key, const char* max_key, Json params, const std::string& subject) {
  if (relation == "at least") {
    params[min_key] = n;
    return {min_kind, std::move(params), subject + " at least " + std::to_string(n) + " "};
  }
  if (relation == "less than") {
    if (n < 1) throw FormatError("'less than 0' cannot be satisfied");
    params[max_key] = n - 1;
    return {max_kind, std::move(params), subject + " less than " + std::to_string(n) + " "};
  }
  throw FormatError("unknown IFEval relation '" + relation + "'");
}

Criterion convert_instruction(const std::string& id, const Json& kw) {
  if (id == "keywords:frequency") {
    const auto word = kwarg_str(kw, "keyword");
    auto c = bounded(kwarg_str(kw, "relation"), kwarg_int(kw, "frequency"), "keyword_min_count", "keyword_max_count",
                     "min_count", "max_count", Json{{"keyword", word}}, "The keyword '" + word + "' must appear");
    c.description += "times (case-insensitive)";
    return c;
  }
  if (id == "keywords:letter_frequency") {
    const auto letter = kwarg_str(kw, "letter");
    auto c = bounded(kwarg_str(kw, "let_relation"), kwarg_int(kw, "let_frequency"), "letter_min_count",
                     "letter_max_count", "min_count", "max_count", Json{{"letter", letter}},
                     "The letter '" + letter + "' must appear");
    c.description += "times (case-insensitive)";
    return c;
  }
  if (id == "length_constraints:number_words") {
    auto c = bounded(kwarg_str(kw, "relation"), kwarg_int(kw, "num_words"), "word_min", "word_max", "min_words",
                     "max_words", Json::object(), "Response must have");
    c.description += "words";
    return c;
  }
  if (id == "length_constraints:number_sentences") {
    auto c = bounded(kwarg_str(kw, "relation"), kwarg_int(kw, "num_sentences"), "sentence_min", "sentence_max",
                     "min_sentences", "max_sentences", Json::object(), "Response must have");
    c.description += "sentences";
    return c;
  }
  if (id == "length_constraints:number_paragraphs") {
    const long n = kwarg_int(kw, "num_paragraphs");
    return {"paragraph_count_with_divider", Json{{"divider", "***"}, {"count", n}},
            "Response must have exactly " + std::to_string(n) + " paragraphs separated by the markdown divider (***)"};
  }
  if (id == "keywords:forbidden_words") {
    const Json words = kw.at("forbidden_words");
    return {"forbidden_words", Json{{"words", words}},
            "Response must NOT contain any of these words (case-insensitive): " + join(words)};
  }
  if (id == "keywords:existence") {
    const Json words = kw.at("keywords");
    return {"keywords_all", Json{{"keywords", words}},
            "Response must contain all of these keywords (case-insensitive): " + join(words)};
  }
  if (id == "punctuation:no_comma") return {"no_commas", Json::object(), "Response must NOT contain any commas"};
  if (id == "startend:end_checker") {
    const auto phrase = kwarg_str(kw, "end_phrase");
    return {"end_phrase_exact", Json{{"phrase", phrase}}, "Response must end with the exact phrase: '" + phrase + "'"};
  }
  if (id == "detectable_format:number_highlighted_sections") {
    const long n = kwarg_int(kw, "num_highlights");
    return {"min_highlighted_sections", Json{{"min_count", n}},
            "Response must have at least " + std::to_string(n) +
                " sections highlighted with markdown (e.g., *highlighted section*)"};
  }
  return {id, kw, "Instruction " + id + (kw.empty() ? "" : " with parameters " + kw.dump())};
}

}  // namespace

CriteriaRecord convert_ifeval_record(const Json& record) {
  try {
    CriteriaRecord r;
    if (record.contains("key") && !record.at("key").is_null()) {
      r.key = record.at("key").is_string() ? record.at("key").get<std::string>() : record.at("key").dump();
    }
    r.prompt = record.at("prompt").get<std::string>();
    const auto& ids = record.at("instruction_id_list");
    const auto& kwargs = record.at("kwargs");
    if (!ids.is_array() || !kwargs.is_array() || ids.size() != kwargs.size()) {
      throw FormatError("instruction_id_list and kwargs must be arrays of equal length");
    }
    for (std::size_t i = 0; i < ids.size(); ++i) {
      // Public dumps pad kwargs with nulls for unused keys.
      Json kw = Json::object();
      for (const auto& [k, v] : kwargs.at(i).items()) {
        if (!v.is_null()) kw[k] = v;
      }
      r.criteria.items.push_back(convert_instruction(ids.at(i).get<std::string>(), kw));
    }
    if (r.criteria.items.empty()) throw FormatError("IFEval record has no instructions");
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("IFEval record: ") + e.what());
  }
}

void to_json(Json& j, const PassStats& v) {
  j = Json{{"prompt_id", v.prompt_id},
           {"k", v.k},
           {"passes", v.passes},
           {"worst_at_k", v.worst_at_k},
           {"average_at_k", v.average_at_k}};
}

void to_json(Json& j, const LabeledScore& v) {
  j = Json{{"prompt_id", v.prompt_id}, {"correct", v.correct}, {"total", v.total}, {"accuracy", v.accuracy}};
}

void to_json(Json& j, const ComponentStats& v) {
  j = Json{{"discriminator_accuracy", v.discriminator_accuracy},
           {"optimizer_accuracy", v.optimizer_accuracy},
           {"mean_improvement", v.mean_improvement},
           {"compared", v.compared},
           {"optimized", v.optimized}};
}

}  // namespace prefpo
