#include "prefpo/engine.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "prefpo/error.hpp"
#include "prefpo/parallel.hpp"
#include "prefpo/task_eval.hpp"

namespace prefpo {

double elo_expected(double r_i, double r_j) { return 1.0 / (1.0 + std::pow(10.0, (r_j - r_i) / 400.0)); }

EloState elo_update(const EloState& state, const std::string& winner_id, const std::string& loser_id) {
  if (winner_id == loser_id) throw PreconditionError("a prompt cannot play itself");
  EloState next = state;
  auto w = next.ratings.find(winner_id);
  auto l = next.ratings.find(loser_id);
  if (w == next.ratings.end()) throw UnknownPromptId("no rating for '" + winner_id + "'");
  if (l == next.ratings.end()) throw UnknownPromptId("no rating for '" + loser_id + "'");
  // The loser's change is the exact negation, so every update is zero-sum.
  const double delta = state.k_factor * (1.0 - elo_expected(w->second, l->second));
  w->second += delta;
  l->second -= delta;
  return next;
}

std::pair<Prompt, Prompt> sample_pair(const PromptPool& pool, Sampling strategy, const EloState* elo, Rng& rng) {
  const std::size_t n = pool.size();
  if (n < 2) throw PoolTooSmall("pair sampling needs at least 2 prompts, pool has " + std::to_string(n));
  std::size_t first = 0;
  std::size_t second = 1;
  if (strategy == Sampling::uniform) {
    first = rng.below(n);
    second = rng.below(n - 1);
    if (second >= first) ++second;
  } else {
    if (elo == nullptr) throw PreconditionError("elo sampling needs ratings");
    std::vector<double> r(n);
    for (std::size_t i = 0; i < n; ++i) {
      auto it = elo->ratings.find(pool[i].id);
      if (it == elo->ratings.end()) throw UnknownPromptId("no rating for '" + pool[i].id + "'");
      r[i] = it->second;
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::partial_sort(order.begin(), order.begin() + 2, order.end(),
                      [&](std::size_t a, std::size_t b) { return r[a] != r[b] ? r[a] > r[b] : a < b; });
    first = order[0];
    second = order[1];
  }
  if (rng.coin()) std::swap(first, second);
  return {pool[first], pool[second]};
}

PromptPool bootstrap_pool(const std::vector<Prompt>& seeds, const Criteria& criteria, const Gateway& gateway,
                          const ModelSpec& variant_model, int attempts) {
  if (seeds.empty()) throw PreconditionError("bootstrap_pool needs at least one seed");
  PromptPool pool;
  for (const auto& s : seeds) pool.add(s);
  if (seeds.size() >= 2) return pool;

  const Transcript messages = render_variant(seeds.front(), criteria);
  std::string last_error;
  for (int attempt = 1; attempt <= attempts; ++attempt) {
    try {
      const auto reply = gateway.complete(variant_model, messages);
      pool.add_new(parse_rewrite(reply.content, "prompt"), Origin::variant, seeds.front().id, 0);
      return pool;
    } catch (const ParseError& e) {
      last_error = e.what();
    } catch (const MalformedResponse& e) {
      last_error = e.what();
    } catch (const TransportError& e) {
      last_error = e.what();
    }
    spdlog::warn("variant attempt {}/{} failed: {}", attempt, attempts, last_error);
  }
  throw VariantGenerationFailed("no usable variant after " + std::to_string(attempts) + " attempts: " + last_error);
}

std::string_view to_string(IterationOutcome o) {
  switch (o) {
    case IterationOutcome::inserted:
      return "inserted";
    case IterationOutcome::skipped:
      return "skipped";
    case IterationOutcome::dedup_suppressed:
      break;
  }
  return "dedup_suppressed";
}

void to_json(Json& j, const IterationLog& v) {
  j = Json{{"iteration", v.iteration}, {"prompt_a_id", v.prompt_a_id}, {"prompt_b_id", v.prompt_b_id}};
  j["verdict"] = v.verdict ? Json(*v.verdict) : Json(nullptr);
  j["outcome"] = to_string(v.outcome);
  j["new_prompt_id"] = v.new_prompt_id ? Json(*v.new_prompt_id) : Json(nullptr);
  j["skip_reason"] = v.skip_reason ? Json(*v.skip_reason) : Json(nullptr);
  j["discriminator_attempts"] = v.discriminator_attempts;
  j["optimizer_attempts"] = v.optimizer_attempts;
  if (v.elo) {
    j["elo"] = *v.elo;
  } else {
    j["elo"] = nullptr;
  }
}

void from_json(const Json& j, IterationLog& v) {
  try {
    v.iteration = j.at("iteration").get<int>();
    v.prompt_a_id = j.at("prompt_a_id").get<std::string>();
    v.prompt_b_id = j.at("prompt_b_id").get<std::string>();
    v.verdict = j.contains("verdict") && !j.at("verdict").is_null()
                    ? std::optional(j.at("verdict").get<ComparisonRecord>())
                    : std::nullopt;
    const auto outcome = j.at("outcome").get<std::string>();
    if (outcome == "inserted") {
      v.outcome = IterationOutcome::inserted;
    } else if (outcome == "skipped") {
      v.outcome = IterationOutcome::skipped;
    } else if (outcome == "dedup_suppressed") {
      v.outcome = IterationOutcome::dedup_suppressed;
    } else {
      throw FormatError("unknown iteration outcome '" + outcome + "'");
    }
    auto opt_str = [&](const char* key) -> std::optional<std::string> {
      if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
      return j.at(key).get<std::string>();
    };
    v.new_prompt_id = opt_str("new_prompt_id");
    v.skip_reason = opt_str("skip_reason");
    v.discriminator_attempts = j.value("discriminator_attempts", 0);
    v.optimizer_attempts = j.value("optimizer_attempts", 0);
    v.elo = j.contains("elo") && !j.at("elo").is_null()
                ? std::optional(j.at("elo").get<std::map<std::string, double>>())
                : std::nullopt;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("iteration log: ") + e.what());
  }
  if ((v.outcome == IterationOutcome::inserted) != v.new_prompt_id.has_value()) {
    throw FormatError("iteration log: new_prompt_id must be set exactly for inserted iterations");
  }
}

namespace {

// Runs `call` up to kParseAttempts times, treating unparseable or failed
// replies as retryable. Returns nullopt (and sets `error`) when all fail.
template <typename Call>
auto with_attempts(Call&& call, int& attempts, std::string& error) -> std::optional<decltype(call())> {
  for (attempts = 1; attempts <= kParseAttempts; ++attempts) {
    try {
      return call();
    } catch (const ParseError& e) {
      error = e.what();
    } catch (const MalformedResponse& e) {
      error = e.what();
    } catch (const TransportError& e) {
      error = e.what();
    }
  }
  attempts = kParseAttempts;
  return std::nullopt;
}

class Loop {
 public:
  Loop(const RunConfig& cfg, const Gateway& gateway, PromptPool pool, const Criteria& criteria,
       const std::vector<TaskSample>* train)
      : cfg_(cfg),
        gateway_(gateway),
        pool_(std::move(pool)),
        criteria_(criteria),
        train_(train != nullptr && !train->empty() ? train : nullptr),
        runner_{gateway, cfg.model(Role::task), cfg.max_concurrency},
        pairs_(Rng(*cfg.seed).split("pairs")) {
    labeled_ = cfg.mode == Mode::labeled_qa;
    mode_ = train_ != nullptr ? OptimizerMode::bbh
                              : (cfg.minimal_change ? OptimizerMode::criteria_minimal : OptimizerMode::criteria);
    if (cfg.sampling == Sampling::elo) {
      const auto& stored = pool_.ratings();
      for (const auto& p : pool_.prompts()) {
        double r = elo_.r0;
        if (stored) {
          if (auto it = stored->find(p.id); it != stored->end()) r = it->second;
        }
        elo_.ratings[p.id] = r;
      }
      pool_.set_ratings(elo_.ratings);
    }
  }

  RunResult operator()(const std::function<void(const IterationLog&)>& on_iteration) {
    RunResult result;
    for (int k = 1; k <= cfg_.iterations; ++k) {
      IterationLog log = iteration(k);
      if (log.outcome == IterationOutcome::skipped) ++result.skipped;
      if (log.outcome == IterationOutcome::dedup_suppressed) ++result.dedup_suppressed;
      if (cfg_.sampling == Sampling::elo) log.elo = elo_.ratings;
      result.logs.push_back(log);
      if (on_iteration) on_iteration(log);
      if (result.skipped * 3 > cfg_.iterations) {
        throw AbortedRun("skip budget exceeded: " + std::to_string(result.skipped) + " of " +
                         std::to_string(cfg_.iterations) + " iterations skipped; last reason: " +
                         log.skip_reason.value_or("?"));
      }
    }
    result.pool = std::move(pool_);
    return result;
  }

 private:
  IterationLog iteration(int k) {
    IterationLog log;
    log.iteration = k;
    const auto [a, b] = sample_pair(pool_, cfg_.sampling, cfg_.sampling == Sampling::elo ? &elo_ : nullptr, pairs_);
    log.prompt_a_id = a.id;
    log.prompt_b_id = b.id;

    auto skip = [&](std::string reason) {
      spdlog::info("iteration {} skipped: {}", k, reason);
      log.outcome = IterationOutcome::skipped;
      log.skip_reason = std::move(reason);
      return log;
    };

    Transcript disc;
    try {
      disc = discriminator_input(a, b);
    } catch (const TransportError& e) {
      return skip(std::string("task model: ") + e.what());
    } catch (const MalformedResponse& e) {
      return skip(std::string("task model: ") + e.what());
    }

    std::string error;
    std::string raw;
    const ModelSpec& disc_model = cfg_.model(Role::discriminator);
    const auto verdict = with_attempts(
        [&] {
          raw = gateway_.complete(disc_model, disc).content;
          return parse_verdict(raw);
        },
        log.discriminator_attempts, error);
    if (!verdict) return skip("discriminator: " + error);

    ComparisonRecord rec{k, a.id, b.id, verdict->preferred == 1 ? Preference::a : Preference::b,
                         verdict->feedback, raw};
    log.verdict = rec;
    const Prompt loser = *pool_.find(rec.non_preferred_id());

    Transcript history = disc;
    history.push_back({ChatRole::assistant, raw});
    const Transcript opt = render_optimizer(history, loser, rec.feedback, mode_, verdict->preferred == 1 ? 2 : 1);
    const ModelSpec& opt_model = cfg_.model(Role::optimizer);
    const auto text = with_attempts(
        [&] {
          return parse_rewrite(gateway_.complete(opt_model, opt).content,
                               mode_ == OptimizerMode::bbh ? "instruction" : "prompt");
        },
        log.optimizer_attempts, error);
    if (!text) return skip("optimizer: " + error);

    if (cfg_.sampling == Sampling::elo) elo_ = elo_update(elo_, rec.preferred_id(), rec.non_preferred_id());
    if (pool_.contains_text(*text)) {
      spdlog::info("iteration {}: optimizer output duplicates an existing prompt; not inserted", k);
      log.outcome = IterationOutcome::dedup_suppressed;
    } else {
      const Prompt& added = pool_.add_new(*text, Origin::optimized, loser.id, k);
      log.outcome = IterationOutcome::inserted;
      log.new_prompt_id = added.id;
      if (cfg_.sampling == Sampling::elo) elo_.ratings[added.id] = elo_.r0;
    }
    if (cfg_.sampling == Sampling::elo) pool_.set_ratings(elo_.ratings);
    return log;
  }

  Transcript discriminator_input(const Prompt& a, const Prompt& b) {
    if (train_ == nullptr) {
      std::vector<GeneratedOutput> out(2);
      parallel_for(2, cfg_.max_concurrency, [&](std::size_t i) {
        out[i] = generate(runner_, i == 0 ? a : b, Mode::criteria_only);
      });
      return render_discriminator_criteria(out[0].text, out[1].text, criteria_);
    }
    const std::size_t n = train_->size();
    std::vector<SampleOutput> va(n), vb(n);
    std::vector<std::pair<const Prompt*, std::size_t>> todo;
    for (const Prompt* p : {&a, &b}) {
      for (std::size_t s = 0; s < n; ++s) {
        if (!labeled_ || !cache_.count({p->id, s})) todo.emplace_back(p, s);
      }
    }
    std::vector<GeneratedOutput> fresh(todo.size());
    parallel_for(todo.size(), cfg_.max_concurrency, [&](std::size_t i) {
      const auto [p, s] = todo[i];
      fresh[i] = generate(runner_, *p, cfg_.mode, &(*train_)[s], s);
    });
    std::map<std::pair<std::string, std::size_t>, GeneratedOutput> now;
    for (std::size_t i = 0; i < todo.size(); ++i) {
      now[{todo[i].first->id, todo[i].second}] = fresh[i];
      if (labeled_) cache_[{todo[i].first->id, todo[i].second}] = fresh[i];
    }
    auto lookup = [&](const Prompt& p, std::size_t s) -> const GeneratedOutput& {
      auto it = now.find({p.id, s});
      return it != now.end() ? it->second : cache_.at({p.id, s});
    };
    for (std::size_t s = 0; s < n; ++s) {
      va[s] = {(*train_)[s], lookup(a, s)};
      vb[s] = {(*train_)[s], lookup(b, s)};
    }
    return render_discriminator_bbh(va, vb, labeled_);
  }

  const RunConfig& cfg_;
  const Gateway& gateway_;
  PromptPool pool_;
  const Criteria& criteria_;
  const std::vector<TaskSample>* train_;
  TaskRunner runner_;
  Rng pairs_;
  bool labeled_ = false;
  OptimizerMode mode_ = OptimizerMode::criteria;
  EloState elo_;
  std::map<std::pair<std::string, std::size_t>, GeneratedOutput> cache_;
};

}  // namespace

RunResult run(const RunConfig& cfg, const Gateway& gateway, PromptPool pool, const Criteria& criteria,
              const std::vector<TaskSample>* train, const std::function<void(const IterationLog&)>& on_iteration) {
  if (const auto v = validate_config(cfg); !v.empty()) {
    std::string msg = "invalid config:";
    for (const auto& m : v) msg += " " + m + ";";
    throw AbortedRun(msg);
  }
  if (pool.size() < 2) throw AbortedRun("pool needs at least 2 prompts; bootstrap it first");
  const bool has_train = train != nullptr && !train->empty();
  if (cfg.mode == Mode::labeled_qa) {
    if (!has_train) throw AbortedRun("labeled_qa mode needs training samples");
    for (const auto& s : *train) {
      if (!s.expected) throw AbortedRun("labeled_qa training samples need expected answers");
    }
  } else if (!has_train && criteria.empty()) {
    throw AbortedRun("criteria_only mode needs criteria");
  }
  try {
    return Loop(cfg, gateway, std::move(pool), criteria, train)(on_iteration);
  } catch (const AbortedRun&) {
    throw;
  } catch (const Error& e) {
    throw AbortedRun(e.what());
  }
}

}  // namespace prefpo
