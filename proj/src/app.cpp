#include "prefpo/app.hpp"

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iostream>
#include <sstream>

#include "prefpo/engine.hpp"
#include "prefpo/error.hpp"
#include "prefpo/hygiene.hpp"
#include "prefpo/judge.hpp"
#include "prefpo/stats.hpp"
#include "prefpo/templates.hpp"
#include "prefpo/text.hpp"

namespace prefpo::app {

namespace {

fs::path resolve(const fs::path& base, const fs::path& p) { return p.is_absolute() ? p : base / p; }

Json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

std::string read_text_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const fs::path& path, std::string_view content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  out << content;
}

Criteria parse_criteria(const Json& j) {
  Criteria c;
  try {
    if (j.is_array()) {
      c.items = j.get<std::vector<Criterion>>();
    } else {
      c = j.get<Criteria>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("criteria: ") + e.what());
  }
  for (const auto& item : c.items) {
    if (const auto v = criterion_violations(item); !v.empty()) {
      throw FormatError("criterion '" + item.kind + "': " + v.front());
    }
  }
  return c;
}

std::vector<Prompt> seed_prompts(const AppConfig& cfg) {
  if (cfg.task.pool) return load_pool(*cfg.task.pool).prompts();
  std::vector<Prompt> seeds;
  for (std::size_t i = 0; i < cfg.task.prompts.size(); ++i) {
    seeds.push_back({"p" + std::to_string(i + 1), cfg.task.prompts[i], Origin::seed, std::nullopt, 0});
  }
  return seeds;
}

// Report sink: a file when --out is given, otherwise the command's stdout.
class Records {
 public:
  Records(const std::optional<fs::path>& path, std::ostream& fallback) {
    if (path) {
      if (path->has_parent_path()) fs::create_directories(path->parent_path());
      file_.open(*path, std::ios::binary);
      if (!file_) throw FormatError("cannot write " + path->string());
    }
    out_ = path ? static_cast<std::ostream*>(&file_) : &fallback;
  }
  void emit(const Json& j) { *out_ << j.dump() << "\n"; }

 private:
  std::ofstream file_;
  std::ostream* out_;
};

Json ci_json(const std::vector<double>& values, int resamples, std::uint64_t seed) {
  Json j = Json::object();
  j["n"] = values.size();
  if (values.empty()) return j;
  j["bootstrap"] = stats::bootstrap_ci(values, resamples, seed);
  j["normal"] = values.size() >= 2 ? Json(stats::normal_ci(values)) : Json(nullptr);
  return j;
}

template <typename Body>
int guarded(Io io, Body&& body) {
  try {
    return body();
  } catch (const FormatError& e) {
    io.err << "error: " << e.what() << "\n";
    return kConfigError;
  } catch (const PreconditionError& e) {
    io.err << "error: " << e.what() << "\n";
    return kConfigError;
  } catch (const Error& e) {
    io.err << "aborted: " << e.what() << "\n";
    return kAborted;
  } catch (const fs::filesystem_error& e) {
    io.err << "error: " << e.what() << "\n";
    return kConfigError;
  }
}

}  // namespace

AppConfig parse_config(const Json& doc, const fs::path& base_dir) {
  if (!doc.is_object()) throw FormatError("config must be a JSON object");
  AppConfig cfg;
  cfg.base_dir = base_dir;
  cfg.source = doc;
  try {
    Json run = doc.value("run", Json::object());
    if (doc.contains("endpoints")) run["endpoints"] = doc.at("endpoints");
    if (doc.contains("models")) run["models"] = doc.at("models");
    cfg.run = run.get<RunConfig>();

    const Json task = doc.value("task", Json::object());
    cfg.task.prompts = task.value("prompts", std::vector<std::string>{});
    if (task.contains("pool")) cfg.task.pool = resolve(base_dir, task.at("pool").get<std::string>());
    if (task.contains("criteria")) cfg.task.criteria = parse_criteria(task.at("criteria"));
    if (task.contains("freeform")) cfg.task.criteria.freeform = task.at("freeform").get<std::string>();
    if (task.contains("train")) cfg.task.train = resolve(base_dir, task.at("train").get<std::string>());
    if (task.contains("validation")) cfg.task.validation = resolve(base_dir, task.at("validation").get<std::string>());
    if (task.contains("task_kind")) cfg.task.task_kind = parse_answer_kind(task.at("task_kind").get<std::string>());
    if (task.contains("answer_aliases")) {
      cfg.task.answer_aliases.clear();
      for (const auto& [k, v] : task.at("answer_aliases").items()) {
        cfg.task.answer_aliases[text::ascii_lower(k)] = v.get<std::string>();
      }
    }
    const Json output = doc.value("output", Json::object());
    cfg.output_dir = resolve(base_dir, output.value("dir", std::string("prefpo-out")));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("config: ") + e.what());
  }
  return cfg;
}

AppConfig load_config(const fs::path& path) {
  return parse_config(read_json_file(path), path.has_parent_path() ? path.parent_path() : fs::path("."));
}

PromptPool load_pool(const fs::path& path) {
  const Json doc = read_json_file(path);
  try {
    if (doc.is_array()) {
      PromptPool pool;
      for (const auto& t : doc) pool.add_new(t.get<std::string>(), Origin::seed, std::nullopt, 0);
      return pool;
    }
    return doc.get<PromptPool>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  } catch (const PreconditionError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void save_pool(const fs::path& path, const PromptPool& pool) { write_text_file(path, Json(pool).dump(2) + "\n"); }

Criteria load_criteria(const fs::path& path) { return parse_criteria(read_json_file(path)); }

std::string timestamp_now() {
  std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  if (const char* sde = std::getenv("SOURCE_DATE_EPOCH"); sde && *sde) t = static_cast<std::time_t>(std::stoll(sde));
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// ---------------------------------------------------------------------------
// optimize

int cmd_optimize(const OptimizeOptions& opts, Io io) {
  AppConfig cfg;
  std::optional<Gateway> gateway;
  std::vector<TaskSample> train, validation;
  const int config_status = guarded(io, [&] {
    cfg = load_config(opts.config);
    if (opts.out) cfg.output_dir = *opts.out;
    if (opts.seed) cfg.run.seed = *opts.seed;
    if (opts.iterations) cfg.run.iterations = *opts.iterations;
    if (opts.k) cfg.run.runs_per_eval = *opts.k;
    if (const auto v = validate_config(cfg.run); !v.empty()) {
      for (const auto& m : v) io.err << "config: " << m << "\n";
      return kConfigError;
    }
    if (cfg.task.prompts.empty() && !cfg.task.pool) throw FormatError("task.prompts or task.pool is required");
    if (cfg.run.mode == Mode::labeled_qa && (!cfg.task.train || !cfg.task.validation)) {
      throw FormatError("labeled_qa mode needs task.train and task.validation");
    }
    if (cfg.task.train) train = load_qa_dataset(*cfg.task.train);
    if (cfg.task.validation) validation = load_qa_dataset(*cfg.task.validation);
    gateway = Gateway::from_config(cfg.run, cfg.base_dir);
    return kOk;
  });
  if (config_status != kOk) return config_status;

  const fs::path out = cfg.output_dir;
  Json manifest{{"tool", "prefpo"}, {"command", "optimize"}, {"status", "running"}};
  manifest["seed"] = *cfg.run.seed;
  manifest["started_at"] = timestamp_now();
  manifest["config"] = cfg.source;
  Json models = Json::object();
  for (Role r : kAllRoles) models[std::string(to_string(r))] = cfg.run.model(r);
  manifest["models"] = models;
  manifest["templates"] = Json::object();

  int status = kOk;
  try {
    fs::create_directories(out);
    templates::verify_integrity();
    for (const auto& [name, sum] : templates::checksums()) manifest["templates"][name] = sum;

    const PromptPool initial =
        bootstrap_pool(seed_prompts(cfg), cfg.task.criteria, *gateway, cfg.run.model(Role::variant));
    std::ofstream iterations(out / "iterations.jsonl", std::ios::binary);
    const auto result = run(cfg.run, *gateway, initial, cfg.task.criteria, train.empty() ? nullptr : &train,
                            [&](const IterationLog& log) { iterations << Json(log).dump() << "\n" << std::flush; });
    save_pool(out / "pool.json", result.pool);

    const TaskRunner runner{*gateway, cfg.run.model(Role::task), cfg.run.max_concurrency};
    const auto sel = select_final(runner, result.pool, cfg.run.mode, validation.empty() ? nullptr : &validation,
                                  &cfg.task.criteria, cfg.run.runs_per_eval, cfg.task.task_kind,
                                  cfg.task.answer_aliases);
    Json selected{{"prompt", sel.prompt}};
    Json evaluated = Json::array();
    for (const auto& [id, score] : sel.evaluated) evaluated.push_back(Json{{"prompt_id", id}, {"score", score}});
    selected["evaluated"] = evaluated;
    selected["stats"] = sel.stats ? Json(*sel.stats) : Json(nullptr);
    write_text_file(out / "selected.json", selected.dump(2) + "\n");

    manifest["status"] = "ok";
    manifest["counts"] = Json{{"initial_pool", initial.size()},
                              {"final_pool", result.pool.size()},
                              {"skipped", result.skipped},
                              {"dedup_suppressed", result.dedup_suppressed}};
    manifest["artifacts"] = Json{{"pool", "pool.json"},
                                 {"iterations", "iterations.jsonl"},
                                 {"selected", "selected.json"},
                                 {"manifest", "manifest.json"}};
    io.out << "selected " << sel.prompt.id << " from " << result.pool.size() << " prompts (" << result.skipped
           << " skipped, " << result.dedup_suppressed << " duplicates)\n";
  } catch (const Error& e) {
    io.err << "aborted: " << e.what() << "\n";
    manifest["status"] = "aborted";
    manifest["error"] = e.what();
    manifest["artifacts"] = Json{{"iterations", "iterations.jsonl"}, {"manifest", "manifest.json"}};
    status = kAborted;
  } catch (const fs::filesystem_error& e) {
    io.err << "error: " << e.what() << "\n";
    return kConfigError;
  }
  manifest["finished_at"] = timestamp_now();
  write_text_file(out / "manifest.json", manifest.dump(2) + "\n");
  return status;
}

// ---------------------------------------------------------------------------
// evaluate

namespace {

Mode dataset_shape(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open dataset " + path.string());
  std::string line;
  while (std::getline(in, line)) {
    if (text::trim(line).empty()) continue;
    const Json j = Json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw FormatError(path.string() + ": first record is not a JSON object");
    if (j.contains("prompt") && j.contains("criteria")) return Mode::criteria_only;
    if (j.contains("input")) return Mode::labeled_qa;
    throw FormatError(path.string() + ": records are neither criteria ({prompt, criteria}) nor QA ({input, expected})");
  }
  throw FormatError(path.string() + ": dataset is empty");
}

}  // namespace

int cmd_evaluate(const EvaluateOptions& opts, Io io) {
  return guarded(io, [&] {
    const AppConfig cfg = load_config(opts.config);
    const Mode shape = dataset_shape(opts.dataset);
    if (opts.mode && *opts.mode != shape) {
      throw FormatError("--mode " + std::string(to_string(*opts.mode)) + " does not match the dataset, which is " +
                        std::string(to_string(shape)));
    }
    const int k = opts.k.value_or(cfg.run.runs_per_eval);
    if (k < 1) throw FormatError("--k must be >= 1");
    const std::uint64_t seed = opts.seed.value_or(cfg.run.seed.value_or(0));
    std::optional<PromptPool> pool;
    if (opts.pool) pool = load_pool(*opts.pool);
    const Gateway gateway = Gateway::from_config(cfg.run, cfg.base_dir);
    const TaskRunner runner{gateway, cfg.run.model(Role::task), cfg.run.max_concurrency};
    Records records(opts.out, io.out);

    if (shape == Mode::criteria_only) {
      const auto data = load_criteria_dataset(opts.dataset);
      std::vector<std::pair<Prompt, const CriteriaRecord*>> jobs;
      if (!pool) {
        for (std::size_t i = 0; i < data.size(); ++i) {
          jobs.emplace_back(Prompt{data[i].key.value_or("r" + std::to_string(i + 1)), data[i].prompt, Origin::seed,
                                   std::nullopt, 0},
                            &data[i]);
        }
      } else if (data.size() == 1) {
        for (const auto& p : pool->prompts()) jobs.emplace_back(p, &data[0]);
      } else if (pool->size() == data.size()) {
        for (std::size_t i = 0; i < data.size(); ++i) jobs.emplace_back((*pool)[i], &data[i]);
      } else {
        throw FormatError("pool has " + std::to_string(pool->size()) + " prompts but the dataset has " +
                          std::to_string(data.size()) + " records; need 1 record or one per prompt");
      }
      std::vector<double> worst, average;
      for (const auto& [prompt, rec] : jobs) {
        const auto st = pass_stats(runner, prompt, rec->criteria, k);
        Json row{{"record", "pass_stats"}};
        row["key"] = rec->key ? Json(*rec->key) : Json(nullptr);
        row.update(Json(st));
        records.emit(row);
        worst.push_back(st.worst_at_k);
        average.push_back(st.average_at_k);
      }
      records.emit(Json{{"record", "summary"},
                        {"mode", "criteria_only"},
                        {"k", k},
                        {"rows", jobs.size()},
                        {"worst_at_k", ci_json(worst, opts.resamples, seed)},
                        {"average_at_k", ci_json(average, opts.resamples, seed)}});
      return kOk;
    }

    if (!pool) throw FormatError("labeled evaluation needs --pool");
    const auto samples = load_qa_dataset(opts.dataset);
    for (const auto& s : samples) {
      if (!s.expected) throw FormatError("labeled dataset records need 'expected'");
    }
    for (const auto& p : pool->prompts()) {
      const auto score = score_labeled(runner, p, samples, cfg.task.task_kind, cfg.task.answer_aliases);
      std::vector<double> per(score.per_sample.begin(), score.per_sample.end());
      Json row{{"record", "accuracy"}};
      row.update(Json(score));
      row["ci"] = ci_json(per, opts.resamples, seed);
      records.emit(row);
    }
    records.emit(Json{{"record", "summary"}, {"mode", "labeled_qa"}, {"rows", pool->size()}, {"samples", samples.size()}});
    return kOk;
  });
}

// ---------------------------------------------------------------------------
// hygiene

int cmd_hygiene(const HygieneOptions& opts, Io io) {
  return guarded(io, [&] {
    const PromptPool pool = load_pool(opts.pool);
    if (pool.empty()) throw FormatError("pool is empty");
    const Prompt seed{"seed", read_text_file(opts.seed_prompt), Origin::seed, std::nullopt, 0};
    if (seed.text.empty()) throw FormatError("seed prompt file is empty");

    std::optional<AppConfig> cfg;
    std::optional<Gateway> gateway;
    Criteria criteria;
    if (opts.with_judge) {
      if (!opts.config) throw FormatError("--with-judge needs --config");
      cfg = load_config(*opts.config);
      criteria = opts.criteria ? load_criteria(*opts.criteria) : cfg->task.criteria;
      if (criteria.empty()) throw FormatError("--with-judge needs criteria (--criteria or task.criteria)");
      gateway = Gateway::from_config(cfg->run, cfg->base_dir);
    }

    Records records(opts.out, io.out);
    std::vector<hygiene::HygieneMetrics> metrics;
    std::size_t graded = 0;
    std::vector<double> totals;
    for (const auto& p : pool.prompts()) {
      metrics.push_back(hygiene::hygiene_report(p, seed));
      Json row{{"record", "hygiene"}, {"prompt_id", p.id}};
      row.update(Json(metrics.back()));
      if (opts.with_judge) {
        try {
          const auto g = judge::grade_hygiene(p, criteria, *gateway, cfg->run.model(Role::judge),
                                              cfg->run.max_concurrency);
          row["grade"] = g;
          totals.push_back(g.total);
          ++graded;
        } catch (const AuthError&) {
          throw;
        } catch (const Error& e) {
          row["judge_error"] = e.what();
        }
      }
      records.emit(row);
    }
    Json summary{{"record", "summary"}};
    summary.update(Json(hygiene::summarize(metrics)));
    if (opts.with_judge) {
      Json j{{"graded", graded}, {"failed", pool.size() - graded}};
      if (!totals.empty()) {
        const auto [mean, sd] = stats::mean_sd(totals);
        j["total"] = Json{{"mean", mean}, {"sd", sd}};
      }
      summary["judge"] = j;
    }
    records.emit(summary);
    if (opts.with_judge && graded == 0) {
      io.err << "aborted: the judge failed on every prompt\n";
      return kAborted;
    }
    return kOk;
  });
}

// ---------------------------------------------------------------------------
// hack-audit

int cmd_hack_audit(const HackAuditOptions& opts, Io io) {
  return guarded(io, [&] {
    const AppConfig cfg = load_config(opts.config);
    const PromptPool pool = load_pool(opts.pool);
    if (pool.empty()) throw FormatError("pool is empty");

    std::vector<std::pair<Prompt, Criteria>> corpus;
    if (opts.criteria.extension() == ".jsonl") {
      const auto data = load_criteria_dataset(opts.criteria);
      if (data.size() != 1 && data.size() != pool.size()) {
        throw FormatError("criteria dataset needs 1 record or one per pool prompt");
      }
      for (std::size_t i = 0; i < pool.size(); ++i) {
        corpus.emplace_back(pool[i], data[data.size() == 1 ? 0 : i].criteria);
      }
    } else {
      const Criteria criteria = load_criteria(opts.criteria);
      if (criteria.empty()) throw FormatError("criteria are empty");
      for (const auto& p : pool.prompts()) corpus.emplace_back(p, criteria);
    }
    const Gateway gateway = Gateway::from_config(cfg.run, cfg.base_dir);
    const auto report = judge::judge_corpus(corpus, gateway, cfg.run.model(Role::judge),
                                            {.hygiene = false, .hacking = true, .max_concurrency = 1});
    Records records(opts.out, io.out);
    for (const auto& row : report.rows) {
      Json j{{"record", "hack_verdict"}};
      j.update(Json(row));
      records.emit(j);
    }
    records.emit(judge::aggregates_json(report));
    if (report.judged == 0) {
      io.err << "aborted: the judge failed on every prompt\n";
      return kAborted;
    }
    return kOk;
  });
}

// ---------------------------------------------------------------------------
// curate / convert

int cmd_curate(const CurateOptions& opts, Io io) {
  return guarded(io, [&] {
    const AppConfig cfg = load_config(opts.config);
    const int k = opts.k.value_or(cfg.run.runs_per_eval);
    if (k < 1) throw FormatError("--k must be >= 1");
    const auto data = load_criteria_dataset(opts.dataset);
    const Gateway gateway = Gateway::from_config(cfg.run, cfg.base_dir);
    const TaskRunner runner{gateway, cfg.run.model(Role::task), cfg.run.max_concurrency};
    const auto result = curate_hard_subset(runner, data, k);
    if (opts.out.has_parent_path()) fs::create_directories(opts.out.parent_path());
    save_criteria_dataset(opts.out, result.kept);
    io.out << Json{{"record", "summary"}, {"k", k}, {"kept", result.kept.size()}, {"total", data.size()}}.dump()
           << "\n";
    return kOk;
  });
}

int cmd_convert_ifeval(const ConvertOptions& opts, Io io) {
  return guarded(io, [&] {
    std::ifstream in(opts.input);
    if (!in) throw FormatError("cannot open " + opts.input.string());
    std::vector<CriteriaRecord> out;
    std::string line;
    for (int n = 1; std::getline(in, line); ++n) {
      if (text::trim(line).empty()) continue;
      const Json j = Json::parse(line, nullptr, false);
      if (j.is_discarded()) throw FormatError(opts.input.string() + ":" + std::to_string(n) + ": invalid JSON");
      try {
        out.push_back(convert_ifeval_record(j));
      } catch (const FormatError& e) {
        throw FormatError(opts.input.string() + ":" + std::to_string(n) + ": " + e.what());
      }
    }
    if (opts.out.has_parent_path()) fs::create_directories(opts.out.parent_path());
    save_criteria_dataset(opts.out, out);
    std::size_t unmapped = 0;
    for (const auto& r : out) {
      for (const auto& c : r.criteria.items) unmapped += is_registered(c.kind) ? 0 : 1;
    }
    io.out << Json{{"record", "summary"}, {"records", out.size()}, {"unmapped_instructions", unmapped}}.dump() << "\n";
    return kOk;
  });
}

}  // namespace prefpo::app
