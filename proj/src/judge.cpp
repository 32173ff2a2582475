#include "prefpo/judge.hpp"

#include <regex>

#include "prefpo/error.hpp"
#include "prefpo/parallel.hpp"
#include "prefpo/templates.hpp"
#include "prefpo/text.hpp"

namespace prefpo::judge {

std::string escape_prompt(std::string_view text) {
  const std::string quoted = Json(std::string(text)).dump(-1, ' ', true);
  return quoted.substr(1, quoted.size() - 2);
}

namespace {

std::string criteria_block(const Criteria& criteria) {
  if (criteria.empty()) throw EmptyCriteria("judging needs at least one criterion");
  std::string block;
  for (const auto& line : criteria_lines(criteria)) block += "   " + Json(line).dump(-1, ' ', true) + "\n";
  return block;
}

Transcript render(std::string_view system, std::string_view user, const Prompt& prompt, const Criteria& criteria) {
  return {{ChatRole::system, std::string(templates::get(system))},
          {ChatRole::user, templates::render(templates::get(user), {{"prompt", escape_prompt(prompt.text)},
                                                                    {"criteria", criteria_block(criteria)}})}};
}

// Byte offset of the last case-insensitive occurrence of `needle`.
std::size_t rfind_ci(std::string_view hay, std::string_view needle) {
  return text::ascii_lower(hay).rfind(text::ascii_lower(needle));
}

template <typename T, typename Parse>
std::vector<T> three_runs(const Transcript& messages, const Gateway& gateway, const ModelSpec& model,
                          int max_concurrency, Parse parse) {
  std::vector<std::optional<T>> runs(kRuns);
  std::vector<std::string> errors(kRuns);
  parallel_for(kRuns, max_concurrency, [&](std::size_t r) {
    for (int attempt = 0; attempt < 3 && !runs[r]; ++attempt) {
      try {
        runs[r] = parse(gateway.complete(model, messages).content);
      } catch (const ParseError& e) {
        errors[r] = e.what();
      } catch (const MalformedResponse& e) {
        errors[r] = e.what();
      } catch (const TransportError& e) {
        errors[r] = e.what();
      }
    }
  });
  std::vector<T> out;
  for (std::size_t r = 0; r < runs.size(); ++r) {
    if (!runs[r]) throw ParseError("judge run " + std::to_string(r + 1) + " never parsed: " + errors[r]);
    out.push_back(std::move(*runs[r]));
  }
  return out;
}

}  // namespace

Transcript render_hygiene_judge(const Prompt& prompt, const Criteria& criteria) {
  return render("hygiene_judge_system.txt", "hygiene_judge_user.txt", prompt, criteria);
}

Transcript render_hacking_judge(const Prompt& prompt, const Criteria& criteria) {
  return render("hacking_judge_system.txt", "hacking_judge_user.txt", prompt, criteria);
}

HygieneScores parse_hygiene_scores(std::string_view raw) {
  const auto at = rfind_ci(raw, "scores:");
  if (at == std::string::npos) throw ParseError("no 'Scores:' block in judge reply");
  static const std::regex axis_re(R"(^[\s\-\*]*(readability|specification quality|maintainability)\s*\**\s*:\s*\**\s*(\d+)\s*(/\s*2)?)",
                                  std::regex::icase);
  HygieneScores s;
  std::array<bool, 3> seen{};
  for (auto line : text::lines(raw.substr(at + 7))) {
    std::match_results<std::string_view::const_iterator> m;
    if (!std::regex_search(line.begin(), line.end(), m, axis_re)) continue;
    const std::string axis = text::ascii_lower(m[1].str());
    const int idx = axis == "readability" ? 0 : axis == "maintainability" ? 2 : 1;
    const int value = std::stoi(m[2].str());
    if (value < 0 || value > 2) throw ParseError(axis + " score " + m[2].str() + " is outside 0-2");
    s.axes[idx] = value;
    seen[idx] = true;
  }
  if (!seen[0] || !seen[1] || !seen[2]) throw ParseError("'Scores:' block lacks one of the three axes");
  s.reasoning = std::string(text::trim(raw.substr(0, at)));
  return s;
}

std::pair<bool, std::string> parse_hack_grade(std::string_view raw) {
  static const std::regex grade_re(R"(^[\s\*#]*grade\s*\**\s*:\s*\**\s*(pass|fail)\b)", std::regex::icase);
  const auto lines = text::lines(raw);
  for (std::size_t i = lines.size(); i-- > 0;) {
    std::match_results<std::string_view::const_iterator> m;
    if (!std::regex_search(lines[i].begin(), lines[i].end(), m, grade_re)) continue;
    const bool hacked = text::ascii_lower(m[1].str()) == "fail";
    auto reasoning = text::trim(raw.substr(0, static_cast<std::size_t>(lines[i].data() - raw.data())));
    if (text::ascii_lower(reasoning.substr(0, 10)) == "reasoning:") reasoning = text::trim(reasoning.substr(10));
    return {hacked, std::string(reasoning)};
  }
  throw ParseError("no 'Grade: pass|fail' line in judge reply");
}

HygieneGrade aggregate_grade(const std::vector<HygieneScores>& runs) {
  if (runs.empty()) throw EmptyInput("no judge runs to aggregate");
  HygieneGrade g;
  std::array<int, 3> sums{};
  for (const auto& r : runs) {
    for (std::size_t a = 0; a < 3; ++a) sums[a] += r.axes[a];
    g.per_run.push_back(r.axes);
    g.reasoning.push_back(r.reasoning);
  }
  const auto n = static_cast<double>(runs.size());
  g.readability = sums[0] / n;
  g.specification_quality = sums[1] / n;
  g.maintainability = sums[2] / n;
  g.total = g.readability + g.specification_quality + g.maintainability;
  return g;
}

HackVerdict aggregate_votes(const std::array<bool, 3>& votes, std::vector<std::string> reasonings) {
  HackVerdict v;
  v.votes = votes;
  const int fails = static_cast<int>(votes[0]) + static_cast<int>(votes[1]) + static_cast<int>(votes[2]);
  v.verdict = fails >= 2;
  v.unanimous = fails == 0 || fails == 3;
  v.reasonings = std::move(reasonings);
  return v;
}

HygieneGrade grade_hygiene(const Prompt& prompt, const Criteria& criteria, const Gateway& gateway,
                           const ModelSpec& judge_model, int max_concurrency) {
  const auto messages = render_hygiene_judge(prompt, criteria);
  return aggregate_grade(three_runs<HygieneScores>(messages, gateway, judge_model, max_concurrency,
                                                   [](const std::string& raw) { return parse_hygiene_scores(raw); }));
}

HackVerdict judge_hacking(const Prompt& prompt, const Criteria& criteria, const Gateway& gateway,
                          const ModelSpec& judge_model, int max_concurrency) {
  const auto messages = render_hacking_judge(prompt, criteria);
  const auto runs = three_runs<std::pair<bool, std::string>>(
      messages, gateway, judge_model, max_concurrency, [](const std::string& raw) { return parse_hack_grade(raw); });
  std::vector<std::string> reasonings;
  for (const auto& r : runs) reasonings.push_back(r.second);
  return aggregate_votes({runs[0].first, runs[1].first, runs[2].first}, std::move(reasonings));
}

void compute_aggregates(CorpusReport& report) {
  report.graded = report.judged = report.failed = 0;
  double total = 0.0;
  std::size_t flagged = 0;
  std::size_t unanimous = 0;
  for (const auto& row : report.rows) {
    if (row.error) ++report.failed;
    if (row.grade) {
      ++report.graded;
      total += row.grade->total;
    }
    if (row.verdict) {
      ++report.judged;
      flagged += row.verdict->verdict ? 1 : 0;
      unanimous += row.verdict->unanimous ? 1 : 0;
    }
  }
  report.mean_hygiene_total.reset();
  report.hacking_flag_rate.reset();
  report.unanimity_rate.reset();
  if (report.graded > 0) report.mean_hygiene_total = total / static_cast<double>(report.graded);
  if (report.judged > 0) {
    report.hacking_flag_rate = static_cast<double>(flagged) / static_cast<double>(report.judged);
    report.unanimity_rate = static_cast<double>(unanimous) / static_cast<double>(report.judged);
  }
}

CorpusReport judge_corpus(const std::vector<std::pair<Prompt, Criteria>>& corpus, const Gateway& gateway,
                          const ModelSpec& judge_model, CorpusOptions opts) {
  if (corpus.empty()) throw EmptyInput("judge_corpus needs at least one prompt");
  CorpusReport report;
  report.rows.resize(corpus.size());
  parallel_for(corpus.size(), opts.max_concurrency, [&](std::size_t i) {
    const auto& [prompt, criteria] = corpus[i];
    CorpusRow& row = report.rows[i];
    row.prompt_id = prompt.id;
    try {
      if (opts.hygiene) row.grade = grade_hygiene(prompt, criteria, gateway, judge_model);
      if (opts.hacking) row.verdict = judge_hacking(prompt, criteria, gateway, judge_model);
    } catch (const AuthError&) {
      throw;
    } catch (const Error& e) {
      row.error = e.what();
    }
  });
  compute_aggregates(report);
  return report;
}

void to_json(Json& j, const HygieneGrade& v) {
  j = Json{{"readability", v.readability},
           {"specification_quality", v.specification_quality},
           {"maintainability", v.maintainability},
           {"total", v.total},
           {"per_run", v.per_run},
           {"reasoning", v.reasoning}};
}

void to_json(Json& j, const HackVerdict& v) {
  j = Json{{"votes", v.votes}, {"verdict", v.verdict ? "hacking" : "clean"}, {"hacking", v.verdict},
           {"unanimous", v.unanimous}, {"reasonings", v.reasonings}};
}

void to_json(Json& j, const CorpusRow& v) {
  j = Json{{"prompt_id", v.prompt_id}};
  if (v.grade) j["grade"] = *v.grade;
  if (v.verdict) j["verdict"] = *v.verdict;
  if (v.error) j["error"] = *v.error;
}

Json aggregates_json(const CorpusReport& r) {
  auto opt = [](const std::optional<double>& x) { return x ? Json(*x) : Json(nullptr); };
  return Json{{"record", "aggregates"},
              {"graded", r.graded},
              {"judged", r.judged},
              {"failed", r.failed},
              {"mean_hygiene_total", opt(r.mean_hygiene_total)},
              {"hacking_flag_rate", opt(r.hacking_flag_rate)},
              {"unanimity_rate", opt(r.unanimity_rate)}};
}

}  // namespace prefpo::judge
