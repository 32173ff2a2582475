#include "prefpo/checkers.hpp"

#include <algorithm>
#include <map>

#include "prefpo/error.hpp"
#include "prefpo/text.hpp"

namespace prefpo {

std::string_view to_string(CheckStatus s) {
  switch (s) {
    case CheckStatus::passed:
      return "passed";
    case CheckStatus::failed:
      return "failed";
    case CheckStatus::indeterminate:
      break;
  }
  return "indeterminate";
}

namespace count {

namespace {

// Code point ending right before byte offset `pos`.
char32_t code_point_before(std::string_view s, std::size_t pos) {
  std::size_t start = pos;
  while (start > 0 && (static_cast<unsigned char>(s[start - 1]) & 0xC0) == 0x80 && pos - start < 3) --start;
  if (start == 0) return 0;
  --start;
  const auto cps = text::decode_utf8(s.substr(start, pos - start));
  return cps.empty() ? 0 : cps.back();
}

char32_t code_point_at(std::string_view s, std::size_t pos) {
  const auto cps = text::decode_utf8(s.substr(pos, std::min<std::size_t>(4, s.size() - pos)));
  return cps.empty() ? 0 : cps.front();
}

bool has_word_char(std::string_view s) {
  const auto cps = text::decode_utf8(s);
  return std::any_of(cps.begin(), cps.end(), text::is_word_char);
}

bool is_divider_line(std::string_view line) {
  const auto t = text::trim(line);
  return t.size() >= 3 && t.find_first_not_of("*-_=") == std::string_view::npos;
}

bool is_ascii_space(char c) { return c == ' ' || (c >= '\t' && c <= '\r'); }

}  // namespace

std::size_t keyword(std::string_view text, std::string_view keyword) {
  if (keyword.empty()) return 0;
  const std::string hay = text::ascii_lower(text);
  const std::string needle = text::ascii_lower(keyword);
  std::size_t n = 0;
  for (std::size_t pos = hay.find(needle); pos != std::string::npos;) {
    const std::size_t end = pos + needle.size();
    const bool left = pos == 0 || !text::is_word_char(code_point_before(hay, pos));
    const bool right = end == hay.size() || !text::is_word_char(code_point_at(hay, end));
    if (left && right) {
      ++n;
      pos = hay.find(needle, end);
    } else {
      pos = hay.find(needle, pos + 1);
    }
  }
  return n;
}

std::size_t letter(std::string_view text, char letter) {
  const char lo = text::ascii_lower(letter);
  return static_cast<std::size_t>(
      std::count_if(text.begin(), text.end(), [lo](char c) { return text::ascii_lower(c) == lo; }));
}

std::size_t words(std::string_view text) { return text::split_whitespace(text).size(); }

std::size_t sentences(std::string_view text) {
  std::string cleaned;
  cleaned.reserve(text.size());
  for (auto line : text::lines(text)) {
    if (!is_divider_line(line)) cleaned.append(line);
    cleaned.push_back('\n');
  }
  std::size_t n = 0;
  std::size_t start = 0;
  for (std::size_t i = 0; i < cleaned.size();) {
    const char c = cleaned[i];
    if (c != '.' && c != '!' && c != '?') {
      ++i;
      continue;
    }
    std::size_t e = i;
    while (e < cleaned.size() && (cleaned[e] == '.' || cleaned[e] == '!' || cleaned[e] == '?')) ++e;
    if (e == cleaned.size() || is_ascii_space(cleaned[e])) {
      if (has_word_char(std::string_view(cleaned).substr(start, e - start))) ++n;
      start = e;
    }
    i = e;
  }
  if (has_word_char(std::string_view(cleaned).substr(start))) ++n;
  return n;
}

std::size_t highlighted_sections(std::string_view text) {
  std::size_t n = 0;
  // Single-star spans: \*[^\n*]*\*
  for (std::size_t p = 0; p < text.size();) {
    if (text[p] != '*') {
      ++p;
      continue;
    }
    const std::size_t q = text.find_first_of("*\n", p + 1);
    if (q == std::string_view::npos || text[q] != '*') {
      ++p;
      continue;
    }
    if (!text::trim(text.substr(p + 1, q - p - 1)).empty()) ++n;
    p = q + 1;
  }
  // Double-star spans: \*\*[^\n*]*\*\*
  for (std::size_t p = 0; p + 1 < text.size();) {
    if (text[p] != '*' || text[p + 1] != '*') {
      ++p;
      continue;
    }
    const std::size_t q = text.find_first_of("*\n", p + 2);
    if (q == std::string_view::npos || text[q] != '*' || q + 1 >= text.size() || text[q + 1] != '*') {
      ++p;
      continue;
    }
    if (!text::trim(text.substr(p + 2, q - p - 2)).empty()) ++n;
    p = q + 2;
  }
  return n;
}

long paragraphs(std::string_view text, std::string_view divider) {
  std::vector<bool> empty_segment{true};
  for (auto line : text::lines(text)) {
    if (text::trim(line) == divider) {
      empty_segment.push_back(true);
    } else if (!text::trim(line).empty()) {
      empty_segment.back() = false;
    }
  }
  long n = static_cast<long>(empty_segment.size());
  for (std::size_t i = 0; i < empty_segment.size(); ++i) {
    if (!empty_segment[i]) continue;
    if (i == 0 || i + 1 == empty_segment.size()) {
      --n;
    } else {
      return -1;
    }
  }
  return std::max(n, 0L);
}

}  // namespace count

namespace {

using Violations = std::vector<std::string>;

void need_string(const Json& p, const char* key, Violations& out) {
  if (!p.contains(key) || !p.at(key).is_string() || p.at(key).get<std::string>().empty()) {
    out.push_back(std::string("'") + key + "' must be a non-empty string");
  }
}

void need_count(const Json& p, const char* key, Violations& out) {
  if (!p.contains(key) || !p.at(key).is_number_integer() || p.at(key).get<long long>() < 0) {
    out.push_back(std::string("'") + key + "' must be an integer >= 0");
  }
}

void need_string_list(const Json& p, const char* key, Violations& out) {
  const bool ok = p.contains(key) && p.at(key).is_array() && !p.at(key).empty() &&
                  std::all_of(p.at(key).begin(), p.at(key).end(),
                              [](const Json& w) { return w.is_string() && !w.get<std::string>().empty(); });
  if (!ok) out.push_back(std::string("'") + key + "' must be a non-empty list of non-empty strings");
}

void need_letter(const Json& p, Violations& out) {
  need_string(p, "letter", out);
  if (out.empty() && p.at("letter").get<std::string>().size() != 1) {
    out.emplace_back("'letter' must be a single ASCII character");
  }
}

CheckOutcome verdict(bool ok, std::string detail) {
  return {ok ? CheckStatus::passed : CheckStatus::failed, std::move(detail)};
}

std::size_t as_size(const Json& p, const char* key) { return p.at(key).get<std::size_t>(); }

CheckerDef min_max(const char* key, bool is_min, std::function<std::size_t(std::string_view, const Json&)> counter,
                   std::function<void(const Json&, Violations&)> extra = {}) {
  return CheckerDef{
      [key, extra](const Json& p) {
        Violations v;
        if (extra) extra(p, v);
        need_count(p, key, v);
        return v;
      },
      [key, is_min, counter](std::string_view text, const Json& p) {
        const std::size_t n = counter(text, p);
        const std::size_t bound = as_size(p, key);
        return verdict(is_min ? n >= bound : n <= bound,
                       "observed " + std::to_string(n) + (is_min ? ", need >= " : ", need <= ") +
                           std::to_string(bound));
      }};
}

std::map<std::string, CheckerDef, std::less<>>& registry() {
  static std::map<std::string, CheckerDef, std::less<>> r = [] {
    std::map<std::string, CheckerDef, std::less<>> m;
    auto keyword_count = [](std::string_view t, const Json& p) {
      return count::keyword(t, p.at("keyword").get<std::string>());
    };
    auto keyword_schema = [](const Json& p, Violations& v) { need_string(p, "keyword", v); };
    auto letter_count = [](std::string_view t, const Json& p) {
      return count::letter(t, p.at("letter").get<std::string>()[0]);
    };
    m["keyword_min_count"] = min_max("min_count", true, keyword_count, keyword_schema);
    m["keyword_max_count"] = min_max("max_count", false, keyword_count, keyword_schema);
    m["letter_min_count"] = min_max("min_count", true, letter_count, need_letter);
    m["letter_max_count"] = min_max("max_count", false, letter_count, need_letter);
    m["word_min"] = min_max("min_words", true, [](std::string_view t, const Json&) { return count::words(t); });
    m["word_max"] = min_max("max_words", false, [](std::string_view t, const Json&) { return count::words(t); });
    m["sentence_min"] =
        min_max("min_sentences", true, [](std::string_view t, const Json&) { return count::sentences(t); });
    m["sentence_max"] =
        min_max("max_sentences", false, [](std::string_view t, const Json&) { return count::sentences(t); });
    m["min_highlighted_sections"] =
        min_max("min_count", true, [](std::string_view t, const Json&) { return count::highlighted_sections(t); });

    m["forbidden_words"] = CheckerDef{
        [](const Json& p) {
          Violations v;
          need_string_list(p, "words", v);
          return v;
        },
        [](std::string_view t, const Json& p) {
          std::string found;
          for (const auto& w : p.at("words")) {
            if (count::keyword(t, w.get<std::string>()) > 0) found += (found.empty() ? "" : ", ") + w.get<std::string>();
          }
          return verdict(found.empty(), found.empty() ? "none present" : "present: " + found);
        }};

    m["keywords_all"] = CheckerDef{
        [](const Json& p) {
          Violations v;
          need_string_list(p, "keywords", v);
          return v;
        },
        [](std::string_view t, const Json& p) {
          std::string missing;
          for (const auto& w : p.at("keywords")) {
            if (count::keyword(t, w.get<std::string>()) == 0) {
              missing += (missing.empty() ? "" : ", ") + w.get<std::string>();
            }
          }
          return verdict(missing.empty(), missing.empty() ? "all present" : "missing: " + missing);
        }};

    m["paragraph_count_with_divider"] = CheckerDef{
        [](const Json& p) {
          Violations v;
          need_string(p, "divider", v);
          need_count(p, "count", v);
          return v;
        },
        [](std::string_view t, const Json& p) {
          const long n = count::paragraphs(t, p.at("divider").get<std::string>());
          const auto want = p.at("count").get<long>();
          if (n < 0) return verdict(false, "empty paragraph between dividers");
          return verdict(n == want, "observed " + std::to_string(n) + ", need " + std::to_string(want));
        }};

    m["no_commas"] = CheckerDef{[](const Json&) { return Violations{}; },
                                [](std::string_view t, const Json&) {
                                  const auto n = static_cast<std::size_t>(std::count(t.begin(), t.end(), ','));
                                  if (n == 0) return verdict(true, "0 commas");
                                  const auto offset = text::count_code_points(t.substr(0, t.find(',')));
                                  return verdict(false, n == 1 ? "1 comma at offset " + std::to_string(offset)
                                                               : std::to_string(n) + " commas, first at offset " +
                                                                     std::to_string(offset));
                                }};

    m["end_phrase_exact"] = CheckerDef{
        [](const Json& p) {
          Violations v;
          need_string(p, "phrase", v);
          return v;
        },
        [](std::string_view t, const Json& p) {
          const auto phrase = p.at("phrase").get<std::string>();
          const bool ok = text::rtrim(t).ends_with(phrase);
          return verdict(ok, ok ? "ends with phrase" : "does not end with phrase");
        }};
    return m;
  }();
  return r;
}

}  // namespace

void register_checker(std::string kind, CheckerDef def) { registry()[std::move(kind)] = std::move(def); }

bool is_registered(std::string_view kind) { return registry().find(kind) != registry().end(); }

std::vector<std::string> registered_kinds() {
  std::vector<std::string> out;
  for (const auto& [k, _] : registry()) out.push_back(k);
  return out;
}

std::vector<std::string> criterion_violations(const Criterion& c) {
  Violations v;
  if (c.description.empty()) v.emplace_back("description must be non-empty");
  auto it = registry().find(c.kind);
  if (it != registry().end()) {
    if (!c.params.is_object()) {
      v.emplace_back("params must be an object");
    } else {
      for (auto& m : it->second.validate(c.params)) v.push_back(std::move(m));
    }
  }
  return v;
}

CheckResult check(std::string_view output_text, const Criterion& criterion, std::size_t index, CheckOptions opts) {
  auto it = registry().find(criterion.kind);
  if (it == registry().end()) {
    if (!opts.allow_unknown) throw UnknownKind("no checker registered for kind '" + criterion.kind + "'");
    return {index, CheckStatus::indeterminate, "no programmatic checker for kind '" + criterion.kind + "'"};
  }
  if (const auto v = it->second.validate(criterion.params); !v.empty()) {
    throw PreconditionError("criterion " + std::to_string(index) + " (" + criterion.kind + "): " + v.front());
  }
  auto outcome = it->second.check(output_text, criterion.params);
  return {index, outcome.status, std::move(outcome.detail)};
}

CheckAllResult check_all(std::string_view output_text, const Criteria& criteria, CheckOptions opts) {
  if (criteria.items.empty()) throw EmptyCriteria("programmatic checking needs at least one criterion");
  CheckAllResult r;
  bool all = true;
  for (std::size_t i = 0; i < criteria.items.size(); ++i) {
    r.results.push_back(check(output_text, criteria.items[i], i, opts));
    const auto s = r.results.back().status;
    if (s == CheckStatus::indeterminate) ++r.indeterminate;
    if (s == CheckStatus::failed) all = false;
  }
  if (r.indeterminate == criteria.items.size()) {
    throw EmptyCriteria("none of the criteria has a programmatic checker");
  }
  r.passed = all;
  return r;
}

void to_json(Json& j, const CheckResult& v) {
  j = Json{{"criterion_index", v.criterion_index}, {"status", to_string(v.status)}, {"detail", v.detail}};
}

}  // namespace prefpo
