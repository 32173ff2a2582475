#include "prefpo/hygiene.hpp"

#include <map>
#include <string>
#include <tuple>
#include <unordered_map>

#include "prefpo/error.hpp"
#include "prefpo/stats.hpp"
#include "prefpo/text.hpp"

namespace prefpo::hygiene {

std::size_t length_chars(std::string_view text) { return text::count_code_points(text); }

double repetition_ratio(std::string_view text) {
  const auto tokens = text::split_whitespace(text);
  if (tokens.size() < 3) return 0.0;
  using Trigram = std::tuple<std::string_view, std::string_view, std::string_view>;
  std::map<Trigram, std::size_t> counts;
  for (std::size_t i = 0; i + 2 < tokens.size(); ++i) ++counts[{tokens[i], tokens[i + 1], tokens[i + 2]}];
  const std::size_t total = tokens.size() - 2;
  std::size_t repeated = 0;
  for (const auto& [_, c] : counts) {
    if (c > 1) repeated += c;
  }
  return static_cast<double>(repeated) / static_cast<double>(total);
}

namespace {

struct Block {
  std::size_t i, j, size;
};

// Ratcliff/Obershelp longest-match search, with the tie-breaking of the
// reference implementation: earliest i, then earliest j, for the longest run.
class Matcher {
 public:
  Matcher(const std::u32string& a, const std::u32string& b) : a_(a), b_(b), len_(b.size() + 1, 0), next_(b.size() + 1, 0) {
    for (std::size_t j = 0; j < b.size(); ++j) b2j_[b[j]].push_back(j);
    if (b.size() >= 200) {
      const std::size_t limit = b.size() / 100 + 1;
      for (auto it = b2j_.begin(); it != b2j_.end();) {
        it = it->second.size() > limit ? b2j_.erase(it) : std::next(it);
      }
    }
  }

  std::size_t matched() {
    std::size_t total = 0;
    std::vector<std::tuple<std::size_t, std::size_t, std::size_t, std::size_t>> queue{{0, a_.size(), 0, b_.size()}};
    while (!queue.empty()) {
      const auto [alo, ahi, blo, bhi] = queue.back();
      queue.pop_back();
      const Block m = longest(alo, ahi, blo, bhi);
      if (m.size == 0) continue;
      total += m.size;
      if (alo < m.i && blo < m.j) queue.emplace_back(alo, m.i, blo, m.j);
      if (m.i + m.size < ahi && m.j + m.size < bhi) queue.emplace_back(m.i + m.size, ahi, m.j + m.size, bhi);
    }
    return total;
  }

 private:
  Block longest(std::size_t alo, std::size_t ahi, std::size_t blo, std::size_t bhi) {
    Block best{alo, blo, 0};
    // len_[j + 1] holds the run length ending at (i - 1, j); only the entries
    // listed in touched_ are non-zero.
    std::vector<std::size_t> touched, next_touched;
    for (std::size_t i = alo; i < ahi; ++i) {
      next_touched.clear();
      if (auto it = b2j_.find(a_[i]); it != b2j_.end()) {
        for (std::size_t j : it->second) {
          if (j < blo) continue;
          if (j >= bhi) break;
          const std::size_t k = len_[j] + 1;
          next_[j + 1] = k;
          next_touched.push_back(j + 1);
          if (k > best.size) best = {i + 1 - k, j + 1 - k, k};
        }
      }
      for (std::size_t t : touched) len_[t] = 0;
      for (std::size_t t : next_touched) {
        len_[t] = next_[t];
        next_[t] = 0;
      }
      std::swap(touched, next_touched);
    }
    for (std::size_t t : touched) len_[t] = 0;

    // Popular characters cannot seed a match but may still extend one.
    while (best.i > alo && best.j > blo && a_[best.i - 1] == b_[best.j - 1]) {
      --best.i;
      --best.j;
      ++best.size;
    }
    while (best.i + best.size < ahi && best.j + best.size < bhi && a_[best.i + best.size] == b_[best.j + best.size]) {
      ++best.size;
    }
    return best;
  }

  const std::u32string& a_;
  const std::u32string& b_;
  std::unordered_map<char32_t, std::vector<std::size_t>> b2j_;
  std::vector<std::size_t> len_;
  std::vector<std::size_t> next_;
};

}  // namespace

double lexical_similarity(std::string_view reference, std::string_view candidate) {
  if (reference == candidate) return 1.0;
  const std::u32string a = text::decode_utf8(reference);
  const std::u32string b = text::decode_utf8(candidate);
  const std::size_t length = a.size() + b.size();
  if (length == 0) return 1.0;
  Matcher m(a, b);
  return 2.0 * static_cast<double>(m.matched()) / static_cast<double>(length);
}

HygieneMetrics hygiene_report(const Prompt& prompt, const Prompt& seed) {
  if (seed.text.empty()) throw EmptySeed("hygiene_report needs a non-empty seed prompt");
  HygieneMetrics m;
  m.length_chars = length_chars(prompt.text);
  m.repetition = repetition_ratio(prompt.text);
  m.similarity_to_seed = lexical_similarity(seed.text, prompt.text);
  m.length_ratio = static_cast<double>(m.length_chars) / static_cast<double>(length_chars(seed.text));
  m.repetition_increase = m.repetition - repetition_ratio(seed.text);
  return m;
}

PoolSummary summarize(const std::vector<HygieneMetrics>& rows) {
  if (rows.empty()) throw EmptyInput("cannot summarize an empty pool");
  auto field = [&](auto get) {
    std::vector<double> xs;
    xs.reserve(rows.size());
    for (const auto& r : rows) xs.push_back(static_cast<double>(get(r)));
    const auto [mean, sd] = stats::mean_sd(xs);
    return FieldSummary{mean, sd};
  };
  PoolSummary s;
  s.n = rows.size();
  s.length_chars = field([](const HygieneMetrics& r) { return r.length_chars; });
  s.repetition = field([](const HygieneMetrics& r) { return r.repetition; });
  s.similarity_to_seed = field([](const HygieneMetrics& r) { return r.similarity_to_seed; });
  s.length_ratio = field([](const HygieneMetrics& r) { return r.length_ratio; });
  s.repetition_increase = field([](const HygieneMetrics& r) { return r.repetition_increase; });
  return s;
}

void to_json(Json& j, const HygieneMetrics& v) {
  j = Json{{"length_chars", v.length_chars},
           {"repetition", v.repetition},
           {"similarity_to_seed", v.similarity_to_seed},
           {"length_ratio", v.length_ratio},
           {"repetition_increase", v.repetition_increase}};
}

void to_json(Json& j, const FieldSummary& v) { j = Json{{"mean", v.mean}, {"sd", v.sd}}; }

void to_json(Json& j, const PoolSummary& v) {
  j = Json{{"n", v.n},
           {"length_chars", v.length_chars},
           {"repetition", v.repetition},
           {"similarity_to_seed", v.similarity_to_seed},
           {"length_ratio", v.length_ratio},
           {"repetition_increase", v.repetition_increase}};
}

}  // namespace prefpo::hygiene
