#include "advspeech/wer.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <sstream>
#include <stdexcept>

namespace advspeech {

Transcript normalize_text(const std::string& text) {
  Transcript out;
  std::istringstream ss(text);
  std::string raw;
  while (ss >> raw) {
    std::string tok;
    for (const char ch : raw) {
      const auto u = static_cast<unsigned char>(ch);
      if (std::isalnum(u)) {
        tok.push_back(static_cast<char>(std::tolower(u)));
      } else if (ch == '$') {
        tok.push_back(ch);
      }
    }
    if (!tok.empty()) out.push_back(std::move(tok));
  }
  return out;
}

std::string join_words(const Transcript& words) {
  std::string s;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) s.push_back(' ');
    s += words[i];
  }
  return s;
}

EditCounts wer(const Transcript& ref, const Transcript& hyp) {
  if (ref.empty()) throw std::invalid_argument("wer: empty reference");
  const std::size_t n = ref.size(), m = hyp.size();
  // dp[i][j]: edit distance between ref[0..i) and hyp[0..j)
  std::vector<std::vector<std::int32_t>> dp(n + 1, std::vector<std::int32_t>(m + 1));
  for (std::size_t i = 0; i <= n; ++i) dp[i][0] = static_cast<std::int32_t>(i);
  for (std::size_t j = 0; j <= m; ++j) dp[0][j] = static_cast<std::int32_t>(j);
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      const std::int32_t sub = dp[i - 1][j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      const std::int32_t del = dp[i - 1][j] + 1;
      const std::int32_t ins = dp[i][j - 1] + 1;
      dp[i][j] = std::min({sub, del, ins});
    }
  }
  // Backtrace; on ties prefer match/substitution, then deletion, then insertion.
  EditCounts c;
  c.ref_len = static_cast<std::int64_t>(n);
  std::size_t i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0) {
      const bool eq = ref[i - 1] == hyp[j - 1];
      if (dp[i][j] == dp[i - 1][j - 1] + (eq ? 0 : 1)) {
        if (!eq) ++c.substitutions;
        --i;
        --j;
        continue;
      }
    }
    if (i > 0 && dp[i][j] == dp[i - 1][j] + 1) {
      ++c.deletions;
      --i;
      continue;
    }
    ++c.insertions;
    --j;
  }
  return c;
}

std::vector<BoxplotStats> summarize_boxplot(const std::vector<SystemCell>& cells,
                                            std::optional<double> exclude_epsilon) {
  std::map<std::string, std::vector<double>> by_system;
  std::vector<std::string> order;
  for (const SystemCell& c : cells) {
    if (exclude_epsilon && std::fabs(c.epsilon - *exclude_epsilon) < 1e-12) continue;
    if (!by_system.count(c.system)) order.push_back(c.system);
    by_system[c.system].push_back(c.gt_wer);
  }
  // nearest-rank percentile: value at index ceil(p*n), 1-based
  const auto rank = [](const std::vector<double>& v, double p) {
    const auto n = static_cast<double>(v.size());
    auto idx = static_cast<std::size_t>(std::ceil(p * n));
    if (idx < 1) idx = 1;
    return v[idx - 1];
  };
  std::vector<BoxplotStats> out;
  for (const std::string& sys : order) {
    auto& v = by_system[sys];
    std::sort(v.begin(), v.end());
    BoxplotStats s;
    s.system = sys;
    s.n_settings = static_cast<std::int64_t>(v.size());
    s.min = v.front();
    s.q1 = rank(v, 0.25);
    s.median = rank(v, 0.5);
    s.q3 = rank(v, 0.75);
    s.max = v.back();
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace advspeech
