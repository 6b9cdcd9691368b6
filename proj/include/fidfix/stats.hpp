#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "fidfix/common.hpp"

namespace fidfix {

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

namespace statdetail {

// Ranks of |d| with mean ranks for ties, doubled so they stay integral
// (a tie group of even size averages to a half-integer).
inline std::vector<std::int64_t> doubled_ranks(const std::vector<double>& abs_diffs) {
  const std::size_t n = abs_diffs.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return abs_diffs[a] < abs_diffs[b]; });
  std::vector<std::int64_t> ranks(n, 0);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && abs_diffs[order[j + 1]] == abs_diffs[order[i]]) ++j;
    // Positions i..j (0-based) share the mean rank; doubled mean of
    // (i+1)..(j+1) is (i + j + 2).
    std::int64_t doubled_mean = static_cast<std::int64_t>(i + j + 2);
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = doubled_mean;
    i = j + 1;
  }
  return ranks;
}

// Exact null distribution of the doubled signed-rank sum: number of sign
// assignments achieving each value, via subset-sum counting over 2^n equally
// likely assignments.
inline std::vector<double> exact_distribution(const std::vector<std::int64_t>& doubled) {
  std::int64_t max_sum = 0;
  for (auto r : doubled) max_sum += r;
  std::vector<double> counts(static_cast<std::size_t>(max_sum) + 1, 0.0);
  counts[0] = 1.0;
  std::int64_t reach = 0;
  for (auto r : doubled) {
    reach += r;
    for (std::int64_t s = reach; s >= r; --s) {
      counts[static_cast<std::size_t>(s)] += counts[static_cast<std::size_t>(s - r)];
    }
  }
  return counts;
}

}  // namespace statdetail

// Two-sided Wilcoxon signed-rank test over paired scores. Zero differences
// are dropped; tied magnitudes share mean ranks. Exact distribution up to
// n = 25, normal approximation with continuity and tie correction above.
inline double wilcoxon_signed_rank(const std::vector<std::pair<double, double>>& pairs) {
  if (pairs.empty()) throw InputError("wilcoxon_signed_rank: need at least one pair");
  std::vector<double> abs_diffs;
  std::vector<bool> positive;
  for (const auto& [a, b] : pairs) {
    double d = a - b;
    if (d == 0.0) continue;
    abs_diffs.push_back(std::abs(d));
    positive.push_back(d > 0.0);
  }
  const std::size_t n = abs_diffs.size();
  if (n == 0) return 1.0;

  auto doubled = statdetail::doubled_ranks(abs_diffs);
  std::int64_t w_doubled = 0;
  std::int64_t total_doubled = 0;
  for (std::size_t i = 0; i < n; ++i) {
    total_doubled += doubled[i];
    if (positive[i]) w_doubled += doubled[i];
  }

  if (n <= 25) {
    auto counts = statdetail::exact_distribution(doubled);
    double denom = std::ldexp(1.0, static_cast<int>(n));  // 2^n
    double lower = 0.0, upper = 0.0;
    for (std::int64_t s = 0; s <= total_doubled; ++s) {
      if (s <= w_doubled) lower += counts[static_cast<std::size_t>(s)];
      if (s >= w_doubled) upper += counts[static_cast<std::size_t>(s)];
    }
    double p = 2.0 * std::min(lower, upper) / denom;
    return std::min(1.0, p);
  }

  // Normal approximation on the undoubled statistic.
  double w = static_cast<double>(w_doubled) / 2.0;
  double nn = static_cast<double>(n);
  double mean = nn * (nn + 1.0) / 4.0;
  double var = nn * (nn + 1.0) * (2.0 * nn + 1.0) / 24.0;
  // Tie correction: subtract sum(t^3 - t)/48 over tie groups.
  {
    std::vector<double> sorted(abs_diffs);
    std::sort(sorted.begin(), sorted.end());
    std::size_t i = 0;
    while (i < sorted.size()) {
      std::size_t j = i;
      while (j + 1 < sorted.size() && sorted[j + 1] == sorted[i]) ++j;
      double t = static_cast<double>(j - i + 1);
      if (t > 1.0) var -= (t * t * t - t) / 48.0;
      i = j + 1;
    }
  }
  if (var <= 0.0) return 1.0;
  double delta = w - mean;
  double cc = delta > 0.0 ? -0.5 : (delta < 0.0 ? 0.5 : 0.0);
  double z = (delta + cc) / std::sqrt(var);
  double p = 2.0 * normal_cdf(-std::abs(z));
  return std::min(1.0, p);
}

// Rank-based AUC for binary labels with tie handling (the probability a
// positive scores above a negative, ties counting half).
inline double auc_score(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size()) throw InputError("auc_score: size mismatch");
  double pos = 0, neg = 0, won = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 1) continue;
    ++pos;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] == 1) continue;
      if (scores[i] > scores[j]) won += 1.0;
      else if (scores[i] == scores[j]) won += 0.5;
    }
  }
  for (int l : labels) {
    if (l != 1) ++neg;
  }
  if (pos == 0 || neg == 0) throw InputError("auc_score: need both classes");
  return won / (pos * neg);
}

}  // namespace fidfix
