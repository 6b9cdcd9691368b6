#include <catch2/catch.hpp>

#include <cmath>
#include <random>

#include "fidfix/stats.hpp"

using namespace fidfix;

namespace {

// Literal 2^n sign-assignment enumeration over the nonzero differences.
double oracle_wilcoxon_exact(const std::vector<std::pair<double, double>>& pairs) {
  std::vector<double> abs_diffs;
  std::vector<bool> positive;
  for (const auto& [a, b] : pairs) {
    double d = a - b;
    if (d == 0.0) continue;
    abs_diffs.push_back(std::abs(d));
    positive.push_back(d > 0.0);
  }
  std::size_t n = abs_diffs.size();
  if (n == 0) return 1.0;
  // Mean ranks with ties.
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return abs_diffs[a] < abs_diffs[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && abs_diffs[order[j + 1]] == abs_diffs[order[i]]) ++j;
    double mean_rank = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = mean_rank;
    i = j + 1;
  }
  double w = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    if (positive[k]) w += ranks[k];
  }
  std::size_t lower = 0, upper = 0, total = std::size_t{1} << n;
  for (std::size_t mask = 0; mask < total; ++mask) {
    double sum = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      if (mask & (std::size_t{1} << k)) sum += ranks[k];
    }
    if (sum <= w + 1e-12) ++lower;
    if (sum >= w - 1e-12) ++upper;
  }
  double p = 2.0 * static_cast<double>(std::min(lower, upper)) / static_cast<double>(total);
  return std::min(1.0, p);
}

}  // namespace

TEST_CASE("wilcoxon returns 1.0 when all differences vanish") {
  std::vector<std::pair<double, double>> pairs = {{1.0, 1.0}, {2.5, 2.5}, {0.0, 0.0}};
  CHECK(wilcoxon_signed_rank(pairs) == 1.0);
  CHECK_THROWS_AS(wilcoxon_signed_rank({}), InputError);
}

TEST_CASE("wilcoxon n=6 all-positive differences gives exact p = 2/64") {
  std::vector<std::pair<double, double>> pairs;
  for (int i = 1; i <= 6; ++i) {
    pairs.emplace_back(static_cast<double>(i) + 0.5 * i, static_cast<double>(i));
  }
  CHECK(wilcoxon_signed_rank(pairs) == Approx(0.03125).margin(1e-12));
}

TEST_CASE("wilcoxon exact branch equals sign enumeration for n <= 10") {
  std::mt19937_64 rng(808);
  std::uniform_int_distribution<int> val(-4, 4);
  for (int iter = 0; iter < 200; ++iter) {
    std::size_t n = 1 + rng() % 10;
    std::vector<std::pair<double, double>> pairs;
    for (std::size_t k = 0; k < n; ++k) {
      // Small integer scores produce frequent ties and zero differences.
      pairs.emplace_back(static_cast<double>(val(rng)), static_cast<double>(val(rng)));
    }
    double got = wilcoxon_signed_rank(pairs);
    double want = oracle_wilcoxon_exact(pairs);
    REQUIRE(got == Approx(want).margin(1e-9));
  }
}

TEST_CASE("wilcoxon large-sample branch is sane under the null") {
  std::mt19937_64 rng(112233);
  std::normal_distribution<double> noise(0.0, 1.0);
  int calm = 0;
  const int trials = 100;
  for (int t = 0; t < trials; ++t) {
    std::vector<std::pair<double, double>> pairs;
    for (int k = 0; k < 100; ++k) pairs.emplace_back(noise(rng), noise(rng));
    double p = wilcoxon_signed_rank(pairs);
    REQUIRE(p >= 0.0);
    REQUIRE(p <= 1.0);
    if (p > 0.01) ++calm;
  }
  CHECK(calm >= 95);
}

TEST_CASE("wilcoxon detects a shifted paired sample") {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> noise(0.0, 0.2);
  std::vector<std::pair<double, double>> pairs;
  for (int k = 0; k < 60; ++k) {
    double base = noise(rng);
    pairs.emplace_back(base + 1.0, base + noise(rng));
  }
  CHECK(wilcoxon_signed_rank(pairs) < 1e-6);
}

TEST_CASE("auc ranks separable scores at 1.0 and ties at 0.5") {
  CHECK(auc_score({0.9, 0.8, 0.2, 0.1}, {1, 1, 0, 0}) == 1.0);
  CHECK(auc_score({0.5, 0.5, 0.5, 0.5}, {1, 1, 0, 0}) == 0.5);
  CHECK(auc_score({0.1, 0.9}, {1, 0}) == 0.0);
}
