#pragma once

// Independent reference computations used to freeze and cross-check expected
// values. Nothing here calls into the library code paths under test.

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

namespace kbforge::oracle {

struct RankedItem {
  std::string key;  // record key rendered as "subject|relation"
  std::optional<double> probability;
  bool correct = false;
};

struct RapResult {
  double recall = 0.0;
  std::optional<double> threshold;
};

// Enumerates every prefix of the ranked list from scratch and keeps the one
// with the highest recall among those meeting the precision target; on equal
// recall the longer prefix wins.
inline RapResult bruteForceRecallAtPrecision(std::vector<RankedItem> items, double target) {
  const double total = static_cast<double>(items.size());
  std::vector<RankedItem> ranked;
  for (const auto& item : items) {
    if (item.probability) ranked.push_back(item);
  }
  std::stable_sort(ranked.begin(), ranked.end(), [](const RankedItem& a, const RankedItem& b) {
    if (*a.probability > *b.probability) return true;
    if (*a.probability < *b.probability) return false;
    return a.key < b.key;
  });
  RapResult best;
  int best_correct = -1;
  std::size_t best_len = 0;
  for (std::size_t len = 1; len <= ranked.size(); ++len) {
    int correct = 0;
    for (std::size_t i = 0; i < len; ++i) correct += ranked[i].correct ? 1 : 0;
    double precision = static_cast<double>(correct) / static_cast<double>(len);
    if (precision < target) continue;
    if (correct > best_correct || (correct == best_correct && len > best_len)) {
      best_correct = correct;
      best_len = len;
    }
  }
  if (best_correct <= 0) return best;
  best.recall = best_correct / total;
  best.threshold = *ranked[best_len - 1].probability;
  return best;
}

// Textbook sample correlation via covariance / (sd_x * sd_y), n-1 denominators.
inline double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  long double n = static_cast<long double>(x.size());
  long double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  long double cov = 0, vx = 0, vy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    cov += (x[i] - mx) * (y[i] - my);
    vx += (x[i] - mx) * (x[i] - mx);
    vy += (y[i] - my) * (y[i] - my);
  }
  cov /= (n - 1);
  long double sx = std::sqrt(vx / (n - 1));
  long double sy = std::sqrt(vy / (n - 1));
  return static_cast<double>(cov / (sx * sy));
}

// Closed-form normalized entropy from a probability vector.
inline double normalizedEntropy(const std::vector<double>& probabilities) {
  double h = 0.0;
  int outcomes = 0;
  for (double p : probabilities) {
    if (p <= 0) continue;
    ++outcomes;
    h += -p * std::log(p) / std::log(2.0);
  }
  if (outcomes < 2) return 0.0;
  return h / (std::log(static_cast<double>(outcomes)) / std::log(2.0));
}

}  // namespace kbforge::oracle
