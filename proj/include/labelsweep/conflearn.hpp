#pragma once

// Per-model label-error detection with confident learning: per-class
// thresholds, the confident joint, its calibration, and prune-by-noise-rate
// selection ranked by normalized margin.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "labelsweep/error.hpp"
#include "labelsweep/manifest.hpp"
#include "labelsweep/predstore.hpp"

namespace labelsweep {

// t[j] is the mean predicted probability of class j over samples labeled j;
// absent when no sample carries label j.
using ThresholdVector = std::vector<std::optional<double>>;

struct ConfidentJoint {
  std::size_t c = 0;
  std::vector<std::int64_t> counts;  // c*c, row = given label, column = confident prediction

  explicit ConfidentJoint(std::size_t classes = 0) : c(classes), counts(classes * classes, 0) {}
  std::int64_t& at(std::size_t i, std::size_t j) { return counts[i * c + j]; }
  std::int64_t at(std::size_t i, std::size_t j) const { return counts[i * c + j]; }
  std::int64_t row_sum(std::size_t i) const {
    return std::accumulate(counts.begin() + static_cast<std::ptrdiff_t>(i * c),
                           counts.begin() + static_cast<std::ptrdiff_t>((i + 1) * c), std::int64_t{0});
  }
  std::int64_t total() const { return std::accumulate(counts.begin(), counts.end(), std::int64_t{0}); }
  bool operator==(const ConfidentJoint&) const = default;
};

struct FlaggedSample {
  std::size_t row = 0;
  std::string sample_id;
  int given_label = 0;
  int candidate_label = 0;
  double margin = 0;  // p[given] - max_{k != given} p[k]
  bool operator==(const FlaggedSample&) const = default;
};

namespace detail {

inline void check_aligned(const ProbabilityMatrix& pm, std::span<const int> labels) {
  if (labels.size() != pm.n)
    throw Error("dimension mismatch: " + std::to_string(labels.size()) + " labels for " + std::to_string(pm.n) +
                " rows of " + pm.model_id);
  for (int l : labels) {
    if (l < 0 || static_cast<std::size_t>(l) >= pm.c)
      throw Error("dimension mismatch: label " + std::to_string(l) + " outside " + std::to_string(pm.c) +
                  " columns of " + pm.model_id);
  }
}

inline std::vector<std::int64_t> label_counts(std::span<const int> labels, std::size_t c) {
  std::vector<std::int64_t> counts(c, 0);
  for (int l : labels) ++counts[static_cast<std::size_t>(l)];
  return counts;
}

}  // namespace detail

inline ThresholdVector class_thresholds(const ProbabilityMatrix& pm, std::span<const int> labels) {
  detail::check_aligned(pm, labels);
  std::vector<double> sums(pm.c, 0.0);
  std::vector<std::int64_t> counts(pm.c, 0);
  for (std::size_t i = 0; i < pm.n; ++i) {
    const auto l = static_cast<std::size_t>(labels[i]);
    sums[l] += pm.at(i, l);
    ++counts[l];
  }
  ThresholdVector t(pm.c);
  for (std::size_t j = 0; j < pm.c; ++j)
    if (counts[j] > 0) t[j] = sums[j] / static_cast<double>(counts[j]);
  return t;
}

// Confidently predicted class of one row: argmax of p[k] over classes whose
// threshold is present and met; lower index wins ties.
inline std::optional<std::size_t> confident_class(std::span<const float> row, const ThresholdVector& t) {
  std::optional<std::size_t> best;
  for (std::size_t k = 0; k < row.size(); ++k) {
    if (!t[k] || static_cast<double>(row[k]) < *t[k]) continue;
    if (!best || row[k] > row[*best]) best = k;
  }
  return best;
}

inline ConfidentJoint confident_joint(const ProbabilityMatrix& pm, std::span<const int> labels,
                                      const ThresholdVector& t) {
  detail::check_aligned(pm, labels);
  if (t.size() != pm.c) throw Error("dimension mismatch: threshold vector length " + std::to_string(t.size()));
  ConfidentJoint cj(pm.c);
  for (std::size_t i = 0; i < pm.n; ++i) {
    if (auto k = confident_class(pm.row(i), t)) ++cj.at(static_cast<std::size_t>(labels[i]), *k);
  }
  return cj;
}

// Row i rescaled to the number of samples labeled i, then divided by n.
// A row with no confident counts puts all of its mass on the diagonal.
inline std::vector<double> calibrate_joint(const ConfidentJoint& cj, std::span<const int> labels) {
  const std::size_t c = cj.c;
  const auto class_counts = detail::label_counts(labels, c);
  const auto n = static_cast<double>(labels.size());
  std::vector<double> q(c * c, 0.0);
  if (labels.empty()) return q;
  for (std::size_t i = 0; i < c; ++i) {
    const auto rs = cj.row_sum(i);
    if (rs == 0) {
      q[i * c + i] = static_cast<double>(class_counts[i]) / n;
      continue;
    }
    for (std::size_t j = 0; j < c; ++j)
      q[i * c + j] = static_cast<double>(cj.at(i, j)) * static_cast<double>(class_counts[i]) /
                     static_cast<double>(rs) / n;
  }
  return q;
}

// Integer form of the calibrated joint (n * Q̂). Each row is apportioned
// with the largest-remainder method so it sums exactly to its class count.
inline std::vector<std::int64_t> calibrated_counts(const ConfidentJoint& cj, std::span<const int> labels) {
  const std::size_t c = cj.c;
  const auto class_counts = detail::label_counts(labels, c);
  std::vector<std::int64_t> out(c * c, 0);
  for (std::size_t i = 0; i < c; ++i) {
    const auto rs = cj.row_sum(i);
    if (rs == 0) {
      out[i * c + i] = class_counts[i];
      continue;
    }
    std::int64_t assigned = 0;
    std::vector<std::pair<std::int64_t, std::size_t>> remainders;
    for (std::size_t j = 0; j < c; ++j) {
      const std::int64_t num = cj.at(i, j) * class_counts[i];
      out[i * c + j] = num / rs;
      assigned += num / rs;
      remainders.emplace_back(num % rs, j);
    }
    std::stable_sort(remainders.begin(), remainders.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t r = 0; assigned < class_counts[i]; ++r, ++assigned) ++out[i * c + remainders[r].second];
  }
  return out;
}

inline double normalized_margin(std::span<const float> row, std::size_t given) {
  float other = 0.0f;
  bool any = false;
  for (std::size_t k = 0; k < row.size(); ++k) {
    if (k == given) continue;
    if (!any || row[k] > other) other = row[k];
    any = true;
  }
  return static_cast<double>(row[given]) - static_cast<double>(other);
}

// Number of samples pruned for the off-diagonal pair (i, j):
// floor(n * Q̂[i][j] * fn), evaluated as floor(cj[i][j] * count_i * fn / rowsum_i)
// so that exact integer results are not lost to rounding of Q̂.
inline std::int64_t prune_count(std::int64_t joint_ij, std::int64_t class_count_i, std::int64_t row_sum_i,
                                double fn) {
  if (row_sum_i == 0 || joint_ij == 0) return 0;
  const std::int64_t num = joint_ij * class_count_i;
  if (fn == 1.0) return num / row_sum_i;
  const long double v = static_cast<long double>(num) * fn / static_cast<long double>(row_sum_i);
  return static_cast<std::int64_t>(std::floor(v + 1e-9L));
}

inline std::vector<FlaggedSample> find_label_issues(const ProbabilityMatrix& pm, std::span<const int> labels,
                                                    double fn) {
  if (!(fn >= 0.0 && fn <= 1.0)) throw Error("fn out of range: " + std::to_string(fn) + " not in [0, 1]");
  detail::check_aligned(pm, labels);
  const std::size_t c = pm.c;
  const auto t = class_thresholds(pm, labels);
  const auto cj = confident_joint(pm, labels, t);
  const auto class_counts = detail::label_counts(labels, c);

  std::vector<std::vector<std::size_t>> rows_by_label(c);
  for (std::size_t i = 0; i < pm.n; ++i) rows_by_label[static_cast<std::size_t>(labels[i])].push_back(i);

  // Best (largest p[j]) candidate per row across all pairs.
  std::vector<std::optional<std::size_t>> chosen(pm.n);
  std::vector<std::size_t> pool;
  for (std::size_t i = 0; i < c; ++i) {
    const auto rs = cj.row_sum(i);
    for (std::size_t j = 0; j < c; ++j) {
      if (i == j) continue;
      const auto take = static_cast<std::size_t>(prune_count(cj.at(i, j), class_counts[i], rs, fn));
      if (take == 0) continue;
      pool = rows_by_label[i];
      const auto m = std::min(take, pool.size());
      std::partial_sort(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(m), pool.end(),
                        [&](std::size_t a, std::size_t b) {
                          const float pa = pm.at(a, j), pb = pm.at(b, j);
                          return pa != pb ? pa > pb : a < b;
                        });
      for (std::size_t r = 0; r < m; ++r) {
        const std::size_t row = pool[r];
        auto& cur = chosen[row];
        if (!cur || pm.at(row, j) > pm.at(row, *cur)) cur = j;
      }
    }
  }

  std::vector<FlaggedSample> out;
  for (std::size_t row = 0; row < pm.n; ++row) {
    if (!chosen[row]) continue;
    const auto given = static_cast<std::size_t>(labels[row]);
    out.push_back(FlaggedSample{row, std::to_string(row), labels[row], static_cast<int>(*chosen[row]),
                                normalized_margin(pm.row(row), given)});
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const FlaggedSample& a, const FlaggedSample& b) { return a.margin < b.margin; });
  return out;
}

// Same as above with sample ids taken from the dataset.
inline std::vector<FlaggedSample> find_label_issues(const ProbabilityMatrix& pm, const Dataset& d, double fn) {
  if (pm.n != d.size() || pm.c != d.categories.size())
    throw Error("dimension mismatch: " + pm.model_id + " does not match the dataset");
  const auto labels = d.labels();
  auto out = find_label_issues(pm, labels, fn);
  for (auto& f : out) f.sample_id = d.records[f.row].id;
  return out;
}

inline std::string format_flag_dump(const std::vector<FlaggedSample>& flags) {
  std::ostringstream out;
  out << "sample_id,given_label,candidate_label,margin\n";
  out.precision(9);
  for (const auto& f : flags)
    out << f.sample_id << ',' << f.given_label << ',' << f.candidate_label << ',' << f.margin << '\n';
  return out.str();
}

}  // namespace labelsweep
