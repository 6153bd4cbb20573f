#pragma once

// Brute-force reference implementations used only by the tests. They are
// written directly from the rule definitions and share no code with the
// library beyond its plain data types.

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "labelsweep/consensus.hpp"
#include "labelsweep/plan.hpp"
#include "labelsweep/predstore.hpp"
#include "labelsweep/simharness.hpp"

namespace labelsweep::oracle {

// Confident joint by a double loop over (samples x categories).
inline std::vector<std::int64_t> confident_joint(const ProbabilityMatrix& pm, const std::vector<int>& labels) {
  const std::size_t n = pm.n, c = pm.c;
  std::vector<std::optional<double>> thr(c);
  for (std::size_t j = 0; j < c; ++j) {
    double sum = 0;
    std::int64_t cnt = 0;
    for (std::size_t s = 0; s < n; ++s) {
      if (labels[s] != static_cast<int>(j)) continue;
      sum += static_cast<double>(pm.values[s * c + j]);
      ++cnt;
    }
    if (cnt) thr[j] = sum / static_cast<double>(cnt);
  }
  std::vector<std::int64_t> joint(c * c, 0);
  for (std::size_t s = 0; s < n; ++s) {
    int best = -1;
    float best_p = -1.0f;
    for (std::size_t k = 0; k < c; ++k) {
      const float p = pm.values[s * c + k];
      const bool above = thr[k].has_value() && static_cast<double>(p) >= *thr[k];
      if (above && p > best_p) {
        best = static_cast<int>(k);
        best_p = p;
      }
    }
    if (best >= 0) joint[static_cast<std::size_t>(labels[s]) * c + static_cast<std::size_t>(best)] += 1;
  }
  return joint;
}

inline std::vector<double> calibrate(const std::vector<std::int64_t>& joint, const std::vector<int>& labels,
                                     std::size_t c) {
  std::vector<double> q(c * c, 0.0);
  const double n = static_cast<double>(labels.size());
  for (std::size_t i = 0; i < c; ++i) {
    std::int64_t class_count = 0, row_sum = 0;
    for (int l : labels) class_count += l == static_cast<int>(i);
    for (std::size_t j = 0; j < c; ++j) row_sum += joint[i * c + j];
    for (std::size_t j = 0; j < c; ++j) {
      if (row_sum == 0)
        q[i * c + j] = i == j ? static_cast<double>(class_count) / n : 0.0;
      else
        q[i * c + j] = static_cast<double>(joint[i * c + j]) * static_cast<double>(class_count) /
                       static_cast<double>(row_sum) / n;
    }
  }
  return q;
}

struct Expected {
  Action action = Action::keep;
  std::optional<int> new_label;
  std::optional<RemovalReason> reason;
};

// Per-sample evaluation of the fix rule, the unique-candidate removal rule
// and the top-5 miss rule with its exemption.
inline Expected evaluate_rules(const std::vector<int>& cands, int misses, Exemption ex, const RegimeConfig& cfg) {
  std::map<int, int> freq;
  for (int l : cands) freq[l] += 1;
  const int total = static_cast<int>(cands.size());
  const int unique = static_cast<int>(freq.size());
  if (total >= cfg.h1 && unique < 3) {
    int label = -1, top = 0;
    for (const auto& [l, f] : freq)
      if (f > top) top = f, label = l;
    return {Action::fix, label, std::nullopt};
  }
  if (unique >= cfg.h2) return {Action::remove, std::nullopt, RemovalReason::confident_learning};
  const bool shielded = cfg.explainability && ex == Exemption::exempt;
  if (misses >= cfg.h3 && !shielded) return {Action::remove, std::nullopt, RemovalReason::top5_consensus};
  return {};
}

struct Metrics {
  double precision, recall, candidate_accuracy;
};

inline Metrics detection_metrics(const SyntheticRun& run, const CleanupPlan& plan) {
  std::map<std::string, std::pair<int, int>> truth;  // id -> (observed, true)
  for (std::size_t i = 0; i < run.true_labels.size(); ++i)
    truth[run.dataset.records[i].id] = {run.dataset.records[i].label, run.true_labels[i]};
  int mislabeled = 0, hit = 0, correct = 0;
  for (const auto& [id, lt] : truth) mislabeled += lt.first != lt.second;
  for (const auto& f : plan.fixes) {
    const auto& lt = truth.at(f.sample_id);
    hit += lt.first != lt.second;
    correct += f.new_label == lt.second;
  }
  const int fixes = static_cast<int>(plan.fixes.size());
  return {fixes ? double(hit) / fixes : 1.0, mislabeled ? double(hit) / mislabeled : 1.0,
          fixes ? double(correct) / fixes : 1.0};
}

}  // namespace labelsweep::oracle
