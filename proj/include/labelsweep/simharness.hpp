#pragma once

// Synthetic label-noise benchmark. Generates a dataset whose observed labels
// are corrupted through a known transition matrix, plus model probabilities
// peaked at the hidden true labels, and scores a cleanup plan against the
// hidden truth.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "labelsweep/detail/rng.hpp"
#include "labelsweep/error.hpp"
#include "labelsweep/manifest.hpp"
#include "labelsweep/plan.hpp"
#include "labelsweep/predstore.hpp"

namespace labelsweep {

struct NoiseSpec {
  std::size_t c = 0;
  std::size_t n = 0;
  std::uint64_t seed = 0;
  std::vector<double> transition;  // c*c, row = true label, column = observed label
  bool allow_non_dominant = false;

  double at(std::size_t i, std::size_t j) const { return transition[i * c + j]; }

  void validate() const {
    if (c < 1 || n < 1) throw Error("invalid transition matrix: c and n must be positive");
    if (transition.size() != c * c) throw Error("invalid transition matrix: expected " + std::to_string(c * c) + " entries");
    for (std::size_t i = 0; i < c; ++i) {
      double sum = 0;
      for (std::size_t j = 0; j < c; ++j) {
        if (!(at(i, j) >= 0.0)) throw Error("invalid transition matrix: negative entry in row " + std::to_string(i));
        sum += at(i, j);
      }
      if (std::abs(sum - 1.0) > 1e-9) throw Error("invalid transition matrix: row " + std::to_string(i) + " sums to " + std::to_string(sum));
      if (!allow_non_dominant && at(i, i) < 0.5)
        throw Error("invalid transition matrix: row " + std::to_string(i) + " is not diagonal dominant");
    }
  }
};

// Keeps each label with probability 1 - rate and flips it uniformly to one
// of the other c - 1 classes otherwise.
inline NoiseSpec uniform_flip_spec(std::size_t c, std::size_t n, double rate, std::uint64_t seed) {
  if (c < 2 && rate > 0) throw Error("invalid transition matrix: flips need at least two classes");
  NoiseSpec s{c, n, seed, std::vector<double>(c * c, 0.0), false};
  for (std::size_t i = 0; i < c; ++i)
    for (std::size_t j = 0; j < c; ++j) s.transition[i * c + j] = i == j ? 1.0 - rate : rate / static_cast<double>(c - 1);
  return s;
}

struct SyntheticRun {
  Dataset dataset;  // observed labels
  std::vector<int> true_labels;
  std::vector<ProbabilityMatrix> models;
  std::vector<double> sharpness;

  std::size_t flipped() const {
    std::size_t k = 0;
    for (std::size_t i = 0; i < true_labels.size(); ++i) k += dataset.records[i].label != true_labels[i];
    return k;
  }
};

inline std::string synthetic_wnid(std::size_t c) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "syn%05zu", c);
  return buf;
}

// Model m draws logits z_k ~ N(0, 1), adds sharpness[m] to the true class and
// applies softmax. Infinite sharpness yields exact one-hot rows.
inline SyntheticRun generate(const NoiseSpec& spec, std::size_t n_models, const std::vector<double>& sharpness) {
  spec.validate();
  if (n_models < 1) throw Error("invalid synthetic run: need at least one model");
  if (sharpness.size() != n_models && sharpness.size() != 1)
    throw Error("invalid synthetic run: sharpness list must have 1 or " + std::to_string(n_models) + " entries");

  SyntheticRun run;
  std::vector<Category> cats;
  for (std::size_t j = 0; j < spec.c; ++j)
    cats.push_back({static_cast<int>(j), synthetic_wnid(j), "synthetic class " + std::to_string(j)});
  run.dataset.categories = CategoryTable(std::move(cats));

  detail::Rng rng(spec.seed);
  run.true_labels.resize(spec.n);
  for (std::size_t i = 0; i < spec.n; ++i) {
    const auto truth = static_cast<std::size_t>(detail::uniform_below(rng, spec.c));
    const double u = detail::uniform01(rng);
    double acc = 0;
    std::size_t observed = spec.c - 1;
    for (std::size_t j = 0; j < spec.c; ++j) {
      acc += spec.at(truth, j);
      if (u < acc) {
        observed = j;
        break;
      }
    }
    while (spec.at(truth, observed) == 0.0) --observed;  // guard against rounding past the last nonzero entry
    run.true_labels[i] = static_cast<int>(truth);
    char id[32];
    std::snprintf(id, sizeof id, "s%06zu", i);
    run.dataset.records.push_back(
        {id, synthetic_wnid(observed) + "/" + id + ".jpg", static_cast<int>(observed), {}, std::nullopt});
  }

  std::vector<double> z(spec.c);
  for (std::size_t m = 0; m < n_models; ++m) {
    const double s = sharpness.size() == 1 ? sharpness[0] : sharpness[m];
    run.sharpness.push_back(s);
    ProbabilityMatrix pm("synthetic_" + std::to_string(m), spec.n, spec.c);
    detail::Rng mrng(spec.seed ^ (0x9E3779B97F4A7C15ull * (m + 1)));
    for (std::size_t i = 0; i < spec.n; ++i) {
      const auto truth = static_cast<std::size_t>(run.true_labels[i]);
      auto row = pm.row(i);
      if (std::isinf(s)) {
        row[truth] = 1.0f;
        continue;
      }
      for (auto& v : z) v = detail::standard_normal(mrng);
      z[truth] += s;
      const double zmax = *std::max_element(z.begin(), z.end());
      double sum = 0;
      for (auto& v : z) sum += (v = std::exp(v - zmax));
      for (std::size_t j = 0; j < spec.c; ++j) row[j] = static_cast<float>(z[j] / sum);
    }
    run.models.push_back(std::move(pm));
  }
  return run;
}

// ---------------------------------------------------------------------------

struct DetectionMetrics {
  std::size_t n = 0;
  std::size_t mislabeled = 0;
  std::size_t fixes = 0;
  std::size_t fixes_on_mislabeled = 0;
  std::size_t fixes_to_true_label = 0;
  std::size_t removals = 0;
  std::size_t clean_removed = 0;
  double fix_precision = 1.0;  // 1.0 by convention when there are no fixes
  double fix_recall = 1.0;     // 1.0 by convention when nothing is mislabeled
  double candidate_accuracy = 1.0;
  double clean_removal_rate = 0.0;
  bool operator==(const DetectionMetrics&) const = default;
};

inline DetectionMetrics evaluate_detection(const SyntheticRun& run, const CleanupPlan& plan) {
  const auto index = run.dataset.id_index();
  auto row_of = [&](const std::string& id) {
    const auto it = index.find(id);
    if (it == index.end()) throw Error("id mismatch: plan references unknown sample " + id);
    return it->second;
  };
  DetectionMetrics m;
  m.n = run.dataset.size();
  m.mislabeled = run.flipped();
  for (const auto& f : plan.fixes) {
    const auto row = row_of(f.sample_id);
    ++m.fixes;
    if (run.dataset.records[row].label != run.true_labels[row]) ++m.fixes_on_mislabeled;
    if (f.new_label == run.true_labels[row]) ++m.fixes_to_true_label;
  }
  for (const auto& r : plan.removals) {
    const auto row = row_of(r.sample_id);
    ++m.removals;
    if (run.dataset.records[row].label == run.true_labels[row]) ++m.clean_removed;
  }
  if (m.fixes > 0) {
    m.fix_precision = static_cast<double>(m.fixes_on_mislabeled) / static_cast<double>(m.fixes);
    m.candidate_accuracy = static_cast<double>(m.fixes_to_true_label) / static_cast<double>(m.fixes);
  }
  if (m.mislabeled > 0) m.fix_recall = static_cast<double>(m.fixes_on_mislabeled) / static_cast<double>(m.mislabeled);
  const std::size_t clean = m.n - m.mislabeled;
  if (clean > 0) m.clean_removal_rate = static_cast<double>(m.clean_removed) / static_cast<double>(clean);
  return m;
}

inline nlohmann::ordered_json metrics_json(const DetectionMetrics& m) {
  nlohmann::ordered_json j;
  j["n"] = m.n;
  j["mislabeled"] = m.mislabeled;
  j["fixes"] = m.fixes;
  j["fixes_on_mislabeled"] = m.fixes_on_mislabeled;
  j["fixes_to_true_label"] = m.fixes_to_true_label;
  j["removals"] = m.removals;
  j["clean_removed"] = m.clean_removed;
  j["fix_precision"] = m.fix_precision;
  j["fix_recall"] = m.fix_recall;
  j["candidate_accuracy"] = m.candidate_accuracy;
  j["clean_removal_rate"] = m.clean_removal_rate;
  j["conventions"] = "precision and candidate_accuracy are 1.0 with no fixes; recall is 1.0 with no mislabeled samples";
  return j;
}

inline std::string metrics_csv(const DetectionMetrics& m) {
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "n,mislabeled,fixes,fixes_on_mislabeled,fixes_to_true_label,removals,clean_removed,"
                "fix_precision,fix_recall,candidate_accuracy,clean_removal_rate\n"
                "%zu,%zu,%zu,%zu,%zu,%zu,%zu,%.6f,%.6f,%.6f,%.6f\n",
                m.n, m.mislabeled, m.fixes, m.fixes_on_mislabeled, m.fixes_to_true_label, m.removals, m.clean_removed,
                m.fix_precision, m.fix_recall, m.candidate_accuracy, m.clean_removal_rate);
  return buf;
}

// Simulation spec file:
//   {"c": 10, "n": 3000, "seed": 7, "flip_rate": 0.1,   // or "transition": [[...], ...]
//    "models": 4, "sharpness": [2.0, 2.5, 3.0, 3.5], "allow_non_dominant": false}
struct SimulationConfig {
  NoiseSpec noise;
  std::size_t n_models = 1;
  std::vector<double> sharpness;
};

inline SimulationConfig parse_simulation_config(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    SimulationConfig cfg;
    const auto c = j.at("c").get<std::size_t>();
    const auto n = j.at("n").get<std::size_t>();
    const auto seed = j.value("seed", std::uint64_t{0});
    if (j.contains("transition")) {
      cfg.noise = {c, n, seed, {}, false};
      for (const auto& row : j.at("transition"))
        for (const auto& v : row) cfg.noise.transition.push_back(v.get<double>());
    } else {
      cfg.noise = uniform_flip_spec(c, n, j.value("flip_rate", 0.0), seed);
    }
    cfg.noise.allow_non_dominant = j.value("allow_non_dominant", false);
    cfg.n_models = j.value("models", std::size_t{1});
    cfg.sharpness = j.value("sharpness", std::vector<double>{3.0});
    cfg.noise.validate();
    return cfg;
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("parse error: simulation spec: ") + e.what());
  }
}

}  // namespace labelsweep
