#pragma once

// Ensemble consensus: aggregate per-model candidate labels, count top-5
// misses, and turn both into fix / remove / keep decisions.

#include <algorithm>
#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "labelsweep/conflearn.hpp"
#include "labelsweep/error.hpp"
#include "labelsweep/manifest.hpp"
#include "labelsweep/predstore.hpp"

namespace labelsweep {

// ---------------------------------------------------------------------------
// Regime configuration

struct RegimeConfig {
  std::string name = "custom";
  double fn = 1.0;
  int h1 = 1;  // models that must flag a sample before it can be fixed
  int h2 = 3;  // unique candidates that trigger a confident-learning removal
  int h3 = 1;  // top-5 misses that trigger a consensus removal
  bool explainability = true;

  void validate() const {
    if (!(fn >= 0.0 && fn <= 1.0)) throw Error("invalid regime: fn must lie in [0, 1]");
    if (h1 < 1 || h2 < 1 || h3 < 1) throw Error("invalid regime: h1, h2, h3 must be >= 1");
  }
  bool operator==(const RegimeConfig&) const = default;
};

namespace detail {
inline int ceil_div(int a, int b) { return (a + b - 1) / b; }
}  // namespace detail

// Presets for a model set of size m. Fractional thresholds round up.
inline RegimeConfig validation_regime(int m) {
  if (m < 1) throw Error("invalid regime: model set is empty");
  return {"validation", 1.0, detail::ceil_div(m, 2), 3, detail::ceil_div(2 * m, 3), true};
}

inline RegimeConfig training_regime(int m) {
  if (m < 1) throw Error("invalid regime: model set is empty");
  return {"training", 1.0, m, detail::ceil_div(m, 2), m, true};
}

inline RegimeConfig v2_regime(int m) {
  if (m < 1) throw Error("invalid regime: model set is empty");
  return {"v2", 0.9, m, detail::ceil_div(m, 2), m, false};
}

inline RegimeConfig regime_preset(const std::string& name, int m) {
  if (name == "validation") return validation_regime(m);
  if (name == "training") return training_regime(m);
  if (name == "v2") return v2_regime(m);
  throw Error("unknown regime: " + name + " (expected validation, training or v2)");
}

// ---------------------------------------------------------------------------
// Candidate aggregation

struct ModelFlags {
  std::string model_id;
  std::vector<FlaggedSample> flags;
};

// Row -> candidate labels in model order. Rows no model flagged are absent.
using CandidateSet = std::map<std::size_t, std::vector<int>>;

inline CandidateSet aggregate_candidates(const std::vector<ModelFlags>& per_model) {
  std::set<std::string> models;
  CandidateSet cs;
  for (const auto& m : per_model) {
    if (!models.insert(m.model_id).second) throw Error("duplicate model id: " + m.model_id);
    std::set<std::size_t> rows;
    for (const auto& f : m.flags) {
      if (!rows.insert(f.row).second)
        throw Error("duplicate flag from one model: " + m.model_id + " flags row " + std::to_string(f.row) + " twice");
      cs[f.row].push_back(f.candidate_label);
    }
  }
  return cs;
}

inline std::size_t unique_count(const std::vector<int>& candidates) {
  return std::set<int>(candidates.begin(), candidates.end()).size();
}

// Highest multiplicity; ties go to the lower category index.
inline int most_frequent(const std::vector<int>& candidates) {
  std::map<int, int> freq;
  for (int l : candidates) ++freq[l];
  int best = freq.begin()->first, best_count = 0;
  for (const auto& [label, count] : freq) {
    if (count > best_count) {
      best = label;
      best_count = count;
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// Decisions

enum class Action { keep, fix, remove };
enum class RemovalReason { confident_learning, top5_consensus };

inline const char* to_string(Action a) {
  switch (a) {
    case Action::keep: return "keep";
    case Action::fix: return "fix";
    case Action::remove: return "remove";
  }
  return "?";
}

inline const char* to_string(RemovalReason r) {
  return r == RemovalReason::confident_learning ? "confident_learning" : "top5_consensus";
}

inline RemovalReason parse_removal_reason(const std::string& s) {
  if (s == "confident_learning") return RemovalReason::confident_learning;
  if (s == "top5_consensus") return RemovalReason::top5_consensus;
  throw Error("parse error: unknown removal reason " + s);
}

struct Decision {
  std::size_t row = 0;
  Action action = Action::keep;
  std::optional<int> new_label;
  std::optional<RemovalReason> reason;
  int cl_votes = 0;    // models that flagged the sample
  int miss_votes = 0;  // models whose top-5 misses the label
  bool operator==(const Decision&) const = default;
};

using PartialDecisions = std::map<std::size_t, Decision>;

// Fix rule (|L'| >= h1 and fewer than three unique candidates) with
// confident-learning removal (unique >= h2) as the fallback. One entry per
// row present in the candidate set.
inline PartialDecisions decide_fix_or_cl_removal(const CandidateSet& cs, const RegimeConfig& cfg) {
  PartialDecisions out;
  for (const auto& [row, cands] : cs) {
    Decision d;
    d.row = row;
    d.cl_votes = static_cast<int>(cands.size());
    const auto uniq = unique_count(cands);
    if (static_cast<int>(cands.size()) >= cfg.h1 && uniq < 3) {
      d.action = Action::fix;
      d.new_label = most_frequent(cands);
    } else if (static_cast<int>(uniq) >= cfg.h2) {
      d.action = Action::remove;
      d.reason = RemovalReason::confident_learning;
    }
    out.emplace(row, d);
  }
  return out;
}

using MissCounter = std::vector<int>;

inline MissCounter miss_counter(const Dataset& d, const std::vector<TopKPredictions>& models) {
  MissCounter mc(d.size(), 0);
  for (std::size_t m = 0; m < models.size(); ++m) {
    const auto& tk = models[m];
    if (tk.n != d.size())
      throw Error("model row count mismatch: model " + std::to_string(m) + " has " + std::to_string(tk.n) +
                  " rows, dataset has " + std::to_string(d.size()));
    for (std::size_t i = 0; i < d.size(); ++i)
      if (!tk.contains(i, d.records[i].label)) ++mc[i];
  }
  return mc;
}

enum class Exemption { not_exempt, exempt, not_applicable };

inline const char* to_string(Exemption e) {
  switch (e) {
    case Exemption::not_exempt: return "not_exempt";
    case Exemption::exempt: return "exempt";
    case Exemption::not_applicable: return "not_applicable";
  }
  return "?";
}

using ExemptionFn = std::function<Exemption(std::size_t row)>;

// Top-5 consensus removal: C_s >= h3, unless exempted by explainability or
// already fixed. The predicate is only consulted for rows that would
// otherwise be removed. `not_applicable` leaves the row removable.
inline PartialDecisions decide_top5_removal(const MissCounter& mc, const RegimeConfig& cfg, const ExemptionFn& exempt,
                                            const PartialDecisions* fixes = nullptr) {
  PartialDecisions out;
  for (std::size_t row = 0; row < mc.size(); ++row) {
    if (mc[row] == 0) continue;
    Decision d;
    d.row = row;
    d.miss_votes = mc[row];
    const bool fixed = fixes && fixes->contains(row) && fixes->at(row).action == Action::fix;
    if (mc[row] >= cfg.h3 && !fixed) {
      const bool shielded = cfg.explainability && exempt && exempt(row) == Exemption::exempt;
      if (!shielded) {
        d.action = Action::remove;
        d.reason = RemovalReason::top5_consensus;
      }
    }
    out.emplace(row, d);
  }
  return out;
}

// One decision per dataset row. Precedence fix > remove > keep; when both
// sources remove, the confident-learning reason is kept.
inline std::vector<Decision> merge_decisions(const PartialDecisions& fix_cl, const PartialDecisions& top5,
                                             const Dataset& d) {
  std::vector<Decision> out(d.size());
  for (std::size_t row = 0; row < d.size(); ++row) {
    Decision& res = out[row];
    res.row = row;
    const auto a = fix_cl.find(row);
    const auto b = top5.find(row);
    const Decision* da = a != fix_cl.end() ? &a->second : nullptr;
    const Decision* db = b != top5.end() ? &b->second : nullptr;
    if (da) res.cl_votes = da->cl_votes;
    if (db) res.miss_votes = db->miss_votes;

    const bool fa = da && da->action == Action::fix;
    const bool fb = db && db->action == Action::fix;
    if (fa && fb && da->new_label != db->new_label)
      throw Error("conflicting fix labels for sample " + d.records[row].id);
    if (fa || fb) {
      res.action = Action::fix;
      res.new_label = fa ? da->new_label : db->new_label;
    } else if (da && da->action == Action::remove) {
      res.action = Action::remove;
      res.reason = da->reason;
    } else if (db && db->action == Action::remove) {
      res.action = Action::remove;
      res.reason = db->reason;
    }
  }
  return out;
}

inline std::string decision_json(const Decision& dec, const Dataset& d) {
  nlohmann::ordered_json j;
  j["id"] = d.records[dec.row].id;
  j["action"] = to_string(dec.action);
  j["new_label"] = dec.new_label ? nlohmann::ordered_json(*dec.new_label) : nlohmann::ordered_json(nullptr);
  j["reason"] = dec.reason ? nlohmann::ordered_json(to_string(*dec.reason)) : nlohmann::ordered_json(nullptr);
  j["votes"] = {{"cl", dec.cl_votes}, {"miss", dec.miss_votes}};
  return j.dump();
}

inline std::string format_decision_dump(const std::vector<Decision>& decisions, const Dataset& d) {
  std::string out;
  for (const auto& dec : decisions) out += decision_json(dec, d) + "\n";
  return out;
}

}  // namespace labelsweep
