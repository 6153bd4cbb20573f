#pragma once

// End-to-end decision pipeline: per-model confident learning and top-5
// lists, consensus with explainability exemption, and the cleanup plan.

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "labelsweep/conflearn.hpp"
#include "labelsweep/consensus.hpp"
#include "labelsweep/error.hpp"
#include "labelsweep/manifest.hpp"
#include "labelsweep/mergecat.hpp"
#include "labelsweep/plan.hpp"
#include "labelsweep/predstore.hpp"
#include "labelsweep/xai.hpp"

namespace labelsweep {

inline constexpr std::size_t kTopK = 5;

// Worker count from LABELSWEEP_THREADS, else the hardware concurrency.
inline unsigned thread_budget() {
  if (const char* env = std::getenv("LABELSWEEP_THREADS")) {
    const int v = std::atoi(env);
    if (v > 0) return static_cast<unsigned>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

// Runs fn(i) for i in [0, count) on up to `threads` workers. The first
// exception thrown by any task is rethrown.
template <typename Fn>
void parallel_for(std::size_t count, unsigned threads, Fn&& fn) {
  threads = static_cast<unsigned>(std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(count, 1)));
  if (threads == 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  {
    std::vector<std::jthread> workers;
    for (unsigned t = 0; t < threads; ++t) {
      workers.emplace_back([&] {
        for (std::size_t i; (i = next.fetch_add(1)) < count;) {
          try {
            fn(i);
          } catch (...) {
            std::lock_guard lock(failure_mu);
            if (!failure) failure = std::current_exception();
          }
        }
      });
    }
  }
  if (failure) std::rethrow_exception(failure);
}

struct PipelineResult {
  std::vector<ModelFlags> flags;
  std::vector<TopKPredictions> top5;
  CandidateSet candidates;
  MissCounter misses;
  std::vector<Decision> decisions;
  CleanupPlan plan;
};

struct NoHeatmaps {
  std::optional<Heatmap> load(const std::string&, CamMethod, const std::string&) const { return std::nullopt; }
};

// `heatmaps` may be null: every sample is then not_applicable for the
// exemption, as in a regime without bounding boxes.
template <HeatmapSource Source = NoHeatmaps>
PipelineResult run_pipeline(const Dataset& d, const std::vector<ProbabilityMatrix>& models, const RegimeConfig& cfg,
                            const Source* heatmaps = nullptr, const std::vector<MergeRule>& merges = {},
                            unsigned threads = 1) {
  cfg.validate();
  if (models.empty()) throw Error("no models given");
  std::vector<std::string> ids;
  for (const auto& pm : models) {
    if (pm.n != d.size() || pm.c != d.categories.size())
      throw Error("dimension mismatch: " + pm.model_id + " is " + std::to_string(pm.n) + "x" + std::to_string(pm.c) +
                  ", dataset is " + std::to_string(d.size()) + "x" + std::to_string(d.categories.size()));
    if (std::find(ids.begin(), ids.end(), pm.model_id) != ids.end())
      throw Error("duplicate model id: " + pm.model_id);
    ids.push_back(pm.model_id);
  }
  validate_merge_rules(merges, d.categories);

  PipelineResult res;
  res.flags.resize(models.size());
  res.top5.resize(models.size());
  const std::size_t k = std::min(kTopK, d.categories.size());
  parallel_for(models.size(), threads, [&](std::size_t m) {
    res.flags[m] = {models[m].model_id, find_label_issues(models[m], d, cfg.fn)};
    res.top5[m] = top_k(models[m], k);
  });

  res.candidates = aggregate_candidates(res.flags);
  const auto fix_cl = decide_fix_or_cl_removal(res.candidates, cfg);
  res.misses = miss_counter(d, res.top5);

  ExemptionFn exempt = [&](std::size_t row) {
    if (!heatmaps) return Exemption::not_applicable;
    return is_exempt(d.records[row], ids, res.top5, row, *heatmaps);
  };
  const auto top5 = decide_top5_removal(res.misses, cfg, exempt, &fix_cl);
  res.decisions = merge_decisions(fix_cl, top5, d);
  res.plan = build_plan(res.decisions, merges, cfg, d, ids);
  return res;
}

}  // namespace labelsweep
