// Acceptance suite: one PASS/FAIL line per criterion; exits nonzero if any
// criterion fails.

#include <chrono>
#include <cstdio>
#include <cstring>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "labelsweep/labelsweep.hpp"
#include "oracles/oracles.hpp"
#include "test_util.hpp"

using namespace labelsweep;
namespace lt = labelsweep::testing;

namespace {

// Pinned tolerances and sizes.
constexpr int kOracleInstances = 1000;
constexpr std::size_t kOracleMaxN = 200;
constexpr std::size_t kOracleMaxC = 10;
constexpr double kOracleBudgetSeconds = 30.0;
constexpr int kRuleInstances = 1000;
constexpr std::size_t kRuleMaxSamples = 100;
constexpr int kRuleMaxModels = 10;
constexpr double kEndToEndBudgetSeconds = 60.0;
constexpr int kFoldInstances = 200;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

Outcome confident_joint_oracle() {
  std::mt19937_64 rng(20240601);
  const auto t0 = std::chrono::steady_clock::now();
  for (int trial = 0; trial < kOracleInstances; ++trial) {
    const std::size_t n = 1 + rng() % kOracleMaxN, c = 1 + rng() % kOracleMaxC;
    const auto pm = lt::random_pm(rng, n, c);
    std::vector<int> labels(n);
    for (auto& l : labels) l = static_cast<int>(rng() % c);
    const auto cj = confident_joint(pm, labels, class_thresholds(pm, labels));
    const auto want = oracle::confident_joint(pm, labels);
    if (cj.counts != want) return {false, "confident joint differs at instance " + std::to_string(trial)};
    if (calibrate_joint(cj, labels) != oracle::calibrate(want, labels, c))
      return {false, "calibrated joint differs at instance " + std::to_string(trial)};
  }
  const double s = seconds_since(t0);
  return {s < kOracleBudgetSeconds, std::to_string(kOracleInstances) + " instances, " + fmt("%.2f s", s)};
}

Outcome rule_equivalence() {
  std::mt19937_64 rng(777);
  for (int trial = 0; trial < kRuleInstances; ++trial) {
    const std::size_t n = 1 + rng() % kRuleMaxSamples, c = 2 + rng() % 9;
    const int m = 1 + static_cast<int>(rng() % kRuleMaxModels);
    std::vector<int> labels(n);
    for (auto& l : labels) l = static_cast<int>(rng() % c);
    const auto d = lt::make_dataset(labels, c);
    std::vector<ModelFlags> flags;
    for (int k = 0; k < m; ++k) {
      ModelFlags mf{"m" + std::to_string(k), {}};
      for (std::size_t i = 0; i < n; ++i) {
        if (rng() % 3 != 0) continue;
        int cand = static_cast<int>(rng() % (c - 1));
        if (cand >= labels[i]) ++cand;  // candidates differ from the given label
        mf.flags.push_back({i, d.records[i].id, labels[i], cand, 0.0});
      }
      flags.push_back(std::move(mf));
    }
    MissCounter misses(n);
    for (auto& v : misses) v = static_cast<int>(rng() % static_cast<std::uint64_t>(m + 1));
    std::vector<Exemption> ex(n);
    for (auto& e : ex) e = static_cast<Exemption>(rng() % 3);
    RegimeConfig cfg;
    switch (rng() % 4) {
      case 0: cfg = validation_regime(m); break;
      case 1: cfg = training_regime(m); break;
      case 2: cfg = v2_regime(m); break;
      default:
        cfg = {"custom", 1.0, 1 + static_cast<int>(rng() % m), 1 + static_cast<int>(rng() % 4),
               1 + static_cast<int>(rng() % m), rng() % 2 == 0};
    }

    const auto cs = aggregate_candidates(flags);
    const auto fix_cl = decide_fix_or_cl_removal(cs, cfg);
    const auto top5 = decide_top5_removal(misses, cfg, [&](std::size_t r) { return ex[r]; }, &fix_cl);
    const auto out = merge_decisions(fix_cl, top5, d);
    for (std::size_t i = 0; i < n; ++i) {
      const auto it = cs.find(i);
      const auto want = oracle::evaluate_rules(it == cs.end() ? std::vector<int>{} : it->second, misses[i], ex[i], cfg);
      if (out[i].action != want.action || out[i].new_label != want.new_label || out[i].reason != want.reason)
        return {false, "instance " + std::to_string(trial) + " sample " + std::to_string(i) + " differs"};
    }
    const auto plan = build_plan(out, {}, cfg, d);
    for (const auto& f : plan.fixes)
      for (const auto& r : plan.removals)
        if (f.sample_id == r.sample_id) return {false, "fix and removal overlap at instance " + std::to_string(trial)};
  }
  return {true, std::to_string(kRuleInstances) + " instances, fixes and removals disjoint"};
}

Outcome worked_micro_example() {
  const auto pm = lt::make_pm({{0.9f, 0.1f}, {0.6f, 0.4f}, {0.3f, 0.7f}, {0.8f, 0.2f}});
  const auto d = lt::make_dataset({0, 0, 1, 1}, 2);
  const auto one = find_label_issues(pm, d, 1.0);
  const auto zero = find_label_issues(pm, d, 0.0);
  const bool ok = one.size() == 1 && one[0].sample_id == "s3" && one[0].candidate_label == 0 && zero.empty();
  return {ok, "fn=1 -> " + std::to_string(one.size()) + " flag(s), fn=0 -> " + std::to_string(zero.size())};
}

struct FixedSource {
  std::array<int, 3> hot{};  // hot pixels out of 1000 per method
  std::optional<Heatmap> load(const std::string&, CamMethod m, const std::string&) const {
    Heatmap hm{50, 20, std::vector<std::uint8_t>(1000, 0), "", "", m};
    const auto k = static_cast<std::size_t>(m == CamMethod::gradcam ? 0 : m == CamMethod::gradcampp ? 1 : 2);
    std::fill_n(hm.values.begin(), hot[k], std::uint8_t{255});
    return hm;
  }
};

Outcome explainability_scoring() {
  Heatmap hm{10, 10, std::vector<std::uint8_t>(100, 0), "", "", CamMethod::gradcam};
  hm.values[3 * 10 + 2] = 192;
  hm.values[4 * 10 + 3] = 230;
  hm.values[5 * 10 + 5] = 255;
  hm.values[4 * 10 + 4] = 191;
  const double twelve = score_heatmap(hm, {2, 3, 6, 6}).value();
  const Heatmap full{7, 7, std::vector<std::uint8_t>(49, 255), "", "", CamMethod::gradcam};
  const double saturated = score_heatmap(full, {13, 40, 170, 201}, {224, 224}).value();

  const SampleRecord boxed{"s0", "n0/s0.jpg", 0, {{0, 0, 50, 20}}, std::nullopt};
  SampleRecord bare = boxed;
  bare.bboxes.clear();
  const std::vector<TopKPredictions> top5{{1, 1, {0}}};
  const auto e1 = is_exempt(boxed, {"m"}, top5, 0, FixedSource{{20, 11, 0}});
  const auto e2 = is_exempt(boxed, {"m"}, top5, 0, FixedSource{{20, 0, 0}});
  const auto e3 = is_exempt(boxed, {"m"}, top5, 0, FixedSource{{200, 100, 0}});
  const auto e4 = is_exempt(bare, {"m"}, top5, 0, FixedSource{});
  const bool ok = twelve == 0.25 && saturated == 1.0 && e1 == Exemption::exempt && e2 == Exemption::not_exempt &&
                  e3 == Exemption::exempt && e4 == Exemption::not_applicable;
  return {ok, "12-pixel box " + fmt("%.4g", twelve) + ", saturated " + fmt("%.4g", saturated) + ", truth table " +
                  to_string(e1) + "/" + to_string(e2) + "/" + to_string(e3) + "/" + to_string(e4)};
}

Outcome regime_presets() {
  const auto v = validation_regime(10), t = training_regime(8);
  const bool ok = v.h1 == 5 && v.fn == 1.0 && v.h2 == 3 && v.h3 == 7 && t.h1 == 8 && t.fn == 1.0 && t.h2 == 4 && t.h3 == 8;
  char buf[160];
  std::snprintf(buf, sizeof buf, "validation(10) = (%d, %g, %d, %d), training(8) = (%d, %g, %d, %d)", v.h1, v.fn,
                v.h2, v.h3, t.h1, t.fn, t.h2, t.h3);
  return {ok, buf};
}

Outcome statistics() {
  const auto a = compute_stats(50000, 3565, 2471, 0), b = compute_stats(10000, 292, 524, 0);
  const std::string got = fmt_pct(a.fix_pct) + "/" + fmt_pct(a.removal_pct) + ", " + fmt_pct(b.fix_pct) + "/" +
                          fmt_pct(b.removal_pct);
  return {got == "7.13/4.94, 2.92/5.24", got};
}

Outcome merge_bookkeeping() {
  lt::TempDir tmp;
  const auto d = lt::merge_fixture(tmp.path(), [](std::size_t i) { return (i * 7) % 5; });
  const auto before = lt::count_files(tmp.path());
  const auto res = apply_merges(tmp.path(), d, default_merge_rules());
  const auto after = lt::count_files(tmp.path());
  std::size_t placeholders = 0;
  for (const auto& r : default_merge_rules()) placeholders += lt::count_files(tmp / r.from_wnid) == 1;
  const bool ok = default_merge_rules().size() == 21 && after == before + 21 && placeholders == 21 &&
                  res.dataset.categories.size() == d.categories.size() && res.report.placeholders_created() == 21;
  return {ok, std::to_string(before) + " files -> " + std::to_string(after) + ", " +
                  std::to_string(res.dataset.categories.size()) + " categories kept"};
}

Outcome plan_application() {
  lt::TempDir tmp;
  const auto root = tmp / "data", quarantine = tmp / "quarantine", journal = quarantine / "apply-journal.jsonl";
  const auto d = lt::ten_file_fixture(root);
  const auto p = lt::ten_file_plan(d);
  const auto res = apply_plan(p, d, root, quarantine, journal);
  const auto layout = scan_labels_from_tree(root, d.categories);
  bool ok = res.report.fixed_moved == 2 && res.report.removed_quarantined == 1 && res.report.untouched == 7 &&
            lt::count_files(root) == 9 && lt::count_files(quarantine) == 2 &&
            std::filesystem::exists(quarantine / "n00000002/s8.jpg") && layout.at("n00000001/s1.jpg") == 1 &&
            layout.at("n00000002/s5.jpg") == 2;
  for (const auto& r : res.dataset.records) ok = ok && layout.contains(r.path) && layout.at(r.path) == r.label;
  const auto journal_bytes = lt::read_file(journal);
  const auto replay = apply_plan(p, d, root, quarantine, journal);
  ok = ok && replay.report.already_applied && scan_labels_from_tree(root, d.categories) == layout &&
       lt::read_file(journal) == journal_bytes && lt::count_files(root) + lt::count_files(quarantine) - 1 == 10;
  return {ok, "2 relocated, 1 quarantined, 7 untouched; replay " +
                  std::string(replay.report.already_applied ? "already applied" : "re-ran")};
}

Outcome end_to_end() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto run = generate(uniform_flip_spec(10, 3000, 0.1, 7), 4, {2.0, 2.5, 3.0, 3.5});
  const auto res = run_pipeline(run.dataset, run.models, validation_regime(4));
  const auto m = evaluate_detection(run, res.plan);
  const auto o = oracle::detection_metrics(run, res.plan);
  const double s = seconds_since(t0);
  const bool ok = m.fix_precision == o.precision && m.fix_recall == o.recall &&
                  m.candidate_accuracy == o.candidate_accuracy && s < kEndToEndBudgetSeconds;
  char buf[200];
  std::snprintf(buf, sizeof buf, "%zu flipped, %zu fixes, precision %.4f recall %.4f candidate accuracy %.4f, %.2f s",
                m.mislabeled, m.fixes, m.fix_precision, m.fix_recall, m.candidate_accuracy, s);
  return {ok, buf};
}

Outcome folds() {
  std::mt19937_64 rng(55);
  for (int trial = 0; trial < kFoldInstances; ++trial) {
    const std::size_t c = 1 + rng() % 6;
    std::vector<int> labels(2 + rng() % 150);
    for (auto& l : labels) l = static_cast<int>(rng() % c);
    const auto d = lt::make_dataset(labels, c);
    const std::size_t k = 2 + rng() % std::min<std::size_t>(5, labels.size() - 1);
    const auto fa = assign_folds(d, k, rng());
    std::vector<ProbabilityMatrix> parts;
    for (std::size_t f = 0; f < k; ++f) parts.push_back(lt::random_pm(rng, fa.rows_of(static_cast<int>(f)).size(), c));
    bool empty_fold = false;
    for (const auto& p : parts) empty_fold = empty_fold || p.n == 0;
    if (empty_fold) continue;
    const auto full = stitch_oof(parts, fa);
    for (std::size_t f = 0; f < k; ++f) {
      const auto rows = fa.rows_of(static_cast<int>(f));
      for (std::size_t r = 0; r < rows.size(); ++r)
        if (std::memcmp(full.row(rows[r]).data(), parts[f].row(r).data(), sizeof(float) * c) != 0)
          return {false, "stitched row differs at instance " + std::to_string(trial)};
    }
  }
  auto rejects = [](const std::function<void()>& fn, const char* prefix) {
    try {
      fn();
    } catch (const Error& e) {
      return std::string(e.what()).rfind(prefix, 0) == 0;
    }
    return false;
  };
  std::mt19937_64 r2(1);
  const auto a = lt::random_pm(r2, 4, 2), b = lt::random_pm(r2, 4, 2);
  const bool overlap = rejects([&] { stitch_rows(std::vector<FoldPart>{{{0, 1, 2, 3}, a}, {{3, 4, 5, 6}, b}}, 8, "m"); },
                               "overlap");
  const bool gap = rejects([&] { stitch_rows(std::vector<FoldPart>{{{0, 1, 2, 3}, a}, {{4, 5, 6, 7}, b}}, 9, "m"); },
                           "coverage gap");
  const auto d = lt::make_dataset({0, 0, 0, 0, 1, 1, 1, 1}, 2);
  const bool file_overlap = rejects(
      [&] { parse_folds(format_folds(assign_folds(d, 2, 0)) + "s0,1\n", d); }, "overlap");
  const bool file_gap = rejects([&] { parse_folds("s0,0\ns1,1\n", d); }, "coverage gap");
  const bool ok = overlap && gap && file_overlap && file_gap;
  return {ok, std::to_string(kFoldInstances) + " randomized fixtures bit-identical; gap/overlap rejected"};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, Outcome (*)()>> criteria = {
      {"confident-joint oracle equivalence", confident_joint_oracle},
      {"fix/removal rule equivalence", rule_equivalence},
      {"worked micro-example", worked_micro_example},
      {"explainability scoring", explainability_scoring},
      {"regime presets", regime_presets},
      {"statistics transcription", statistics},
      {"merge bookkeeping", merge_bookkeeping},
      {"plan application", plan_application},
      {"end-to-end synthetic run", end_to_end},
      {"folds", folds},
  };
  int failures = 0;
  for (const auto& [name, fn] : criteria) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("%s  %s: %s\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str());
    failures += !o.pass;
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
