// labelsweep: command-line front end for the dataset cleanup engine.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "labelsweep/labelsweep.hpp"

namespace fs = std::filesystem;
using namespace labelsweep;

namespace {

void warn(const std::string& msg) { std::cerr << "warning: " << msg << "\n"; }

std::vector<double> parse_numbers(const std::string& text, std::size_t expected, const std::string& what) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw Error("invalid " + what + ": " + text);
    }
  }
  if (out.size() != expected) throw Error("invalid " + what + ": expected " + std::to_string(expected) + " values");
  return out;
}

std::vector<std::string> discover_models(const fs::path& dir) {
  std::vector<std::string> ids;
  if (!fs::is_directory(dir)) throw Error("missing input: probability directory " + dir.string());
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".cprb") ids.push_back(e.path().stem().string());
  std::sort(ids.begin(), ids.end());
  if (ids.empty()) throw Error("missing input: no .cprb files in " + dir.string());
  return ids;
}

std::vector<MergeRule> resolve_merges(const std::string& spec, const CategoryTable& cats) {
  if (spec.empty() || spec == "none") return {};
  if (spec == "default") {
    const auto& rules = default_merge_rules();
    validate_merge_rules(rules, cats);
    return rules;
  }
  return load_merge_rules(spec, cats);
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  if (const auto parent = fs::path(path).parent_path(); !parent.empty()) fs::create_directories(parent);
  detail::write_file_atomic(path, text);
}

struct RegimeOptions {
  std::string regime = "validation";
  std::optional<double> fn;
  std::optional<int> h1, h2, h3;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--regime", regime, "Hyperparameter preset")
        ->check(CLI::IsMember({"validation", "training", "v2"}));
    cmd->add_option("--fn", fn, "Override fraction noise");
    cmd->add_option("--h1", h1, "Override fix vote threshold");
    cmd->add_option("--h2", h2, "Override unique-candidate removal threshold");
    cmd->add_option("--h3", h3, "Override top-5 miss removal threshold");
  }

  RegimeConfig resolve(int n_models) const {
    auto cfg = regime_preset(regime, n_models);
    if (fn || h1 || h2 || h3) cfg.name += "+custom";
    if (fn) cfg.fn = *fn;
    if (h1) cfg.h1 = *h1;
    if (h2) cfg.h2 = *h2;
    if (h3) cfg.h3 = *h3;
    cfg.validate();
    return cfg;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"labelsweep: label fixes, sample removals and category merges for labeled image datasets"};
  app.set_config("--config", "", "Read options from a config file (key = value, [subcommand] sections)");
  app.require_subcommand(1);

  // plan -------------------------------------------------------------------
  auto* plan_cmd = app.add_subcommand("plan", "Ingest predictions and heatmaps, decide, and write a cleanup plan");
  RegimeOptions plan_regime;
  plan_regime.add_to(plan_cmd);
  std::string manifest, classes, probs_dir, heatmap_root, merges_spec, out_plan, decisions_out, flags_dir;
  std::vector<std::string> model_ids;
  plan_cmd->add_option("--manifest", manifest, "Dataset manifest (JSON Lines)")->required();
  plan_cmd->add_option("--classes", classes, "Category table (JSON)")->required();
  plan_cmd->add_option("--probs", probs_dir, "Directory of <model_id>.cprb files")->required();
  plan_cmd->add_option("--models", model_ids, "Model ids in evidence order (default: every .cprb, sorted)")
      ->delimiter(',');
  plan_cmd->add_option("--heatmaps", heatmap_root, "Heatmap root: <model>/<method>/<sample>.pgm");
  plan_cmd->add_option("--merges", merges_spec, "Merge rules CSV, 'default' or 'none'");
  plan_cmd->add_option("--out", out_plan, "Plan file to write")->required();
  plan_cmd->add_option("--decisions", decisions_out, "Optional per-sample decision dump (JSON Lines)");
  plan_cmd->add_option("--flags-dir", flags_dir, "Optional directory for per-model flagged-sample CSVs");

  // apply ------------------------------------------------------------------
  auto* apply_cmd = app.add_subcommand("apply", "Apply a plan to a one-directory-per-category dataset tree");
  std::string apply_plan_path, root, quarantine, journal, out_manifest, report_out;
  apply_cmd->add_option("--plan", apply_plan_path, "Plan file")->required();
  apply_cmd->add_option("--manifest", manifest, "Dataset manifest (JSON Lines)")->required();
  apply_cmd->add_option("--classes", classes, "Category table (JSON)")->required();
  apply_cmd->add_option("--root", root, "Dataset root directory")->required();
  apply_cmd->add_option("--quarantine", quarantine, "Destination for removed samples")->required();
  apply_cmd->add_option("--journal", journal, "Journal path (default: <quarantine>/apply-journal.jsonl)");
  apply_cmd->add_option("--out-manifest", out_manifest, "Rewritten manifest")->required();
  apply_cmd->add_option("--report", report_out, "Apply report (JSON); stdout when omitted");

  // merge ------------------------------------------------------------------
  auto* merge_cmd = app.add_subcommand("merge", "Apply category merge rules to a dataset tree");
  std::string rules_spec;
  merge_cmd->add_option("--rules", rules_spec, "Merge rules CSV or 'default'")->required();
  merge_cmd->add_option("--manifest", manifest, "Dataset manifest (JSON Lines)")->required();
  merge_cmd->add_option("--classes", classes, "Category table (JSON)")->required();
  merge_cmd->add_option("--root", root, "Dataset root directory")->required();
  merge_cmd->add_option("--out-manifest", out_manifest, "Rewritten manifest")->required();
  merge_cmd->add_option("--report", report_out, "Merge report (JSON); stdout when omitted");

  // score ------------------------------------------------------------------
  auto* score_cmd = app.add_subcommand("score", "Explainability score of one heatmap inside one bounding box");
  std::string heatmap_path, bbox_text, image_size_text;
  score_cmd->add_option("--heatmap", heatmap_path, "Heatmap (binary PGM)")->required();
  score_cmd->add_option("--bbox", bbox_text, "x_min,y_min,x_max,y_max in image pixels")->required();
  score_cmd->add_option("--image-size", image_size_text, "width,height of the original image (default: heatmap size)");

  // folds ------------------------------------------------------------------
  auto* folds_cmd = app.add_subcommand("folds", "k-fold assignment and out-of-fold stitching");
  folds_cmd->require_subcommand(1);
  auto* assign_cmd = folds_cmd->add_subcommand("assign", "Write a stratified fold assignment");
  std::size_t k = 4;
  std::uint64_t seed = 0;
  std::string folds_out, split_dir;
  assign_cmd->add_option("--manifest", manifest, "Dataset manifest (JSON Lines)")->required();
  assign_cmd->add_option("--classes", classes, "Category table (JSON)")->required();
  assign_cmd->add_option("-k,--k", k, "Fold count")->capture_default_str();
  assign_cmd->add_option("--seed", seed, "Shuffle seed")->capture_default_str();
  assign_cmd->add_option("--out", folds_out, "Fold CSV to write")->required();
  assign_cmd->add_option("--split-dir", split_dir, "Optional directory for per-fold train/test manifests");

  auto* stitch_cmd = folds_cmd->add_subcommand("stitch", "Stitch per-fold test predictions into one matrix");
  std::string folds_in, stitch_model, stitch_out;
  std::vector<std::string> fold_inputs;
  stitch_cmd->add_option("--manifest", manifest, "Dataset manifest (JSON Lines)")->required();
  stitch_cmd->add_option("--classes", classes, "Category table (JSON)")->required();
  stitch_cmd->add_option("--folds", folds_in, "Fold CSV")->required();
  stitch_cmd->add_option("--model", stitch_model, "Model id")->required();
  stitch_cmd->add_option("--probs", probs_dir, "Directory with <model>.fold<f>.cprb files");
  stitch_cmd->add_option("--inputs", fold_inputs, "Fold matrices in fold order (overrides --probs)");
  stitch_cmd->add_option("--out", stitch_out, "Stitched .cprb to write")->required();

  // simulate ---------------------------------------------------------------
  auto* sim_cmd = app.add_subcommand("simulate", "Synthetic-noise benchmark of the full pipeline");
  RegimeOptions sim_regime;
  sim_regime.add_to(sim_cmd);
  std::string sim_spec, sim_out;
  bool sim_write_data = false;
  sim_cmd->add_option("--spec", sim_spec, "Simulation spec (JSON)")->required();
  sim_cmd->add_option("--out-dir", sim_out, "Output directory")->required();
  sim_cmd->add_flag("--write-dataset", sim_write_data, "Also write manifest, categories, probabilities and truth");

  // report -----------------------------------------------------------------
  auto* report_cmd = app.add_subcommand("report", "Summarize a plan");
  std::string report_plan, report_format = "text";
  report_cmd->add_option("--plan", report_plan, "Plan file")->required();
  report_cmd->add_option("--format", report_format, "text or json")->check(CLI::IsMember({"text", "json"}));

  CLI11_PARSE(app, argc, argv);

  try {
    const unsigned threads = thread_budget();

    if (*plan_cmd) {
      const auto d = load_dataset(manifest, classes);
      if (model_ids.empty()) model_ids = discover_models(probs_dir);
      auto cfg = plan_regime.resolve(static_cast<int>(model_ids.size()));
      std::vector<ProbabilityMatrix> models(model_ids.size());
      parallel_for(model_ids.size(), threads, [&](std::size_t m) {
        models[m] = read_probs(probs_path(probs_dir, model_ids[m]), d.size(), d.categories.size());
        models[m].model_id = model_ids[m];
      });
      const auto merges = resolve_merges(merges_spec, d.categories);
      std::optional<HeatmapStore> store;
      if (!cfg.explainability) {
        if (!heatmap_root.empty()) warn("explainability disabled in " + plan_regime.regime + " regime; heatmaps ignored");
      } else if (heatmap_root.empty()) {
        warn("no --heatmaps given; top-5 removals cannot be exempted by explainability");
      } else {
        store.emplace(heatmap_root);
      }
      const auto res = run_pipeline(d, models, cfg, store ? &*store : nullptr, merges, threads);
      write_plan(res.plan, out_plan);
      if (!decisions_out.empty()) write_text(decisions_out, format_decision_dump(res.decisions, d));
      if (!flags_dir.empty()) {
        fs::create_directories(flags_dir);
        for (const auto& f : res.flags)
          write_text((fs::path(flags_dir) / (f.model_id + ".flags.csv")).string(), format_flag_dump(f.flags));
      }
      std::cerr << report(res.plan, ReportFormat::text);
    } else if (*apply_cmd) {
      const auto d = load_dataset(manifest, classes);
      const auto p = read_plan(apply_plan_path);
      if (journal.empty()) journal = (fs::path(quarantine) / "apply-journal.jsonl").string();
      const auto res = apply_plan(p, d, root, quarantine, journal);
      write_text(out_manifest, serialize_manifest(res.dataset.records));
      write_text(report_out, res.report.to_json().dump(1) + "\n");
      if (res.report.already_applied) std::cerr << "already applied\n";
    } else if (*merge_cmd) {
      const auto d = load_dataset(manifest, classes);
      const auto rules = resolve_merges(rules_spec, d.categories);
      const auto res = apply_merges(root, d, rules);
      write_text(out_manifest, serialize_manifest(res.dataset.records));
      write_text(report_out, res.report.to_json().dump(1) + "\n");
    } else if (*score_cmd) {
      const auto hm = read_pgm(heatmap_path);
      const auto b = parse_numbers(bbox_text, 4, "bbox");
      const BoundingBox box{b[0], b[1], b[2], b[3]};
      if (!box.valid()) throw Error("malformed bbox: " + bbox_text);
      ImageSize img{hm.width, hm.height};
      if (!image_size_text.empty()) {
        const auto s = parse_numbers(image_size_text, 2, "image size");
        img = {static_cast<int>(s[0]), static_cast<int>(s[1])};
      }
      std::cout << score_heatmap(hm, box, img).value() << "\n";
    } else if (*assign_cmd) {
      const auto d = load_dataset(manifest, classes);
      const auto fa = assign_folds(d, k, seed);
      for (const auto& w : fa.warnings) warn(w);
      write_text(folds_out, format_folds(fa));
      if (!split_dir.empty()) {
        fs::create_directories(split_dir);
        for (std::size_t f = 0; f < k; ++f) {
          const auto base = fs::path(split_dir) / ("fold" + std::to_string(f));
          write_text(base.string() + ".train.jsonl", serialize_manifest(fold_subset(d, fa, static_cast<int>(f), false).records));
          write_text(base.string() + ".test.jsonl", serialize_manifest(fold_subset(d, fa, static_cast<int>(f), true).records));
        }
      }
    } else if (*stitch_cmd) {
      const auto d = load_dataset(manifest, classes);
      const auto fa = read_folds(folds_in, d);
      if (fold_inputs.empty()) {
        if (probs_dir.empty()) throw Error("missing input: give --inputs or --probs");
        for (std::size_t f = 0; f < fa.k; ++f)
          fold_inputs.push_back((fs::path(probs_dir) / (stitch_model + ".fold" + std::to_string(f) + ".cprb")).string());
      }
      std::vector<ProbabilityMatrix> parts;
      for (const auto& in : fold_inputs) parts.push_back(read_probs(in, 0, d.categories.size()));
      auto stitched = stitch_oof(parts, fa);
      stitched.model_id = stitch_model;
      write_probs(stitched, stitch_out);
    } else if (*sim_cmd) {
      const auto sc = parse_simulation_config(detail::read_file_text(sim_spec));
      const auto run = generate(sc.noise, sc.n_models, sc.sharpness);
      const auto cfg = sim_regime.resolve(static_cast<int>(sc.n_models));
      const auto res = run_pipeline(run.dataset, run.models, cfg, static_cast<const NoHeatmaps*>(nullptr), {}, threads);
      const auto metrics = evaluate_detection(run, res.plan);
      fs::create_directories(sim_out);
      const fs::path out(sim_out);
      write_plan(res.plan, out / "plan.json");
      write_text((out / "metrics.json").string(), metrics_json(metrics).dump(1) + "\n");
      write_text((out / "metrics.csv").string(), metrics_csv(metrics));
      if (sim_write_data) {
        save_dataset(run.dataset, out / "manifest.jsonl", out / "classes.json");
        fs::create_directories(out / "probs");
        for (const auto& pm : run.models) write_probs(pm, probs_path(out / "probs", pm.model_id));
        std::string truth = "sample_id,true_label\n";
        for (std::size_t i = 0; i < run.true_labels.size(); ++i)
          truth += run.dataset.records[i].id + "," + std::to_string(run.true_labels[i]) + "\n";
        write_text((out / "truth.csv").string(), truth);
      }
      std::cout << metrics_csv(metrics);
    } else if (*report_cmd) {
      const auto p = read_plan(report_plan);
      std::cout << report(p, report_format == "json" ? ReportFormat::json : ReportFormat::text);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: i/o failure: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
