#pragma once

// Cleanup plans: build from decisions, serialize, report, and apply to a
// one-directory-per-category dataset tree with a write-ahead journal.

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "json.hpp"
#include "labelsweep/consensus.hpp"
#include "labelsweep/detail/fileio.hpp"
#include "labelsweep/error.hpp"
#include "labelsweep/manifest.hpp"
#include "labelsweep/mergecat.hpp"

namespace labelsweep {

struct FixEntry {
  std::string sample_id;
  int old_label = 0;
  int new_label = 0;
  int cl_votes = 0;
  bool operator==(const FixEntry&) const = default;
};

struct RemovalEntry {
  std::string sample_id;
  RemovalReason reason = RemovalReason::confident_learning;
  int miss_count = 0;
  bool operator==(const RemovalEntry&) const = default;
};

struct RunStats {
  std::size_t n_samples = 0;
  std::size_t n_fixes = 0;
  std::size_t n_removals = 0;
  double fix_pct = 0;
  double removal_pct = 0;
  double top5_zero_miss_pct = 0;
  bool operator==(const RunStats&) const = default;
};

struct CleanupPlan {
  std::vector<FixEntry> fixes;
  std::vector<RemovalEntry> removals;
  std::vector<MergeRule> merges;
  RunStats stats;
  RegimeConfig regime;
  std::vector<std::string> models;
  bool operator==(const CleanupPlan&) const = default;
};

// 100 * count / n rounded half-up to two decimals, computed in integers.
inline double percent_2dp(std::size_t count, std::size_t n) {
  if (n == 0) return 0.0;
  const auto hundredths = (static_cast<std::uint64_t>(count) * 20000u + n) / (2u * n);
  return static_cast<double>(hundredths) / 100.0;
}

inline RunStats compute_stats(std::size_t n, std::size_t fixes, std::size_t removals, std::size_t zero_miss) {
  return {n, fixes, removals, percent_2dp(fixes, n), percent_2dp(removals, n), percent_2dp(zero_miss, n)};
}

inline CleanupPlan build_plan(const std::vector<Decision>& decisions, const std::vector<MergeRule>& merges,
                              const RegimeConfig& cfg, const Dataset& d, std::vector<std::string> models = {}) {
  if (decisions.size() != d.size()) throw Error("decisions do not cover the dataset");
  CleanupPlan p;
  p.merges = merges;
  p.regime = cfg;
  p.models = std::move(models);
  std::size_t zero_miss = 0;
  for (const auto& dec : decisions) {
    const auto& rec = d.records.at(dec.row);
    if (dec.miss_votes == 0) ++zero_miss;
    if (dec.action == Action::fix) {
      if (!dec.new_label || *dec.new_label == rec.label) throw Error("invalid fix for sample " + rec.id);
      p.fixes.push_back({rec.id, rec.label, *dec.new_label, dec.cl_votes});
    } else if (dec.action == Action::remove) {
      p.removals.push_back({rec.id, dec.reason.value_or(RemovalReason::confident_learning), dec.miss_votes});
    }
  }
  std::sort(p.fixes.begin(), p.fixes.end(), [](const auto& a, const auto& b) { return a.sample_id < b.sample_id; });
  std::sort(p.removals.begin(), p.removals.end(),
            [](const auto& a, const auto& b) { return a.sample_id < b.sample_id; });
  p.stats = compute_stats(d.size(), p.fixes.size(), p.removals.size(), zero_miss);
  return p;
}

// ---------------------------------------------------------------------------
// Serialization

inline nlohmann::ordered_json regime_json(const RegimeConfig& r) {
  nlohmann::ordered_json j;
  j["name"] = r.name;
  j["fn"] = r.fn;
  j["h1"] = r.h1;
  j["h2"] = r.h2;
  j["h3"] = r.h3;
  j["explainability"] = r.explainability;
  return j;
}

inline nlohmann::ordered_json stats_json(const RunStats& s) {
  nlohmann::ordered_json j;
  j["n_samples"] = s.n_samples;
  j["n_fixes"] = s.n_fixes;
  j["n_removals"] = s.n_removals;
  j["fix_pct"] = s.fix_pct;
  j["removal_pct"] = s.removal_pct;
  j["top5_zero_miss_pct"] = s.top5_zero_miss_pct;
  return j;
}

inline std::string serialize_plan(const CleanupPlan& p) {
  nlohmann::ordered_json j;
  auto fixes = nlohmann::ordered_json::array();
  for (const auto& f : p.fixes)
    fixes.push_back({{"id", f.sample_id}, {"old_label", f.old_label}, {"new_label", f.new_label},
                     {"cl_votes", f.cl_votes}});
  auto removals = nlohmann::ordered_json::array();
  for (const auto& r : p.removals)
    removals.push_back({{"id", r.sample_id}, {"reason", to_string(r.reason)}, {"miss_count", r.miss_count}});
  auto merges = nlohmann::ordered_json::array();
  for (const auto& m : p.merges) merges.push_back({{"from_wnid", m.from_wnid}, {"to_wnid", m.to_wnid}});
  j["fixes"] = std::move(fixes);
  j["removals"] = std::move(removals);
  j["merges"] = std::move(merges);
  j["stats"] = stats_json(p.stats);
  j["regime"] = regime_json(p.regime);
  j["models"] = p.models;
  return j.dump(1) + "\n";
}

inline CleanupPlan deserialize_plan(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    CleanupPlan p;
    for (const auto& f : j.at("fixes"))
      p.fixes.push_back({f.at("id").get<std::string>(), f.at("old_label").get<int>(), f.at("new_label").get<int>(),
                         f.at("cl_votes").get<int>()});
    for (const auto& r : j.at("removals"))
      p.removals.push_back({r.at("id").get<std::string>(), parse_removal_reason(r.at("reason").get<std::string>()),
                            r.at("miss_count").get<int>()});
    for (const auto& m : j.at("merges"))
      p.merges.push_back({m.at("from_wnid").get<std::string>(), m.at("to_wnid").get<std::string>()});
    const auto& s = j.at("stats");
    p.stats = {s.at("n_samples").get<std::size_t>(), s.at("n_fixes").get<std::size_t>(),
               s.at("n_removals").get<std::size_t>(), s.at("fix_pct").get<double>(),
               s.at("removal_pct").get<double>(), s.at("top5_zero_miss_pct").get<double>()};
    const auto& r = j.at("regime");
    p.regime = {r.at("name").get<std::string>(), r.at("fn").get<double>(), r.at("h1").get<int>(),
                r.at("h2").get<int>(), r.at("h3").get<int>(), r.at("explainability").get<bool>()};
    if (j.contains("models")) p.models = j.at("models").get<std::vector<std::string>>();
    std::set<std::string> fixed;
    for (const auto& f : p.fixes) {
      if (f.old_label == f.new_label) throw Error("invalid plan: fix keeps the old label for " + f.sample_id);
      fixed.insert(f.sample_id);
    }
    for (const auto& rm : p.removals)
      if (fixed.contains(rm.sample_id)) throw Error("invalid plan: " + rm.sample_id + " is both fixed and removed");
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("parse error: plan file: ") + e.what());
  }
}

inline void write_plan(const CleanupPlan& p, const std::filesystem::path& path) {
  detail::write_file_atomic(path, serialize_plan(p));
}

inline CleanupPlan read_plan(const std::filesystem::path& path) { return deserialize_plan(detail::read_file_text(path)); }

// ---------------------------------------------------------------------------
// Reporting

inline std::string fmt_pct(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

inline std::map<std::string, std::size_t> removal_breakdown(const CleanupPlan& p) {
  std::map<std::string, std::size_t> out{{"confident_learning", 0}, {"top5_consensus", 0}};
  for (const auto& r : p.removals) ++out[to_string(r.reason)];
  return out;
}

enum class ReportFormat { text, json };

inline std::string report(const CleanupPlan& p, ReportFormat format) {
  const auto breakdown = removal_breakdown(p);
  if (format == ReportFormat::json) {
    nlohmann::ordered_json j;
    j["regime"] = regime_json(p.regime);
    j["stats"] = stats_json(p.stats);
    j["removals_by_reason"] = breakdown;
    j["merges"] = p.merges.size();
    return j.dump(1) + "\n";
  }
  const auto& s = p.stats;
  std::ostringstream out;
  out << "regime: " << p.regime.name << " (fn=" << p.regime.fn << ", h1=" << p.regime.h1 << ", h2=" << p.regime.h2
      << ", h3=" << p.regime.h3 << ", explainability=" << (p.regime.explainability ? "on" : "off") << ")\n";
  out << "samples: " << s.n_samples << "\n";
  out << "fixes: " << s.n_fixes << " (" << fmt_pct(s.fix_pct) << " %)\n";
  out << "removals: " << s.n_removals << " (" << fmt_pct(s.removal_pct) << " %)\n";
  for (const auto& [reason, count] : breakdown) out << "  " << reason << ": " << count << "\n";
  out << "top-5 zero-miss: " << fmt_pct(s.top5_zero_miss_pct) << " %\n";
  out << "merges: " << p.merges.size() << "\n";
  return out.str();
}

// ---------------------------------------------------------------------------
// Application

struct MoveOp {
  std::size_t seq = 0;
  std::string sample_id;
  std::string kind;  // "fix" or "remove"
  std::string src;   // relative to the dataset root
  std::string dst;   // relative to the dataset root (fix) or quarantine (remove)
};

struct ApplyReport {
  bool already_applied = false;
  std::size_t fixed_moved = 0;
  std::size_t removed_quarantined = 0;
  std::size_t untouched = 0;
  std::size_t resumed_ops = 0;
  MergeReport merges;

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["status"] = already_applied ? "already applied" : "applied";
    j["fixed_moved"] = fixed_moved;
    j["removed_quarantined"] = removed_quarantined;
    j["untouched"] = untouched;
    j["resumed_ops"] = resumed_ops;
    j["merges"] = merges.to_json();
    return j;
  }
};

struct ApplyResult {
  Dataset dataset;
  ApplyReport report;
};

namespace detail {

struct JournalState {
  bool exists = false;
  bool began = false;
  bool complete = false;
  std::vector<MoveOp> ops;
  std::set<std::size_t> done;
};

inline JournalState read_journal(const std::filesystem::path& path) {
  JournalState st;
  if (!std::filesystem::exists(path)) return st;
  st.exists = true;
  std::ifstream in(path);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception&) {
      continue;  // torn line from a crash
    }
    const auto type = j.value("type", "");
    if (type == "begin") {
      st.began = true;
      for (const auto& o : j.at("ops"))
        st.ops.push_back({o.at("seq").get<std::size_t>(), o.at("id").get<std::string>(), o.at("kind").get<std::string>(),
                          o.at("src").get<std::string>(), o.at("dst").get<std::string>()});
    } else if (type == "move") {
      st.done.insert(j.at("seq").get<std::size_t>());
    } else if (type == "complete") {
      st.complete = true;
    }
  }
  return st;
}

class JournalWriter {
 public:
  explicit JournalWriter(const std::filesystem::path& path) : path_(path) {
    std::filesystem::create_directories(path.parent_path().empty() ? "." : path.parent_path());
    bool torn = false;
    if (std::ifstream in{path, std::ios::binary | std::ios::ate}; in && in.tellg() > 0) {
      in.seekg(-1, std::ios::end);
      torn = in.get() != '\n';
    }
    out_.open(path, std::ios::app);
    if (!out_) throw Error("journal write failure: cannot open " + path.string());
    if (torn) out_ << '\n';  // terminate a line torn by a crash
  }
  void append(const nlohmann::ordered_json& j) {
    out_ << j.dump() << '\n';
    out_.flush();
    if (!out_) throw Error("journal write failure: " + path_.string());
  }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
};

}  // namespace detail

// Moves fixed samples into their new category directory, moves removed
// samples into `quarantine` (same relative path), then applies merges.
// Every move is planned and journaled before the first one happens; a
// partially applied journal resumes, a completed one is a no-op.
inline ApplyResult apply_plan(const CleanupPlan& p, const Dataset& d, const std::filesystem::path& root,
                              const std::filesystem::path& quarantine, const std::filesystem::path& journal) {
  namespace fs = std::filesystem;
  const auto index = d.id_index();
  auto record_of = [&](const std::string& id) -> const SampleRecord& {
    const auto it = index.find(id);
    if (it == index.end()) throw Error("plan does not match dataset: unknown sample " + id);
    return d.records[it->second];
  };
  for (const auto& f : p.fixes) {
    const auto& rec = record_of(f.sample_id);
    if (rec.label != f.old_label)
      throw Error("plan does not match dataset: " + f.sample_id + " is labeled " + std::to_string(rec.label));
    if (!d.categories.contains(f.new_label)) throw Error("label index out of range: fix of " + f.sample_id);
  }
  for (const auto& r : p.removals) record_of(r.sample_id);

  ApplyResult res{d, {}};
  res.report.untouched = d.size() - p.fixes.size() - p.removals.size();
  if (p.fixes.empty() && p.removals.empty() && p.merges.empty()) return res;

  auto st = detail::read_journal(journal);
  const bool resuming = st.began;
  if (st.exists && !st.began) fs::remove(journal);  // crashed before the intent record landed
  if (!resuming) {
    if (fs::exists(quarantine)) {
      for (const auto& e : fs::recursive_directory_iterator(quarantine)) {
        if (e.is_regular_file() && fs::absolute(e.path()) != fs::absolute(journal))
          throw Error("quarantine not empty: " + quarantine.string());
      }
    }
    std::map<std::string, std::unordered_set<std::string>> reserved;
    std::size_t seq = 0;
    for (const auto& f : p.fixes) {
      const auto& rec = record_of(f.sample_id);
      if (!fs::exists(root / rec.path)) throw Error("missing file: " + (root / rec.path).string());
      const std::string dir = d.categories[static_cast<std::size_t>(f.new_label)].wnid;
      const auto name = fs::path(rec.path).filename().string();
      const auto dst = collision_free_name(root / dir, name, reserved[dir]);
      reserved[dir].insert(dst);
      st.ops.push_back({seq++, f.sample_id, "fix", rec.path, (fs::path(dir) / dst).generic_string()});
    }
    for (const auto& r : p.removals) {
      const auto& rec = record_of(r.sample_id);
      if (!fs::exists(root / rec.path)) throw Error("missing file: " + (root / rec.path).string());
      const auto rel = fs::path(rec.path);
      const auto dir = rel.parent_path().generic_string();
      const auto dst = collision_free_name(quarantine / rel.parent_path(), rel.filename().string(), reserved["#q/" + dir]);
      reserved["#q/" + dir].insert(dst);
      st.ops.push_back({seq++, r.sample_id, "remove", rec.path, (rel.parent_path() / dst).generic_string()});
    }
  }

  // Resulting manifest: moved paths, fixed labels, removed records dropped.
  std::unordered_map<std::string, const MoveOp*> op_of;
  for (const auto& op : st.ops) op_of.emplace(op.sample_id, &op);
  std::unordered_map<std::string, int> new_label;
  for (const auto& f : p.fixes) new_label.emplace(f.sample_id, f.new_label);
  res.dataset.records.clear();
  for (const auto& rec : d.records) {
    const auto it = op_of.find(rec.id);
    if (it == op_of.end()) {
      res.dataset.records.push_back(rec);
    } else if (it->second->kind == "fix") {
      auto moved = rec;
      moved.path = it->second->dst;
      moved.label = new_label.at(rec.id);
      res.dataset.records.push_back(std::move(moved));
    }
  }
  for (const auto& op : st.ops) (op.kind == "fix" ? res.report.fixed_moved : res.report.removed_quarantined)++;

  if (st.complete) {
    res.report.already_applied = true;
    auto merged = apply_merges(root, res.dataset, p.merges);
    res.dataset = std::move(merged.dataset);
    res.report.merges = std::move(merged.report);
    return res;
  }

  detail::JournalWriter writer(journal);
  if (!resuming) {
    auto ops = nlohmann::ordered_json::array();
    for (const auto& op : st.ops)
      ops.push_back({{"seq", op.seq}, {"id", op.sample_id}, {"kind", op.kind}, {"src", op.src}, {"dst", op.dst}});
    writer.append({{"type", "begin"}, {"ops", std::move(ops)}});
  }
  for (const auto& op : st.ops) {
    if (st.done.contains(op.seq)) {
      ++res.report.resumed_ops;
      continue;
    }
    const fs::path src = root / op.src;
    const fs::path dst = (op.kind == "fix" ? root : quarantine) / op.dst;
    if (fs::exists(src)) {
      if (fs::exists(dst)) throw Error("destination collision: " + dst.string());
      detail::move_file(src, dst);
    } else if (fs::exists(dst)) {
      ++res.report.resumed_ops;  // moved before the crash, not yet journaled
    } else {
      throw Error("missing file: " + src.string());
    }
    writer.append({{"type", "move"}, {"seq", op.seq}, {"src", op.src}, {"dst", op.dst}});
  }
  auto merged = apply_merges(root, res.dataset, p.merges);
  res.dataset = std::move(merged.dataset);
  res.report.merges = std::move(merged.report);
  writer.append({{"type", "complete"}});
  return res;
}

// Rebuilds (relative path -> label) from the directory layout alone.
inline std::map<std::string, int> scan_labels_from_tree(const std::filesystem::path& root, const CategoryTable& cats) {
  std::map<std::string, int> out;
  for (const auto& c : cats.entries()) {
    for (const auto& f : detail::sorted_files(root / c.wnid))
      out.emplace((std::filesystem::path(c.wnid) / f.filename()).generic_string(), c.index);
  }
  return out;
}

}  // namespace labelsweep
