#pragma once

// Category merges: relocate every sample of a source category into its
// target category and leave one black placeholder image behind so the
// category table keeps its full size.

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "json.hpp"
#include "labelsweep/detail/fileio.hpp"
#include "labelsweep/detail/placeholder_images.hpp"
#include "labelsweep/error.hpp"
#include "labelsweep/manifest.hpp"

namespace labelsweep {

struct MergeRule {
  std::string from_wnid;
  std::string to_wnid;
  bool operator==(const MergeRule&) const = default;
};

// The merge list shipped with the tool (synonym / near-duplicate ImageNet
// synsets).
inline const std::vector<MergeRule>& default_merge_rules() {
  static const std::vector<MergeRule> rules = {
      {"n04505470", "n03085013"},  // typewriter keyboard -> computer keyboard
      {"n04264628", "n03085013"},  // space bar -> computer keyboard
      {"n02815834", "n03733805"},  // beaker -> measuring cup
      {"n03710637", "n03710721"},  // maillot -> maillot, tank suit
      {"n04008634", "n03773504"},  // projectile, missile -> missile
      {"n13133613", "n12144580"},  // ear, spike -> corn
      {"n02504458", "n01871265"},  // African elephant -> tusker
      {"n02504013", "n01871265"},  // Indian elephant -> tusker
      {"n04355933", "n04356056"},  // sunglass -> sunglasses
      {"n03832673", "n03642806"},  // notebook -> laptop
      {"n04493381", "n02808440"},  // tub, vat -> bathtub
      {"n02749479", "n04090263"},  // assault rifle -> rifle
      {"n04592741", "n04552348"},  // wing -> warplane
      {"n02895154", "n03146219"},  // breastplate -> cuirass
      {"n01693334", "n01682714"},  // green lizard -> American chameleon
      {"n02979186", "n04392985"},  // cassette player -> tape player
      {"n02109961", "n02110185"},  // Eskimo dog -> Siberian husky
      {"n02669723", "n03787032"},  // academic gown -> mortarboard
      {"n02123159", "n02123045"},  // tiger cat -> tabby cat
      {"n02415577", "n02412080"},  // bighorn -> ram
      {"n02113624", "n02113712"},  // toy poodle -> miniature poodle
  };
  return rules;
}

// Rejects self-merges, unknown wnids, duplicate sources and chains (a
// target that is also some rule's source).
inline void validate_merge_rules(const std::vector<MergeRule>& rules, const CategoryTable& cats) {
  std::set<std::string> sources;
  for (const auto& r : rules) {
    if (!cats.find(r.from_wnid)) throw Error("unknown wnid: " + r.from_wnid);
    if (!cats.find(r.to_wnid)) throw Error("unknown wnid: " + r.to_wnid);
    if (r.from_wnid == r.to_wnid) throw Error("self merge: " + r.from_wnid);
    if (!sources.insert(r.from_wnid).second) throw Error("duplicate source: " + r.from_wnid);
  }
  for (const auto& r : rules)
    if (sources.contains(r.to_wnid)) throw Error("chained merge: " + r.from_wnid + " -> " + r.to_wnid + " -> ...");
}

inline std::vector<MergeRule> parse_merge_rules(const std::string& text, const CategoryTable& cats) {
  std::vector<MergeRule> rules;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return std::string();
    return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos || line.find(',', comma + 1) != std::string::npos)
      throw Error("parse error: expected from_wnid,to_wnid (line " + std::to_string(lineno) + ")");
    MergeRule r{trim(line.substr(0, comma)), trim(line.substr(comma + 1))};
    if (r.from_wnid == "from_wnid" && r.to_wnid == "to_wnid") continue;
    rules.push_back(std::move(r));
  }
  validate_merge_rules(rules, cats);
  return rules;
}

inline std::vector<MergeRule> load_merge_rules(const std::filesystem::path& path, const CategoryTable& cats) {
  return parse_merge_rules(detail::read_file_text(path), cats);
}

inline std::string format_merge_rules(const std::vector<MergeRule>& rules) {
  std::string out = "from_wnid,to_wnid\n";
  for (const auto& r : rules) out += r.from_wnid + "," + r.to_wnid + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// Filesystem helpers shared with plan application

inline constexpr int kMaxRenameAttempts = 10000;

// First free name in `dir` for `filename`: the name itself, then
// stem_m1.ext, stem_m2.ext, ... Names in `reserved` count as taken.
inline std::string collision_free_name(const std::filesystem::path& dir, const std::string& filename,
                                       const std::unordered_set<std::string>& reserved = {}) {
  namespace fs = std::filesystem;
  auto taken = [&](const std::string& name) { return reserved.contains(name) || fs::exists(dir / name); };
  if (!taken(filename)) return filename;
  const fs::path p(filename);
  const std::string stem = p.stem().string(), ext = p.extension().string();
  for (int k = 1; k <= kMaxRenameAttempts; ++k) {
    std::string candidate = stem + "_m" + std::to_string(k) + ext;
    if (!taken(candidate)) return candidate;
  }
  throw Error("name collision exhaustion: " + (dir / filename).string());
}

namespace detail {

inline std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
  return s;
}

inline std::vector<std::filesystem::path> sorted_files(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> files;
  if (!std::filesystem::is_directory(dir)) return files;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.is_regular_file()) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  return files;
}

}  // namespace detail

// Most common file extension among the dataset's records, as written in the
// manifest (".JPEG" for ImageNet). Falls back to ".jpg".
inline std::string native_extension(const Dataset& d) {
  std::map<std::string, std::size_t> freq;
  for (const auto& r : d.records) {
    const auto ext = std::filesystem::path(r.path).extension().string();
    if (!ext.empty() && r.id.rfind("placeholder_", 0) != 0) ++freq[ext];
  }
  std::string best = ".jpg";
  std::size_t best_count = 0;
  for (const auto& [ext, count] : freq) {
    if (count > best_count) {
      best = ext;
      best_count = count;
    }
  }
  return best;
}

inline std::vector<std::uint8_t> placeholder_bytes(const std::string& ext) {
  const auto e = detail::lower(ext);
  if (e == ".jpg" || e == ".jpeg")
    return {std::begin(detail::kBlackJpeg224), std::end(detail::kBlackJpeg224)};
  if (e == ".png") return {std::begin(detail::kBlackPng224), std::end(detail::kBlackPng224)};
  if (e == ".ppm" || e == ".pgm") {
    const bool color = e == ".ppm";
    const std::string header = std::string(color ? "P6" : "P5") + "\n224 224\n255\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    out.resize(out.size() + 224 * 224 * (color ? 3 : 1), 0);
    return out;
  }
  throw Error("unsupported placeholder format: " + ext);
}

inline std::string placeholder_name(const std::string& wnid, const std::string& ext) {
  return "placeholder_" + wnid + ext;
}

// ---------------------------------------------------------------------------

struct MergeOutcome {
  MergeRule rule;
  std::size_t moved = 0;
  std::string placeholder_path;  // relative to the dataset root
  bool placeholder_created = false;
};

struct MergeReport {
  std::vector<MergeOutcome> outcomes;

  std::size_t total_moved() const {
    std::size_t n = 0;
    for (const auto& o : outcomes) n += o.moved;
    return n;
  }
  std::size_t placeholders_created() const {
    return static_cast<std::size_t>(
        std::count_if(outcomes.begin(), outcomes.end(), [](const MergeOutcome& o) { return o.placeholder_created; }));
  }

  nlohmann::ordered_json to_json() const {
    auto rules = nlohmann::ordered_json::array();
    for (const auto& o : outcomes) {
      nlohmann::ordered_json j;
      j["from_wnid"] = o.rule.from_wnid;
      j["to_wnid"] = o.rule.to_wnid;
      j["moved"] = o.moved;
      j["placeholder_path"] = o.placeholder_path;
      j["placeholder_created"] = o.placeholder_created;
      rules.push_back(std::move(j));
    }
    nlohmann::ordered_json j;
    j["rules"] = std::move(rules);
    j["total_moved"] = total_moved();
    j["placeholders_created"] = placeholders_created();
    return j;
  }
};

struct MergeResult {
  Dataset dataset;
  MergeReport report;
};

// Expects the dataset laid out as <root>/<wnid>/<file>. Moves every file of
// each source directory into its target directory, writes one placeholder
// into the source directory, and returns the rewritten manifest. Running it
// again on the merged tree moves nothing and creates nothing.
inline MergeResult apply_merges(const std::filesystem::path& root, const Dataset& d,
                                const std::vector<MergeRule>& rules) {
  namespace fs = std::filesystem;
  validate_merge_rules(rules, d.categories);
  MergeResult res{d, {}};
  auto& records = res.dataset.records;
  std::unordered_map<std::string, std::size_t> by_path;
  for (std::size_t i = 0; i < records.size(); ++i) by_path.emplace(records[i].path, i);
  const auto id_index = d.id_index();
  const std::string ext = native_extension(d);

  for (const auto& rule : rules) {
    const int from_idx = d.categories.index_of(rule.from_wnid);
    const int to_idx = d.categories.index_of(rule.to_wnid);
    const std::string ph_name = placeholder_name(rule.from_wnid, ext);
    const fs::path src_dir = root / rule.from_wnid;
    const fs::path dst_dir = root / rule.to_wnid;

    MergeOutcome outcome{rule, 0, (fs::path(rule.from_wnid) / ph_name).generic_string(), false};
    for (const auto& file : detail::sorted_files(src_dir)) {
      const auto name = file.filename().string();
      if (name.rfind("placeholder_", 0) == 0) continue;
      const auto dst_name = collision_free_name(dst_dir, name);
      detail::move_file(file, dst_dir / dst_name);
      ++outcome.moved;
      const auto old_rel = (fs::path(rule.from_wnid) / name).generic_string();
      if (auto it = by_path.find(old_rel); it != by_path.end()) {
        auto& rec = records[it->second];
        rec.path = (fs::path(rule.to_wnid) / dst_name).generic_string();
        rec.label = to_idx;
        by_path.erase(it);
        by_path.emplace(rec.path, &rec - records.data());
      }
    }
    for (auto& rec : records)
      if (rec.label == from_idx && rec.id.rfind("placeholder_", 0) != 0) rec.label = to_idx;

    if (!fs::exists(src_dir / ph_name)) {
      fs::create_directories(src_dir);
      detail::write_file_atomic(src_dir / ph_name, std::span<const std::uint8_t>(placeholder_bytes(ext)));
      outcome.placeholder_created = true;
    }
    const std::string ph_id = "placeholder_" + rule.from_wnid;
    if (!by_path.contains(outcome.placeholder_path)) {
      if (id_index.contains(ph_id)) throw Error("duplicate id: " + ph_id + " already used by a non-placeholder file");
      records.push_back(SampleRecord{ph_id, outcome.placeholder_path, from_idx, {}, ImageSize{224, 224}});
      by_path.emplace(outcome.placeholder_path, records.size() - 1);
    }
    res.report.outcomes.push_back(std::move(outcome));
  }
  return res;
}

}  // namespace labelsweep
