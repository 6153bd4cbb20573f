#pragma once

// Dataset manifest (JSON Lines), category table (JSON array) and the
// in-memory Dataset every other module indexes into.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "json.hpp"
#include "labelsweep/detail/fileio.hpp"
#include "labelsweep/error.hpp"

namespace labelsweep {

struct BoundingBox {
  double x_min = 0, y_min = 0, x_max = 0, y_max = 0;

  bool valid() const {
    return x_min >= 0 && y_min >= 0 && x_min < x_max && y_min < y_max;
  }
  double width() const { return x_max - x_min; }
  double height() const { return y_max - y_min; }
  bool operator==(const BoundingBox&) const = default;
};

struct ImageSize {
  int width = 0;
  int height = 0;
  bool operator==(const ImageSize&) const = default;
};

struct Category {
  int index = 0;
  std::string wnid;
  std::string name;
  bool operator==(const Category&) const = default;
};

class CategoryTable {
 public:
  CategoryTable() = default;

  // Accepts entries in any order; the table is stored sorted by index.
  explicit CategoryTable(std::vector<Category> entries) : entries_(std::move(entries)) {
    std::sort(entries_.begin(), entries_.end(),
              [](const Category& a, const Category& b) { return a.index < b.index; });
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      if (entries_[i].index != static_cast<int>(i)) {
        throw Error("category table: indices must be exactly 0.." + std::to_string(entries_.size() - 1) +
                    " (found gap or duplicate at " + std::to_string(entries_[i].index) + ")");
      }
      if (entries_[i].wnid.empty()) throw Error("category table: empty wnid at index " + std::to_string(i));
      if (!by_wnid_.emplace(entries_[i].wnid, static_cast<int>(i)).second)
        throw Error("category table: duplicate wnid " + entries_[i].wnid);
    }
  }

  std::size_t size() const { return entries_.size(); }
  const Category& operator[](std::size_t i) const { return entries_.at(i); }
  const std::vector<Category>& entries() const { return entries_; }
  bool contains(int index) const { return index >= 0 && static_cast<std::size_t>(index) < entries_.size(); }

  std::optional<int> find(const std::string& wnid) const {
    auto it = by_wnid_.find(wnid);
    if (it == by_wnid_.end()) return std::nullopt;
    return it->second;
  }
  int index_of(const std::string& wnid) const {
    auto idx = find(wnid);
    if (!idx) throw Error("unknown wnid: " + wnid);
    return *idx;
  }

  bool operator==(const CategoryTable& o) const { return entries_ == o.entries_; }

 private:
  std::vector<Category> entries_;
  std::unordered_map<std::string, int> by_wnid_;
};

struct SampleRecord {
  std::string id;
  std::string path;
  int label = 0;
  std::vector<BoundingBox> bboxes;
  // Original image dimensions; needed only to map boxes onto heatmaps of a
  // different resolution.
  std::optional<ImageSize> size;
  bool operator==(const SampleRecord&) const = default;
};

// Record order is canonical: row i of every probability matrix refers to
// records[i].
struct Dataset {
  std::vector<SampleRecord> records;
  CategoryTable categories;

  std::size_t size() const { return records.size(); }

  std::vector<int> labels() const {
    std::vector<int> out;
    out.reserve(records.size());
    for (const auto& r : records) out.push_back(r.label);
    return out;
  }

  std::unordered_map<std::string, std::size_t> id_index() const {
    std::unordered_map<std::string, std::size_t> out;
    out.reserve(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) out.emplace(records[i].id, i);
    return out;
  }

  std::vector<std::size_t> class_counts() const {
    std::vector<std::size_t> counts(categories.size(), 0);
    for (const auto& r : records) ++counts.at(static_cast<std::size_t>(r.label));
    return counts;
  }
};

struct BboxCoverage {
  std::size_t with_bbox = 0;
  std::size_t without_bbox = 0;
  bool operator==(const BboxCoverage&) const = default;
};

inline BboxCoverage validate_bbox_coverage(const Dataset& d) {
  BboxCoverage cov;
  for (const auto& r : d.records) (r.bboxes.empty() ? cov.without_bbox : cov.with_bbox)++;
  return cov;
}

// ---------------------------------------------------------------------------
// Parsing

inline CategoryTable parse_categories(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("category table: parse error: ") + e.what());
  }
  if (!doc.is_array()) throw Error("category table: parse error: expected a JSON array");
  std::vector<Category> entries;
  entries.reserve(doc.size());
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const auto& e = doc[i];
    if (!e.is_object() || !e.contains("index") || !e["index"].is_number_integer() || !e.contains("wnid") ||
        !e["wnid"].is_string()) {
      throw Error("category table: parse error: entry " + std::to_string(i) +
                  " needs integer \"index\" and string \"wnid\"");
    }
    Category c;
    c.index = e["index"].get<int>();
    c.wnid = e["wnid"].get<std::string>();
    if (e.contains("name") && e["name"].is_string()) c.name = e["name"].get<std::string>();
    entries.push_back(std::move(c));
  }
  return CategoryTable(std::move(entries));
}

namespace detail {

inline std::string at_line(std::size_t line) { return " (line " + std::to_string(line) + ")"; }

inline BoundingBox parse_bbox(const nlohmann::json& j, std::size_t line) {
  if (!j.is_array() || j.size() != 4)
    throw Error("malformed bbox: expected [x_min,y_min,x_max,y_max]" + at_line(line));
  double v[4];
  for (int k = 0; k < 4; ++k) {
    if (!j[k].is_number()) throw Error("malformed bbox: non-numeric coordinate" + at_line(line));
    v[k] = j[k].get<double>();
    if (!std::isfinite(v[k])) throw Error("malformed bbox: non-finite coordinate" + at_line(line));
  }
  BoundingBox b{v[0], v[1], v[2], v[3]};
  if (!b.valid()) throw Error("malformed bbox: need 0 <= min < max on both axes" + at_line(line));
  return b;
}

}  // namespace detail

inline std::vector<SampleRecord> parse_manifest(std::istream& in, const CategoryTable& cats) {
  std::vector<SampleRecord> records;
  std::unordered_map<std::string, std::size_t> seen;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (!text.empty() && text.back() == '\r') text.pop_back();
    if (text.find_first_not_of(" \t") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
      throw Error(std::string("parse error: ") + e.what() + detail::at_line(line));
    }
    if (!j.is_object()) throw Error("parse error: expected a JSON object" + detail::at_line(line));
    if (!j.contains("id") || !j["id"].is_string() || j["id"].get<std::string>().empty())
      throw Error("parse error: missing string \"id\"" + detail::at_line(line));
    if (!j.contains("path") || !j["path"].is_string())
      throw Error("parse error: missing string \"path\"" + detail::at_line(line));
    if (!j.contains("label") || !j["label"].is_number_integer())
      throw Error("parse error: missing integer \"label\"" + detail::at_line(line));

    SampleRecord r;
    r.id = j["id"].get<std::string>();
    r.path = j["path"].get<std::string>();
    const auto label = j["label"].get<long long>();
    if (label < 0 || static_cast<unsigned long long>(label) >= cats.size()) {
      throw Error("label index out of range: " + std::to_string(label) + " with " + std::to_string(cats.size()) +
                  " categories" + detail::at_line(line));
    }
    r.label = static_cast<int>(label);
    if (j.contains("bboxes") && !j["bboxes"].is_null()) {
      if (!j["bboxes"].is_array()) throw Error("malformed bbox: \"bboxes\" must be an array" + detail::at_line(line));
      for (const auto& b : j["bboxes"]) r.bboxes.push_back(detail::parse_bbox(b, line));
    }
    if (j.contains("size") && !j["size"].is_null()) {
      const auto& s = j["size"];
      if (!s.is_array() || s.size() != 2 || !s[0].is_number_integer() || !s[1].is_number_integer() ||
          s[0].get<long long>() <= 0 || s[1].get<long long>() <= 0) {
        throw Error("parse error: \"size\" must be [width,height] positive integers" + detail::at_line(line));
      }
      r.size = ImageSize{s[0].get<int>(), s[1].get<int>()};
    }
    if (auto [it, fresh] = seen.emplace(r.id, line); !fresh) {
      throw Error("duplicate id: " + r.id + " (first at line " + std::to_string(it->second) + ")" +
                  detail::at_line(line));
    }
    records.push_back(std::move(r));
  }
  return records;
}

inline Dataset load_dataset(const std::filesystem::path& manifest_path, const std::filesystem::path& categories_path) {
  Dataset d;
  d.categories = parse_categories(detail::read_file_text(categories_path));
  std::ifstream in(manifest_path, std::ios::binary);
  if (!in) throw Error("cannot open file: " + manifest_path.string());
  d.records = parse_manifest(in, d.categories);
  return d;
}

// ---------------------------------------------------------------------------
// Serialization. Canonical form: keys in id/path/label/bboxes/size order,
// no whitespace, integral coordinates written as integers, empty bbox list
// and absent size omitted.

namespace detail {

inline nlohmann::ordered_json coord_json(double v) {
  if (v == std::floor(v) && std::abs(v) < 9.0e15) return static_cast<long long>(v);
  return v;
}

}  // namespace detail

inline std::string serialize_record(const SampleRecord& r) {
  nlohmann::ordered_json j;
  j["id"] = r.id;
  j["path"] = r.path;
  j["label"] = r.label;
  if (!r.bboxes.empty()) {
    auto boxes = nlohmann::ordered_json::array();
    for (const auto& b : r.bboxes) {
      boxes.push_back({detail::coord_json(b.x_min), detail::coord_json(b.y_min), detail::coord_json(b.x_max),
                       detail::coord_json(b.y_max)});
    }
    j["bboxes"] = std::move(boxes);
  }
  if (r.size) j["size"] = {r.size->width, r.size->height};
  return j.dump();
}

inline void write_manifest(std::ostream& out, const std::vector<SampleRecord>& records) {
  for (const auto& r : records) out << serialize_record(r) << '\n';
}

inline std::string serialize_manifest(const std::vector<SampleRecord>& records) {
  std::ostringstream out;
  write_manifest(out, records);
  return out.str();
}

inline std::string serialize_categories(const CategoryTable& cats) {
  auto arr = nlohmann::ordered_json::array();
  for (const auto& c : cats.entries()) {
    nlohmann::ordered_json e;
    e["index"] = c.index;
    e["wnid"] = c.wnid;
    e["name"] = c.name;
    arr.push_back(std::move(e));
  }
  return arr.dump(1) + "\n";
}

inline void save_dataset(const Dataset& d, const std::filesystem::path& manifest_path,
                         const std::filesystem::path& categories_path) {
  detail::write_file_atomic(manifest_path, serialize_manifest(d.records));
  detail::write_file_atomic(categories_path, serialize_categories(d.categories));
}

}  // namespace labelsweep
