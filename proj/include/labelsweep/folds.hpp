#pragma once

// k-fold orchestration: stratified fold assignment and reassembly of the
// per-fold out-of-sample predictions into one full matrix.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "labelsweep/detail/fileio.hpp"
#include "labelsweep/detail/rng.hpp"
#include "labelsweep/error.hpp"
#include "labelsweep/manifest.hpp"
#include "labelsweep/predstore.hpp"

namespace labelsweep {

struct FoldAssignment {
  std::size_t k = 0;
  std::vector<std::string> ids;  // dataset order
  std::vector<int> fold;         // fold[i] for ids[i]
  std::vector<std::string> warnings;

  // Rows of fold f in manifest order.
  std::vector<std::size_t> rows_of(int f) const {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < fold.size(); ++i)
      if (fold[i] == f) rows.push_back(i);
    return rows;
  }
  bool operator==(const FoldAssignment& o) const { return k == o.k && ids == o.ids && fold == o.fold; }
};

// Each category's rows are shuffled with the seeded generator and striped
// across folds; the stripe start rotates between categories so total fold
// sizes stay balanced too.
inline FoldAssignment assign_folds(const Dataset& d, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw Error("invalid fold count: k must be >= 2, got " + std::to_string(k));
  FoldAssignment fa;
  fa.k = k;
  fa.fold.assign(d.size(), -1);
  for (const auto& r : d.records) fa.ids.push_back(r.id);

  std::vector<std::vector<std::size_t>> by_class(d.categories.size());
  for (std::size_t i = 0; i < d.size(); ++i) by_class[static_cast<std::size_t>(d.records[i].label)].push_back(i);

  detail::Rng rng(seed);
  std::size_t offset = 0;
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    auto& rows = by_class[c];
    if (rows.size() < k) {
      fa.warnings.push_back("category " + d.categories[c].wnid + " has " + std::to_string(rows.size()) +
                            " samples, fewer than k=" + std::to_string(k) + "; some folds lack it");
    }
    detail::shuffle(rows, rng);
    for (std::size_t pos = 0; pos < rows.size(); ++pos) fa.fold[rows[pos]] = static_cast<int>((offset + pos) % k);
    offset = (offset + rows.size()) % k;
  }
  return fa;
}

inline std::string format_folds(const FoldAssignment& fa) {
  std::string out = "sample_id,fold\n";
  for (std::size_t i = 0; i < fa.ids.size(); ++i) out += fa.ids[i] + "," + std::to_string(fa.fold[i]) + "\n";
  return out;
}

// Parses a fold CSV against the dataset; every sample must appear exactly once.
inline FoldAssignment parse_folds(const std::string& text, const Dataset& d) {
  const auto index = d.id_index();
  FoldAssignment fa;
  fa.fold.assign(d.size(), -1);
  for (const auto& r : d.records) fa.ids.push_back(r.id);
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  int max_fold = -1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line == "sample_id,fold") continue;
    const auto comma = line.rfind(',');
    if (comma == std::string::npos) throw Error("parse error: fold file line " + std::to_string(lineno));
    const auto id = line.substr(0, comma);
    int f = -1;
    try {
      f = std::stoi(line.substr(comma + 1));
    } catch (const std::exception&) {
      throw Error("parse error: fold file line " + std::to_string(lineno));
    }
    if (f < 0) throw Error("parse error: negative fold at line " + std::to_string(lineno));
    const auto it = index.find(id);
    if (it == index.end()) throw Error("unknown sample in fold file: " + id);
    if (fa.fold[it->second] != -1) throw Error("overlap: sample " + id + " assigned twice");
    fa.fold[it->second] = f;
    max_fold = std::max(max_fold, f);
  }
  for (std::size_t i = 0; i < fa.fold.size(); ++i)
    if (fa.fold[i] == -1) throw Error("coverage gap: sample " + fa.ids[i] + " has no fold");
  fa.k = static_cast<std::size_t>(max_fold + 1);
  if (fa.k < 2) throw Error("invalid fold count: k must be >= 2");
  return fa;
}

inline FoldAssignment read_folds(const std::filesystem::path& path, const Dataset& d) {
  return parse_folds(detail::read_file_text(path), d);
}

// Samples of one fold (test = true) or of all other folds (test = false),
// manifest order preserved.
inline Dataset fold_subset(const Dataset& d, const FoldAssignment& fa, int f, bool test) {
  Dataset out;
  out.categories = d.categories;
  for (std::size_t i = 0; i < d.size(); ++i)
    if ((fa.fold[i] == f) == test) out.records.push_back(d.records[i]);
  return out;
}

// ---------------------------------------------------------------------------

struct FoldPart {
  std::vector<std::size_t> rows;  // output row for each row of pm
  ProbabilityMatrix pm;
};

// Scatters each part's rows into an n-row matrix; every output row must be
// covered exactly once.
inline ProbabilityMatrix stitch_rows(std::span<const FoldPart> parts, std::size_t n, std::string model_id) {
  if (parts.empty()) throw Error("coverage gap: no fold matrices");
  const std::size_t c = parts.front().pm.c;
  ProbabilityMatrix out(std::move(model_id), n, c);
  std::vector<char> covered(n, 0);
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const auto& part = parts[p];
    if (part.pm.c != c) throw Error("dimension mismatch: fold " + std::to_string(p) + " has a different class count");
    if (part.rows.size() != part.pm.n)
      throw Error("row count mismatch: fold " + std::to_string(p) + " matrix has " + std::to_string(part.pm.n) +
                  " rows for " + std::to_string(part.rows.size()) + " samples");
    for (std::size_t r = 0; r < part.rows.size(); ++r) {
      const auto dst = part.rows[r];
      if (dst >= n) throw Error("row count mismatch: row " + std::to_string(dst) + " outside the dataset");
      if (covered[dst]) throw Error("overlap: row " + std::to_string(dst) + " covered by more than one fold");
      covered[dst] = 1;
      std::copy(part.pm.row(r).begin(), part.pm.row(r).end(), out.row(dst).begin());
    }
  }
  if (const auto gap = std::find(covered.begin(), covered.end(), 0); gap != covered.end())
    throw Error("coverage gap: row " + std::to_string(gap - covered.begin()) + " not covered by any fold");
  return out;
}

// fold_matrices[f] holds the test-fold predictions for fold f, rows in
// manifest-relative order.
inline ProbabilityMatrix stitch_oof(std::span<const ProbabilityMatrix> fold_matrices, const FoldAssignment& fa) {
  if (fa.k < 2) throw Error("invalid fold count: k must be >= 2");
  if (fold_matrices.size() != fa.k)
    throw Error("fold count mismatch: " + std::to_string(fold_matrices.size()) + " matrices for k=" +
                std::to_string(fa.k));
  std::vector<FoldPart> parts;
  for (std::size_t f = 0; f < fa.k; ++f) {
    auto rows = fa.rows_of(static_cast<int>(f));
    const auto& pm = fold_matrices[f];
    if (pm.n < rows.size())
      throw Error("coverage gap: fold " + std::to_string(f) + " matrix has " + std::to_string(pm.n) + " rows, fold has " +
                  std::to_string(rows.size()) + " samples");
    if (pm.n > rows.size())
      throw Error("row count mismatch: fold " + std::to_string(f) + " matrix has " + std::to_string(pm.n) +
                  " rows, fold has " + std::to_string(rows.size()) + " samples");
    parts.push_back({std::move(rows), pm});
  }
  return stitch_rows(parts, fa.fold.size(), fold_matrices.front().model_id);
}

}  // namespace labelsweep
