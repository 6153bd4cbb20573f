#pragma once

// Dense per-model probability matrices and their on-disk `.cprb` format:
//
//   offset  size  field
//   0       4     magic "CPRB"
//   4       4     version, u32 LE (= 1)
//   8       8     n (rows), u64 LE
//   16      4     c (columns), u32 LE
//   20      4*n*c float32 LE, row-major, row order = manifest order

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "labelsweep/detail/fileio.hpp"
#include "labelsweep/error.hpp"

namespace labelsweep {

inline constexpr char kProbMagic[4] = {'C', 'P', 'R', 'B'};
inline constexpr std::uint32_t kProbVersion = 1;
inline constexpr std::size_t kProbHeaderBytes = 20;
inline constexpr double kRowSumTolerance = 1e-3;

struct ProbabilityMatrix {
  std::string model_id;
  std::size_t n = 0;
  std::size_t c = 0;
  std::vector<float> values;  // n*c, row-major

  ProbabilityMatrix() = default;
  ProbabilityMatrix(std::string model, std::size_t rows, std::size_t cols)
      : model_id(std::move(model)), n(rows), c(cols), values(rows * cols, 0.0f) {}

  std::span<const float> row(std::size_t i) const { return {values.data() + i * c, c}; }
  std::span<float> row(std::size_t i) { return {values.data() + i * c, c}; }
  float at(std::size_t i, std::size_t j) const { return values[i * c + j]; }

  bool operator==(const ProbabilityMatrix&) const = default;
};

// Throws on the first violated invariant.
inline void validate(const ProbabilityMatrix& pm) {
  if (pm.n == 0 || pm.c == 0) throw Error("empty matrix: " + pm.model_id);
  if (pm.values.size() != pm.n * pm.c)
    throw Error("dimension mismatch: value count " + std::to_string(pm.values.size()) + " != n*c");
  for (std::size_t i = 0; i < pm.n; ++i) {
    double sum = 0;
    for (float p : pm.row(i)) {
      if (!(p >= 0.0f && p <= 1.0f))
        throw Error("probability out of range in row " + std::to_string(i) + " of " + pm.model_id);
      sum += p;
    }
    if (std::abs(sum - 1.0) > kRowSumTolerance)
      throw Error("row not normalized: row " + std::to_string(i) + " of " + pm.model_id + " sums to " +
                  std::to_string(sum));
  }
}

namespace detail {

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T v) {
  for (std::size_t b = 0; b < sizeof(T); ++b) out.push_back(static_cast<std::uint8_t>((v >> (8 * b)) & 0xffu));
}

template <typename T>
T get_le(std::span<const std::uint8_t> in, std::size_t offset) {
  T v = 0;
  for (std::size_t b = 0; b < sizeof(T); ++b) v |= static_cast<T>(in[offset + b]) << (8 * b);
  return v;
}

}  // namespace detail

inline std::vector<std::uint8_t> encode_probs(const ProbabilityMatrix& pm) {
  validate(pm);
  std::vector<std::uint8_t> out;
  out.reserve(kProbHeaderBytes + 4 * pm.values.size());
  out.insert(out.end(), kProbMagic, kProbMagic + 4);
  detail::put_le<std::uint32_t>(out, kProbVersion);
  detail::put_le<std::uint64_t>(out, pm.n);
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(pm.c));
  for (float v : pm.values) detail::put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

// expected_n / expected_c of 0 skip the corresponding dimension check.
inline ProbabilityMatrix decode_probs(std::span<const std::uint8_t> bytes, std::string model_id,
                                      std::size_t expected_n = 0, std::size_t expected_c = 0) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kProbMagic, 4) != 0) throw Error("bad magic: " + model_id);
  if (bytes.size() < kProbHeaderBytes) throw Error("truncated header: " + model_id);
  const auto version = detail::get_le<std::uint32_t>(bytes, 4);
  if (version != kProbVersion)
    throw Error("version mismatch: " + model_id + " has version " + std::to_string(version));
  const auto n = detail::get_le<std::uint64_t>(bytes, 8);
  const auto c = detail::get_le<std::uint32_t>(bytes, 16);
  if (n == 0 || c == 0) throw Error("empty matrix: " + model_id);
  if ((expected_n != 0 && n != expected_n) || (expected_c != 0 && c != expected_c)) {
    throw Error("dimension mismatch: " + model_id + " is " + std::to_string(n) + "x" + std::to_string(c) +
                ", expected " + std::to_string(expected_n) + "x" + std::to_string(expected_c));
  }
  const std::size_t payload = bytes.size() - kProbHeaderBytes;
  if (n > payload / 4 / c || payload < 4 * n * c)
    throw Error("truncated payload: " + model_id + " header promises " + std::to_string(n) + " rows");
  if (payload != 4 * n * c) throw Error("trailing bytes: " + model_id);

  ProbabilityMatrix pm(std::move(model_id), n, c);
  for (std::size_t k = 0; k < pm.values.size(); ++k)
    pm.values[k] = std::bit_cast<float>(detail::get_le<std::uint32_t>(bytes, kProbHeaderBytes + 4 * k));
  validate(pm);
  return pm;
}

inline void write_probs(const ProbabilityMatrix& pm, const std::filesystem::path& path) {
  detail::write_file_atomic(path, std::span<const std::uint8_t>(encode_probs(pm)));
}

inline ProbabilityMatrix read_probs(const std::filesystem::path& path, std::size_t expected_n = 0,
                                    std::size_t expected_c = 0) {
  const auto bytes = detail::read_file_bytes(path);
  return decode_probs(bytes, path.stem().string(), expected_n, expected_c);
}

inline std::filesystem::path probs_path(const std::filesystem::path& dir, const std::string& model_id) {
  return dir / (model_id + ".cprb");
}

// ---------------------------------------------------------------------------

struct TopKPredictions {
  std::size_t k = 0;
  std::size_t n = 0;
  std::vector<int> indices;  // n*k, row-major

  std::span<const int> row(std::size_t i) const { return {indices.data() + i * k, k}; }
  bool contains(std::size_t i, int label) const {
    const auto r = row(i);
    return std::find(r.begin(), r.end(), label) != r.end();
  }
};

// Descending probability; equal probabilities keep the lower category
// index first.
inline TopKPredictions top_k(const ProbabilityMatrix& pm, std::size_t k) {
  if (k < 1 || k > pm.c)
    throw Error("k out of range: " + std::to_string(k) + " not in [1, " + std::to_string(pm.c) + "]");
  TopKPredictions out{k, pm.n, std::vector<int>(pm.n * k)};
  std::vector<int> order(pm.c);
  for (std::size_t i = 0; i < pm.n; ++i) {
    const auto r = pm.row(i);
    std::iota(order.begin(), order.end(), 0);
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(), [&](int a, int b) {
      return r[a] != r[b] ? r[a] > r[b] : a < b;
    });
    std::copy_n(order.begin(), k, out.indices.begin() + static_cast<std::ptrdiff_t>(i * k));
  }
  return out;
}

}  // namespace labelsweep
