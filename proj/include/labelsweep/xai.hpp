#pragma once

// Explainability scoring of CAM heatmaps against annotated bounding boxes,
// and the 2-of-3 method exemption from top-5 consensus removal.

#include <algorithm>
#include <array>
#include <cctype>
#include <concepts>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "labelsweep/consensus.hpp"
#include "labelsweep/detail/fileio.hpp"
#include "labelsweep/error.hpp"
#include "labelsweep/manifest.hpp"
#include "labelsweep/predstore.hpp"

namespace labelsweep {

enum class CamMethod { gradcam, gradcampp, scorecam };
inline constexpr std::array<CamMethod, 3> kCamMethods = {CamMethod::gradcam, CamMethod::gradcampp,
                                                         CamMethod::scorecam};

inline const char* to_string(CamMethod m) {
  switch (m) {
    case CamMethod::gradcam: return "gradcam";
    case CamMethod::gradcampp: return "gradcampp";
    case CamMethod::scorecam: return "scorecam";
  }
  return "?";
}

// Intensity >= 0.75 on 8-bit storage means byte >= ceil(0.75 * 255).
inline constexpr std::uint8_t kHotByte = 192;
// A method "sees" the object when at least 1 % of the box is hot.
inline constexpr double kMinHotFraction = 0.01;
inline constexpr int kMethodsRequired = 2;

struct Heatmap {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> values;  // row-major, width*height
  std::string sample_id;
  std::string model_id;
  CamMethod method = CamMethod::gradcam;

  std::uint8_t at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }
};

// ---------------------------------------------------------------------------
// Binary PGM (P5, maxval 255)

namespace detail {

inline std::size_t pgm_skip_space(std::span<const std::uint8_t> b, std::size_t pos) {
  while (pos < b.size()) {
    if (b[pos] == '#') {
      while (pos < b.size() && b[pos] != '\n') ++pos;
    } else if (std::isspace(b[pos])) {
      ++pos;
    } else {
      break;
    }
  }
  return pos;
}

inline long pgm_int(std::span<const std::uint8_t> b, std::size_t& pos) {
  pos = pgm_skip_space(b, pos);
  if (pos >= b.size() || !std::isdigit(b[pos])) throw Error("malformed pgm: expected integer header field");
  long v = 0;
  while (pos < b.size() && std::isdigit(b[pos])) {
    v = v * 10 + (b[pos++] - '0');
    if (v > 1'000'000'000L) throw Error("malformed pgm: header value too large");
  }
  return v;
}

}  // namespace detail

inline Heatmap decode_pgm(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') throw Error("malformed pgm: missing P5 magic");
  std::size_t pos = 2;
  const long w = detail::pgm_int(bytes, pos);
  const long h = detail::pgm_int(bytes, pos);
  const long maxval = detail::pgm_int(bytes, pos);
  if (w < 1 || h < 1) throw Error("malformed pgm: dimensions must be at least 1x1");
  if (maxval != 255) throw Error("malformed pgm: maxval must be 255");
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) throw Error("malformed pgm: missing header terminator");
  ++pos;
  const auto count = static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
  if (bytes.size() - pos < count) throw Error("malformed pgm: truncated raster");
  Heatmap hm;
  hm.width = static_cast<int>(w);
  hm.height = static_cast<int>(h);
  hm.values.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                   bytes.begin() + static_cast<std::ptrdiff_t>(pos + count));
  return hm;
}

inline std::vector<std::uint8_t> encode_pgm(const Heatmap& hm) {
  const std::string header = "P5\n" + std::to_string(hm.width) + " " + std::to_string(hm.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), hm.values.begin(), hm.values.end());
  return out;
}

inline Heatmap read_pgm(const std::filesystem::path& path) {
  try {
    return decode_pgm(detail::read_file_bytes(path));
  } catch (const Error& e) {
    throw Error(std::string(e.what()) + " [" + path.string() + "]");
  }
}

inline void write_pgm(const Heatmap& hm, const std::filesystem::path& path) {
  std::filesystem::create_directories(path.parent_path());
  detail::write_file_atomic(path, std::span<const std::uint8_t>(encode_pgm(hm)));
}

// ---------------------------------------------------------------------------
// Scoring

struct ExplainabilityScore {
  std::size_t hot = 0;
  std::size_t total = 1;
  double value() const { return static_cast<double>(hot) / static_cast<double>(total); }
};

struct GridRect {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // half-open
  std::size_t area() const { return static_cast<std::size_t>(x1 - x0) * static_cast<std::size_t>(y1 - y0); }
  bool operator==(const GridRect&) const = default;
};

// Maps an image-space box onto the heatmap grid: scale each axis, floor the
// min corner, ceil the max corner, clamp to the grid, and keep at least one
// pixel.
inline GridRect map_box_to_grid(const BoundingBox& box, ImageSize image, int grid_w, int grid_h) {
  if (!box.valid()) throw Error("malformed bbox");
  if (image.width < 1 || image.height < 1) throw Error("invalid image size");
  if (box.x_min >= image.width || box.y_min >= image.height)
    throw Error("box entirely outside image after clamping");
  const double xmax = std::min<double>(box.x_max, image.width);
  const double ymax = std::min<double>(box.y_max, image.height);

  auto lo = [](double v, int g, int img) { return static_cast<int>(std::floor(v * g / img)); };
  auto hi = [](double v, int g, int img) { return static_cast<int>(std::ceil(v * g / img)); };
  GridRect r{lo(box.x_min, grid_w, image.width), lo(box.y_min, grid_h, image.height),
             hi(xmax, grid_w, image.width), hi(ymax, grid_h, image.height)};
  r.x0 = std::clamp(r.x0, 0, grid_w - 1);
  r.y0 = std::clamp(r.y0, 0, grid_h - 1);
  r.x1 = std::clamp(r.x1, r.x0 + 1, grid_w);
  r.y1 = std::clamp(r.y1, r.y0 + 1, grid_h);
  return r;
}

inline ExplainabilityScore score_heatmap(const Heatmap& hm, const BoundingBox& box, ImageSize image) {
  const auto r = map_box_to_grid(box, image, hm.width, hm.height);
  ExplainabilityScore s{0, r.area()};
  for (int y = r.y0; y < r.y1; ++y)
    for (int x = r.x0; x < r.x1; ++x)
      if (hm.at(x, y) >= kHotByte) ++s.hot;
  return s;
}

// Image size defaults to the heatmap size when the manifest does not carry
// one (heatmap already in image coordinates).
inline ExplainabilityScore score_heatmap(const Heatmap& hm, const BoundingBox& box) {
  return score_heatmap(hm, box, ImageSize{hm.width, hm.height});
}

inline bool method_passes(double score) { return score >= kMinHotFraction; }

inline bool exempt_from_scores(std::span<const double> per_method) {
  return std::count_if(per_method.begin(), per_method.end(), method_passes) >= kMethodsRequired;
}

// ---------------------------------------------------------------------------
// Heatmap lookup: heatmaps/<model_id>/<method>/<sample_id>.pgm

class HeatmapStore {
 public:
  explicit HeatmapStore(std::filesystem::path root) : root_(std::move(root)) {}

  std::filesystem::path path_for(const std::string& model, CamMethod method, const std::string& sample) const {
    return root_ / model / to_string(method) / (sample + ".pgm");
  }

  std::optional<Heatmap> load(const std::string& model, CamMethod method, const std::string& sample) const {
    const auto p = path_for(model, method, sample);
    if (!std::filesystem::exists(p)) return std::nullopt;
    auto hm = read_pgm(p);
    hm.model_id = model;
    hm.method = method;
    hm.sample_id = sample;
    return hm;
  }

  const std::filesystem::path& root() const { return root_; }

 private:
  std::filesystem::path root_;
};

// A heatmap source is anything with
//   std::optional<Heatmap> load(const std::string& model, CamMethod, const std::string& sample) const;
template <typename Source>
concept HeatmapSource = requires(const Source& s, const std::string& id, CamMethod m) {
  { s.load(id, m, id) } -> std::same_as<std::optional<Heatmap>>;
};

// Exempt when some model with the label in its top-5 has at least two of its
// three CAM heatmaps scoring >= 1 % on any annotated box. Samples without a
// box are not_applicable. A qualifying model with a missing heatmap is a
// data-completeness error.
template <HeatmapSource Source>
Exemption is_exempt(const SampleRecord& sample, const std::vector<std::string>& model_ids,
                    const std::vector<TopKPredictions>& top5, std::size_t row, const Source& heatmaps) {
  if (sample.bboxes.empty()) return Exemption::not_applicable;
  if (model_ids.size() != top5.size()) throw Error("dimension mismatch: model ids vs top-5 lists");
  for (std::size_t m = 0; m < model_ids.size(); ++m) {
    if (!top5[m].contains(row, sample.label)) continue;
    std::array<std::optional<Heatmap>, 3> maps;
    for (std::size_t k = 0; k < kCamMethods.size(); ++k) {
      maps[k] = heatmaps.load(model_ids[m], kCamMethods[k], sample.id);
      if (!maps[k])
        throw Error("missing heatmap: " + model_ids[m] + "/" + to_string(kCamMethods[k]) + "/" + sample.id);
    }
    for (const auto& box : sample.bboxes) {
      std::array<double, 3> scores{};
      for (std::size_t k = 0; k < maps.size(); ++k) {
        const ImageSize img = sample.size.value_or(ImageSize{maps[k]->width, maps[k]->height});
        scores[k] = score_heatmap(*maps[k], box, img).value();
      }
      if (exempt_from_scores(scores)) return Exemption::exempt;
    }
  }
  return Exemption::not_exempt;
}

}  // namespace labelsweep
