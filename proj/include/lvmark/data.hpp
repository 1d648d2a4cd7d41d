#pragma once

#include "lvmark/image.hpp"
#include "lvmark/landmarks.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace lvmark {

enum class Split { kTrain, kVal, kTest };

inline std::string to_string(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    default: return "test";
  }
}

inline Split split_from_string(const std::string& s) {
  if (s == "train") return Split::kTrain;
  if (s == "val") return Split::kVal;
  if (s == "test") return Split::kTest;
  throw std::invalid_argument("unknown split: '" + s + "'");
}

/// One frame with its annotation; immutable unit of the data pipeline.
struct EchoSample {
  std::string id;
  Image image;
  LandmarkSet landmarks;
  Split split = Split::kTrain;
};

inline constexpr const char* kManifestHeader =
    "id,image_path,h1,w1,h2,w2,h3,w3,h4,w4,spacing_mm,split";

struct ManifestRecord {
  std::string id;
  std::string image_path;  // relative paths resolve against the manifest dir
  std::array<PixelPoint, 4> points;
  double spacing_mm = 1.0;
  Split split = Split::kTrain;
};

inline void write_manifest(const std::filesystem::path& path,
                           const std::vector<ManifestRecord>& records) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write manifest: " + path.string());
  os << kManifestHeader << '\n';
  os.precision(std::numeric_limits<double>::max_digits10);
  for (const auto& r : records) {
    os << r.id << ',' << r.image_path;
    for (const auto& p : r.points) os << ',' << p.h << ',' << p.w;
    os << ',' << r.spacing_mm << ',' << to_string(r.split) << '\n';
  }
  if (!os) throw std::runtime_error("failed writing manifest: " + path.string());
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

inline double parse_double(const std::string& s, const std::string& context) {
  double value = 0.0;
  const auto* begin = s.data();
  const auto* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc{} || ptr != end) {
    throw std::runtime_error(context + ": not a number: '" + s + "'");
  }
  return value;
}

}  // namespace detail

/// Loads a manifest CSV and decodes every referenced image. Rows:
/// id,image_path,h1,w1,h2,w2,h3,w3,h4,w4,spacing_mm,split
inline std::vector<EchoSample> load_manifest(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open manifest: " + path.string());
  const auto base_dir = path.parent_path();

  std::string line;
  if (!std::getline(is, line)) {
    throw std::runtime_error("manifest is empty (missing header): " + path.string());
  }
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kManifestHeader) {
    throw std::runtime_error("manifest line 1: unexpected header, want '" +
                             std::string(kManifestHeader) + "'");
  }

  std::vector<EchoSample> samples;
  std::vector<std::string> seen_ids;
  int line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::string context = "manifest line " + std::to_string(line_no);
    const auto fields = detail::split_csv_line(line);
    if (fields.size() != 12) {
      throw std::runtime_error(context + ": expected 12 fields, got " +
                               std::to_string(fields.size()));
    }

    EchoSample sample;
    sample.id = fields[0];
    if (sample.id.empty()) throw std::runtime_error(context + ": empty id");
    for (const auto& prev : seen_ids) {
      if (prev == sample.id) {
        throw std::runtime_error(context + ": duplicate id '" + sample.id + "'");
      }
    }
    seen_ids.push_back(sample.id);

    std::filesystem::path img_path(fields[1]);
    if (img_path.is_relative()) img_path = base_dir / img_path;
    if (!std::filesystem::exists(img_path)) {
      throw std::runtime_error("record '" + sample.id +
                               "': image file missing: " + img_path.string());
    }
    sample.image = read_pgm(img_path);

    for (int p = 0; p < 4; ++p) {
      sample.landmarks.points[p].h = detail::parse_double(fields[2 + 2 * p], context);
      sample.landmarks.points[p].w = detail::parse_double(fields[3 + 2 * p], context);
    }
    sample.landmarks.spacing_mm = detail::parse_double(fields[10], context);
    sample.landmarks.frame_h = sample.image.h;
    sample.landmarks.frame_w = sample.image.w;
    try {
      sample.landmarks.validate();
      sample.split = split_from_string(fields[11]);
    } catch (const std::invalid_argument& e) {
      throw std::runtime_error(context + " (record '" + sample.id + "'): " + e.what());
    }
    samples.push_back(std::move(sample));
  }
  return samples;
}

inline std::vector<EchoSample> filter_split(const std::vector<EchoSample>& samples,
                                            Split split) {
  std::vector<EchoSample> out;
  for (const auto& s : samples) {
    if (s.split == split) out.push_back(s);
  }
  return out;
}

/// Synthetic frame: two bright wall bands of random thickness, position and
/// angle around a darker chamber, multiplicative speckle noise. The four
/// landmarks are the band boundaries along the perpendicular measurement
/// line through the band midpoints, top to bottom. Deterministic per seed.
inline EchoSample generate_phantom(std::uint64_t seed, int size) {
  require(size >= 16, "generate_phantom: size must be >= 16");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  const double s = static_cast<double>(size);

  double theta, ch, cw, t1, gap, t2, half_len;
  std::array<PixelPoint, 4> pts;
  // Resample until the whole structure sits inside the frame with a margin.
  while (true) {
    theta = (uni(rng) - 0.5) * 0.7;  // about +/-20 degrees
    ch = s * (0.40 + 0.20 * uni(rng));
    cw = s * (0.40 + 0.20 * uni(rng));
    t1 = s * (0.08 + 0.08 * uni(rng));
    gap = s * (0.20 + 0.20 * uni(rng));
    t2 = s * (0.08 + 0.08 * uni(rng));
    half_len = s * (0.26 + 0.14 * uni(rng));

    const double vh = std::cos(theta), vw = -std::sin(theta);
    const std::array<double, 4> offsets = {-gap / 2 - t1, -gap / 2, gap / 2,
                                           gap / 2 + t2};
    bool ok = true;
    for (int p = 0; p < 4; ++p) {
      pts[p] = {ch + offsets[p] * vh, cw + offsets[p] * vw};
      ok = ok && pts[p].h >= 1.5 && pts[p].h <= s - 2.5 && pts[p].w >= 1.5 &&
           pts[p].w <= s - 2.5;
    }
    if (ok) break;
  }

  const double band1 = 0.70 + 0.25 * uni(rng);
  const double band2 = 0.70 + 0.25 * uni(rng);
  const double backg = 0.06 + 0.06 * uni(rng);
  const double chamber = 0.4 * backg;

  const double uh = std::sin(theta), uw = std::cos(theta);
  const double vh = std::cos(theta), vw = -std::sin(theta);
  const double a1 = -gap / 2 - t1, a2 = -gap / 2, a3 = gap / 2, a4 = gap / 2 + t2;
  const double edge = 0.7;      // boundary softness, px
  const double end_soft = 2.0;  // falloff at the band ends, px

  auto sigm = [](double x) { return 1.0 / (1.0 + std::exp(-x)); };

  Image img(size, size);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int r = 0; r < size; ++r) {
    for (int c = 0; c < size; ++c) {
      const double dh = r - ch, dw = c - cw;
      const double sv = dh * vh + dw * vw;
      const double tu = dh * uh + dw * uw;
      const double cap = sigm((half_len - std::abs(tu)) / end_soft);
      const double in1 = sigm((sv - a1) / edge) * sigm((a2 - sv) / edge);
      const double in2 = sigm((sv - a3) / edge) * sigm((a4 - sv) / edge);
      const double in_chamber = sigm((sv - a2) / edge) * sigm((a3 - sv) / edge);
      double v = backg + (band1 - backg) * in1 * cap + (band2 - backg) * in2 * cap -
                 (backg - chamber) * in_chamber * cap;
      v *= 1.0 + 0.18 * gauss(rng);  // speckle
      img.at(r, c) = std::clamp(v, 0.0, 1.0);
    }
  }

  EchoSample sample;
  sample.id = "phantom_" + std::to_string(seed);
  sample.image = std::move(img);
  sample.landmarks.points = pts;
  sample.landmarks.spacing_mm = 0.5;
  sample.landmarks.frame_h = size;
  sample.landmarks.frame_w = size;
  sample.split = Split::kTrain;
  sample.landmarks.validate();
  return sample;
}

/// Bilinear image resample plus landmark/spacing rescale.
inline EchoSample resize_sample(const EchoSample& sample, int to_h, int to_w) {
  EchoSample out;
  out.id = sample.id;
  out.split = sample.split;
  out.landmarks = rescale_landmarks(sample.landmarks, to_h, to_w);
  out.image = resize_bilinear(sample.image, to_h, to_w);
  return out;
}

}  // namespace lvmark
