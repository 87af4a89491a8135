#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "tuap/binary_io.hpp"
#include "tuap/random.hpp"
#include "tuap/tensor.hpp"

namespace tuap::data {

enum class Source : std::uint8_t { cifar10_binary, synthetic };

/// Images (HxWxC, pixels in [0,1]) with labels and where they came from.
///
/// `origin` names the pool the images were drawn from and `indices[i]` is the
/// position of image i in that pool; together they make disjointness between
/// two sets checkable.
struct LabeledDataset {
  std::vector<Tensor> images;
  std::vector<std::size_t> labels;
  std::size_t class_count = 0;
  Source source = Source::synthetic;
  std::string origin;
  std::vector<std::size_t> indices;
  // Synthetic provenance.
  double sigma = 0;
  std::uint64_t seed = 0;
  std::size_t clipped_pixels = 0;

  std::size_t size() const noexcept { return images.size(); }
  bool empty() const noexcept { return images.empty(); }
  const Shape& image_shape() const { return images.at(0).shape(); }

  std::vector<std::size_t> class_counts() const {
    std::vector<std::size_t> counts(class_count, 0);
    for (auto y : labels) ++counts.at(y);
    return counts;
  }

  /// Subset by position, preserving provenance.
  LabeledDataset subset(const std::vector<std::size_t>& positions) const {
    LabeledDataset out;
    out.class_count = class_count;
    out.source = source;
    out.origin = origin;
    out.sigma = sigma;
    out.seed = seed;
    for (auto i : positions) {
      out.images.push_back(images.at(i));
      out.labels.push_back(labels.at(i));
      out.indices.push_back(indices.at(i));
    }
    return out;
  }
};

/// Throws unless no image of `a` and `b` comes from the same pool position.
inline void require_disjoint(const LabeledDataset& a, const LabeledDataset& b) {
  if (a.origin != b.origin) return;
  std::set<std::size_t> seen(a.indices.begin(), a.indices.end());
  for (auto i : b.indices)
    if (seen.count(i))
      throw domain_error("input and test sets overlap (pool '" + a.origin + "', index " + std::to_string(i) + ")");
}

// ---- CIFAR-10 binary batches ---------------------------------------------

inline constexpr std::size_t kCifarSide = 32;
inline constexpr std::size_t kCifarPlane = kCifarSide * kCifarSide;
inline constexpr std::size_t kCifarRecord = 1 + 3 * kCifarPlane;

/// Parses records of 1 label byte + 3 channel planes (R, G, B), each 32x32 row-major.
/// Appends to `out`; byte offsets in errors are relative to `bytes`.
inline void parse_cifar10(std::span<const std::uint8_t> bytes, LabeledDataset& out, const std::string& file = "") {
  const std::string where = file.empty() ? "CIFAR-10 batch" : "CIFAR-10 batch '" + file + "'";
  if (bytes.size() % kCifarRecord != 0) {
    throw format_error(where + ": length " + std::to_string(bytes.size()) + " is not a multiple of " +
                           std::to_string(kCifarRecord) + "-byte records",
                       bytes.size() - bytes.size() % kCifarRecord);
  }
  const Shape shape{kCifarSide, kCifarSide, 3};
  for (std::size_t off = 0; off < bytes.size(); off += kCifarRecord) {
    const auto label = bytes[off];
    if (label > 9) throw format_error(where + ": label byte " + std::to_string(label) + " > 9", off);
    Tensor img(shape);
    for (std::size_t ch = 0; ch < 3; ++ch)
      for (std::size_t p = 0; p < kCifarPlane; ++p) img[p * 3 + ch] = bytes[off + 1 + ch * kCifarPlane + p] / 255.0;
    out.indices.push_back(out.images.size());
    out.images.push_back(std::move(img));
    out.labels.push_back(label);
  }
}

inline LabeledDataset load_cifar10(const std::vector<std::filesystem::path>& paths) {
  if (paths.empty()) throw domain_error("no CIFAR-10 batch files given");
  LabeledDataset d;
  d.class_count = 10;
  d.source = Source::cifar10_binary;
  d.origin = "cifar10:";
  for (std::size_t i = 0; i < paths.size(); ++i) {
    if (i) d.origin += ",";
    d.origin += paths[i].filename().string();
    parse_cifar10(io::read_file(paths[i]), d, paths[i].string());
  }
  return d;
}

/// Inverse of parse_cifar10 for 32x32x3 images; pixels are rounded back to bytes.
inline io::Bytes write_cifar10(const LabeledDataset& d) {
  io::Bytes out;
  out.reserve(d.size() * kCifarRecord);
  for (std::size_t i = 0; i < d.size(); ++i) {
    const auto& img = d.images[i];
    if (img.shape() != Shape{kCifarSide, kCifarSide, 3}) throw shape_error("CIFAR-10 images must be 32x32x3");
    if (d.labels[i] > 9) throw domain_error("CIFAR-10 labels must be < 10");
    out.push_back(static_cast<std::uint8_t>(d.labels[i]));
    for (std::size_t ch = 0; ch < 3; ++ch)
      for (std::size_t p = 0; p < kCifarPlane; ++p)
        out.push_back(static_cast<std::uint8_t>(std::lround(std::clamp(img[p * 3 + ch], 0.0, 1.0) * 255.0)));
  }
  return out;
}

// ---- Synthetic data --------------------------------------------------------

/// K class templates drawn uniformly in [0.2, 0.8]; each sample is its class
/// template plus N(0, sigma^2) noise, clipped to [0,1]. Samples are stored
/// class-major and rounded to float32 so they survive a UAPD round trip.
inline LabeledDataset synth_dataset(std::size_t classes, std::size_t per_class, const Shape& shape, double sigma,
                                    std::uint64_t seed) {
  if (classes < 2) throw domain_error("synthetic dataset needs at least 2 classes");
  if (classes > 255) throw domain_error("synthetic dataset supports at most 255 classes");
  if (per_class == 0) throw domain_error("synthetic dataset needs at least one image per class");
  if (!(sigma >= 0) || !std::isfinite(sigma)) throw domain_error("noise sigma must be >= 0");
  if (shape.size() != 3) throw shape_error("synthetic images must be HxWxC, got " + shape_string(shape));
  Tensor probe(shape);  // validates dimensions

  auto template_rng = make_rng(seed, {stream::synth_templates});
  std::uniform_real_distribution<double> u(0.2, 0.8);
  std::vector<Tensor> templates;
  for (std::size_t k = 0; k < classes; ++k) {
    Tensor t(shape);
    for (auto& v : t) v = u(template_rng);
    templates.push_back(std::move(t));
  }

  LabeledDataset d;
  d.class_count = classes;
  d.source = Source::synthetic;
  d.sigma = sigma;
  d.seed = seed;
  d.origin = "synthetic:seed=" + std::to_string(seed);
  auto noise_rng = make_rng(seed, {stream::synth_noise});
  std::normal_distribution<double> n(0.0, sigma > 0 ? sigma : 1.0);
  for (std::size_t k = 0; k < classes; ++k)
    for (std::size_t i = 0; i < per_class; ++i) {
      Tensor x = templates[k];
      for (auto& v : x) {
        if (sigma > 0) v += n(noise_rng);
        if (v < 0.0 || v > 1.0) {
          ++d.clipped_pixels;
          v = std::clamp(v, 0.0, 1.0);
        }
        v = static_cast<double>(static_cast<float>(v));
      }
      d.indices.push_back(d.images.size());
      d.images.push_back(std::move(x));
      d.labels.push_back(k);
    }
  return d;
}

// ---- UAPD dataset file -----------------------------------------------------
//   "UAPD" | u32 version | u32 K | u32 n | u32 counts[K] | u32 rank | u32 dims[rank]
//   | f64 sigma | u64 seed | u8 labels[n] | f32 pixels[n * prod(dims)]

inline constexpr std::uint32_t kDatasetFormatVersion = 1;

inline io::Bytes serialize_dataset(const LabeledDataset& d) {
  if (d.empty()) throw domain_error("cannot serialize an empty dataset");
  if (d.class_count > 255) throw domain_error("UAPD labels are single bytes");
  io::ByteWriter w;
  w.magic("UAPD");
  w.u32(kDatasetFormatVersion);
  w.u32(static_cast<std::uint32_t>(d.class_count));
  w.u32(static_cast<std::uint32_t>(d.size()));
  for (auto c : d.class_counts()) w.u32(static_cast<std::uint32_t>(c));
  const auto& shape = d.image_shape();
  w.u32(static_cast<std::uint32_t>(shape.size()));
  for (auto s : shape) w.u32(static_cast<std::uint32_t>(s));
  w.f64(d.sigma);
  w.u64(d.seed);
  for (auto y : d.labels) w.u8(static_cast<std::uint8_t>(y));
  for (const auto& img : d.images) {
    if (img.shape() != shape) throw shape_error("dataset images do not share one shape");
    w.f32_array(img.values());
  }
  return w.take();
}

inline LabeledDataset deserialize_dataset(std::span<const std::uint8_t> bytes, const std::string& origin = "") {
  io::ByteReader r(bytes, "dataset file");
  r.expect_magic("UAPD");
  const auto version_at = r.offset();
  const auto version = r.u32();
  if (version != kDatasetFormatVersion)
    throw unsupported_version_error("dataset file", version, kDatasetFormatVersion, version_at);
  LabeledDataset d;
  d.source = Source::synthetic;
  d.class_count = r.u32();
  if (d.class_count < 1 || d.class_count > 255) r.fail("class count out of range");
  const auto n = r.u32();
  std::vector<std::size_t> counts;
  for (std::size_t k = 0; k < d.class_count; ++k) counts.push_back(r.u32());
  if (std::accumulate(counts.begin(), counts.end(), std::size_t{0}) != n) r.fail("class counts do not sum to n");
  const auto rank = r.u32();
  if (rank == 0 || rank > 8) r.fail("implausible image rank");
  Shape shape;
  for (std::uint32_t i = 0; i < rank; ++i) {
    auto s = r.u32();
    if (s == 0) r.fail("zero image dimension");
    shape.push_back(s);
  }
  d.sigma = r.f64();
  d.seed = r.u64();
  for (std::uint32_t i = 0; i < n; ++i) {
    const auto at = r.offset();
    const auto y = r.u8();
    if (y >= d.class_count) throw format_error("dataset file: label " + std::to_string(y) + " out of range", at);
    d.labels.push_back(y);
  }
  const auto per = shape_size(shape);
  for (std::uint32_t i = 0; i < n; ++i) {
    d.images.emplace_back(shape, r.f32_array(per));
    d.indices.push_back(i);
  }
  r.expect_end();
  if (d.class_counts() != counts) throw format_error("dataset file: class counts disagree with labels", 0);
  d.origin = origin.empty() ? "synthetic:seed=" + std::to_string(d.seed) : origin;
  return d;
}

inline void save_dataset(const LabeledDataset& d, const std::filesystem::path& path) {
  io::write_file_atomic(path, serialize_dataset(d));
}

inline LabeledDataset load_dataset(const std::filesystem::path& path) {
  return deserialize_dataset(io::read_file(path), "uapd:" + path.filename().string());
}

// ---- Balanced split ----------------------------------------------------------

struct SplitSpec {
  std::size_t per_class_input = 0;
  std::uint64_t seed = 0;
};

struct Split {
  LabeledDataset input;
  LabeledDataset test;
};

/// Draws exactly spec.per_class_input random images of every class into the
/// input set; whatever remains (in original order) forms the test set.
inline Split split_balanced(const LabeledDataset& d, const SplitSpec& spec) {
  if (spec.per_class_input == 0) throw domain_error("per-class input count must be positive");
  std::vector<std::vector<std::size_t>> by_class(d.class_count);
  for (std::size_t i = 0; i < d.size(); ++i) by_class.at(d.labels[i]).push_back(i);

  auto rng = make_rng(spec.seed, {stream::split});
  std::vector<bool> chosen(d.size(), false);
  std::vector<std::size_t> input_positions;
  for (std::size_t k = 0; k < d.class_count; ++k) {
    auto& pool = by_class[k];
    if (pool.size() < spec.per_class_input)
      throw domain_error("class " + std::to_string(k) + " has " + std::to_string(pool.size()) +
                         " images, fewer than the " + std::to_string(spec.per_class_input) + " requested");
    std::shuffle(pool.begin(), pool.end(), rng);
    pool.resize(spec.per_class_input);
    std::sort(pool.begin(), pool.end());
    for (auto i : pool) chosen[i] = true;
    input_positions.insert(input_positions.end(), pool.begin(), pool.end());
  }
  std::vector<std::size_t> test_positions;
  for (std::size_t i = 0; i < d.size(); ++i)
    if (!chosen[i]) test_positions.push_back(i);
  return {d.subset(input_positions), d.subset(test_positions)};
}

}  // namespace tuap::data
