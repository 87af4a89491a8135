#pragma once

#include <filesystem>

#include "tuap/attack.hpp"
#include "tuap/binary_io.hpp"

// UAPP perturbation file (little-endian):
//   "UAPP" | u32 version | u32 rank | u32 dims[rank] | u8 p (1, 2, 255 = inf)
//   | f64 xi | f64 epsilon | u8 generator (0 targeted, 1 random) | u64 seed
//   | f32 data[prod(dims)]

namespace tuap {

inline constexpr std::uint32_t kPerturbationFormatVersion = 1;

inline io::Bytes serialize_perturbation(const Perturbation& pert) {
  io::ByteWriter w;
  w.magic("UAPP");
  w.u32(kPerturbationFormatVersion);
  w.u32(static_cast<std::uint32_t>(pert.rho.shape().size()));
  for (auto d : pert.rho.shape()) w.u32(static_cast<std::uint32_t>(d));
  w.u8(static_cast<std::uint8_t>(pert.p));
  w.f64(pert.xi);
  w.f64(pert.epsilon);
  w.u8(static_cast<std::uint8_t>(pert.generator));
  w.u64(pert.seed);
  w.f32_array(pert.rho.values());
  return w.take();
}

inline Perturbation deserialize_perturbation(std::span<const std::uint8_t> bytes) {
  io::ByteReader r(bytes, "perturbation file");
  r.expect_magic("UAPP");
  const auto version_at = r.offset();
  const auto version = r.u32();
  if (version != kPerturbationFormatVersion)
    throw unsupported_version_error("perturbation file", version, kPerturbationFormatVersion, version_at);
  const auto rank = r.u32();
  if (rank == 0 || rank > 8) r.fail("implausible tensor rank " + std::to_string(rank));
  Shape shape;
  for (std::uint32_t i = 0; i < rank; ++i) {
    const auto d = r.u32();
    if (d == 0) r.fail("zero dimension");
    shape.push_back(d);
  }
  Perturbation pert;
  const auto p_at = r.offset();
  try {
    pert.p = norm_type_from_code(r.u8());
  } catch (const domain_error& e) {
    throw format_error(std::string("perturbation file: ") + e.what(), p_at);
  }
  pert.xi = r.f64();
  pert.epsilon = r.f64();
  const auto gen = r.u8();
  if (gen > 1) r.fail("unknown generator tag " + std::to_string(gen));
  pert.generator = static_cast<Generator>(gen);
  pert.seed = r.u64();
  pert.rho = Tensor(shape, r.f32_array(shape_size(shape)));
  r.expect_end();
  return pert;
}

inline void save_perturbation(const Perturbation& pert, const std::filesystem::path& path) {
  io::write_file_atomic(path, serialize_perturbation(pert));
}

inline Perturbation load_perturbation(const std::filesystem::path& path) {
  return deserialize_perturbation(io::read_file(path));
}

}  // namespace tuap
