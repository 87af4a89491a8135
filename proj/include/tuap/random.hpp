#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace tuap {

using Rng = std::mt19937_64;

/// Independent stream for (seed, tags...). Different tag tuples give unrelated streams.
inline Rng make_rng(std::uint64_t seed, std::initializer_list<std::uint64_t> tags = {}) {
  std::vector<std::uint32_t> words{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
  for (auto t : tags) {
    words.push_back(static_cast<std::uint32_t>(t));
    words.push_back(static_cast<std::uint32_t>(t >> 32));
  }
  std::seed_seq seq(words.begin(), words.end());
  return Rng(seq);
}

// Stream tags, so that the same user seed drives unrelated draws independently.
namespace stream {
inline constexpr std::uint64_t weight_init = 0x1001;
inline constexpr std::uint64_t batch_order = 0x1002;
inline constexpr std::uint64_t uap_order = 0x2001;
inline constexpr std::uint64_t random_uap = 0x2002;
inline constexpr std::uint64_t synth_templates = 0x3001;
inline constexpr std::uint64_t synth_noise = 0x3002;
inline constexpr std::uint64_t split = 0x3003;
}  // namespace stream

}  // namespace tuap
