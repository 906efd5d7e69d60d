#pragma once

#include <array>
#include <cstdint>

namespace lodnn {

/// Philox4x32-10 counter-based generator. A draw depends only on the key
/// (seed) and the counter, so parallel consumers get identical streams
/// regardless of scheduling.
class Philox {
 public:
  explicit Philox(std::uint64_t seed)
      : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)} {}

  std::array<std::uint32_t, 4> block(std::uint64_t stream, std::uint64_t index) const {
    std::array<std::uint32_t, 4> ctr{static_cast<std::uint32_t>(index),
                                     static_cast<std::uint32_t>(index >> 32),
                                     static_cast<std::uint32_t>(stream),
                                     static_cast<std::uint32_t>(stream >> 32)};
    std::array<std::uint32_t, 2> key = key_;
    for (int round = 0; round < 10; ++round) {
      std::uint64_t p0 = static_cast<std::uint64_t>(kMul0) * ctr[0];
      std::uint64_t p1 = static_cast<std::uint64_t>(kMul1) * ctr[2];
      ctr = {static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ key[0], static_cast<std::uint32_t>(p1),
             static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ key[1], static_cast<std::uint32_t>(p0)};
      key[0] += kWeyl0;
      key[1] += kWeyl1;
    }
    return ctr;
  }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform(std::uint64_t stream, std::uint64_t index) const {
    auto b = block(stream, index);
    std::uint64_t bits = (static_cast<std::uint64_t>(b[0]) << 32) | b[1];
    return static_cast<double>(bits >> 11) * 0x1.0p-53;
  }

  double uniform(std::uint64_t stream, std::uint64_t index, double lo, double hi) const {
    return lo + (hi - lo) * uniform(stream, index);
  }

 private:
  static constexpr std::uint32_t kMul0 = 0xD2511F53;
  static constexpr std::uint32_t kMul1 = 0xCD9E8D57;
  static constexpr std::uint32_t kWeyl0 = 0x9E3779B9;
  static constexpr std::uint32_t kWeyl1 = 0xBB67AE85;
  std::array<std::uint32_t, 2> key_;
};

/// Named streams so that different consumers of one seed never overlap.
namespace streams {
inline constexpr std::uint64_t coefficient = 1;
inline constexpr std::uint64_t test_vectors = 2;
inline constexpr std::uint64_t test_matrices = 3;
inline constexpr std::uint64_t power_iteration = 4;
}  // namespace streams

}  // namespace lodnn
