#pragma once

#include <array>
#include <cstdint>

namespace levyshell {

// Philox4x32-10 block function. Counter-based, so any (key, counter) pair
// can be evaluated independently of every other one.
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                        std::array<std::uint32_t, 2> key);

// A reproducible random stream identified by (seed, stream_id). The seed is
// the Philox key; the stream id occupies the upper half of the counter and the
// lower half counts blocks, so streams never overlap.
class RngStream {
public:
  RngStream(std::uint64_t seed, std::uint64_t stream_id);

  std::uint32_t next_u32();
  std::uint64_t next_u64();
  // Uniform on the open interval (0, 1) with 53 random bits.
  double uniform();
  // Exponential with unit rate.
  double exponential();
  // Standard normal (Box-Muller, one spare value cached).
  double normal();

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_id_; }

private:
  void refill();

  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::uint64_t block_ = 0;
  std::array<std::uint32_t, 4> buffer_{};
  int used_ = 4;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Stream ids for ensembles. Trajectory i of an experiment gets
// derive_stream_id(purpose, i) so that different experiment phases sharing a
// seed never reuse randomness.
constexpr std::uint64_t derive_stream_id(std::uint32_t purpose, std::uint64_t index) {
  return (static_cast<std::uint64_t>(purpose) << 48) ^ index;
}

namespace stream_purpose {
inline constexpr std::uint32_t trajectory = 0;
inline constexpr std::uint32_t bel = 1;
inline constexpr std::uint32_t ergodicity_a = 2;
inline constexpr std::uint32_t ergodicity_b = 3;
inline constexpr std::uint32_t small_deviation = 4;
inline constexpr std::uint32_t accessibility = 5;
inline constexpr std::uint32_t constants = 6;
inline constexpr std::uint32_t moments = 7;
inline constexpr std::uint32_t refinement = 8;
inline constexpr std::uint32_t sampler_check = 9;
}  // namespace stream_purpose

}  // namespace levyshell
