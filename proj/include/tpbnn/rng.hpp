#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <optional>

namespace tpbnn {

// Counter-based random stream (Philox4x32-10) keyed by a 64-bit seed and a
// 64-bit stream id. The variate sequence depends only on (seed, stream), so
// chains and widths can be given independent reproducible streams without
// any shared state. All derived variates (normal, gamma) are implemented here
// rather than through <random> distributions, whose algorithms differ across
// standard libraries.
class RngStream {
 public:
  using result_type = std::uint64_t;

  explicit RngStream(std::uint64_t seed, std::uint64_t stream = 0);

  // Independent child stream; identical ids give identical children.
  [[nodiscard]] RngStream substream(std::uint64_t id) const;

  [[nodiscard]] std::uint64_t seed() const { return seed_; }
  [[nodiscard]] std::uint64_t stream() const { return stream_; }

  std::uint64_t next_u64();
  // Uniform on the open interval (0, 1).
  double uniform();
  double normal();
  // Gamma(shape, rate = 1).
  double gamma(double shape);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }
  result_type operator()() { return next_u64(); }

 private:
  void refill();

  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t block_ = 0;
  std::array<std::uint32_t, 4> buffer_{};
  int buffered_ = 0;
  std::optional<double> spare_normal_;
};

// SplitMix64 finalizer, used to derive stream ids and hashes.
std::uint64_t mix64(std::uint64_t x);

}  // namespace tpbnn
