#include "scalefield/rng.hpp"

#include <cmath>
#include <numbers>

namespace scalefield {

namespace {

constexpr std::uint32_t kMultiplier0 = 0xD2511F53u;
constexpr std::uint32_t kMultiplier1 = 0xCD9E8D57u;
constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
  const std::uint64_t p = std::uint64_t(a) * b;
  hi = std::uint32_t(p >> 32);
  lo = std::uint32_t(p);
}

inline double to_unit(std::uint32_t hi, std::uint32_t lo) {
  // 53 bits, mapped to (0, 1]
  const std::uint64_t bits = (std::uint64_t(hi) << 21) ^ (std::uint64_t(lo) >> 11);
  return (double(bits & ((std::uint64_t(1) << 53) - 1)) + 1.0) * 0x1.0p-53;
}

}  // namespace

PhiloxCounter philox4x32_10(PhiloxCounter c, PhiloxKey k) noexcept {
  for (int round = 0; round < 10; ++round) {
    std::uint32_t hi0, lo0, hi1, lo1;
    mulhilo(kMultiplier0, c[0], hi0, lo0);
    mulhilo(kMultiplier1, c[2], hi1, lo1);
    c = {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
    k[0] += kWeyl0;
    k[1] += kWeyl1;
  }
  return c;
}

CounterStream::CounterStream(std::uint64_t seed, std::uint64_t replica,
                             StreamPurpose purpose) noexcept
    : seed_(seed),
      replica_(replica),
      key_{std::uint32_t(seed), std::uint32_t(seed >> 32)},
      c0_(std::uint32_t(replica)),
      c1_((std::uint32_t(purpose) << 24) ^ std::uint32_t((replica >> 32) & 0xFFFFFFu)) {}

PhiloxCounter CounterStream::raw(std::uint32_t a, std::uint32_t b) const noexcept {
  return philox4x32_10({c0_, c1_, a, b}, key_);
}

std::array<double, 2> CounterStream::uniform_pair(std::uint32_t a, std::uint32_t b) const noexcept {
  const PhiloxCounter r = raw(a, b);
  return {to_unit(r[0], r[1]), to_unit(r[2], r[3])};
}

std::array<double, 2> CounterStream::normal_pair(std::uint32_t a, std::uint32_t b) const noexcept {
  const auto [u1, u2] = uniform_pair(a, b);
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  return {radius * std::cos(angle), radius * std::sin(angle)};
}

}  // namespace scalefield
