#include "aoi/sampling.hpp"

#include <cmath>

namespace aoi {

namespace {

constexpr std::uint32_t kPhiloxM0 = 0xD2511F53u;
constexpr std::uint32_t kPhiloxM1 = 0xCD9E8D57u;
constexpr std::uint32_t kPhiloxW0 = 0x9E3779B9u;
constexpr std::uint32_t kPhiloxW1 = 0xBB67AE85u;

__extension__ typedef unsigned __int128 uint128;

constexpr double kTwoPow53Inv = 1.0 / 9007199254740992.0;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi,
                    std::uint32_t& lo) {
  std::uint64_t p = static_cast<std::uint64_t>(a) * b;
  hi = static_cast<std::uint32_t>(p >> 32);
  lo = static_cast<std::uint32_t>(p);
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

}  // namespace

std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> ctr,
                                           std::array<std::uint32_t, 2> key) {
  for (int round = 0; round < 10; ++round) {
    if (round > 0) {
      key[0] += kPhiloxW0;
      key[1] += kPhiloxW1;
    }
    std::uint32_t hi0, lo0, hi1, lo1;
    mulhilo(kPhiloxM0, ctr[0], hi0, lo0);
    mulhilo(kPhiloxM1, ctr[2], hi1, lo1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
  }
  return ctr;
}

Stream::Stream(StreamSpec spec, std::uint64_t position) noexcept
    : spec_(spec), position_(position) {}

void Stream::seek(std::uint64_t position) noexcept { position_ = position; }

void Stream::refill() noexcept {
  block_index_ = position_ >> 1;
  auto out = philox4x32_10(
      {static_cast<std::uint32_t>(block_index_),
       static_cast<std::uint32_t>(block_index_ >> 32),
       static_cast<std::uint32_t>(spec_.stream_index),
       static_cast<std::uint32_t>(spec_.stream_index >> 32)},
      {static_cast<std::uint32_t>(spec_.master_seed),
       static_cast<std::uint32_t>(spec_.master_seed >> 32)});
  block_[0] = (static_cast<std::uint64_t>(out[1]) << 32) | out[0];
  block_[1] = (static_cast<std::uint64_t>(out[3]) << 32) | out[2];
}

std::uint64_t Stream::next_u64() noexcept {
  if ((position_ >> 1) != block_index_) refill();
  return block_[position_++ & 1u];
}

double Stream::uniform() noexcept {
  return static_cast<double>(next_u64() >> 11) * kTwoPow53Inv;
}

double Stream::uniform_open() noexcept {
  double u = uniform();
  return u > 0.0 ? u : kTwoPow53Inv;
}

std::uint64_t Stream::uniform_index(std::uint64_t bound) noexcept {
  // Lemire's multiply-shift with rejection of the biased low region.
  uint128 p = static_cast<uint128>(next_u64()) * bound;
  auto low = static_cast<std::uint64_t>(p);
  if (low < bound) {
    std::uint64_t threshold = (0 - bound) % bound;
    while (low < threshold) {
      p = static_cast<uint128>(next_u64()) * bound;
      low = static_cast<std::uint64_t>(p);
    }
  }
  return static_cast<std::uint64_t>(p >> 64);
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag) noexcept {
  return splitmix64(splitmix64(base) ^ (tag * 0xD1B54A32D192ED03ull));
}

double exp_from_uniform(double u, double rate) noexcept {
  return -std::log1p(-u) / rate;
}

double max_exp_from_uniform(double u, std::uint64_t count,
                            double rate) noexcept {
  if (count == 1) return exp_from_uniform(u, rate);
  // 1 - u^{1/count} == -expm1(ln(u) / count)
  double tail = -std::expm1(std::log(u) / static_cast<double>(count));
  return -std::log(tail) / rate;
}

double sample_exp(Stream& stream, double rate) {
  return exp_from_uniform(stream.uniform_open(), rate);
}

double sample_max_exp(Stream& stream, std::uint64_t count, double rate) {
  return max_exp_from_uniform(stream.uniform_open(), count, rate);
}

double sample_min_exp(Stream& stream, std::uint64_t count, double rate) {
  return sample_exp(stream, static_cast<double>(count) * rate);
}

}  // namespace aoi
