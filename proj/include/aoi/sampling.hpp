#pragma once

#include <array>
#include <cstdint>
#include <limits>

namespace aoi {

//! (master_seed, stream_index) fully determines a stream's output.
struct StreamSpec {
  std::uint64_t master_seed = 0;
  std::uint64_t stream_index = 0;

  friend bool operator==(const StreamSpec&, const StreamSpec&) = default;
};

//! Philox4x32-10 block function (Salmon et al., SC'11).
std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> ctr,
                                           std::array<std::uint32_t, 2> key);

/*!
 * Counter-based random stream.
 *
 * Word w of stream (seed, index) is half of the Philox block keyed by
 * `seed` at counter (w / 2, index), so any position can be reconstructed
 * without replaying earlier draws. Satisfies UniformRandomBitGenerator.
 */
class Stream {
 public:
  using result_type = std::uint64_t;

  explicit Stream(StreamSpec spec, std::uint64_t position = 0) noexcept;

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept {
    return std::numeric_limits<result_type>::max();
  }

  result_type operator()() noexcept { return next_u64(); }
  std::uint64_t next_u64() noexcept;

  //! Uniform on [0, 1) with 53 random bits.
  double uniform() noexcept;
  //! Uniform on (0, 1): zero is remapped to 2^-53.
  double uniform_open() noexcept;
  //! Unbiased integer in [0, bound); bound must be positive.
  std::uint64_t uniform_index(std::uint64_t bound) noexcept;

  //! Number of 64-bit words consumed so far.
  std::uint64_t position() const noexcept { return position_; }
  void seek(std::uint64_t position) noexcept;
  const StreamSpec& spec() const noexcept { return spec_; }

 private:
  void refill() noexcept;

  StreamSpec spec_;
  std::uint64_t position_ = 0;
  std::array<std::uint64_t, 2> block_{};
  std::uint64_t block_index_ = std::numeric_limits<std::uint64_t>::max();
};

inline Stream make_stream(StreamSpec spec) { return Stream(spec); }

//! Derives an independent 64-bit seed from a base seed and a tag.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag) noexcept;

//---------------------------------------------------------------------------//
// Exponential variates (inverse CDF, one uniform per draw)
//---------------------------------------------------------------------------//

//! -ln(1 - U) / rate.
double sample_exp(Stream& stream, double rate);

//! Maximum of `count` i.i.d. Exp(rate): -ln(1 - U^{1/count}) / rate,
//! evaluated through log/expm1 so large counts stay finite.
double sample_max_exp(Stream& stream, std::uint64_t count, double rate);

//! Minimum of `count` i.i.d. Exp(rate), i.e. Exp(count * rate).
double sample_min_exp(Stream& stream, std::uint64_t count, double rate);

//! Inverse-CDF transforms used by the samplers; exposed for paired-draw
//! comparisons from one uniform.
double exp_from_uniform(double u, double rate) noexcept;
double max_exp_from_uniform(double u, std::uint64_t count, double rate) noexcept;

}  // namespace aoi
