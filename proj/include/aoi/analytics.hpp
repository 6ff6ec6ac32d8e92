#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace aoi {

//! Parameters of the three-phase scheme: n nodes split into n/M cells of M
//! nodes, intra-cell delays Exp(lambda_intra), inter-cell delays
//! Exp(lambda_inter).
struct SchemeParams {
  std::int64_t n = 0;
  std::int64_t m = 0;
  double lambda_intra = 1.0;
  double lambda_inter = 1.0;

  std::int64_t cells() const noexcept { return n / m; }

  //! Throws std::invalid_argument unless 1 <= M <= n, n % M == 0 and both
  //! rates are positive and finite.
  void validate() const;
};

struct OrderStatMoments {
  double mean = 0.0;
  double variance = 0.0;
  double second_moment = 0.0;
};

struct PhaseMoments {
  double e_y1 = 0.0;
  double e_y2 = 0.0;
  double e_y3 = 0.0;
  double e_y1_sq = 0.0;
  double e_y2_sq = 0.0;
  double e_y3_sq = 0.0;
  double e_z = 0.0;
  double e_y = 0.0;
  double e_y_sq = 0.0;
};

struct AgeTerm {
  std::string label;
  double value = 0.0;
};

struct AgeBreakdown {
  double total = 0.0;
  double delay_part = 0.0;    // E[Y_I] + E[Y_II] + E[Z]
  double renewal_part = 0.0;  // E[Y^2] / (2 E[Y])
  std::vector<AgeTerm> per_term;
};

//---------------------------------------------------------------------------//
// Harmonic sums
//---------------------------------------------------------------------------//

/*!
 * Memoized prefix tables of H_k = sum 1/j and G_k = sum 1/j^2.
 *
 * Tables grow on demand (compensated ascending summation) up to `cap`
 * entries; larger arguments use the asymptotic expansions, whose truncation
 * error is below 1e-20 relative past 10^7. Reads are lock-shared, growth is
 * exclusive, so one table can serve any number of threads.
 */
class HarmonicTable {
 public:
  static constexpr std::uint64_t default_cap = 10'000'000;

  explicit HarmonicTable(std::uint64_t cap = default_cap);
  ~HarmonicTable();
  HarmonicTable(const HarmonicTable&) = delete;
  HarmonicTable& operator=(const HarmonicTable&) = delete;

  double harmonic(std::uint64_t k) const;
  double gen_harmonic(std::uint64_t k) const;
  std::uint64_t cap() const noexcept { return cap_; }

 private:
  struct State;
  std::uint64_t cap_;
  std::unique_ptr<State> state_;
};

//! Process-wide table used by the free functions below.
const HarmonicTable& default_harmonic_table();

//! H_k; harmonic(0) == 0.
double harmonic(std::uint64_t k);
//! G_k; gen_harmonic(0) == 0.
double gen_harmonic(std::uint64_t k);

//---------------------------------------------------------------------------//
// Closed forms
//---------------------------------------------------------------------------//

//! Moments of the k-th smallest of n i.i.d. Exp(rate) variables.
//! Throws std::domain_error unless 1 <= k <= n and rate > 0.
OrderStatMoments order_stat_moments(std::int64_t k, std::int64_t n,
                                    double rate);

//! First and second moments of the three (worsened) phase durations and of
//! the residual Phase-III wait Z.
PhaseMoments phase_moments(const SchemeParams& params);

/*!
 * Exact average age of one S-D pair under the worsened scheme.
 *
 * per_term holds seven entries in display order: E[Y_I], E[Y_II], E[Z],
 * the three E[Y_k^2]/(2E[Y]) terms and the cross term
 * (sum of pairwise E[Y_a]E[Y_b]) / E[Y].
 */
AgeBreakdown theorem1_age(const SchemeParams& params);

//! Large-n approximation with M = n^b taken as exact (no rounding), H_n ~
//! ln n, H_M ~ b ln n, H_{n/M} ~ (1-b) ln n and G ~ pi^2/6.
//! Throws std::domain_error unless n >= 2, 0 < b <= 1 and rates > 0.
double theorem2_age(std::int64_t n, double b, double lambda_intra,
                    double lambda_inter);

//! Dominant polynomial exponent max(b, 1 - 3b) of the age in n.
//! Throws std::domain_error outside 0 < b <= 1.
double theorem3_exponent(double b);

}  // namespace aoi
