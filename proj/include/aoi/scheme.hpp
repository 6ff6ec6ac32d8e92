#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "aoi/analytics.hpp"
#include "aoi/sampling.hpp"

namespace aoi {

enum class Variant { exact, worsened, round_robin };
enum class DeliveryMode { paper_independent, coupled };
enum class EstimatorMethod { moment_formula, timeline };

std::string_view to_string(Variant v);
std::string_view to_string(DeliveryMode m);
std::string_view to_string(EstimatorMethod m);
//! Accepts "exact" / "worsened" / "round_robin".
std::optional<Variant> parse_variant(std::string_view s);
//! Accepts "paper" / "paper_independent" / "coupled".
std::optional<DeliveryMode> parse_delivery(std::string_view s);

//! One session of the scheme as seen by the tagged S-D pair.
struct SessionSample {
  double y1 = 0.0;  // Phase I duration
  double y2 = 0.0;  // Phase II duration
  double y3 = 0.0;  // Phase III duration
  double z = 0.0;   // wait after Phase II until delivery
  double d = 0.0;   // delivery delay, y1 + y2 + z
  double y = 0.0;   // session length, y1 + y2 + y3
  Variant variant = Variant::worsened;
  DeliveryMode delivery = DeliveryMode::paper_independent;
};

//---------------------------------------------------------------------------//
// Session samplers
//---------------------------------------------------------------------------//

//! Lemma-bounded phases: Y_I = sum of M draws of X_{n:n}, Y_II = sum over
//! n/M cells of the max of M Exp(M^2 lambda~), Y_III = sum of M draws of
//! X_{n/M:n/M}.
SessionSample sample_session_worsened(
    const SchemeParams& params, Stream& stream,
    DeliveryMode delivery = DeliveryMode::paper_independent);

//! Cells run Phases I and III independently; each phase ends with its
//! slowest cell. The tagged destination lives in cell 0. At M = 1 the
//! per-cell Phase I time is zero.
SessionSample sample_session_exact(
    const SchemeParams& params, Stream& stream,
    DeliveryMode delivery = DeliveryMode::paper_independent);

/*!
 * Exact and worsened sessions driven by one shared pool of per-(round,
 * cell, receiver) exponentials.
 *
 * Phase I round i draws n delays: M-1 receivers in each of the n/M cells
 * plus n/M padding draws, so the worsened round (max over the pool) is
 * X_{n:n} as in the lemma while each exact cell sees only its own M-1
 * receivers. Phase III round i draws one relay delay per cell. Phase II
 * and the delivery position are shared. Guarantees exact.y1 <= worsened.y1
 * and exact.y3 <= worsened.y3 on every path. Requires M >= 2.
 */
std::pair<SessionSample, SessionSample> sample_coupled_sessions(
    const SchemeParams& params, Stream& stream,
    DeliveryMode delivery = DeliveryMode::paper_independent);

/*!
 * Residual wait Z of the tagged pair inside Phase III.
 *
 * `y3_partials[j]` is the time Phase III has run when round j+1 starts
 * (so y3_partials[0] == 0) and `y3` is the phase total; `round_width` is
 * how many parallel relays each round waits for (n/M for the worsened
 * rounds, 1 for a single cell's own trace). A position j is drawn uniformly
 * from {0..M-1}; paper_independent adds a fresh Exp(lambda), coupled adds
 * the pair's own relay delay inside round j+1 and never exceeds y3.
 * Throws std::invalid_argument unless y3_partials has exactly M entries.
 */
double sample_delivery(const SchemeParams& params, Stream& stream,
                       std::span<const double> y3_partials, double y3,
                       DeliveryMode mode, std::uint64_t round_width);

//! Round-robin baseline: n sequential Exp(rate) transmissions per session;
//! the tagged pair sits at a uniform position j and D sums the first j.
SessionSample sample_round_robin(std::int64_t n, double rate, Stream& stream);

//! Closed-form round-robin age (n + 1) / rate.
double round_robin_age(std::int64_t n, double rate);

//---------------------------------------------------------------------------//
// Accumulators and estimators
//---------------------------------------------------------------------------//

struct MomentSummary {
  std::uint64_t count = 0;
  double sum_y = 0.0;
  double sum_y_sq = 0.0;
  double sum_d = 0.0;
  double sum_d_sq = 0.0;
  double sum_dy = 0.0;
  // Per-phase sums for checking the closed-form phase moments.
  double sum_y1 = 0.0, sum_y1_sq = 0.0;
  double sum_y2 = 0.0, sum_y2_sq = 0.0;
  double sum_y3 = 0.0, sum_y3_sq = 0.0;
  double sum_z = 0.0, sum_z_sq = 0.0;

  void add(const SessionSample& s) noexcept;
  void merge(const MomentSummary& other) noexcept;
};

//! Pairwise tree reduction in index order; the result depends only on the
//! order of `parts`.
MomentSummary tree_reduce(std::span<const MomentSummary> parts);

/*!
 * Streaming sawtooth integrator.
 *
 * Tracks the area under the age curve between the first and last delivery
 * of a run of consecutive sessions. Two accumulators over adjacent runs
 * merge into the accumulator of the concatenated run.
 */
class TimelineAccumulator {
 public:
  void append(const SessionSample& s) noexcept;
  void merge(const TimelineAccumulator& next) noexcept;

  std::uint64_t sessions() const noexcept { return count_; }
  double area() const noexcept { return area_; }
  double length() const noexcept { return length_; }
  //! area / length; NaN with fewer than two sessions.
  double average_age() const noexcept;

 private:
  std::uint64_t count_ = 0;
  double first_d_ = 0.0;
  double last_y_ = 0.0;
  double last_d_ = 0.0;
  double area_ = 0.0;
  double length_ = 0.0;
};

struct AgeEstimate {
  double delta_hat = 0.0;
  double std_err = 0.0;
  EstimatorMethod method = EstimatorMethod::moment_formula;
  std::uint64_t sessions = 0;
};

//! Renewal-reward estimate E[D] + E[Y^2] / (2 E[Y]) from batch summaries;
//! std_err by batch means (NaN with fewer than two batches).
//! Throws std::invalid_argument when fewer than two sessions in total.
AgeEstimate estimate_age_moment_formula(std::span<const MomentSummary> batches);
AgeEstimate estimate_age_moment_formula(const MomentSummary& summary);

//! Timeline estimate from per-batch accumulators over consecutive runs.
AgeEstimate estimate_age_timeline(std::span<const TimelineAccumulator> batches);

/*!
 * Time-average age by direct integration of the sawtooth over an ordered
 * run of sessions. Session j starts at T_{j-1} and delivers at
 * T_{j-1} + D_j, where the age drops to D_j. std_err uses `batches`
 * contiguous batches. Throws std::invalid_argument for fewer than two
 * sessions or any session not sampled with coupled delivery.
 */
AgeEstimate integrate_age_timeline(std::span<const SessionSample> sessions,
                                   unsigned batches = 32);

//---------------------------------------------------------------------------//
// Parallel driver
//---------------------------------------------------------------------------//

struct SimulationConfig {
  SchemeParams params;
  std::uint64_t sessions = 100'000;
  Variant variant = Variant::worsened;
  DeliveryMode delivery = DeliveryMode::paper_independent;
  std::uint64_t master_seed = 1;
  unsigned workers = 1;
  unsigned batches = 32;
  bool timeline = false;
};

struct SimulationResult {
  std::vector<MomentSummary> batches;
  std::vector<TimelineAccumulator> timeline_batches;
  MomentSummary total;
  AgeEstimate moment;
  std::optional<AgeEstimate> timeline;
};

/*!
 * Runs `sessions` sessions split into contiguous batches. Session i uses
 * stream (master_seed, i). Workers pull whole batches, so every output is
 * bit-identical for any worker count. Round-robin uses params.n and
 * params.lambda_intra. Timeline integration requires coupled delivery.
 */
SimulationResult simulate(const SimulationConfig& config);

//! Samples one session of `config`'s variant from session index `index`.
SessionSample sample_indexed_session(const SimulationConfig& config,
                                     std::uint64_t index);

//! CSV dump with header session_index,variant,y1,y2,y3,z,d,y.
void write_session_dump(std::ostream& out, std::span<const SessionSample> s,
                        std::uint64_t first_index = 0);

}  // namespace aoi
