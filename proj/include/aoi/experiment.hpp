#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "aoi/scheme.hpp"

namespace aoi {

//! Bad configuration or arguments (CLI exit code 1).
struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
//! Filesystem failure with path context (CLI exit code 3).
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

//---------------------------------------------------------------------------//
// Cell size selection
//---------------------------------------------------------------------------//

struct CellChoice {
  std::int64_t m = 0;
  std::int64_t target = 0;   // round(n^b)
  double b_effective = 0.0;  // ln M / ln n
  bool adjusted = false;     // m != target
};

/*!
 * Divisor of n closest to round(n^b) in ratio (|ln(d / target)|), ties to
 * the smaller divisor. nullopt when no divisor lies within +-50% of n^b.
 */
std::optional<CellChoice> select_cell_size(std::int64_t n, double b);

//---------------------------------------------------------------------------//
// Sweeps
//---------------------------------------------------------------------------//

struct SweepConfig {
  std::vector<std::int64_t> n_grid;
  double b = 0.25;
  double lambda_intra = 1.0;
  double lambda_inter = 1.0;
  std::uint64_t sessions = 100'000;
  std::uint64_t master_seed = 1;
  Variant variant = Variant::worsened;
  DeliveryMode delivery_mode = DeliveryMode::paper_independent;
  bool baseline = false;

  bool simulate = true;
  std::int64_t simulate_max_n = 0;       // 0: no limit
  std::uint64_t baseline_sessions = 0;   // 0: same as sessions
  std::optional<double> baseline_rate;   // default lambda_inter
  unsigned workers = 1;
  unsigned batches = 32;
  bool record_wall_time = false;

  //! Throws ConfigError.
  void validate() const;
};

//! Flat key=value text (# comments) or a JSON object; unknown keys throw
//! ConfigError.
SweepConfig parse_sweep_config(std::string_view text);
SweepConfig load_sweep_config(const std::filesystem::path& path);

struct SweepRow {
  std::int64_t n = 0;
  std::optional<std::int64_t> m;
  std::optional<double> b_effective;
  std::optional<std::uint64_t> sessions;
  std::optional<double> delta_analytic;
  std::optional<double> delta_sim;
  std::optional<double> delta_sim_stderr;
  std::optional<double> delta_timeline;
  std::optional<double> delta_baseline;
  std::optional<double> wall_time_s;

  // Not serialized.
  bool flagged = false;
  std::string note;
};

std::vector<SweepRow> run_sweep(const SweepConfig& config);

inline constexpr std::string_view kSweepCsvHeader =
    "n,M,b_effective,sessions,delta_analytic,delta_sim,delta_sim_stderr,"
    "delta_timeline,delta_baseline,wall_time_s";

void write_sweep_csv(std::ostream& out, std::span<const SweepRow> rows);
std::vector<SweepRow> read_sweep_csv(std::istream& in);

//---------------------------------------------------------------------------//
// Fits and reports
//---------------------------------------------------------------------------//

enum class SweepColumn { delta_analytic, delta_sim, delta_timeline, delta_baseline };
std::string_view to_string(SweepColumn c);

struct SlopeFit {
  SweepColumn column = SweepColumn::delta_analytic;
  bool log_correction = false;
  double exponent = 0.0;  // slope of the requested fit
  double intercept = 0.0;
  double r_squared = 0.0;
  std::int64_t n_min = 0;
  std::int64_t n_max = 0;
  double log_corrected_exponent = 0.0;  // slope of ln value - ln ln n
};

/*!
 * Least squares of ln(value) (minus ln ln n with `log_correction`) on ln n
 * over rows carrying `column`. Throws std::invalid_argument with fewer than
 * three such rows, a non-positive value or n < 2.
 */
SlopeFit fit_slope(std::span<const SweepRow> rows, SweepColumn column,
                   bool log_correction);

//! Plain-text summary; ends with the predicted exponent max(b, 1-3b).
std::string format_summary(std::span<const SweepRow> rows,
                           std::span<const SlopeFit> fits, double b);

//! Writes <dir>/sweep.csv and <dir>/summary.txt; throws IoError.
void emit_report(std::span<const SweepRow> rows, std::span<const SlopeFit> fits,
                 double b, const std::filesystem::path& dir);

}  // namespace aoi
