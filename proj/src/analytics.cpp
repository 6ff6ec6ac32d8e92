#include "aoi/analytics.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numbers>
#include <shared_mutex>
#include <stdexcept>
#include <string>

namespace aoi {

void SchemeParams::validate() const {
  if (n < 1) {
    throw std::invalid_argument("n must be positive, got " + std::to_string(n));
  }
  if (m < 1 || m > n) {
    throw std::invalid_argument("M must satisfy 1 <= M <= n, got M=" +
                                std::to_string(m) +
                                " n=" + std::to_string(n));
  }
  if (n % m != 0) {
    throw std::invalid_argument("n must be a multiple of M (n=" +
                                std::to_string(n) +
                                ", M=" + std::to_string(m) + ")");
  }
  if (!(lambda_intra > 0.0) || !std::isfinite(lambda_intra) ||
      !(lambda_inter > 0.0) || !std::isfinite(lambda_inter)) {
    throw std::invalid_argument("rates must be positive and finite");
  }
}

//---------------------------------------------------------------------------//
// HarmonicTable
//---------------------------------------------------------------------------//

namespace {

// Neumaier compensated running sum.
struct CompensatedSum {
  double sum = 0.0;
  double comp = 0.0;

  void add(double x) {
    double t = sum + x;
    if (std::abs(sum) >= std::abs(x)) {
      comp += (sum - t) + x;
    } else {
      comp += (x - t) + sum;
    }
    sum = t;
  }
  double value() const { return sum + comp; }
};

double harmonic_expansion(double k) {
  double inv = 1.0 / k;
  double inv2 = inv * inv;
  return std::log(k) + std::numbers::egamma + 0.5 * inv - inv2 / 12.0 +
         inv2 * inv2 / 120.0;
}

double gen_harmonic_expansion(double k) {
  double inv = 1.0 / k;
  double inv2 = inv * inv;
  return std::numbers::pi * std::numbers::pi / 6.0 - inv + 0.5 * inv2 -
         inv2 * inv / 6.0 + inv2 * inv2 * inv / 30.0;
}

}  // namespace

struct HarmonicTable::State {
  mutable std::shared_mutex mutex;
  std::vector<double> h{0.0};
  std::vector<double> g{0.0};
  CompensatedSum h_acc;
  CompensatedSum g_acc;

  void grow_to(std::uint64_t k, std::uint64_t cap) {
    std::unique_lock lock(mutex);
    if (k < h.size()) return;
    std::uint64_t target = std::min<std::uint64_t>(
        cap, std::max<std::uint64_t>(k, 2 * h.size()));
    h.reserve(target + 1);
    g.reserve(target + 1);
    for (std::uint64_t j = h.size(); j <= target; ++j) {
      double x = static_cast<double>(j);
      h_acc.add(1.0 / x);
      g_acc.add(1.0 / (x * x));
      h.push_back(h_acc.value());
      g.push_back(g_acc.value());
    }
  }

  double lookup(const std::vector<double>& table, std::uint64_t k) const {
    std::shared_lock lock(mutex);
    return k < table.size() ? table[k] : std::nan("");
  }
};

HarmonicTable::HarmonicTable(std::uint64_t cap)
    : cap_(cap), state_(std::make_unique<State>()) {}

HarmonicTable::~HarmonicTable() = default;

double HarmonicTable::harmonic(std::uint64_t k) const {
  if (k > cap_) return harmonic_expansion(static_cast<double>(k));
  double v = state_->lookup(state_->h, k);
  if (std::isnan(v)) {
    state_->grow_to(k, cap_);
    v = state_->lookup(state_->h, k);
  }
  return v;
}

double HarmonicTable::gen_harmonic(std::uint64_t k) const {
  if (k > cap_) return gen_harmonic_expansion(static_cast<double>(k));
  double v = state_->lookup(state_->g, k);
  if (std::isnan(v)) {
    state_->grow_to(k, cap_);
    v = state_->lookup(state_->g, k);
  }
  return v;
}

const HarmonicTable& default_harmonic_table() {
  static const HarmonicTable table;
  return table;
}

double harmonic(std::uint64_t k) { return default_harmonic_table().harmonic(k); }

double gen_harmonic(std::uint64_t k) {
  return default_harmonic_table().gen_harmonic(k);
}

//---------------------------------------------------------------------------//
// Closed forms
//---------------------------------------------------------------------------//

OrderStatMoments order_stat_moments(std::int64_t k, std::int64_t n,
                                    double rate) {
  if (k < 1 || k > n) {
    throw std::domain_error("order statistic index must satisfy 1 <= k <= n (k=" +
                            std::to_string(k) + ", n=" + std::to_string(n) +
                            ")");
  }
  if (!(rate > 0.0)) {
    throw std::domain_error("rate must be positive");
  }
  auto un = static_cast<std::uint64_t>(n);
  auto rest = static_cast<std::uint64_t>(n - k);
  double h = harmonic(un) - harmonic(rest);
  double g = gen_harmonic(un) - gen_harmonic(rest);

  OrderStatMoments out;
  out.mean = h / rate;
  out.variance = g / (rate * rate);
  out.second_moment = (h * h + g) / (rate * rate);
  return out;
}

PhaseMoments phase_moments(const SchemeParams& params) {
  params.validate();
  const double n = static_cast<double>(params.n);
  const double m = static_cast<double>(params.m);
  const double lam = params.lambda_intra;
  const double lam_t = params.lambda_inter;
  const auto cells = static_cast<std::uint64_t>(params.cells());

  const double h_n = harmonic(static_cast<std::uint64_t>(params.n));
  const double h_m = harmonic(static_cast<std::uint64_t>(params.m));
  const double h_c = harmonic(cells);
  const double g_n = gen_harmonic(static_cast<std::uint64_t>(params.n));
  const double g_m = gen_harmonic(static_cast<std::uint64_t>(params.m));
  const double g_c = gen_harmonic(cells);
  const double m3 = m * m * m;

  PhaseMoments pm;
  // Y_I: M rounds of X_{n:n}.
  pm.e_y1 = m / lam * h_n;
  pm.e_y1_sq = (m * m * h_n * h_n + m * g_n) / (lam * lam);
  // Y_II: n/M cells, each the max of M exponentials of rate M^2 lambda~.
  pm.e_y2 = n / (m3 * lam_t) * h_m;
  pm.e_y2_sq = (n * n / (m3 * m3) * h_m * h_m + n / (m3 * m * m) * g_m) /
               (lam_t * lam_t);
  // Y_III: M rounds of X_{n/M:n/M}.
  pm.e_y3 = m / lam * h_c;
  pm.e_y3_sq = (m * m * h_c * h_c + m * g_c) / (lam * lam);
  // Z: j ~ U{0..M-1} full rounds, then the pair's own in-cell relay.
  pm.e_z = (m - 1.0) / (2.0 * lam) * h_c + 1.0 / lam;

  pm.e_y = pm.e_y1 + pm.e_y2 + pm.e_y3;
  pm.e_y_sq = pm.e_y1_sq + pm.e_y2_sq + pm.e_y3_sq +
              2.0 * (pm.e_y1 * pm.e_y2 + pm.e_y1 * pm.e_y3 + pm.e_y2 * pm.e_y3);
  return pm;
}

AgeBreakdown theorem1_age(const SchemeParams& params) {
  const PhaseMoments pm = phase_moments(params);
  const double two_ey = 2.0 * pm.e_y;

  AgeBreakdown out;
  out.delay_part = pm.e_y1 + pm.e_y2 + pm.e_z;
  out.renewal_part = pm.e_y_sq / two_ey;
  out.total = out.delay_part + out.renewal_part;
  out.per_term = {
      {"mean_phase1", pm.e_y1},
      {"mean_phase2", pm.e_y2},
      {"mean_residual_wait", pm.e_z},
      {"phase1_second_moment_ratio", pm.e_y1_sq / two_ey},
      {"phase2_second_moment_ratio", pm.e_y2_sq / two_ey},
      {"phase3_second_moment_ratio", pm.e_y3_sq / two_ey},
      {"cross_term_ratio",
       (pm.e_y1 * pm.e_y2 + pm.e_y1 * pm.e_y3 + pm.e_y2 * pm.e_y3) / pm.e_y},
  };
  return out;
}

double theorem2_age(std::int64_t n, double b, double lambda_intra,
                    double lambda_inter) {
  if (n < 2) throw std::domain_error("n must be at least 2");
  if (!(b > 0.0) || b > 1.0) throw std::domain_error("b must lie in (0, 1]");
  if (!(lambda_intra > 0.0) || !(lambda_inter > 0.0)) {
    throw std::domain_error("rates must be positive");
  }
  const double nn = static_cast<double>(n);
  const double lam = lambda_intra;
  const double lam_t = lambda_inter;
  const double log_n = std::log(nn);
  const double log2_n = log_n * log_n;
  const double zeta2 = std::numbers::pi * std::numbers::pi / 6.0;
  const double nb = std::pow(nn, b);
  // n / n^{3b}, n^2 / n^{6b}, n / n^{5b}, n / n^{2b}
  const double inter1 = std::pow(nn, 1.0 - 3.0 * b);
  const double inter2 = inter1 * inter1;
  const double inter_sq = std::pow(nn, 1.0 - 5.0 * b);
  const double cross = std::pow(nn, 1.0 - 2.0 * b);

  const double e_y = nb / lam * log_n + inter1 / lam_t * b * log_n +
                     nb / lam * (1.0 - b) * log_n;

  double age = nb / lam * log_n + inter1 / lam_t * b * log_n +
               (nb - 1.0) / (2.0 * lam) * (1.0 - b) * log_n + 1.0 / lam;
  age += (nb * nb / (lam * lam) * log2_n + nb / (lam * lam) * zeta2) / (2.0 * e_y);
  age += (inter2 / (lam_t * lam_t) * b * b * log2_n +
          inter_sq / (lam_t * lam_t) * zeta2) /
         (2.0 * e_y);
  age += (nb * nb / (lam * lam) * (1.0 - b) * (1.0 - b) * log2_n +
          nb / (lam * lam) * zeta2) /
         (2.0 * e_y);
  age += (cross / (lam * lam_t) * b * log2_n +
          nb * nb / (lam * lam) * (1.0 - b) * log2_n) /
         e_y;
  age += cross / (lam * lam_t) * b * (1.0 - b) * log2_n / e_y;
  return age;
}

double theorem3_exponent(double b) {
  if (!(b > 0.0) || b > 1.0) throw std::domain_error("b must lie in (0, 1]");
  return std::max(b, 1.0 - 3.0 * b);
}

}  // namespace aoi
