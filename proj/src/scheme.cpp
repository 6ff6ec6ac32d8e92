#include "aoi/scheme.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <ostream>
#include <stdexcept>
#include <string>
#include <thread>

#include "aoi/number_format.hpp"

namespace aoi {

std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::exact: return "exact";
    case Variant::worsened: return "worsened";
    case Variant::round_robin: return "round_robin";
  }
  return "unknown";
}

std::string_view to_string(DeliveryMode m) {
  return m == DeliveryMode::coupled ? "coupled" : "paper_independent";
}

std::string_view to_string(EstimatorMethod m) {
  return m == EstimatorMethod::timeline ? "timeline" : "moment_formula";
}

std::optional<Variant> parse_variant(std::string_view s) {
  if (s == "exact") return Variant::exact;
  if (s == "worsened") return Variant::worsened;
  if (s == "round_robin") return Variant::round_robin;
  return std::nullopt;
}

std::optional<DeliveryMode> parse_delivery(std::string_view s) {
  if (s == "paper" || s == "paper_independent") {
    return DeliveryMode::paper_independent;
  }
  if (s == "coupled") return DeliveryMode::coupled;
  return std::nullopt;
}

namespace {

void finish(SessionSample& s) {
  const double head = s.y1 + s.y2;
  s.d = head + s.z;
  s.y = head + s.y3;
}

double sample_phase2(const SchemeParams& p, Stream& stream) {
  // Each source needs the first of M^2 copies, Exp(M^2 lambda~); the cell
  // waits for its slowest source. Cells go one at a time in index order.
  const auto m = static_cast<std::uint64_t>(p.m);
  const double rate = static_cast<double>(p.m) * static_cast<double>(p.m) *
                      p.lambda_inter;
  double total = 0.0;
  for (std::int64_t c = 0; c < p.cells(); ++c) {
    total += sample_max_exp(stream, m, rate);
  }
  return total;
}

// Exp(rate) conditioned on being below `bound`.
double sample_exp_below(Stream& stream, double rate, double bound) {
  const double mass = -std::expm1(-rate * bound);
  return -std::log1p(-stream.uniform_open() * mass) / rate;
}

std::vector<double>& scratch(int slot) {
  thread_local std::vector<double> buffers[4];
  return buffers[slot];
}

}  // namespace

SessionSample sample_session_worsened(const SchemeParams& params,
                                      Stream& stream, DeliveryMode delivery) {
  params.validate();
  const auto n = static_cast<std::uint64_t>(params.n);
  const auto cells = static_cast<std::uint64_t>(params.cells());
  const double lam = params.lambda_intra;

  SessionSample s;
  s.variant = Variant::worsened;
  s.delivery = delivery;
  for (std::int64_t i = 0; i < params.m; ++i) {
    s.y1 += sample_max_exp(stream, n, lam);
  }
  s.y2 = sample_phase2(params, stream);

  auto& partials = scratch(0);
  partials.resize(static_cast<std::size_t>(params.m));
  double acc = 0.0;
  for (std::int64_t i = 0; i < params.m; ++i) {
    partials[static_cast<std::size_t>(i)] = acc;
    acc += sample_max_exp(stream, cells, lam);
  }
  s.y3 = acc;
  s.z = sample_delivery(params, stream, partials, s.y3, delivery, cells);
  finish(s);
  return s;
}

SessionSample sample_session_exact(const SchemeParams& params, Stream& stream,
                                   DeliveryMode delivery) {
  params.validate();
  const double lam = params.lambda_intra;
  const auto m = static_cast<std::size_t>(params.m);

  SessionSample s;
  s.variant = Variant::exact;
  s.delivery = delivery;
  if (params.m >= 2) {
    const auto receivers = static_cast<std::uint64_t>(params.m - 1);
    for (std::int64_t c = 0; c < params.cells(); ++c) {
      double cell = 0.0;
      for (std::size_t i = 0; i < m; ++i) {
        cell += sample_max_exp(stream, receivers, lam);
      }
      s.y1 = std::max(s.y1, cell);
    }
  }
  s.y2 = sample_phase2(params, stream);

  // Cell 0 holds the tagged destination; keep its relay trace.
  auto& partials = scratch(0);
  partials.resize(m);
  double tagged_total = 0.0;
  for (std::int64_t c = 0; c < params.cells(); ++c) {
    double cell = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      if (c == 0) partials[i] = cell;
      cell += sample_exp(stream, lam);
    }
    if (c == 0) tagged_total = cell;
    s.y3 = std::max(s.y3, cell);
  }
  s.z = sample_delivery(params, stream, partials, tagged_total, delivery, 1);
  finish(s);
  return s;
}

std::pair<SessionSample, SessionSample> sample_coupled_sessions(
    const SchemeParams& params, Stream& stream, DeliveryMode delivery) {
  params.validate();
  if (params.m < 2) {
    throw std::invalid_argument("coupled sessions need M >= 2");
  }
  const double lam = params.lambda_intra;
  const auto m = static_cast<std::size_t>(params.m);
  const auto cells = static_cast<std::size_t>(params.cells());

  SessionSample exact;
  SessionSample worse;
  exact.variant = Variant::exact;
  worse.variant = Variant::worsened;
  exact.delivery = worse.delivery = delivery;

  auto& cell_sum = scratch(0);
  cell_sum.assign(cells, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double round_max = 0.0;
    for (std::size_t c = 0; c < cells; ++c) {
      double cell_max = 0.0;
      for (std::size_t r = 0; r + 1 < m; ++r) {
        cell_max = std::max(cell_max, sample_exp(stream, lam));
      }
      cell_sum[c] += cell_max;
      round_max = std::max(round_max, cell_max);
    }
    // Padding brings the pool from (n/M)(M-1) to n receivers.
    for (std::size_t p = 0; p < cells; ++p) {
      round_max = std::max(round_max, sample_exp(stream, lam));
    }
    worse.y1 += round_max;
  }
  exact.y1 = *std::max_element(cell_sum.begin(), cell_sum.end());

  exact.y2 = worse.y2 = sample_phase2(params, stream);

  auto& w_partials = scratch(1);
  auto& e_partials = scratch(2);
  auto& own = scratch(3);
  w_partials.resize(m);
  e_partials.resize(m);
  own.resize(m);
  cell_sum.assign(cells, 0.0);
  double w_acc = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    w_partials[i] = w_acc;
    e_partials[i] = cell_sum[0];
    double round_max = 0.0;
    for (std::size_t c = 0; c < cells; ++c) {
      double x = sample_exp(stream, lam);
      if (c == 0) own[i] = x;
      cell_sum[c] += x;
      round_max = std::max(round_max, x);
    }
    w_acc += round_max;
  }
  worse.y3 = w_acc;
  exact.y3 = *std::max_element(cell_sum.begin(), cell_sum.end());

  const auto j = static_cast<std::size_t>(stream.uniform_index(m));
  if (delivery == DeliveryMode::paper_independent) {
    const double x = sample_exp(stream, lam);
    worse.z = w_partials[j] + x;
    exact.z = e_partials[j] + x;
  } else {
    const double w_end = j + 1 < m ? w_partials[j + 1] : worse.y3;
    const double e_end = j + 1 < m ? e_partials[j + 1] : cell_sum[0];
    worse.z = std::min(w_partials[j] + own[j], w_end);
    exact.z = std::min(e_partials[j] + own[j], e_end);
  }
  finish(exact);
  finish(worse);
  return {exact, worse};
}

double sample_delivery(const SchemeParams& params, Stream& stream,
                       std::span<const double> y3_partials, double y3,
                       DeliveryMode mode, std::uint64_t round_width) {
  if (y3_partials.size() != static_cast<std::size_t>(params.m)) {
    throw std::invalid_argument(
        "y3_partials must have M=" + std::to_string(params.m) +
        " entries, got " + std::to_string(y3_partials.size()));
  }
  const double lam = params.lambda_intra;
  const auto m = y3_partials.size();
  const auto j = static_cast<std::size_t>(stream.uniform_index(m));
  const double start = y3_partials[j];
  if (mode == DeliveryMode::paper_independent) {
    return start + sample_exp(stream, lam);
  }

  const double end = j + 1 < m ? y3_partials[j + 1] : y3;
  const double round = end - start;
  double own = round;
  // The pair's draw is the round maximum with probability 1/width, otherwise
  // one of the others, which are i.i.d. Exp(lambda) below the maximum.
  if (round_width > 1 && stream.uniform_index(round_width) != 0) {
    own = sample_exp_below(stream, lam, round);
  }
  return std::min(start + own, end);
}

SessionSample sample_round_robin(std::int64_t n, double rate, Stream& stream) {
  if (n < 1) throw std::invalid_argument("round robin needs n >= 1");
  if (!(rate > 0.0)) throw std::invalid_argument("rate must be positive");
  SessionSample s;
  s.variant = Variant::round_robin;
  s.delivery = DeliveryMode::coupled;
  const auto position = static_cast<std::int64_t>(
      stream.uniform_index(static_cast<std::uint64_t>(n)));
  double total = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    total += sample_exp(stream, rate);
    if (i == position) s.z = total;
  }
  s.y3 = total;
  finish(s);
  return s;
}

double round_robin_age(std::int64_t n, double rate) {
  return (static_cast<double>(n) + 1.0) / rate;
}

//---------------------------------------------------------------------------//
// Accumulators
//---------------------------------------------------------------------------//

void MomentSummary::add(const SessionSample& s) noexcept {
  ++count;
  sum_y += s.y;
  sum_y_sq += s.y * s.y;
  sum_d += s.d;
  sum_d_sq += s.d * s.d;
  sum_dy += s.d * s.y;
  sum_y1 += s.y1;
  sum_y1_sq += s.y1 * s.y1;
  sum_y2 += s.y2;
  sum_y2_sq += s.y2 * s.y2;
  sum_y3 += s.y3;
  sum_y3_sq += s.y3 * s.y3;
  sum_z += s.z;
  sum_z_sq += s.z * s.z;
}

void MomentSummary::merge(const MomentSummary& o) noexcept {
  count += o.count;
  sum_y += o.sum_y;
  sum_y_sq += o.sum_y_sq;
  sum_d += o.sum_d;
  sum_d_sq += o.sum_d_sq;
  sum_dy += o.sum_dy;
  sum_y1 += o.sum_y1;
  sum_y1_sq += o.sum_y1_sq;
  sum_y2 += o.sum_y2;
  sum_y2_sq += o.sum_y2_sq;
  sum_y3 += o.sum_y3;
  sum_y3_sq += o.sum_y3_sq;
  sum_z += o.sum_z;
  sum_z_sq += o.sum_z_sq;
}

MomentSummary tree_reduce(std::span<const MomentSummary> parts) {
  if (parts.empty()) return {};
  if (parts.size() == 1) return parts.front();
  const auto mid = parts.size() / 2;
  MomentSummary left = tree_reduce(parts.first(mid));
  left.merge(tree_reduce(parts.subspan(mid)));
  return left;
}

void TimelineAccumulator::append(const SessionSample& s) noexcept {
  if (count_ == 0) {
    first_d_ = s.d;
  } else {
    // Previous delivery at age last_d_; next one arrives last_y_ + s.d after
    // the previous session started, where the age drops to s.d.
    const double peak = last_y_ + s.d;
    const double width = peak - last_d_;
    area_ += width * (last_d_ + peak) / 2.0;
    length_ += width;
  }
  last_y_ = s.y;
  last_d_ = s.d;
  ++count_;
}

void TimelineAccumulator::merge(const TimelineAccumulator& next) noexcept {
  if (next.count_ == 0) return;
  if (count_ == 0) {
    *this = next;
    return;
  }
  const double peak = last_y_ + next.first_d_;
  const double width = peak - last_d_;
  area_ += width * (last_d_ + peak) / 2.0 + next.area_;
  length_ += width + next.length_;
  last_y_ = next.last_y_;
  last_d_ = next.last_d_;
  count_ += next.count_;
}

double TimelineAccumulator::average_age() const noexcept {
  if (count_ < 2 || !(length_ > 0.0)) return std::nan("");
  return area_ / length_;
}

namespace {

double moment_delta(const MomentSummary& s) {
  const double c = static_cast<double>(s.count);
  return s.sum_d / c + (s.sum_y_sq / c) / (2.0 * (s.sum_y / c));
}

double batch_std_err(const std::vector<double>& values) {
  if (values.size() < 2) return std::nan("");
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  const double k = static_cast<double>(values.size());
  return std::sqrt(ss / (k - 1.0) / k);
}

}  // namespace

AgeEstimate estimate_age_moment_formula(std::span<const MomentSummary> batches) {
  const MomentSummary total = tree_reduce(batches);
  if (total.count < 2) {
    throw std::invalid_argument("moment estimate needs at least two sessions");
  }
  std::vector<double> per_batch;
  for (const auto& b : batches) {
    if (b.count > 0 && b.sum_y > 0.0) per_batch.push_back(moment_delta(b));
  }
  AgeEstimate est;
  est.delta_hat = moment_delta(total);
  est.std_err = batch_std_err(per_batch);
  est.method = EstimatorMethod::moment_formula;
  est.sessions = total.count;
  return est;
}

AgeEstimate estimate_age_moment_formula(const MomentSummary& summary) {
  return estimate_age_moment_formula(std::span<const MomentSummary>(&summary, 1));
}

AgeEstimate estimate_age_timeline(std::span<const TimelineAccumulator> batches) {
  TimelineAccumulator total;
  std::vector<double> per_batch;
  for (const auto& b : batches) {
    total.merge(b);
    if (b.sessions() >= 2) per_batch.push_back(b.average_age());
  }
  if (total.sessions() < 2) {
    throw std::invalid_argument("timeline estimate needs at least two sessions");
  }
  AgeEstimate est;
  est.delta_hat = total.average_age();
  est.std_err = batch_std_err(per_batch);
  est.method = EstimatorMethod::timeline;
  est.sessions = total.sessions();
  return est;
}

AgeEstimate integrate_age_timeline(std::span<const SessionSample> sessions,
                                   unsigned batches) {
  if (sessions.size() < 2) {
    throw std::invalid_argument("timeline integration needs >= 2 sessions");
  }
  for (std::size_t i = 0; i < sessions.size(); ++i) {
    const auto& s = sessions[i];
    if (s.delivery != DeliveryMode::coupled || s.d > s.y) {
      throw std::invalid_argument(
          "timeline integration needs coupled delivery (session " +
          std::to_string(i) + " has d > y or independent delivery)");
    }
  }
  const std::size_t count = sessions.size();
  const std::size_t k =
      std::clamp<std::size_t>(batches, 1, std::max<std::size_t>(1, count / 2));
  std::vector<TimelineAccumulator> parts(k);
  for (std::size_t b = 0; b < k; ++b) {
    const std::size_t lo = b * count / k;
    const std::size_t hi = (b + 1) * count / k;
    for (std::size_t i = lo; i < hi; ++i) parts[b].append(sessions[i]);
  }
  return estimate_age_timeline(parts);
}

//---------------------------------------------------------------------------//
// Driver
//---------------------------------------------------------------------------//

SessionSample sample_indexed_session(const SimulationConfig& config,
                                     std::uint64_t index) {
  Stream stream(StreamSpec{config.master_seed, index});
  switch (config.variant) {
    case Variant::worsened:
      return sample_session_worsened(config.params, stream, config.delivery);
    case Variant::exact:
      return sample_session_exact(config.params, stream, config.delivery);
    case Variant::round_robin:
      return sample_round_robin(config.params.n, config.params.lambda_intra,
                                stream);
  }
  throw std::logic_error("unhandled variant");
}

SimulationResult simulate(const SimulationConfig& config) {
  if (config.variant == Variant::round_robin) {
    if (config.params.n < 1 || !(config.params.lambda_intra > 0.0)) {
      throw std::invalid_argument("round robin needs n >= 1 and rate > 0");
    }
  } else {
    config.params.validate();
  }
  if (config.sessions < 2) {
    throw std::invalid_argument("simulation needs at least two sessions");
  }
  const bool coupled = config.variant == Variant::round_robin ||
                       config.delivery == DeliveryMode::coupled;
  if (config.timeline && !coupled) {
    throw std::invalid_argument(
        "timeline integration requires coupled delivery");
  }

  const std::uint64_t n_batches = std::clamp<std::uint64_t>(
      config.batches, 1, config.sessions);
  SimulationResult result;
  result.batches.resize(n_batches);
  if (config.timeline) result.timeline_batches.resize(n_batches);

  std::atomic<std::uint64_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto work = [&] {
    try {
      for (std::uint64_t b = next++; b < n_batches; b = next++) {
        const std::uint64_t lo = b * config.sessions / n_batches;
        const std::uint64_t hi = (b + 1) * config.sessions / n_batches;
        MomentSummary summary;
        TimelineAccumulator timeline;
        for (std::uint64_t i = lo; i < hi; ++i) {
          const SessionSample s = sample_indexed_session(config, i);
          summary.add(s);
          if (config.timeline) timeline.append(s);
        }
        result.batches[b] = summary;
        if (config.timeline) result.timeline_batches[b] = timeline;
      }
    } catch (...) {
      std::lock_guard lock(failure_mutex);
      if (!failure) failure = std::current_exception();
      next = n_batches;
    }
  };

  const unsigned workers = std::max(1u, config.workers);
  if (workers == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work);
  }
  if (failure) std::rethrow_exception(failure);

  result.total = tree_reduce(result.batches);
  result.moment = estimate_age_moment_formula(result.batches);
  if (config.timeline) {
    result.timeline = estimate_age_timeline(result.timeline_batches);
  }
  return result;
}

void write_session_dump(std::ostream& out, std::span<const SessionSample> s,
                        std::uint64_t first_index) {
  out << "session_index,variant,y1,y2,y3,z,d,y\n";
  for (std::size_t i = 0; i < s.size(); ++i) {
    const auto& x = s[i];
    out << first_index + i << ',' << to_string(x.variant) << ','
        << format_double(x.y1) << ',' << format_double(x.y2) << ','
        << format_double(x.y3) << ',' << format_double(x.z) << ','
        << format_double(x.d) << ',' << format_double(x.y) << '\n';
  }
}

}  // namespace aoi
