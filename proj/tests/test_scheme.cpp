#include <cmath>
#include <sstream>
#include <stdexcept>
#include <vector>

#include <doctest.h>

#include "aoi/analytics.hpp"
#include "aoi/scheme.hpp"
#include "support/stats.hpp"

using namespace aoi;

namespace {

double rel(double a, double b) { return std::abs(a - b) / std::abs(b); }

SessionSample fixed_session(double y1, double y2, double y3, double z) {
  SessionSample s;
  s.y1 = y1;
  s.y2 = y2;
  s.y3 = y3;
  s.z = z;
  s.d = y1 + y2 + z;
  s.y = y1 + y2 + y3;
  s.delivery = DeliveryMode::coupled;
  return s;
}

// Brute-force sawtooth: evaluate the age on a fine grid between the first
// and last delivery.
double brute_force_average_age(const std::vector<SessionSample>& ss, int steps) {
  std::vector<double> starts(ss.size()), deliveries(ss.size()), gens(ss.size());
  double t = 0.0;
  for (std::size_t i = 0; i < ss.size(); ++i) {
    gens[i] = t;
    deliveries[i] = t + ss[i].d;
    t += ss[i].y;
  }
  const double lo = deliveries.front(), hi = deliveries.back();
  double area = 0.0;
  std::size_t k = 0;
  const double h = (hi - lo) / steps;
  for (int i = 0; i < steps; ++i) {
    const double x = lo + (i + 0.5) * h;
    while (k + 1 < ss.size() && deliveries[k + 1] <= x) ++k;
    area += (x - gens[k]) * h;
  }
  return area / (hi - lo);
}

}  // namespace

TEST_CASE("enum names round trip") {
  for (auto v : {Variant::exact, Variant::worsened, Variant::round_robin}) {
    CHECK(parse_variant(to_string(v)) == v);
  }
  CHECK(parse_delivery("paper") == DeliveryMode::paper_independent);
  CHECK(parse_delivery("paper_independent") == DeliveryMode::paper_independent);
  CHECK(parse_delivery("coupled") == DeliveryMode::coupled);
  CHECK_FALSE(parse_delivery("bogus"));
  CHECK_FALSE(parse_variant("Worsened"));
}

TEST_CASE("worsened session phase means") {
  for (auto p : {SchemeParams{64, 4, 1.0, 1.0}, SchemeParams{100, 10, 2.0, 0.5}}) {
    Stream s({404, static_cast<std::uint64_t>(p.m)});
    aoi::test::Moments y1, y2, y3, z;
    for (int i = 0; i < 200'000; ++i) {
      const auto x = sample_session_worsened(p, s);
      REQUIRE(x.d == doctest::Approx(x.y1 + x.y2 + x.z).epsilon(1e-15));
      REQUIRE(x.y == doctest::Approx(x.y1 + x.y2 + x.y3).epsilon(1e-15));
      y1.add(x.y1);
      y2.add(x.y2);
      y3.add(x.y3);
      z.add(x.z);
    }
    const auto pm = phase_moments(p);
    CHECK(std::abs(y1.mean() - pm.e_y1) < 4 * y1.std_err());
    CHECK(std::abs(y2.mean() - pm.e_y2) < 4 * y2.std_err());
    CHECK(std::abs(y3.mean() - pm.e_y3) < 4 * y3.std_err());
    CHECK(std::abs(z.mean() - pm.e_z) < 4 * z.std_err());
  }
}

TEST_CASE("degenerate cell sizes") {
  SUBCASE("M = 1") {
    const SchemeParams p{16, 1, 1.0, 1.0};
    Stream s({1, 1});
    aoi::test::Moments z;
    for (int i = 0; i < 50'000; ++i) {
      const auto w = sample_session_worsened(p, s);
      z.add(w.z);
      const auto e = sample_session_exact(p, s);
      REQUIRE(e.y1 == 0.0);
    }
    CHECK(std::abs(z.mean() - 1.0) < 4 * z.std_err());
    CHECK_THROWS_AS(sample_coupled_sessions(p, s), std::invalid_argument);
  }
  SUBCASE("single cell") {
    const SchemeParams p{8, 8, 1.0, 1.0};
    Stream s({1, 2});
    aoi::test::Moments y3;
    for (int i = 0; i < 50'000; ++i) y3.add(sample_session_worsened(p, s).y3);
    CHECK(std::abs(y3.mean() - 8.0) < 4 * y3.std_err());
  }
  SUBCASE("invalid parameters") {
    Stream s({1, 3});
    CHECK_THROWS_AS((sample_session_worsened({10, 3, 1, 1}, s)), std::invalid_argument);
    CHECK_THROWS_AS((sample_session_exact({10, 3, 1, 1}, s)), std::invalid_argument);
  }
}

TEST_CASE("exact variant is faster on average") {
  const SchemeParams p{256, 8, 1.0, 1.0};
  Stream s({77, 0});
  aoi::test::Moments exact, worse;
  for (int i = 0; i < 20'000; ++i) {
    exact.add(sample_session_exact(p, s).y);
    worse.add(sample_session_worsened(p, s).y);
  }
  CHECK(exact.mean() < worse.mean());
}

TEST_CASE("coupled sessions") {
  const SchemeParams p{256, 8, 1.0, 1.0};
  Stream s({88, 0});
  aoi::test::Moments w_y1, w_y3, e_y1, ref_e_y1;
  for (int i = 0; i < 20'000; ++i) {
    const auto [exact, worse] = sample_coupled_sessions(p, s, DeliveryMode::coupled);
    REQUIRE(exact.y1 <= worse.y1);
    REQUIRE(exact.y3 <= worse.y3);
    REQUIRE(exact.y2 == worse.y2);
    REQUIRE(worse.d <= worse.y);
    REQUIRE(exact.z <= exact.y3);
    w_y1.add(worse.y1);
    w_y3.add(worse.y3);
    e_y1.add(exact.y1);
    ref_e_y1.add(sample_session_exact(p, s).y1);
  }
  const auto pm = phase_moments(p);
  CHECK(std::abs(w_y1.mean() - pm.e_y1) < 4 * w_y1.std_err());
  CHECK(std::abs(w_y3.mean() - pm.e_y3) < 4 * w_y3.std_err());
  const double se = std::hypot(e_y1.std_err(), ref_e_y1.std_err());
  CHECK(std::abs(e_y1.mean() - ref_e_y1.mean()) < 4 * se);
}

TEST_CASE("delivery sampling") {
  const SchemeParams p{64, 4, 1.0, 1.0};
  Stream s({3, 3});
  SUBCASE("size mismatch") {
    std::vector<double> partials = {0.0, 1.0, 2.0};
    CHECK_THROWS_AS(sample_delivery(p, s, partials, 3.0, DeliveryMode::coupled, 16),
                    std::invalid_argument);
  }
  SUBCASE("coupled never exceeds the phase") {
    std::vector<double> partials = {0.0, 1.0, 1.5, 4.0};
    for (int i = 0; i < 10'000; ++i) {
      const double z = sample_delivery(p, s, partials, 5.0, DeliveryMode::coupled, 16);
      REQUIRE(z >= 0.0);
      REQUIRE(z <= 5.0);
    }
  }
  SUBCASE("independent mean") {
    std::vector<double> partials = {0.0, 1.0, 2.0, 3.0};
    aoi::test::Moments m;
    for (int i = 0; i < 200'000; ++i) {
      m.add(sample_delivery(p, s, partials, 4.0, DeliveryMode::paper_independent, 16));
    }
    CHECK(std::abs(m.mean() - 2.5) < 4 * m.std_err());
  }
  SUBCASE("coupled Z mean matches the independent form") {
    aoi::test::Moments coupled;
    for (int i = 0; i < 200'000; ++i) {
      coupled.add(sample_session_worsened(p, s, DeliveryMode::coupled).z);
    }
    // The own draw is one of the round's exponentials, so its mean is 1/lambda.
    CHECK(std::abs(coupled.mean() - phase_moments(p).e_z) < 4 * coupled.std_err());
  }
}

TEST_CASE("moment formula estimator") {
  SUBCASE("deterministic sessions") {
    MomentSummary m;
    for (int i = 0; i < 10; ++i) m.add(fixed_session(1.0, 2.0, 3.0, 1.0));
    const auto est = estimate_age_moment_formula(m);
    CHECK(est.delta_hat == doctest::Approx(4.0 + 3.0).epsilon(1e-14));
    CHECK(std::isnan(est.std_err));
    CHECK(est.sessions == 10);
  }
  SUBCASE("too few sessions") {
    MomentSummary m;
    m.add(fixed_session(1, 1, 1, 1));
    CHECK_THROWS_AS(estimate_age_moment_formula(m), std::invalid_argument);
  }
  SUBCASE("halving both rates doubles the estimate") {
    SimulationConfig a;
    a.params = {64, 4, 1.0, 1.0};
    a.sessions = 4000;
    a.master_seed = 5;
    SimulationConfig b = a;
    b.params = {64, 4, 0.5, 0.5};
    const auto ra = simulate(a), rb = simulate(b);
    CHECK(rb.moment.delta_hat == doctest::Approx(2 * ra.moment.delta_hat).epsilon(1e-12));
  }
}

TEST_CASE("timeline integration") {
  SUBCASE("constant sessions give the square sawtooth") {
    std::vector<SessionSample> ss(50, fixed_session(0.0, 0.0, 2.0, 1.0));
    const auto est = integrate_age_timeline(ss, 5);
    // Age climbs from 1 to 3 over each period of 2.
    CHECK(est.delta_hat == doctest::Approx(2.0).epsilon(1e-14));
  }
  SUBCASE("matches a brute-force integral") {
    Stream s({9, 9});
    std::vector<SessionSample> ss;
    for (int i = 0; i < 200; ++i) {
      ss.push_back(sample_session_worsened({16, 4, 1.0, 1.0}, s, DeliveryMode::coupled));
    }
    const auto est = integrate_age_timeline(ss, 4);
    CHECK(rel(est.delta_hat, brute_force_average_age(ss, 2'000'000)) < 5e-4);
  }
  SUBCASE("merge equals append") {
    Stream s({10, 10});
    std::vector<SessionSample> ss;
    for (int i = 0; i < 101; ++i) {
      ss.push_back(sample_session_worsened({16, 4, 1.0, 1.0}, s, DeliveryMode::coupled));
    }
    TimelineAccumulator all, left, right, mid;
    for (std::size_t i = 0; i < ss.size(); ++i) {
      all.append(ss[i]);
      (i < 30 ? left : i < 31 ? mid : right).append(ss[i]);
    }
    left.merge(mid);
    left.merge(right);
    CHECK(left.sessions() == all.sessions());
    CHECK(rel(left.area(), all.area()) < 1e-13);
    CHECK(rel(left.length(), all.length()) < 1e-13);
    TimelineAccumulator empty;
    empty.merge(all);
    CHECK(empty.area() == all.area());
  }
  SUBCASE("rejects independent delivery") {
    std::vector<SessionSample> ss(4, fixed_session(0, 0, 1, 0.5));
    ss[2].delivery = DeliveryMode::paper_independent;
    CHECK_THROWS_AS(integrate_age_timeline(ss), std::invalid_argument);
    std::vector<SessionSample> late(4, fixed_session(0, 0, 1, 2.0));
    CHECK_THROWS_AS(integrate_age_timeline(late), std::invalid_argument);
  }
  SUBCASE("simulate requires coupled delivery for the timeline") {
    SimulationConfig c;
    c.params = {64, 4, 1, 1};
    c.timeline = true;
    CHECK_THROWS_AS(simulate(c), std::invalid_argument);
  }
}

TEST_CASE("round robin baseline") {
  CHECK(round_robin_age(4, 1.0) == 5.0);
  CHECK(round_robin_age(1, 1.0) == 2.0);
  for (auto [n, expected] : {std::pair{4, 5.0}, std::pair{1, 2.0}}) {
    SimulationConfig c;
    c.params = {n, 1, 1.0, 1.0};
    c.variant = Variant::round_robin;
    c.sessions = 200'000;
    c.master_seed = 21;
    c.timeline = true;
    const auto r = simulate(c);
    CHECK(std::abs(r.moment.delta_hat - expected) < 4 * r.moment.std_err);
    CHECK(std::abs(r.timeline->delta_hat - expected) < 4 * r.timeline->std_err);
  }
  SUBCASE("closed form is linear in n") {
    // Least squares on log-log points.
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int k = 0;
    for (int e = 4; e <= 14; ++e, ++k) {
      const double x = std::log(std::ldexp(1.0, e));
      const double y = std::log(round_robin_age(std::int64_t{1} << e, 1.0));
      sx += x; sy += y; sxx += x * x; sxy += x * y;
    }
    const double slope = (k * sxy - sx * sy) / (k * sxx - sx * sx);
    CHECK(slope > 0.95);
    CHECK(slope < 1.05);
  }
}

TEST_CASE("phases of one session are independent") {
  const SchemeParams p{64, 4, 1.0, 1.0};
  Stream s({600, 0});
  const int n = 100'000;
  std::vector<double> a(n), b(n);
  for (int i = 0; i < n; ++i) {
    const auto x = sample_session_worsened(p, s);
    a[i] = x.y1;
    b[i] = x.y3;
  }
  const auto va = aoi::test::variance_check(a), vb = aoi::test::variance_check(b);
  double cov = 0.0;
  for (int i = 0; i < n; ++i) cov += (a[i] - va.mean) * (b[i] - vb.mean);
  cov /= n;
  const double corr = cov / std::sqrt(va.variance * vb.variance);
  CHECK(std::abs(corr) < 4.0 / std::sqrt(n));
}

TEST_CASE("parallel driver") {
  SimulationConfig c;
  c.params = {256, 8, 1.0, 1.0};
  c.sessions = 5000;
  c.delivery = DeliveryMode::coupled;
  c.timeline = true;
  c.master_seed = 314;

  SUBCASE("bit identical across worker counts") {
    c.workers = 1;
    const auto r1 = simulate(c);
    for (unsigned w : {4u, 16u}) {
      c.workers = w;
      const auto r = simulate(c);
      CHECK(r.moment.delta_hat == r1.moment.delta_hat);
      CHECK(r.moment.std_err == r1.moment.std_err);
      CHECK(r.timeline->delta_hat == r1.timeline->delta_hat);
      CHECK(r.total.sum_y_sq == r1.total.sum_y_sq);
    }
  }

  SUBCASE("sessions come from their indexed streams") {
    c.sessions = 64;
    c.batches = 4;
    const auto r = simulate(c);
    MomentSummary seq;
    for (std::uint64_t i = 0; i < 64; ++i) seq.add(sample_indexed_session(c, i));
    CHECK(seq.count == r.total.count);
    CHECK(rel(r.total.sum_y, seq.sum_y) < 1e-13);
    CHECK(rel(r.total.sum_dy, seq.sum_dy) < 1e-13);
  }

  SUBCASE("tree reduction matches a sequential sum") {
    const auto r = simulate(c);
    MomentSummary seq;
    for (const auto& b : r.batches) seq.merge(b);
    CHECK(rel(tree_reduce(r.batches).sum_y_sq, seq.sum_y_sq) < 1e-12);
    CHECK(tree_reduce(std::span<const MomentSummary>{}).count == 0);
  }

  SUBCASE("worker exceptions propagate") {
    SimulationConfig bad = c;
    bad.params = {10, 3, 1, 1};
    bad.workers = 4;
    CHECK_THROWS_AS(simulate(bad), std::invalid_argument);
  }
}

TEST_CASE("session dump") {
  std::vector<SessionSample> ss = {fixed_session(1, 2, 3, 0.5)};
  std::ostringstream out;
  write_session_dump(out, ss, 7);
  CHECK(out.str() == "session_index,variant,y1,y2,y3,z,d,y\n7,worsened,1,2,3,0.5,3.5,6\n");
}
