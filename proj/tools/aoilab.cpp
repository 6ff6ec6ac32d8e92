// aoilab: closed forms, Monte Carlo runs, scaling sweeps and protocol-model
// checks for the three-phase mega-update-packet scheme.
//
// Exit codes: 0 success, 1 usage error, 2 infeasibility/validation failure,
// 3 I/O failure.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "aoi/analytics.hpp"
#include "aoi/experiment.hpp"
#include "aoi/geometry.hpp"
#include "aoi/number_format.hpp"
#include "aoi/scheme.hpp"

namespace {

constexpr int kUsage = 1;
constexpr int kInfeasible = 2;
constexpr int kIo = 3;

struct Infeasible : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CellOptions {
  std::int64_t n = 0;
  std::optional<std::int64_t> m;
  std::optional<double> b;
  double lambda_intra = 1.0;
  double lambda_inter = 1.0;
};

void add_cell_options(CLI::App* cmd, CellOptions& o) {
  cmd->add_option("--n", o.n, "number of nodes")->required();
  auto* m = cmd->add_option("--m", o.m, "nodes per cell M");
  auto* b = cmd->add_option("--b", o.b, "cell-size exponent, M = n^b adjusted to a divisor");
  m->excludes(b);
  cmd->add_option("--lambda-intra", o.lambda_intra, "intra-cell rate")->capture_default_str();
  cmd->add_option("--lambda-inter", o.lambda_inter, "inter-cell rate")->capture_default_str();
}

std::int64_t resolve_m(const CellOptions& o, std::string* note) {
  if (o.m) return *o.m;
  if (!o.b) throw aoi::ConfigError("one of --m or --b is required");
  const auto choice = aoi::select_cell_size(o.n, *o.b);
  if (!choice) {
    throw Infeasible("no divisor of n=" + std::to_string(o.n) +
                     " within 50% of n^b");
  }
  if (note && choice->adjusted) {
    *note = "M adjusted from round(n^b)=" + std::to_string(choice->target) +
            " to divisor " + std::to_string(choice->m);
  }
  return choice->m;
}

aoi::SchemeParams make_params(const CellOptions& o) {
  std::string note;
  aoi::SchemeParams p{o.n, resolve_m(o, &note), o.lambda_intra, o.lambda_inter};
  if (!note.empty()) std::cerr << note << '\n';
  try {
    p.validate();
  } catch (const std::invalid_argument& e) {
    throw aoi::ConfigError(e.what());
  }
  return p;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

//---------------------------------------------------------------------------//

int run_analyze(const CellOptions& o) {
  const auto p = make_params(o);
  const auto age = aoi::theorem1_age(p);
  const double b_eff = p.n > 1 ? std::log(static_cast<double>(p.m)) /
                                     std::log(static_cast<double>(p.n))
                               : 1.0;
  std::cout << "n=" << p.n << " M=" << p.m << " cells=" << p.cells()
            << " lambda_intra=" << fmt(p.lambda_intra)
            << " lambda_inter=" << fmt(p.lambda_inter) << "\n";
  for (const auto& t : age.per_term) {
    std::printf("  %-28s %s\n", t.label.c_str(), fmt(t.value).c_str());
  }
  std::printf("  %-28s %s\n", "delay_part", fmt(age.delay_part).c_str());
  std::printf("  %-28s %s\n", "renewal_part", fmt(age.renewal_part).c_str());
  std::printf("  %-28s %s\n", "total", fmt(age.total).c_str());
  if (p.n >= 2 && b_eff > 0.0) {
    const double b = o.b.value_or(b_eff);
    std::printf("large-n approximation (b=%s): %s\n", fmt(b).c_str(),
                fmt(aoi::theorem2_age(p.n, b, p.lambda_intra, p.lambda_inter)).c_str());
    std::printf("predicted exponent max(b, 1-3b): %s\n",
                fmt(aoi::theorem3_exponent(b)).c_str());
  }
  return 0;
}

struct SimulateOptions {
  std::uint64_t sessions = 100'000;
  std::string variant = "worsened";
  std::string delivery = "paper";
  std::string estimator = "moment";
  std::uint64_t seed = 1;
  unsigned workers = 1;
  unsigned batches = 32;
  std::string dump;
};

int run_simulate(const CellOptions& o, const SimulateOptions& s) {
  const auto p = make_params(o);
  aoi::SimulationConfig cfg;
  cfg.params = p;
  cfg.sessions = s.sessions;
  cfg.master_seed = s.seed;
  cfg.workers = s.workers;
  cfg.batches = s.batches;
  auto variant = aoi::parse_variant(s.variant);
  auto delivery = aoi::parse_delivery(s.delivery);
  if (!variant || *variant == aoi::Variant::round_robin) {
    throw aoi::ConfigError("--variant must be exact or worsened");
  }
  if (!delivery) throw aoi::ConfigError("--delivery must be paper or coupled");
  cfg.variant = *variant;
  cfg.delivery = *delivery;
  const bool want_moment = s.estimator == "moment" || s.estimator == "both";
  const bool want_timeline = s.estimator == "timeline" || s.estimator == "both";
  if (!want_moment && !want_timeline) {
    throw aoi::ConfigError("--estimator must be moment, timeline or both");
  }
  if (want_timeline && cfg.delivery != aoi::DeliveryMode::coupled) {
    throw aoi::ConfigError("--estimator timeline requires --delivery coupled");
  }
  cfg.timeline = want_timeline;

  const auto result = aoi::simulate(cfg);
  const double analytic = aoi::theorem1_age(p).total;
  std::cout << "n=" << p.n << " M=" << p.m << " sessions=" << cfg.sessions
            << " variant=" << aoi::to_string(cfg.variant)
            << " delivery=" << aoi::to_string(cfg.delivery) << "\n";
  std::cout << "closed form (worsened scheme): " << fmt(analytic) << "\n";
  if (want_moment) {
    std::cout << "moment formula: " << fmt(result.moment.delta_hat) << " +- "
              << fmt(result.moment.std_err) << " (rel. diff "
              << fmt((result.moment.delta_hat - analytic) / analytic) << ")\n";
  }
  if (want_timeline) {
    std::cout << "timeline: " << fmt(result.timeline->delta_hat) << " +- "
              << fmt(result.timeline->std_err) << " (rel. gap to moment formula "
              << fmt((result.timeline->delta_hat - result.moment.delta_hat) /
                     result.moment.delta_hat)
              << ")\n";
  }
  if (!s.dump.empty()) {
    std::ofstream out(s.dump);
    if (!out) throw aoi::IoError("cannot write " + s.dump);
    std::vector<aoi::SessionSample> samples;
    samples.reserve(cfg.sessions);
    for (std::uint64_t i = 0; i < cfg.sessions; ++i) {
      samples.push_back(aoi::sample_indexed_session(cfg, i));
    }
    aoi::write_session_dump(out, samples);
    if (!out.flush()) throw aoi::IoError("write failed for " + s.dump);
  }
  return 0;
}

struct SweepOptions {
  std::string config;
  std::string out;
  std::vector<std::int64_t> n_grid;
  std::optional<double> b;
  std::optional<double> lambda_intra;
  std::optional<double> lambda_inter;
  std::optional<std::uint64_t> sessions;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> variant;
  std::optional<std::string> delivery;
  bool baseline = false;
  std::optional<unsigned> workers;
  std::optional<std::int64_t> simulate_max_n;
};

int run_sweep_cmd(const SweepOptions& o) {
  aoi::SweepConfig cfg;
  if (!o.config.empty()) cfg = aoi::load_sweep_config(o.config);
  if (!o.n_grid.empty()) cfg.n_grid = o.n_grid;
  if (o.b) cfg.b = *o.b;
  if (o.lambda_intra) cfg.lambda_intra = *o.lambda_intra;
  if (o.lambda_inter) cfg.lambda_inter = *o.lambda_inter;
  if (o.sessions) cfg.sessions = *o.sessions;
  if (o.seed) cfg.master_seed = *o.seed;
  if (o.variant) {
    auto v = aoi::parse_variant(*o.variant);
    if (!v) throw aoi::ConfigError("--variant must be exact or worsened");
    cfg.variant = *v;
  }
  if (o.delivery) {
    auto d = aoi::parse_delivery(*o.delivery);
    if (!d) throw aoi::ConfigError("--delivery must be paper or coupled");
    cfg.delivery_mode = *d;
  }
  if (o.baseline) cfg.baseline = true;
  if (o.workers) cfg.workers = *o.workers;
  if (o.simulate_max_n) cfg.simulate_max_n = *o.simulate_max_n;
  cfg.validate();

  const auto rows = aoi::run_sweep(cfg);
  std::vector<aoi::SlopeFit> fits;
  auto try_fit = [&](aoi::SweepColumn c, bool corrected) {
    try {
      fits.push_back(aoi::fit_slope(rows, c, corrected));
    } catch (const std::invalid_argument&) {
      // fewer than three rows carry this column
    }
  };
  for (auto c : {aoi::SweepColumn::delta_analytic, aoi::SweepColumn::delta_sim,
                 aoi::SweepColumn::delta_timeline, aoi::SweepColumn::delta_baseline}) {
    try_fit(c, false);
    try_fit(c, true);
  }
  aoi::emit_report(rows, fits, cfg.b, o.out);
  std::cout << aoi::format_summary(rows, fits, cfg.b);
  bool skipped = false;
  for (const auto& r : rows) skipped = skipped || !r.m;
  return skipped ? kInfeasible : 0;
}

struct TopologyOptions {
  std::int64_t n = 100;
  std::int64_t m = 4;
  double area = 1.0;
  double gamma = std::numbers::sqrt2 - 1.0;
  std::uint64_t seed = 1;
  std::uint64_t trials = 1;
  bool allow_same_cell = false;
  std::string out = "-";
  std::string topology_out;
};

int run_topology(const TopologyOptions& o) {
  aoi::CellGrid grid;
  try {
    grid = aoi::build_cells(o.n, o.m, o.area);
  } catch (const std::invalid_argument& e) {
    throw aoi::ConfigError(e.what());
  }
  const auto groups = aoi::tdma_groups(grid);
  std::vector<aoi::Violation> violations;
  std::uint64_t links = 0;
  std::uint64_t retries = 0;
  aoi::Topology first;
  for (std::uint64_t t = 0; t < o.trials; ++t) {
    aoi::Stream stream(aoi::StreamSpec{o.seed, t});
    auto topo = aoi::place_nodes(o.n, o.area, stream);
    aoi::assign_cells(topo, grid);
    try {
      auto pairing = aoi::assign_pairs(topo, stream, !o.allow_same_cell);
      topo.pairing = std::move(pairing.pairing);
      retries += pairing.retries;
    } catch (const aoi::InfeasiblePairing& e) {
      throw Infeasible(e.what());
    }
    for (std::size_t g = 0; g < groups.groups.size(); ++g) {
      const auto active = aoi::intra_cell_transmissions(topo, grid, groups, g, stream);
      links += active.size();
      auto v = aoi::check_protocol_model(topo, active, o.gamma);
      violations.insert(violations.end(), v.begin(), v.end());
    }
    if (t == 0) first = std::move(topo);
  }

  if (!o.topology_out.empty()) {
    std::ofstream out(o.topology_out);
    if (!out) throw aoi::IoError("cannot write " + o.topology_out);
    aoi::write_topology_csv(out, first);
  }
  if (o.out == "-") {
    aoi::write_violations_csv(std::cout, violations);
  } else {
    std::ofstream out(o.out);
    if (!out) throw aoi::IoError("cannot write " + o.out);
    aoi::write_violations_csv(out, violations);
  }
  std::cerr << "cells=" << grid.cell_count() << " r=" << fmt(grid.cell_length)
            << " trials=" << o.trials << " links checked=" << links
            << " pairing retries=" << retries
            << " violations=" << violations.size() << "\n";
  return violations.empty() ? 0 : kInfeasible;
}

struct BaselineOptions {
  std::int64_t n = 16;
  double rate = 1.0;
  std::uint64_t sessions = 100'000;
  std::uint64_t seed = 1;
  unsigned workers = 1;
};

int run_baseline(const BaselineOptions& o) {
  if (o.n < 1 || !(o.rate > 0.0) || o.sessions < 2) {
    throw aoi::ConfigError("baseline needs n >= 1, rate > 0, sessions >= 2");
  }
  aoi::SimulationConfig cfg;
  cfg.params = aoi::SchemeParams{o.n, 1, o.rate, o.rate};
  cfg.variant = aoi::Variant::round_robin;
  cfg.sessions = o.sessions;
  cfg.master_seed = o.seed;
  cfg.workers = o.workers;
  const auto result = aoi::simulate(cfg);
  std::cout << "round robin n=" << o.n << " rate=" << fmt(o.rate)
            << " sessions=" << o.sessions << "\n";
  std::cout << "closed form (n+1)/rate: " << fmt(aoi::round_robin_age(o.n, o.rate)) << "\n";
  std::cout << "moment formula: " << fmt(result.moment.delta_hat) << " +- "
            << fmt(result.moment.std_err) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Age-of-information scaling laboratory"};
  app.require_subcommand(1);

  CellOptions analyze_cells;
  auto* analyze = app.add_subcommand("analyze", "evaluate the closed forms for one parameter set");
  add_cell_options(analyze, analyze_cells);

  CellOptions sim_cells;
  SimulateOptions sim;
  auto* simulate = app.add_subcommand("simulate", "Monte Carlo age estimate");
  add_cell_options(simulate, sim_cells);
  simulate->add_option("--sessions", sim.sessions)->capture_default_str();
  simulate->add_option("--variant", sim.variant, "exact|worsened")->capture_default_str();
  simulate->add_option("--delivery", sim.delivery, "paper|coupled")->capture_default_str();
  simulate->add_option("--estimator", sim.estimator, "moment|timeline|both")->capture_default_str();
  simulate->add_option("--seed", sim.seed)->capture_default_str();
  simulate->add_option("--workers", sim.workers)->capture_default_str();
  simulate->add_option("--batches", sim.batches)->capture_default_str();
  simulate->add_option("--dump", sim.dump, "write every session to this CSV");

  SweepOptions sweep;
  auto* sweep_cmd = app.add_subcommand("sweep", "scaling sweep over n");
  sweep_cmd->add_option("--config", sweep.config, "key=value or JSON config file");
  sweep_cmd->add_option("--out", sweep.out, "output directory")->required();
  sweep_cmd->add_option("--n-grid", sweep.n_grid, "node counts")->delimiter(',');
  sweep_cmd->add_option("--b", sweep.b);
  sweep_cmd->add_option("--lambda-intra", sweep.lambda_intra);
  sweep_cmd->add_option("--lambda-inter", sweep.lambda_inter);
  sweep_cmd->add_option("--sessions", sweep.sessions);
  sweep_cmd->add_option("--seed", sweep.seed);
  sweep_cmd->add_option("--variant", sweep.variant);
  sweep_cmd->add_option("--delivery", sweep.delivery);
  sweep_cmd->add_flag("--baseline", sweep.baseline, "also run the round-robin baseline");
  sweep_cmd->add_option("--workers", sweep.workers);
  sweep_cmd->add_option("--simulate-max-n", sweep.simulate_max_n);

  TopologyOptions topo;
  auto* topo_cmd = app.add_subcommand("topology", "placement, pairing, 9-TDMA and protocol-model check");
  topo_cmd->add_option("--n", topo.n)->capture_default_str();
  topo_cmd->add_option("--m", topo.m)->capture_default_str();
  topo_cmd->add_option("--area", topo.area)->capture_default_str();
  topo_cmd->add_option("--gamma", topo.gamma)->capture_default_str();
  topo_cmd->add_option("--seed", topo.seed)->capture_default_str();
  topo_cmd->add_option("--trials", topo.trials)->capture_default_str();
  topo_cmd->add_flag("--allow-same-cell", topo.allow_same_cell, "permit same-cell S-D pairs");
  topo_cmd->add_option("--out", topo.out, "violation CSV path, - for stdout")->capture_default_str();
  topo_cmd->add_option("--topology-out", topo.topology_out, "write the first topology as CSV");

  BaselineOptions base;
  auto* base_cmd = app.add_subcommand("baseline", "round-robin baseline");
  base_cmd->add_option("--n", base.n)->capture_default_str();
  base_cmd->add_option("--rate", base.rate)->capture_default_str();
  base_cmd->add_option("--sessions", base.sessions)->capture_default_str();
  base_cmd->add_option("--seed", base.seed)->capture_default_str();
  base_cmd->add_option("--workers", base.workers)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kUsage;
  }

  try {
    if (*analyze) return run_analyze(analyze_cells);
    if (*simulate) return run_simulate(sim_cells, sim);
    if (*sweep_cmd) return run_sweep_cmd(sweep);
    if (*topo_cmd) return run_topology(topo);
    if (*base_cmd) return run_baseline(base);
  } catch (const aoi::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const Infeasible& e) {
    std::cerr << "infeasible: " << e.what() << '\n';
    return kInfeasible;
  } catch (const aoi::IoError& e) {
    std::cerr << "I/O error: " << e.what() << '\n';
    return kIo;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  }
  return kUsage;
}
