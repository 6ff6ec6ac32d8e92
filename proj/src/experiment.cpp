#include "aoi/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "aoi/analytics.hpp"
#include "aoi/number_format.hpp"

namespace aoi {

//---------------------------------------------------------------------------//
// Cell size selection
//---------------------------------------------------------------------------//

std::optional<CellChoice> select_cell_size(std::int64_t n, double b) {
  if (n < 1) throw std::invalid_argument("n must be positive");
  if (!(b > 0.0) || b > 1.0) throw std::invalid_argument("b must lie in (0, 1]");
  const double ideal = std::pow(static_cast<double>(n), b);
  const auto target = std::max<std::int64_t>(1, std::llround(ideal));

  std::optional<std::int64_t> best;
  double best_score = 0.0;
  auto consider = [&](std::int64_t d) {
    const double dd = static_cast<double>(d);
    if (dd < 0.5 * ideal || dd > 1.5 * ideal) return;
    const double score = std::abs(std::log(dd / static_cast<double>(target)));
    if (!best || score < best_score - 1e-12 ||
        (std::abs(score - best_score) <= 1e-12 && d < *best)) {
      best = d;
      best_score = score;
    }
  };
  for (std::int64_t d = 1; d * d <= n; ++d) {
    if (n % d != 0) continue;
    consider(d);
    if (d != n / d) consider(n / d);
  }
  if (!best) return std::nullopt;

  CellChoice c;
  c.m = *best;
  c.target = target;
  c.b_effective = n > 1 ? std::log(static_cast<double>(c.m)) /
                              std::log(static_cast<double>(n))
                        : b;
  c.adjusted = c.m != target;
  return c;
}

//---------------------------------------------------------------------------//
// Config
//---------------------------------------------------------------------------//

void SweepConfig::validate() const {
  if (n_grid.empty()) throw ConfigError("n_grid must not be empty");
  for (std::size_t i = 0; i < n_grid.size(); ++i) {
    if (n_grid[i] < 1) throw ConfigError("n_grid entries must be positive");
    if (i > 0 && n_grid[i] <= n_grid[i - 1]) {
      throw ConfigError("n_grid must be strictly increasing");
    }
  }
  if (!(b > 0.0) || b > 1.0) throw ConfigError("b must lie in (0, 1]");
  if (!(lambda_intra > 0.0) || !(lambda_inter > 0.0)) {
    throw ConfigError("rates must be positive");
  }
  if (baseline_rate && !(*baseline_rate > 0.0)) {
    throw ConfigError("baseline_rate must be positive");
  }
  if (sessions < 1000) throw ConfigError("sessions must be at least 1000");
  if (variant == Variant::round_robin) {
    throw ConfigError("variant must be worsened or exact");
  }
  if (batches < 2) throw ConfigError("batches must be at least 2");
}

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

std::uint64_t to_count(const std::string& key, const std::string& v) {
  auto d = parse_double(v);
  if (!d || *d < 0 || *d > 9007199254740992.0 || std::floor(*d) != *d) {
    throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  }
  return static_cast<std::uint64_t>(*d);
}

double to_real(const std::string& key, const std::string& v) {
  auto d = parse_double(v);
  if (!d) throw ConfigError(key + ": expected a number, got '" + v + "'");
  return *d;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(key + ": expected a boolean, got '" + v + "'");
}

std::vector<std::int64_t> to_grid(const std::string& key, const std::string& v) {
  std::vector<std::int64_t> grid;
  std::istringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    grid.push_back(static_cast<std::int64_t>(to_count(key, item)));
  }
  return grid;
}

using Setter = std::function<void(SweepConfig&, const std::string&)>;

const std::map<std::string, Setter, std::less<>>& setters() {
  static const std::map<std::string, Setter, std::less<>> table = {
      {"n_grid", [](SweepConfig& c, const std::string& v) { c.n_grid = to_grid("n_grid", v); }},
      {"b", [](SweepConfig& c, const std::string& v) { c.b = to_real("b", v); }},
      {"lambda_intra", [](SweepConfig& c, const std::string& v) { c.lambda_intra = to_real("lambda_intra", v); }},
      {"lambda_inter", [](SweepConfig& c, const std::string& v) { c.lambda_inter = to_real("lambda_inter", v); }},
      {"sessions", [](SweepConfig& c, const std::string& v) { c.sessions = to_count("sessions", v); }},
      {"master_seed", [](SweepConfig& c, const std::string& v) { c.master_seed = to_count("master_seed", v); }},
      {"variant", [](SweepConfig& c, const std::string& v) {
         auto parsed = parse_variant(v);
         if (!parsed) throw ConfigError("variant: expected worsened or exact, got '" + v + "'");
         c.variant = *parsed;
       }},
      {"delivery_mode", [](SweepConfig& c, const std::string& v) {
         auto parsed = parse_delivery(v);
         if (!parsed) throw ConfigError("delivery_mode: expected paper or coupled, got '" + v + "'");
         c.delivery_mode = *parsed;
       }},
      {"baseline", [](SweepConfig& c, const std::string& v) { c.baseline = to_bool("baseline", v); }},
      {"simulate", [](SweepConfig& c, const std::string& v) { c.simulate = to_bool("simulate", v); }},
      {"simulate_max_n", [](SweepConfig& c, const std::string& v) {
         c.simulate_max_n = static_cast<std::int64_t>(to_count("simulate_max_n", v));
       }},
      {"baseline_sessions", [](SweepConfig& c, const std::string& v) { c.baseline_sessions = to_count("baseline_sessions", v); }},
      {"baseline_rate", [](SweepConfig& c, const std::string& v) { c.baseline_rate = to_real("baseline_rate", v); }},
      {"workers", [](SweepConfig& c, const std::string& v) { c.workers = static_cast<unsigned>(to_count("workers", v)); }},
      {"batches", [](SweepConfig& c, const std::string& v) { c.batches = static_cast<unsigned>(to_count("batches", v)); }},
      {"record_wall_time", [](SweepConfig& c, const std::string& v) { c.record_wall_time = to_bool("record_wall_time", v); }},
  };
  return table;
}

void apply(SweepConfig& config, const std::string& key, const std::string& value) {
  const auto& table = setters();
  auto it = table.find(key);
  if (it == table.end()) throw ConfigError("unknown config key '" + key + "'");
  it->second(config, value);
}

std::string json_scalar(const nlohmann::json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  if (v.is_number_integer() || v.is_number_unsigned()) return v.dump();
  if (v.is_number_float()) return format_double(v.get<double>());
  throw ConfigError("unsupported JSON value " + v.dump());
}

}  // namespace

SweepConfig parse_sweep_config(std::string_view text) {
  SweepConfig config;
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string_view::npos && text[first] == '{') {
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("config JSON: ") + e.what());
    }
    if (!doc.is_object()) throw ConfigError("config JSON must be an object");
    for (const auto& [key, value] : doc.items()) {
      if (value.is_array()) {
        std::string joined;
        for (const auto& item : value) {
          if (!joined.empty()) joined += ',';
          joined += json_scalar(item);
        }
        apply(config, key, joined);
      } else if (!value.is_null()) {
        apply(config, key, json_scalar(value));
      }
    }
  } else {
    std::istringstream in{std::string(text)};
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
      line = trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) {
        throw ConfigError("config line " + std::to_string(line_no) +
                          ": expected key=value");
      }
      apply(config, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
  }
  config.validate();
  return config;
}

SweepConfig load_sweep_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_sweep_config(buf.str());
}

//---------------------------------------------------------------------------//
// Sweep
//---------------------------------------------------------------------------//

std::vector<SweepRow> run_sweep(const SweepConfig& config) {
  config.validate();
  std::vector<SweepRow> rows;
  rows.reserve(config.n_grid.size());
  for (const std::int64_t n : config.n_grid) {
    const auto start = std::chrono::steady_clock::now();
    SweepRow row;
    row.n = n;
    const auto choice = select_cell_size(n, config.b);
    if (!choice) {
      row.note = "skipped: no divisor of n within 50% of n^b";
      rows.push_back(row);
      continue;
    }
    row.m = choice->m;
    row.b_effective = choice->b_effective;
    if (choice->adjusted) {
      row.note = "M adjusted from round(n^b)=" + std::to_string(choice->target) +
                 " to divisor " + std::to_string(choice->m);
    }

    const SchemeParams params{n, choice->m, config.lambda_intra,
                              config.lambda_inter};
    row.delta_analytic = theorem1_age(params).total;

    const bool run_scheme =
        config.simulate && (config.simulate_max_n == 0 || n <= config.simulate_max_n);
    if (run_scheme) {
      SimulationConfig sim;
      sim.params = params;
      sim.sessions = config.sessions;
      sim.variant = config.variant;
      sim.delivery = config.delivery_mode;
      sim.master_seed = config.master_seed;
      sim.workers = config.workers;
      sim.batches = config.batches;
      sim.timeline = config.delivery_mode == DeliveryMode::coupled;
      const auto result = simulate(sim);
      row.sessions = config.sessions;
      row.delta_sim = result.moment.delta_hat;
      row.delta_sim_stderr = result.moment.std_err;
      if (result.timeline) row.delta_timeline = result.timeline->delta_hat;
      if (config.variant == Variant::worsened &&
          config.delivery_mode == DeliveryMode::paper_independent &&
          std::abs(*row.delta_sim - *row.delta_analytic) >
              5.0 * result.moment.std_err) {
        row.flagged = true;
        if (!row.note.empty()) row.note += "; ";
        row.note += "simulated age more than 5 standard errors from closed form";
      }
    }
    if (config.baseline) {
      SimulationConfig rr;
      rr.params = SchemeParams{n, 1, config.baseline_rate.value_or(config.lambda_inter),
                               config.lambda_inter};
      rr.sessions = config.baseline_sessions ? config.baseline_sessions
                                             : config.sessions;
      rr.variant = Variant::round_robin;
      rr.master_seed = derive_seed(config.master_seed, 0xBA5E11E);
      rr.workers = config.workers;
      rr.batches = config.batches;
      row.delta_baseline = simulate(rr).moment.delta_hat;
      if (!row.sessions) row.sessions = rr.sessions;
    }
    if (config.record_wall_time) {
      row.wall_time_s = std::chrono::duration<double>(
                            std::chrono::steady_clock::now() - start)
                            .count();
    }
    rows.push_back(row);
  }
  return rows;
}

//---------------------------------------------------------------------------//
// CSV
//---------------------------------------------------------------------------//

namespace {

template <class T>
void put(std::ostream& out, const std::optional<T>& v) {
  if (!v) return;
  if constexpr (std::is_floating_point_v<T>) {
    out << format_double(*v);
  } else {
    out << *v;
  }
}

template <class T>
std::optional<T> get(const std::string& field, std::size_t line) {
  if (field.empty()) return std::nullopt;
  if constexpr (std::is_floating_point_v<T>) {
    if (auto v = parse_double(field)) return *v;
  } else {
    if (auto v = parse_int(field)) return static_cast<T>(*v);
  }
  throw std::invalid_argument("sweep CSV line " + std::to_string(line) +
                              ": bad field '" + field + "'");
}

}  // namespace

void write_sweep_csv(std::ostream& out, std::span<const SweepRow> rows) {
  out << kSweepCsvHeader << '\n';
  for (const auto& r : rows) {
    out << r.n << ',';
    put(out, r.m);
    out << ',';
    put(out, r.b_effective);
    out << ',';
    put(out, r.sessions);
    out << ',';
    put(out, r.delta_analytic);
    out << ',';
    put(out, r.delta_sim);
    out << ',';
    put(out, r.delta_sim_stderr);
    out << ',';
    put(out, r.delta_timeline);
    out << ',';
    put(out, r.delta_baseline);
    out << ',';
    put(out, r.wall_time_s);
    out << '\n';
  }
}

std::vector<SweepRow> read_sweep_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kSweepCsvHeader) {
    throw std::invalid_argument("sweep CSV: unexpected header");
  }
  std::vector<SweepRow> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::size_t pos = 0;
    for (;;) {
      const auto comma = line.find(',', pos);
      f.push_back(line.substr(pos, comma - pos));
      if (comma == std::string::npos) break;
      pos = comma + 1;
    }
    if (f.size() != 10) {
      throw std::invalid_argument("sweep CSV line " + std::to_string(line_no) +
                                  ": expected 10 fields");
    }
    SweepRow r;
    auto n = get<std::int64_t>(f[0], line_no);
    if (!n) throw std::invalid_argument("sweep CSV: missing n");
    r.n = *n;
    r.m = get<std::int64_t>(f[1], line_no);
    r.b_effective = get<double>(f[2], line_no);
    r.sessions = get<std::uint64_t>(f[3], line_no);
    r.delta_analytic = get<double>(f[4], line_no);
    r.delta_sim = get<double>(f[5], line_no);
    r.delta_sim_stderr = get<double>(f[6], line_no);
    r.delta_timeline = get<double>(f[7], line_no);
    r.delta_baseline = get<double>(f[8], line_no);
    r.wall_time_s = get<double>(f[9], line_no);
    rows.push_back(r);
  }
  return rows;
}

//---------------------------------------------------------------------------//
// Fits
//---------------------------------------------------------------------------//

std::string_view to_string(SweepColumn c) {
  switch (c) {
    case SweepColumn::delta_analytic: return "delta_analytic";
    case SweepColumn::delta_sim: return "delta_sim";
    case SweepColumn::delta_timeline: return "delta_timeline";
    case SweepColumn::delta_baseline: return "delta_baseline";
  }
  return "unknown";
}

namespace {

const std::optional<double>& column_of(const SweepRow& r, SweepColumn c) {
  switch (c) {
    case SweepColumn::delta_sim: return r.delta_sim;
    case SweepColumn::delta_timeline: return r.delta_timeline;
    case SweepColumn::delta_baseline: return r.delta_baseline;
    case SweepColumn::delta_analytic: break;
  }
  return r.delta_analytic;
}

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
};

LineFit least_squares(const std::vector<double>& x, const std::vector<double>& y) {
  const double k = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= k;
  my /= k;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  LineFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  double ss_res = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double e = y[i] - (f.intercept + f.slope * x[i]);
    ss_res += e * e;
  }
  f.r_squared = syy > 0.0 ? std::clamp(1.0 - ss_res / syy, 0.0, 1.0) : 1.0;
  return f;
}

}  // namespace

SlopeFit fit_slope(std::span<const SweepRow> rows, SweepColumn column,
                   bool log_correction) {
  std::vector<double> x, y, y_corrected;
  SlopeFit fit;
  fit.column = column;
  fit.log_correction = log_correction;
  for (const auto& r : rows) {
    const auto& v = column_of(r, column);
    if (!v) continue;
    if (!(*v > 0.0)) {
      throw std::invalid_argument("fit_slope: non-positive value at n=" +
                                  std::to_string(r.n));
    }
    if (r.n < 2) throw std::invalid_argument("fit_slope: n must be >= 2");
    const double ln_n = std::log(static_cast<double>(r.n));
    x.push_back(ln_n);
    y.push_back(std::log(*v));
    y_corrected.push_back(std::log(*v) - std::log(ln_n));
    fit.n_min = x.size() == 1 ? r.n : std::min(fit.n_min, r.n);
    fit.n_max = std::max(fit.n_max, r.n);
  }
  if (x.size() < 3) {
    throw std::invalid_argument("fit_slope: need at least 3 rows with " +
                                std::string(to_string(column)));
  }
  const LineFit plain = least_squares(x, y);
  const LineFit corrected = least_squares(x, y_corrected);
  const LineFit& chosen = log_correction ? corrected : plain;
  fit.exponent = chosen.slope;
  fit.intercept = chosen.intercept;
  fit.r_squared = chosen.r_squared;
  fit.log_corrected_exponent = corrected.slope;
  return fit;
}

//---------------------------------------------------------------------------//
// Report
//---------------------------------------------------------------------------//

namespace {

std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

std::string format_summary(std::span<const SweepRow> rows,
                           std::span<const SlopeFit> fits, double b) {
  std::ostringstream out;
  std::size_t skipped = 0;
  for (const auto& r : rows) skipped += r.m ? 0 : 1;
  out << "rows: " << rows.size() << " (skipped: " << skipped << ")\n";
  out << "cell-size exponent b: " << format_double(b) << "\n";

  if (fits.empty()) {
    out << "fits: no fit requested\n";
  } else {
    for (const auto& f : fits) {
      out << "fit " << to_string(f.column)
          << (f.log_correction ? " (log-corrected)" : "")
          << ": exponent " << fixed6(f.exponent)
          << " intercept " << fixed6(f.intercept)
          << " r^2 " << fixed6(f.r_squared)
          << " n in [" << f.n_min << ", " << f.n_max << "]"
          << " log-corrected exponent " << fixed6(f.log_corrected_exponent)
          << "\n";
    }
  }

  double worst_gap = -1.0;
  std::int64_t worst_n = 0;
  for (const auto& r : rows) {
    if (r.delta_sim && r.delta_timeline) {
      const double gap = std::abs(*r.delta_timeline - *r.delta_sim) / *r.delta_sim;
      if (gap > worst_gap) {
        worst_gap = gap;
        worst_n = r.n;
      }
    }
  }
  if (worst_gap >= 0.0) {
    out << "timeline vs moment-formula max relative gap: " << fixed6(worst_gap)
        << " at n=" << worst_n << "\n";
  }
  for (const auto& r : rows) {
    if (!r.note.empty()) out << "note n=" << r.n << ": " << r.note << "\n";
  }
  for (const auto& r : rows) {
    if (r.wall_time_s) {
      out << "wall time n=" << r.n << ": " << fixed6(*r.wall_time_s) << " s\n";
    }
  }
  if (b > 0.0 && b <= 1.0) {
    out << "predicted exponent max(b, 1-3b): " << fixed6(theorem3_exponent(b))
        << "\n";
  }
  return out.str();
}

void emit_report(std::span<const SweepRow> rows, std::span<const SlopeFit> fits,
                 double b, const std::filesystem::path& dir) {
  if (rows.empty()) throw std::invalid_argument("emit_report: no rows");
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

  const auto csv_path = dir / "sweep.csv";
  std::ofstream csv(csv_path);
  if (!csv) throw IoError("cannot write " + csv_path.string());
  write_sweep_csv(csv, rows);
  if (!csv.flush()) throw IoError("write failed for " + csv_path.string());

  const auto summary_path = dir / "summary.txt";
  std::ofstream summary(summary_path);
  if (!summary) throw IoError("cannot write " + summary_path.string());
  summary << format_summary(rows, fits, b);
  if (!summary.flush()) throw IoError("write failed for " + summary_path.string());
}

}  // namespace aoi
