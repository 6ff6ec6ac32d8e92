#include "aoi/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>

#include "aoi/number_format.hpp"

namespace aoi {

double distance(Point a, Point b) noexcept {
  return std::hypot(a.x - b.x, a.y - b.y);
}

std::int64_t CellGrid::cell_of(Point p) const noexcept {
  auto index = [this](double v) {
    auto i = static_cast<std::int64_t>(std::floor(v / cell_length));
    return std::clamp<std::int64_t>(i, 0, cells_per_side - 1);
  };
  return index(p.y) * cells_per_side + index(p.x);
}

Topology place_nodes(std::int64_t n, double area, Stream& stream) {
  if (n < 1) throw std::invalid_argument("need at least one node");
  if (!(area > 0.0)) throw std::invalid_argument("area must be positive");
  Topology t;
  t.area_side = std::sqrt(area);
  t.positions.resize(static_cast<std::size_t>(n));
  for (auto& p : t.positions) {
    p.x = t.area_side * stream.uniform();
    p.y = t.area_side * stream.uniform();
  }
  return t;
}

CellGrid build_cells(std::int64_t n, std::int64_t m, double area) {
  if (n < 1 || m < 1 || m > n || n % m != 0) {
    throw std::invalid_argument("cell size M must divide n (n=" +
                                std::to_string(n) + ", M=" + std::to_string(m) +
                                ")");
  }
  if (!(area > 0.0)) throw std::invalid_argument("area must be positive");
  const std::int64_t cells = n / m;
  auto side = static_cast<std::int64_t>(std::llround(std::sqrt(
      static_cast<double>(cells))));
  while (side * side > cells) --side;
  while ((side + 1) * (side + 1) <= cells) ++side;
  if (side * side != cells) {
    throw std::invalid_argument(
        "n/M = " + std::to_string(cells) +
        " cells cannot tile a square grid; choose M so that n/M is a perfect "
        "square");
  }
  CellGrid g;
  g.area = area;
  g.area_side = std::sqrt(area);
  g.cells_per_side = side;
  g.cell_length = g.area_side / static_cast<double>(side);
  return g;
}

void assign_cells(Topology& topology, const CellGrid& grid) {
  topology.cells_per_side = grid.cells_per_side;
  topology.cell_of.resize(topology.positions.size());
  for (std::size_t i = 0; i < topology.positions.size(); ++i) {
    topology.cell_of[i] = grid.cell_of(topology.positions[i]);
  }
}

std::vector<std::vector<std::int64_t>> cell_members(const Topology& topology,
                                                    const CellGrid& grid) {
  std::vector<std::vector<std::int64_t>> members(
      static_cast<std::size_t>(grid.cell_count()));
  for (std::size_t i = 0; i < topology.positions.size(); ++i) {
    const std::int64_t c = topology.cell_of.empty()
                               ? grid.cell_of(topology.positions[i])
                               : topology.cell_of[i];
    members[static_cast<std::size_t>(c)].push_back(
        static_cast<std::int64_t>(i));
  }
  return members;
}

PairingResult assign_pairs(const Topology& topology, Stream& stream,
                           bool forbid_same_cell, std::uint64_t retry_bound) {
  const std::size_t n = topology.size();
  if (n < 2) throw InfeasiblePairing("pairing needs at least two nodes");
  if (forbid_same_cell && topology.cell_of.size() != n) {
    throw std::invalid_argument("same-cell exclusion needs assigned cells");
  }
  PairingResult out;
  out.pairing.resize(n);
  for (;;) {
    std::iota(out.pairing.begin(), out.pairing.end(), std::int64_t{0});
    for (std::size_t i = n - 1; i > 0; --i) {
      const auto j = static_cast<std::size_t>(stream.uniform_index(i + 1));
      std::swap(out.pairing[i], out.pairing[j]);
    }
    bool ok = true;
    for (std::size_t i = 0; i < n && ok; ++i) {
      const auto dest = static_cast<std::size_t>(out.pairing[i]);
      ok = dest != i &&
           !(forbid_same_cell && topology.cell_of[dest] == topology.cell_of[i]);
    }
    if (ok) return out;
    if (++out.retries > retry_bound) {
      throw InfeasiblePairing("no admissible pairing after " +
                              std::to_string(retry_bound) + " retries");
    }
  }
}

TdmaGroups tdma_groups(const CellGrid& grid) {
  TdmaGroups g;
  for (std::int64_t c = 0; c < grid.cell_count(); ++c) {
    const auto id = 3 * (grid.row_of(c) % 3) + grid.col_of(c) % 3;
    g.groups[static_cast<std::size_t>(id)].push_back(c);
  }
  return g;
}

std::vector<Violation> check_protocol_model(
    const Topology& topology, std::span<const Transmission> active,
    double gamma) {
  if (gamma < 0.0) throw std::invalid_argument("gamma must be non-negative");
  const auto& pos = topology.positions;
  std::vector<Violation> out;
  for (const auto& link : active) {
    const Point rx = pos.at(static_cast<std::size_t>(link.receiver));
    const double d_ji =
        distance(rx, pos.at(static_cast<std::size_t>(link.transmitter)));
    const double guard = (1.0 + gamma) * d_ji;
    for (const auto& other : active) {
      if (other.transmitter == link.transmitter) continue;
      const double d_jk =
          distance(rx, pos.at(static_cast<std::size_t>(other.transmitter)));
      if (d_jk < guard) {
        out.push_back({link.receiver, link.transmitter, other.transmitter, d_ji,
                       d_jk, gamma, d_jk - guard});
      }
    }
  }
  return out;
}

std::vector<Transmission> intra_cell_transmissions(
    const Topology& topology, const CellGrid& grid, const TdmaGroups& groups,
    std::size_t group, Stream& stream) {
  const auto members = cell_members(topology, grid);
  std::vector<Transmission> out;
  for (std::int64_t cell : groups.groups.at(group)) {
    const auto& nodes = members[static_cast<std::size_t>(cell)];
    if (nodes.size() < 2) continue;
    const auto k = nodes.size();
    const auto tx = static_cast<std::size_t>(stream.uniform_index(k));
    auto rx = static_cast<std::size_t>(stream.uniform_index(k - 1));
    if (rx >= tx) ++rx;
    out.push_back({nodes[tx], nodes[rx]});
  }
  return out;
}

//---------------------------------------------------------------------------//
// CSV
//---------------------------------------------------------------------------//

void write_topology_csv(std::ostream& out, const Topology& t) {
  out << "node_id,x,y,cell_id,dest_id\n";
  for (std::size_t i = 0; i < t.positions.size(); ++i) {
    out << i << ',' << format_double(t.positions[i].x) << ','
        << format_double(t.positions[i].y) << ',';
    if (i < t.cell_of.size()) out << t.cell_of[i];
    out << ',';
    if (i < t.pairing.size()) out << t.pairing[i];
    out << '\n';
  }
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

}  // namespace

Topology read_topology_csv(std::istream& in, const CellGrid& grid) {
  std::string line;
  if (!std::getline(in, line) || line != "node_id,x,y,cell_id,dest_id") {
    throw std::invalid_argument("topology CSV: unexpected header");
  }
  Topology t;
  t.area_side = grid.area_side;
  t.cells_per_side = grid.cells_per_side;
  bool have_cells = true;
  bool have_pairs = true;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    const auto id = f.size() == 5 ? parse_int(f[0]) : std::nullopt;
    const auto x = f.size() == 5 ? parse_double(f[1]) : std::nullopt;
    const auto y = f.size() == 5 ? parse_double(f[2]) : std::nullopt;
    if (!id || !x || !y || *id != static_cast<long long>(row)) {
      throw std::invalid_argument("topology CSV: malformed row " +
                                  std::to_string(row + 1));
    }
    t.positions.push_back({*x, *y});
    if (auto c = parse_int(f[3])) {
      t.cell_of.push_back(*c);
    } else {
      have_cells = false;
    }
    if (auto d = parse_int(f[4])) {
      t.pairing.push_back(*d);
    } else {
      have_pairs = false;
    }
    ++row;
  }
  if (!have_cells) t.cell_of.clear();
  if (!have_pairs) t.pairing.clear();
  return t;
}

void write_violations_csv(std::ostream& out, std::span<const Violation> v) {
  out << "receiver,transmitter,interferer,d_ji,d_jk,gamma,margin\n";
  for (const auto& x : v) {
    out << x.receiver << ',' << x.transmitter << ',' << x.interferer << ','
        << format_double(x.d_ji) << ',' << format_double(x.d_jk) << ','
        << format_double(x.gamma) << ',' << format_double(x.margin) << '\n';
  }
}

}  // namespace aoi
