#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <span>
#include <vector>

#include "aoi/sampling.hpp"

namespace aoi {

struct Point {
  double x = 0.0;
  double y = 0.0;
};

double distance(Point a, Point b) noexcept;

//! Square grid of n/M cells of side r = sqrt(S M / n) tiling a square of
//! area S. Cells are numbered row-major: id = row * cells_per_side + col.
struct CellGrid {
  double area = 1.0;
  double area_side = 1.0;
  std::int64_t cells_per_side = 1;
  double cell_length = 1.0;

  std::int64_t cell_count() const noexcept {
    return cells_per_side * cells_per_side;
  }
  std::int64_t row_of(std::int64_t cell) const noexcept {
    return cell / cells_per_side;
  }
  std::int64_t col_of(std::int64_t cell) const noexcept {
    return cell % cells_per_side;
  }
  //! Cell containing p; points on the far edges go to the last row/column.
  std::int64_t cell_of(Point p) const noexcept;
};

struct Topology {
  double area_side = 1.0;
  std::vector<Point> positions;
  std::int64_t cells_per_side = 0;
  std::vector<std::int64_t> cell_of;  // empty until cells are assigned
  std::vector<std::int64_t> pairing;  // destination of each source

  std::size_t size() const noexcept { return positions.size(); }
};

//! n i.i.d. uniform points on [0, sqrt(S))^2.
Topology place_nodes(std::int64_t n, double area, Stream& stream);

//! Throws std::invalid_argument unless M divides n and n/M is a perfect
//! square.
CellGrid build_cells(std::int64_t n, std::int64_t m, double area);

//! Fills topology.cell_of from grid arithmetic.
void assign_cells(Topology& topology, const CellGrid& grid);

//! Nodes of each cell, ascending node id.
std::vector<std::vector<std::int64_t>> cell_members(const Topology& topology,
                                                    const CellGrid& grid);

struct PairingResult {
  std::vector<std::int64_t> pairing;
  std::uint64_t retries = 0;
};

/*!
 * Uniformly random permutation, resampled until it has no fixed point and,
 * with `forbid_same_cell`, no source paired inside its own cell. Throws
 * InfeasiblePairing after `retry_bound` rejected draws.
 */
PairingResult assign_pairs(const Topology& topology, Stream& stream,
                           bool forbid_same_cell,
                           std::uint64_t retry_bound = 10'000);

struct InfeasiblePairing : std::runtime_error {
  using std::runtime_error::runtime_error;
};

//! Cells sharing (row mod 3, col mod 3); group id = 3 * (row % 3) + col % 3.
struct TdmaGroups {
  std::array<std::vector<std::int64_t>, 9> groups;
};

TdmaGroups tdma_groups(const CellGrid& grid);

struct Transmission {
  std::int64_t transmitter = 0;
  std::int64_t receiver = 0;
};

struct Violation {
  std::int64_t receiver = 0;
  std::int64_t transmitter = 0;
  std::int64_t interferer = 0;
  double d_ji = 0.0;  // receiver to own transmitter
  double d_jk = 0.0;  // receiver to interferer
  double gamma = 0.0;
  double margin = 0.0;  // d_jk - (1 + gamma) d_ji, negative
};

//! Every (receiver, interferer) pair with d(j,k) < (1+gamma) d(j,i).
std::vector<Violation> check_protocol_model(
    const Topology& topology, std::span<const Transmission> active,
    double gamma);

//! One intra-cell link per cell of TDMA group `group`: a random transmitter
//! and a distinct random receiver, for cells holding at least two nodes.
std::vector<Transmission> intra_cell_transmissions(
    const Topology& topology, const CellGrid& grid, const TdmaGroups& groups,
    std::size_t group, Stream& stream);

//---------------------------------------------------------------------------//
// CSV surfaces
//---------------------------------------------------------------------------//

//! node_id,x,y,cell_id,dest_id
void write_topology_csv(std::ostream& out, const Topology& topology);
//! Inverse of write_topology_csv; empty cell/dest fields are allowed.
Topology read_topology_csv(std::istream& in, const CellGrid& grid);

//! receiver,transmitter,interferer,d_ji,d_jk,gamma,margin
void write_violations_csv(std::ostream& out, std::span<const Violation> v);

}  // namespace aoi
