#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <vector>

#include "bair/common.hpp"

namespace bair {

// One segment of the merged per-axis boundary grid. Endpoints are integer
// numerators over the common denominator n_in * n_out, so coincident input
// and output boundaries dedupe exactly. The segment lies wholly inside input
// pixel in_index and output pixel out_index.
struct AxisSegment {
  int in_index = 0;
  int out_index = 0;
  std::int64_t start = 0;
  std::int64_t end = 0;  // start < end
};

struct AxisLattice {
  int n_in = 0;
  int n_out = 0;
  // Strictly increasing, first 0, last n_in * n_out (the canvas [0,1]).
  std::vector<std::int64_t> boundaries;
  std::vector<AxisSegment> segments;

  std::int64_t denom() const { return std::int64_t(n_in) * n_out; }
};

// Sorted deduplicated union of the two boundary sets plus derived segments.
// Throws ContractError on non-positive counts.
AxisLattice build_axis_lattice(int n_in, int n_out);

struct PixelIndex {
  int row = 0;
  int col = 0;
  friend bool operator==(const PixelIndex& a, const PixelIndex& b) {
    return a.row == b.row && a.col == b.col;
  }
};

// Axis-aligned rectangle lying wholly inside one input pixel and one output
// pixel. phi/psi hold (x1-xc, y1-yc, x2-xc, y2-yc): corner offsets from the
// reference pixel's center, normalized by that pixel's own width/height so
// every component sits in [-1/2, 1/2]. phi is relative to the parent input
// pixel, psi to the parent output pixel.
struct SubpixelRecord {
  PixelIndex in_pixel, out_pixel;
  Rat area;  // canvas area, > 0
  std::array<Rat, 4> phi, psi;
};

struct SubpixelLattice {
  AxisLattice v_axis, h_axis;
  // Cartesian product of v_axis.segments x h_axis.segments, row-major
  // (v segment outer, h segment inner).
  std::vector<SubpixelRecord> records;
  // Input pixel (row-major linear index) -> record indices, ascending.
  std::vector<std::vector<std::uint32_t>> p_map;
  // Output pixel (row-major linear index) -> record indices, ascending.
  std::vector<std::vector<std::uint32_t>> r_map;

  int in_h() const { return v_axis.n_in; }
  int in_w() const { return h_axis.n_in; }
  int out_h() const { return v_axis.n_out; }
  int out_w() const { return h_axis.n_out; }
};

SubpixelLattice build_lattice(int in_h, int in_w, int out_h, int out_w);

// Merge weights equal to each record's area, as floating point. All > 0.
std::vector<double> area_weights(const SubpixelLattice& lattice);

// Debug dump, one line per record:
//   in=(r,c) out=(r,c) area=p/q phi=(..) psi=(..)
void dump_lattice(const SubpixelLattice& lattice, std::ostream& os);

}  // namespace bair
