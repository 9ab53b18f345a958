#include "bair/lattice.hpp"

#include <algorithm>
#include <ostream>
#include <string>

namespace bair {

AxisLattice build_axis_lattice(int n_in, int n_out) {
  if (n_in < 1 || n_out < 1) {
    throw ContractError("build_axis_lattice: counts must be >= 1, got " +
                        std::to_string(n_in) + " and " + std::to_string(n_out));
  }
  AxisLattice lat;
  lat.n_in = n_in;
  lat.n_out = n_out;

  // Input boundary m sits at m/n_in, output boundary m' at m'/n_out. Over the
  // common denominator D = n_in * n_out these are m * n_out and m' * n_in.
  lat.boundaries.reserve(std::size_t(n_in) + n_out + 2);
  for (int m = 0; m <= n_in; ++m) {
    lat.boundaries.push_back(std::int64_t(m) * n_out);
  }
  for (int m = 0; m <= n_out; ++m) {
    lat.boundaries.push_back(std::int64_t(m) * n_in);
  }
  std::sort(lat.boundaries.begin(), lat.boundaries.end());
  lat.boundaries.erase(
      std::unique(lat.boundaries.begin(), lat.boundaries.end()),
      lat.boundaries.end());

  lat.segments.reserve(lat.boundaries.size() - 1);
  for (std::size_t k = 0; k + 1 < lat.boundaries.size(); ++k) {
    AxisSegment seg;
    seg.start = lat.boundaries[k];
    seg.end = lat.boundaries[k + 1];
    // No boundary of either grid falls strictly inside the segment, so the
    // start point's pixel covers all of it.
    seg.in_index = int(seg.start / n_out);
    seg.out_index = int(seg.start / n_in);
    lat.segments.push_back(seg);
  }
  return lat;
}

namespace {

// Offsets of a segment's endpoints from the center of pixel `pix`, in units
// of that pixel's own size. The pixel spans [pix * size, (pix + 1) * size]
// in numerator units, where size is the opposite grid's count.
std::array<Rat, 2> segment_offsets(const AxisSegment& seg, int pix,
                                   std::int64_t size) {
  std::int64_t center2 = (2 * std::int64_t(pix) + 1) * size;
  return {Rat(2 * seg.start - center2, 2 * size),
          Rat(2 * seg.end - center2, 2 * size)};
}

}  // namespace

SubpixelLattice build_lattice(int in_h, int in_w, int out_h, int out_w) {
  SubpixelLattice lat;
  lat.v_axis = build_axis_lattice(in_h, out_h);
  lat.h_axis = build_axis_lattice(in_w, out_w);

  const std::int64_t dv = lat.v_axis.denom();
  const std::int64_t dh = lat.h_axis.denom();

  lat.records.reserve(lat.v_axis.segments.size() *
                      lat.h_axis.segments.size());
  lat.p_map.assign(std::size_t(in_h) * in_w, {});
  lat.r_map.assign(std::size_t(out_h) * out_w, {});

  for (const AxisSegment& vs : lat.v_axis.segments) {
    // Vertical offsets are shared by the whole row of records.
    auto [pv1, pv2] = segment_offsets(vs, vs.in_index, out_h);
    auto [rv1, rv2] = segment_offsets(vs, vs.out_index, in_h);
    Rat v_len(vs.end - vs.start, dv);
    for (const AxisSegment& hs : lat.h_axis.segments) {
      auto [ph1, ph2] = segment_offsets(hs, hs.in_index, out_w);
      auto [rh1, rh2] = segment_offsets(hs, hs.out_index, in_w);

      SubpixelRecord rec;
      rec.in_pixel = {vs.in_index, hs.in_index};
      rec.out_pixel = {vs.out_index, hs.out_index};
      rec.area = v_len * Rat(hs.end - hs.start, dh);
      rec.phi = {ph1, pv1, ph2, pv2};
      rec.psi = {rh1, rv1, rh2, rv2};

      auto idx = std::uint32_t(lat.records.size());
      lat.p_map[std::size_t(rec.in_pixel.row) * in_w + rec.in_pixel.col]
          .push_back(idx);
      lat.r_map[std::size_t(rec.out_pixel.row) * out_w + rec.out_pixel.col]
          .push_back(idx);
      lat.records.push_back(rec);
    }
  }
  return lat;
}

std::vector<double> area_weights(const SubpixelLattice& lattice) {
  std::vector<double> w;
  w.reserve(lattice.records.size());
  for (const SubpixelRecord& rec : lattice.records) {
    w.push_back(rec.area.to_double());
  }
  return w;
}

namespace {

std::string quad_str(const std::array<Rat, 4>& q) {
  std::string s = "(";
  for (int i = 0; i < 4; ++i) {
    if (i) s += ",";
    s += q[i].str();
  }
  return s + ")";
}

}  // namespace

void dump_lattice(const SubpixelLattice& lattice, std::ostream& os) {
  for (const SubpixelRecord& rec : lattice.records) {
    os << "in=(" << rec.in_pixel.row << "," << rec.in_pixel.col << ")"
       << " out=(" << rec.out_pixel.row << "," << rec.out_pixel.col << ")"
       << " area=" << rec.area.str() << " phi=" << quad_str(rec.phi)
       << " psi=" << quad_str(rec.psi) << "\n";
  }
}

}  // namespace bair
