#pragma once

// Reverse-mode autodiff over dense tensors. A Tape<T> records operations as
// they execute; backward() replays pullbacks in exact reverse order, which
// keeps gradient accumulation deterministic on a single thread. T is float
// in production and double for finite-difference checking.

#include <Eigen/Core>

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "bair/common.hpp"
#include "bair/tensor.hpp"

namespace bair {

enum class Pad { kZero, kReplicate };

template <class T>
class Tape {
 public:
  using Tensor = TensorT<T>;
  using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using MapM = Eigen::Map<Mat>;
  using CMapM = Eigen::Map<const Mat>;

  int input(Tensor v) {
    recs_.push_back({std::move(v), Tensor(), nullptr});
    return int(recs_.size()) - 1;
  }

  const Tensor& value(int id) const { return recs_.at(std::size_t(id)).val; }
  const Tensor& grad(int id) const { return recs_.at(std::size_t(id)).grad; }

  std::size_t size() const { return recs_.size(); }

  void clear() { recs_.clear(); }

  // Seeds d(loss)/d(loss) = 1 and runs every pullback newest-first.
  void backward(int loss_id) {
    if (value(loss_id).numel() != 1) {
      throw ContractError("backward: loss node must be scalar, got shape " +
                          value(loss_id).shape_str());
    }
    for (Rec& r : recs_) {
      r.grad = Tensor(r.val.shape);
    }
    recs_[std::size_t(loss_id)].grad.data[0] = T(1);
    for (std::size_t k = recs_.size(); k-- > 0;) {
      if (recs_[k].pull) recs_[k].pull(*this);
    }
  }

  // --------------------------------------------------------------------------
  // Elementwise ops
  // --------------------------------------------------------------------------

  int relu(int x) {
    const Tensor& xv = value(x);
    Tensor out(xv.shape);
    for (std::size_t i = 0; i < xv.data.size(); ++i) {
      out.data[i] = xv.data[i] > T(0) ? xv.data[i] : T(0);
    }
    return emit(std::move(out), [x](Tape& t) {
      int y = t.cursor_;
      const Tensor& xv = t.value(x);
      Tensor& gx = t.mut_grad(x);
      const Tensor& gy = t.grad(y);
      // Subgradient at 0 is 0.
      for (std::size_t i = 0; i < xv.data.size(); ++i) {
        if (xv.data[i] > T(0)) gx.data[i] += gy.data[i];
      }
    });
  }

  int softplus(int x) {
    const Tensor& xv = value(x);
    Tensor out(xv.shape);
    for (std::size_t i = 0; i < xv.data.size(); ++i) {
      T v = xv.data[i];
      // max(v,0) + log1p(exp(-|v|)) avoids overflow on both tails.
      T m = v > T(0) ? v : T(0);
      out.data[i] = m + std::log1p(std::exp(-std::abs(v)));
    }
    return emit(std::move(out), [x](Tape& t) {
      int y = t.cursor_;
      const Tensor& xv = t.value(x);
      Tensor& gx = t.mut_grad(x);
      const Tensor& gy = t.grad(y);
      for (std::size_t i = 0; i < xv.data.size(); ++i) {
        gx.data[i] += gy.data[i] / (T(1) + std::exp(-xv.data[i]));
      }
    });
  }

  int add(int a, int b) {
    const Tensor& av = value(a);
    const Tensor& bv = value(b);
    require_same_shape("add", av, bv);
    Tensor out(av.shape);
    for (std::size_t i = 0; i < av.data.size(); ++i) {
      out.data[i] = av.data[i] + bv.data[i];
    }
    return emit(std::move(out), [a, b](Tape& t) {
      int y = t.cursor_;
      const Tensor& gy = t.grad(y);
      Tensor& ga = t.mut_grad(a);
      Tensor& gb = t.mut_grad(b);
      for (std::size_t i = 0; i < gy.data.size(); ++i) {
        ga.data[i] += gy.data[i];
        gb.data[i] += gy.data[i];
      }
    });
  }

  int sub(int a, int b) {
    const Tensor& av = value(a);
    const Tensor& bv = value(b);
    require_same_shape("sub", av, bv);
    Tensor out(av.shape);
    for (std::size_t i = 0; i < av.data.size(); ++i) {
      out.data[i] = av.data[i] - bv.data[i];
    }
    return emit(std::move(out), [a, b](Tape& t) {
      int y = t.cursor_;
      const Tensor& gy = t.grad(y);
      Tensor& ga = t.mut_grad(a);
      Tensor& gb = t.mut_grad(b);
      for (std::size_t i = 0; i < gy.data.size(); ++i) {
        ga.data[i] += gy.data[i];
        gb.data[i] -= gy.data[i];
      }
    });
  }

  int mul(int a, int b) {
    const Tensor& av = value(a);
    const Tensor& bv = value(b);
    require_same_shape("mul", av, bv);
    Tensor out(av.shape);
    for (std::size_t i = 0; i < av.data.size(); ++i) {
      out.data[i] = av.data[i] * bv.data[i];
    }
    return emit(std::move(out), [a, b](Tape& t) {
      int y = t.cursor_;
      const Tensor& gy = t.grad(y);
      const Tensor& av = t.value(a);
      const Tensor& bv = t.value(b);
      Tensor& ga = t.mut_grad(a);
      Tensor& gb = t.mut_grad(b);
      for (std::size_t i = 0; i < gy.data.size(); ++i) {
        ga.data[i] += gy.data[i] * bv.data[i];
        gb.data[i] += gy.data[i] * av.data[i];
      }
    });
  }

  int scalar_mul(int x, double c) {
    const Tensor& xv = value(x);
    Tensor out(xv.shape);
    for (std::size_t i = 0; i < xv.data.size(); ++i) {
      out.data[i] = xv.data[i] * T(c);
    }
    return emit(std::move(out), [x, c](Tape& t) {
      int y = t.cursor_;
      const Tensor& gy = t.grad(y);
      Tensor& gx = t.mut_grad(x);
      for (std::size_t i = 0; i < gy.data.size(); ++i) {
        gx.data[i] += gy.data[i] * T(c);
      }
    });
  }

  int add_scalar(int x, double c) {
    const Tensor& xv = value(x);
    Tensor out(xv.shape);
    for (std::size_t i = 0; i < xv.data.size(); ++i) {
      out.data[i] = xv.data[i] + T(c);
    }
    return emit(std::move(out), [x](Tape& t) {
      int y = t.cursor_;
      const Tensor& gy = t.grad(y);
      Tensor& gx = t.mut_grad(x);
      for (std::size_t i = 0; i < gy.data.size(); ++i) {
        gx.data[i] += gy.data[i];
      }
    });
  }

  // --------------------------------------------------------------------------
  // Dense layers
  // --------------------------------------------------------------------------

  // x: {n, in}, w: {out, in}, b: {out} -> {n, out}
  int linear(int x, int w, int b) {
    const Tensor& xv = value(x);
    const Tensor& wv = value(w);
    const Tensor& bv = value(b);
    if (xv.rank() != 2 || wv.rank() != 2 || bv.rank() != 1 ||
        xv.dim(1) != wv.dim(1) || bv.dim(0) != wv.dim(0)) {
      throw ContractError("linear: incompatible shapes " + xv.shape_str() +
                          " " + wv.shape_str() + " " + bv.shape_str());
    }
    int n = xv.dim(0), in = xv.dim(1), outw = wv.dim(0);
    Tensor out({n, outw});
    CMapM xm(xv.ptr(), n, in);
    CMapM wm(wv.ptr(), outw, in);
    MapM om(out.ptr(), n, outw);
    om.noalias() = xm * wm.transpose();
    om.rowwise() +=
        Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>(bv.ptr(), outw);
    return emit(std::move(out), [x, w, b, n, in, outw](Tape& t) {
      int y = t.cursor_;
      const Tensor& gy = t.grad(y);
      CMapM gym(gy.ptr(), n, outw);
      CMapM xm(t.value(x).ptr(), n, in);
      CMapM wm(t.value(w).ptr(), outw, in);
      MapM(t.mut_grad(x).ptr(), n, in).noalias() += gym * wm;
      MapM(t.mut_grad(w).ptr(), outw, in).noalias() += gym.transpose() * xm;
      // Plain loop: Eigen's vectorized reductions split the sum at an
      // address-dependent offset, which costs bit reproducibility.
      Tensor& gb = t.mut_grad(b);
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < outw; ++j) {
          gb.data[std::size_t(j)] += gy.data[std::size_t(i) * outw + j];
        }
      }
    });
  }

  // x: {IC, H, W}, w: {OC, IC, K, K} with K odd, b: {OC} -> {OC, H, W}.
  // Stride 1 and same-size output; out-of-bounds taps either read zero or
  // the clamped edge pixel depending on pad.
  int conv2d(int x, int w, int b, Pad pad) {
    const Tensor& xv = value(x);
    const Tensor& wv = value(w);
    const Tensor& bv = value(b);
    if (xv.rank() != 3 || wv.rank() != 4 || bv.rank() != 1 ||
        wv.dim(1) != xv.dim(0) || wv.dim(2) != wv.dim(3) ||
        wv.dim(2) % 2 == 0 || bv.dim(0) != wv.dim(0)) {
      throw ContractError("conv2d: incompatible shapes " + xv.shape_str() +
                          " " + wv.shape_str() + " " + bv.shape_str());
    }
    int ic = xv.dim(0), h = xv.dim(1), ww = xv.dim(2);
    int oc = wv.dim(0), k = wv.dim(2);
    std::vector<T> col;
    im2col(xv, k, pad, col);
    Tensor out({oc, h, ww});
    int hw = h * ww;
    CMapM wm(wv.ptr(), oc, ic * k * k);
    CMapM cm(col.data(), ic * k * k, hw);
    MapM om(out.ptr(), oc, hw);
    om.noalias() = wm * cm;
    for (int c = 0; c < oc; ++c) {
      om.row(c).array() += bv.data[std::size_t(c)];
    }
    return emit(std::move(out), [x, w, b, pad, ic, h, ww, oc, k](Tape& t) {
      int y = t.cursor_;
      const Tensor& gy = t.grad(y);
      int hw = h * ww;
      CMapM gym(gy.ptr(), oc, hw);
      // Weight grad reuses a freshly built column matrix; rebuilding is
      // cheaper than keeping one per conv alive for the whole tape.
      std::vector<T> col;
      im2col(t.value(x), k, pad, col);
      CMapM cm(col.data(), ic * k * k, hw);
      MapM(t.mut_grad(w).ptr(), oc, ic * k * k).noalias() +=
          gym * cm.transpose();
      Tensor& gb = t.mut_grad(b);
      for (int c = 0; c < oc; ++c) {
        // Sequential sum, not Eigen redux, for address-independent rounding.
        T acc = T(0);
        for (int j = 0; j < hw; ++j) acc += gy.data[std::size_t(c) * hw + j];
        gb.data[std::size_t(c)] += acc;
      }
      std::vector<T> dcol(std::size_t(ic) * k * k * hw);
      MapM(dcol.data(), ic * k * k, hw).noalias() =
          CMapM(t.value(w).ptr(), oc, ic * k * k).transpose() * gym;
      col2im_add(dcol, ic, h, ww, k, pad, t.mut_grad(x));
    });
  }

  // --------------------------------------------------------------------------
  // Shape movement
  // --------------------------------------------------------------------------

  // {r, ca} ++ {r, cb} -> {r, ca+cb} along the feature axis.
  int concat(int a, int b) {
    const Tensor& av = value(a);
    const Tensor& bv = value(b);
    if (av.rank() != 2 || bv.rank() != 2 || av.dim(0) != bv.dim(0)) {
      throw ContractError("concat: incompatible shapes " + av.shape_str() +
                          " " + bv.shape_str());
    }
    int r = av.dim(0), ca = av.dim(1), cb = bv.dim(1);
    Tensor out({r, ca + cb});
    for (int i = 0; i < r; ++i) {
      std::copy_n(av.ptr() + std::size_t(i) * ca, ca,
                  out.ptr() + std::size_t(i) * (ca + cb));
      std::copy_n(bv.ptr() + std::size_t(i) * cb, cb,
                  out.ptr() + std::size_t(i) * (ca + cb) + ca);
    }
    return emit(std::move(out), [a, b, r, ca, cb](Tape& t) {
      int y = t.cursor_;
      const Tensor& gy = t.grad(y);
      Tensor& ga = t.mut_grad(a);
      Tensor& gb = t.mut_grad(b);
      for (int i = 0; i < r; ++i) {
        const T* row = gy.ptr() + std::size_t(i) * (ca + cb);
        for (int j = 0; j < ca; ++j) ga.data[std::size_t(i) * ca + j] += row[j];
        for (int j = 0; j < cb; ++j) {
          gb.data[std::size_t(i) * cb + j] += row[ca + j];
        }
      }
    });
  }

  // x: {r, c}, idx values in [0, r) -> {|idx|, c}. Rows may repeat.
  int gather_rows(int x, std::vector<int> idx) {
    const Tensor& xv = value(x);
    if (xv.rank() != 2) {
      throw ContractError("gather_rows: need rank-2 input, got " +
                          xv.shape_str());
    }
    int r = xv.dim(0), c = xv.dim(1);
    for (int i : idx) {
      if (i < 0 || i >= r) {
        throw ContractError("gather_rows: index " + std::to_string(i) +
                            " out of range [0," + std::to_string(r) + ")");
      }
    }
    Tensor out({int(idx.size()), c});
    for (std::size_t k = 0; k < idx.size(); ++k) {
      std::copy_n(xv.ptr() + std::size_t(idx[k]) * c, c, out.ptr() + k * c);
    }
    return emit(std::move(out), [x, idx = std::move(idx), c](Tape& t) {
      int y = t.cursor_;
      const Tensor& gy = t.grad(y);
      Tensor& gx = t.mut_grad(x);
      for (std::size_t k = 0; k < idx.size(); ++k) {
        const T* src = gy.ptr() + k * c;
        T* dst = gx.ptr() + std::size_t(idx[k]) * c;
        for (int j = 0; j < c; ++j) dst[j] += src[j];
      }
    });
  }

  // values: {n, C}, weights: {n}, groups[k] in [0, n_groups).
  // out[g,c] = sum_{k in g} w[k] v[k,c] / sum_{k in g} w[k].
  // Summation runs in ascending k within each group.
  int weighted_scatter_reduce(int values, int weights, std::vector<int> groups,
                              int n_groups) {
    const Tensor& vv = value(values);
    const Tensor& wv = value(weights);
    if (vv.rank() != 2 || wv.rank() != 1 || wv.dim(0) != vv.dim(0) ||
        int(groups.size()) != vv.dim(0)) {
      throw ContractError(
          "weighted_scatter_reduce: incompatible shapes, values " +
          vv.shape_str() + " weights " + wv.shape_str() + " groups " +
          std::to_string(groups.size()));
    }
    int n = vv.dim(0), c = vv.dim(1);
    if (n_groups < 1) {
      throw ContractError("weighted_scatter_reduce: n_groups must be >= 1");
    }
    for (int g : groups) {
      if (g < 0 || g >= n_groups) {
        throw ContractError("weighted_scatter_reduce: group index " +
                            std::to_string(g) + " out of range [0," +
                            std::to_string(n_groups) + ")");
      }
    }
    std::vector<T> wsum(std::size_t(n_groups), T(0));
    for (int k = 0; k < n; ++k) {
      wsum[std::size_t(groups[std::size_t(k)])] += wv.data[std::size_t(k)];
    }
    for (int g = 0; g < n_groups; ++g) {
      if (!(wsum[std::size_t(g)] > T(0))) {
        throw ContractError(
            "weighted_scatter_reduce: group " + std::to_string(g) +
            (group_empty(groups, g) ? " is empty"
                                    : " has nonpositive weight sum"));
      }
    }
    // Accumulating with pre-normalized weights keeps single-element groups
    // exact (w/w is exactly 1) and costs one divide per element.
    Tensor out({n_groups, c});
    for (int k = 0; k < n; ++k) {
      int g = groups[std::size_t(k)];
      T u = wv.data[std::size_t(k)] / wsum[std::size_t(g)];
      const T* src = vv.ptr() + std::size_t(k) * c;
      T* dst = out.ptr() + std::size_t(g) * c;
      for (int j = 0; j < c; ++j) dst[j] += u * src[j];
    }
    return emit(std::move(out),
                [values, weights, groups = std::move(groups),
                 wsum = std::move(wsum), c](Tape& t) {
                  int y = t.cursor_;
                  const Tensor& gy = t.grad(y);
                  const Tensor& vv = t.value(values);
                  const Tensor& wv = t.value(weights);
                  const Tensor& ov = t.value(y);
                  Tensor& gv = t.mut_grad(values);
                  Tensor& gw = t.mut_grad(weights);
                  for (std::size_t k = 0; k < groups.size(); ++k) {
                    int g = groups[k];
                    T wg = wsum[std::size_t(g)];
                    T u = wv.data[k] / wg;
                    const T* go = gy.ptr() + std::size_t(g) * c;
                    const T* ov_row = ov.ptr() + std::size_t(g) * c;
                    const T* v_row = vv.ptr() + k * c;
                    T* gv_row = gv.ptr() + k * c;
                    T acc = T(0);
                    for (int j = 0; j < c; ++j) {
                      gv_row[j] += go[j] * u;
                      acc += go[j] * (v_row[j] - ov_row[j]);
                    }
                    gw.data[k] += acc / wg;
                  }
                });
  }

  // {C, H, W} -> {H*W, C}: one row of channel values per pixel.
  int chw_to_rows(int x) {
    const Tensor& xv = value(x);
    if (xv.rank() != 3) {
      throw ContractError("chw_to_rows: need rank-3 input, got " +
                          xv.shape_str());
    }
    int c = xv.dim(0), h = xv.dim(1), w = xv.dim(2);
    int hw = h * w;
    Tensor out({hw, c});
    for (int ch = 0; ch < c; ++ch) {
      for (int p = 0; p < hw; ++p) {
        out.data[std::size_t(p) * c + ch] = xv.data[std::size_t(ch) * hw + p];
      }
    }
    return emit(std::move(out), [x, c, hw](Tape& t) {
      int y = t.cursor_;
      const Tensor& gy = t.grad(y);
      Tensor& gx = t.mut_grad(x);
      for (int ch = 0; ch < c; ++ch) {
        for (int p = 0; p < hw; ++p) {
          gx.data[std::size_t(ch) * hw + p] += gy.data[std::size_t(p) * c + ch];
        }
      }
    });
  }

  // {H*W, C} -> {C, H, W}; inverse of chw_to_rows.
  int rows_to_chw(int x, int h, int w) {
    const Tensor& xv = value(x);
    if (xv.rank() != 2 || xv.dim(0) != h * w) {
      throw ContractError("rows_to_chw: rows " + xv.shape_str() +
                          " do not cover " + std::to_string(h) + "x" +
                          std::to_string(w));
    }
    int c = xv.dim(1), hw = h * w;
    Tensor out({c, h, w});
    for (int p = 0; p < hw; ++p) {
      for (int ch = 0; ch < c; ++ch) {
        out.data[std::size_t(ch) * hw + p] = xv.data[std::size_t(p) * c + ch];
      }
    }
    return emit(std::move(out), [x, c, hw](Tape& t) {
      int y = t.cursor_;
      const Tensor& gy = t.grad(y);
      Tensor& gx = t.mut_grad(x);
      for (int p = 0; p < hw; ++p) {
        for (int ch = 0; ch < c; ++ch) {
          gx.data[std::size_t(p) * c + ch] += gy.data[std::size_t(ch) * hw + p];
        }
      }
    });
  }

  // Same data, new dims; numel must be preserved.
  int reshape(int x, std::vector<int> shape) {
    const Tensor& xv = value(x);
    std::int64_t n = 1;
    for (int d : shape) n *= d;
    if (n != xv.numel()) {
      throw ContractError("reshape: " + xv.shape_str() + " does not hold " +
                          std::to_string(n) + " elements");
    }
    Tensor out(std::move(shape), xv.data);
    return emit(std::move(out), [x](Tape& t) {
      int y = t.cursor_;
      const Tensor& gy = t.grad(y);
      Tensor& gx = t.mut_grad(x);
      for (std::size_t i = 0; i < gy.data.size(); ++i) {
        gx.data[i] += gy.data[i];
      }
    });
  }

  // {C, H, W} -> {c1-c0, H, W}.
  int slice_channels(int x, int c0, int c1) {
    const Tensor& xv = value(x);
    if (xv.rank() != 3 || c0 < 0 || c1 <= c0 || c1 > xv.dim(0)) {
      throw ContractError("slice_channels: bad range [" + std::to_string(c0) +
                          "," + std::to_string(c1) + ") for " +
                          xv.shape_str());
    }
    int hw = xv.dim(1) * xv.dim(2);
    Tensor out({c1 - c0, xv.dim(1), xv.dim(2)});
    std::copy_n(xv.ptr() + std::size_t(c0) * hw, std::size_t(c1 - c0) * hw,
                out.ptr());
    return emit(std::move(out), [x, c0, c1, hw](Tape& t) {
      int y = t.cursor_;
      const Tensor& gy = t.grad(y);
      Tensor& gx = t.mut_grad(x);
      for (std::size_t i = 0; i < std::size_t(c1 - c0) * hw; ++i) {
        gx.data[std::size_t(c0) * hw + i] += gy.data[i];
      }
    });
  }

  // Fixed per-pixel affine map on a {3, H, W} image:
  // out[c] = sum_k m[3c+k] * in[k] + off[c].
  int color_transform(int x, std::array<double, 9> m, std::array<double, 3> off) {
    const Tensor& xv = value(x);
    if (xv.rank() != 3 || xv.dim(0) != 3) {
      throw ContractError("color_transform: need {3,H,W}, got " +
                          xv.shape_str());
    }
    int hw = xv.dim(1) * xv.dim(2);
    Tensor out(xv.shape);
    for (int c = 0; c < 3; ++c) {
      for (int p = 0; p < hw; ++p) {
        double acc = off[std::size_t(c)];
        for (int k = 0; k < 3; ++k) {
          acc += m[std::size_t(3 * c + k)] * xv.data[std::size_t(k) * hw + p];
        }
        out.data[std::size_t(c) * hw + p] = T(acc);
      }
    }
    return emit(std::move(out), [x, m, hw](Tape& t) {
      int y = t.cursor_;
      const Tensor& gy = t.grad(y);
      Tensor& gx = t.mut_grad(x);
      for (int c = 0; c < 3; ++c) {
        for (int p = 0; p < hw; ++p) {
          T g = gy.data[std::size_t(c) * hw + p];
          for (int k = 0; k < 3; ++k) {
            gx.data[std::size_t(k) * hw + p] += T(m[std::size_t(3 * c + k)]) * g;
          }
        }
      }
    });
  }

  // --------------------------------------------------------------------------
  // Reductions
  // --------------------------------------------------------------------------

  int sum(int x) {
    const Tensor& xv = value(x);
    Tensor out({1});
    T acc = T(0);
    for (T v : xv.data) acc += v;
    out.data[0] = acc;
    return emit(std::move(out), [x](Tape& t) {
      int y = t.cursor_;
      T g = t.grad(y).data[0];
      Tensor& gx = t.mut_grad(x);
      for (T& v : gx.data) v += g;
    });
  }

  // {C, H, W} -> {C}: spatial mean per channel.
  int channel_mean(int x) {
    const Tensor& xv = value(x);
    if (xv.rank() != 3) {
      throw ContractError("channel_mean: need rank-3 input, got " +
                          xv.shape_str());
    }
    int c = xv.dim(0), hw = xv.dim(1) * xv.dim(2);
    Tensor out({c});
    for (int ch = 0; ch < c; ++ch) {
      T acc = T(0);
      for (int p = 0; p < hw; ++p) acc += xv.data[std::size_t(ch) * hw + p];
      out.data[std::size_t(ch)] = acc / T(hw);
    }
    return emit(std::move(out), [x, c, hw](Tape& t) {
      int y = t.cursor_;
      const Tensor& gy = t.grad(y);
      Tensor& gx = t.mut_grad(x);
      for (int ch = 0; ch < c; ++ch) {
        T g = gy.data[std::size_t(ch)] / T(hw);
        for (int p = 0; p < hw; ++p) gx.data[std::size_t(ch) * hw + p] += g;
      }
    });
  }

  int mean_abs_diff(int a, int b) {
    const Tensor& av = value(a);
    const Tensor& bv = value(b);
    require_same_shape("mean_abs_diff", av, bv);
    Tensor out({1});
    T acc = T(0);
    for (std::size_t i = 0; i < av.data.size(); ++i) {
      acc += std::abs(av.data[i] - bv.data[i]);
    }
    out.data[0] = acc / T(av.data.size());
    return emit(std::move(out), [a, b](Tape& t) {
      int y = t.cursor_;
      const Tensor& av = t.value(a);
      const Tensor& bv = t.value(b);
      T g = t.grad(y).data[0] / T(av.data.size());
      Tensor& ga = t.mut_grad(a);
      Tensor& gb = t.mut_grad(b);
      for (std::size_t i = 0; i < av.data.size(); ++i) {
        T d = av.data[i] - bv.data[i];
        T s = d > T(0) ? T(1) : (d < T(0) ? T(-1) : T(0));
        ga.data[i] += g * s;
        gb.data[i] -= g * s;
      }
    });
  }

  int mean_sq_diff(int a, int b) {
    const Tensor& av = value(a);
    const Tensor& bv = value(b);
    require_same_shape("mean_sq_diff", av, bv);
    Tensor out({1});
    T acc = T(0);
    for (std::size_t i = 0; i < av.data.size(); ++i) {
      T d = av.data[i] - bv.data[i];
      acc += d * d;
    }
    out.data[0] = acc / T(av.data.size());
    return emit(std::move(out), [a, b](Tape& t) {
      int y = t.cursor_;
      const Tensor& av = t.value(a);
      const Tensor& bv = t.value(b);
      T g = T(2) * t.grad(y).data[0] / T(av.data.size());
      Tensor& ga = t.mut_grad(a);
      Tensor& gb = t.mut_grad(b);
      for (std::size_t i = 0; i < av.data.size(); ++i) {
        T d = av.data[i] - bv.data[i];
        ga.data[i] += g * d;
        gb.data[i] -= g * d;
      }
    });
  }

 private:
  struct Rec {
    Tensor val;
    Tensor grad;
    std::function<void(Tape&)> pull;
  };

  // The pullback needs to know its own node id; emit stashes it in cursor_
  // right before invoking, so closures capture inputs only.
  int emit(Tensor out, std::function<void(Tape&)> pull) {
    recs_.push_back({std::move(out), Tensor(), wrap(int(recs_.size()),
                                                    std::move(pull))});
    return int(recs_.size()) - 1;
  }

  std::function<void(Tape&)> wrap(int id, std::function<void(Tape&)> pull) {
    return [id, pull = std::move(pull)](Tape& t) {
      t.cursor_ = id;
      pull(t);
    };
  }

  Tensor& mut_grad(int id) { return recs_.at(std::size_t(id)).grad; }

  static void require_same_shape(const char* op, const Tensor& a,
                                 const Tensor& b) {
    if (!a.same_shape(b)) {
      throw ContractError(std::string(op) + ": shape mismatch " +
                          a.shape_str() + " vs " + b.shape_str());
    }
  }

  static bool group_empty(const std::vector<int>& groups, int g) {
    for (int x : groups) {
      if (x == g) return false;
    }
    return true;
  }

  // col has shape {IC*K*K, H*W} row-major; entry ((ic*K+ky)*K+kx, y*W+x)
  // holds x[ic, y+ky-K/2, x+kx-K/2] under the padding rule.
  static void im2col(const Tensor& xv, int k, Pad pad, std::vector<T>& col) {
    int ic = xv.dim(0), h = xv.dim(1), w = xv.dim(2);
    int hw = h * w, half = k / 2;
    col.assign(std::size_t(ic) * k * k * hw, T(0));
    for (int c = 0; c < ic; ++c) {
      const T* plane = xv.ptr() + std::size_t(c) * hw;
      for (int ky = 0; ky < k; ++ky) {
        for (int kx = 0; kx < k; ++kx) {
          T* dst = col.data() + (std::size_t(c) * k * k + ky * k + kx) * hw;
          for (int y = 0; y < h; ++y) {
            int sy = y + ky - half;
            if (pad == Pad::kReplicate) {
              sy = sy < 0 ? 0 : (sy >= h ? h - 1 : sy);
            } else if (sy < 0 || sy >= h) {
              continue;  // row stays zero
            }
            const T* src_row = plane + std::size_t(sy) * w;
            T* dst_row = dst + std::size_t(y) * w;
            for (int x = 0; x < w; ++x) {
              int sx = x + kx - half;
              if (pad == Pad::kReplicate) {
                sx = sx < 0 ? 0 : (sx >= w ? w - 1 : sx);
              } else if (sx < 0 || sx >= w) {
                continue;
              }
              dst_row[x] = src_row[sx];
            }
          }
        }
      }
    }
  }

  // Adjoint of im2col: scatter-add dcol back into the input gradient,
  // folding clamped taps onto the edge pixels they read from.
  static void col2im_add(const std::vector<T>& dcol, int ic, int h, int w,
                         int k, Pad pad, Tensor& gx) {
    int hw = h * w, half = k / 2;
    for (int c = 0; c < ic; ++c) {
      T* plane = gx.ptr() + std::size_t(c) * hw;
      for (int ky = 0; ky < k; ++ky) {
        for (int kx = 0; kx < k; ++kx) {
          const T* src = dcol.data() +
                         (std::size_t(c) * k * k + ky * k + kx) * hw;
          for (int y = 0; y < h; ++y) {
            int sy = y + ky - half;
            if (pad == Pad::kReplicate) {
              sy = sy < 0 ? 0 : (sy >= h ? h - 1 : sy);
            } else if (sy < 0 || sy >= h) {
              continue;
            }
            T* dst_row = plane + std::size_t(sy) * w;
            const T* src_row = src + std::size_t(y) * w;
            for (int x = 0; x < w; ++x) {
              int sx = x + kx - half;
              if (pad == Pad::kReplicate) {
                sx = sx < 0 ? 0 : (sx >= w ? w - 1 : sx);
              } else if (sx < 0 || sx >= w) {
                continue;
              }
              dst_row[sx] += src_row[x];
            }
          }
        }
      }
    }
  }

  std::vector<Rec> recs_;
  int cursor_ = -1;
};

}  // namespace bair
