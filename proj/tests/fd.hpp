#pragma once

// Central finite-difference gradient checking, always in double precision.
// The checked function is rebuilt from scratch for every probe so tapes stay
// single-use.

#include <cmath>
#include <cstddef>
#include <functional>
#include <random>
#include <vector>

#include "bair/autodiff.hpp"
#include "bair/common.hpp"
#include "bair/tensor.hpp"

namespace bair_test {

using DTensor = bair::TensorT<double>;
using DTape = bair::Tape<double>;

// Builds a scalar loss node from already-registered leaf ids.
using BuildFn = std::function<int(DTape&, const std::vector<int>&)>;

struct FdResult {
  double max_rel_err = 0.0;
  int checked = 0;
};

inline double fd_rel_err(double analytic, double fd) {
  double scale = std::fabs(analytic) > std::fabs(fd) ? std::fabs(analytic)
                                                     : std::fabs(fd);
  if (scale < 1e-8) return 0.0;  // both vanish; nothing to compare
  return std::fabs(analytic - fd) / (scale > 1e-6 ? scale : 1e-6);
}

// Compares backward() gradients against (f(x+h)-f(x-h))/2h elementwise.
// check_inputs selects which leaves to probe (empty = all); when
// max_coords > 0 and rng is given, that many random coordinates are probed
// per leaf instead of every one.
inline FdResult fd_check(std::vector<DTensor> inputs, const BuildFn& build,
                         std::vector<std::size_t> check_inputs = {},
                         int max_coords = 0, std::mt19937* rng = nullptr,
                         double step = 1e-3) {
  auto eval = [&](const std::vector<DTensor>& ins) {
    DTape t;
    std::vector<int> ids;
    ids.reserve(ins.size());
    for (const DTensor& x : ins) ids.push_back(t.input(x));
    return t.value(build(t, ids)).data[0];
  };

  DTape t;
  std::vector<int> ids;
  ids.reserve(inputs.size());
  for (const DTensor& x : inputs) ids.push_back(t.input(x));
  t.backward(build(t, ids));
  std::vector<DTensor> grads;
  grads.reserve(ids.size());
  for (int id : ids) grads.push_back(t.grad(id));

  if (check_inputs.empty()) {
    for (std::size_t i = 0; i < inputs.size(); ++i) check_inputs.push_back(i);
  }

  FdResult res;
  for (std::size_t ii : check_inputs) {
    std::vector<std::size_t> coords;
    std::size_t n = inputs[ii].data.size();
    if (max_coords > 0 && n > std::size_t(max_coords) && rng) {
      for (int k = 0; k < max_coords; ++k) {
        coords.push_back(std::size_t(bair::uniform_int(*rng, 0, int(n) - 1)));
      }
    } else {
      for (std::size_t k = 0; k < n; ++k) coords.push_back(k);
    }
    for (std::size_t c : coords) {
      double orig = inputs[ii].data[c];
      inputs[ii].data[c] = orig + step;
      double fp = eval(inputs);
      inputs[ii].data[c] = orig - step;
      double fm = eval(inputs);
      inputs[ii].data[c] = orig;
      double fd = (fp - fm) / (2.0 * step);
      double err = fd_rel_err(grads[ii].data[c], fd);
      if (err > res.max_rel_err) res.max_rel_err = err;
      ++res.checked;
    }
  }
  return res;
}

// Uniform draw avoiding a dead zone around zero, for inputs feeding kinked
// functions (relu, abs). |result| is in [margin, hi].
inline double rand_away_from_zero(std::mt19937& rng, double margin,
                                  double hi) {
  double v = bair::uniform_real(rng, margin, hi);
  return (rng() & 1u) ? v : -v;
}

inline DTensor rand_tensor(std::mt19937& rng, std::vector<int> shape,
                           double lo, double hi) {
  DTensor t(std::move(shape));
  for (double& v : t.data) v = bair::uniform_real(rng, lo, hi);
  return t;
}

inline DTensor rand_tensor_margin(std::mt19937& rng, std::vector<int> shape,
                                  double margin, double hi) {
  DTensor t(std::move(shape));
  for (double& v : t.data) v = rand_away_from_zero(rng, margin, hi);
  return t;
}

}  // namespace bair_test
