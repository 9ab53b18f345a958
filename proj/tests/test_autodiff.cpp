#include "bair/autodiff.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "bair/common.hpp"
#include "bair/tensor.hpp"
#include "fd.hpp"
#include "gradient_suite.hpp"

using namespace bair;
using bair_test::fd_check;
using bair_test::run_op_fd_suite;

TEST(WeightedScatterReduce, EqualWeightAverage) {
  Tape<float> t;
  int v = t.input(Tensor({2, 1}, {0.2f, 0.4f}));
  int w = t.input(Tensor({2}, {1.0f, 1.0f}));
  int y = t.weighted_scatter_reduce(v, w, {0, 0}, 1);
  ASSERT_EQ(t.value(y).numel(), 1);
  EXPECT_FLOAT_EQ(t.value(y).data[0], 0.3f);
}

TEST(WeightedScatterReduce, SkewedWeights) {
  Tape<float> t;
  int v = t.input(Tensor({2, 1}, {1.0f, 0.0f}));
  int w = t.input(Tensor({2}, {3.0f, 1.0f}));
  int y = t.weighted_scatter_reduce(v, w, {0, 0}, 1);
  EXPECT_FLOAT_EQ(t.value(y).data[0], 0.75f);
}

TEST(WeightedScatterReduce, WeightGradient) {
  // out = (w0*1 + w1*0) / (w0 + w1); d out / d w0 at (3,1) is (1-0.75)/4.
  Tape<double> t;
  int v = t.input(bair_test::DTensor({2, 1}, {1.0, 0.0}));
  int w = t.input(bair_test::DTensor({2}, {3.0, 1.0}));
  int y = t.weighted_scatter_reduce(v, w, {0, 0}, 1);
  t.backward(t.sum(y));
  EXPECT_NEAR(t.grad(w).data[0], 0.0625, 1e-12);
  EXPECT_NEAR(t.grad(w).data[1], -0.1875, 1e-12);

  auto fd = fd_check({bair_test::DTensor({2, 1}, {1.0, 0.0}),
                      bair_test::DTensor({2}, {3.0, 1.0})},
                     [](bair_test::DTape& tt, const std::vector<int>& id) {
                       return tt.sum(
                           tt.weighted_scatter_reduce(id[0], id[1], {0, 0}, 1));
                     });
  EXPECT_LT(fd.max_rel_err, 1e-4);
}

TEST(WeightedScatterReduce, RejectsBadGroups) {
  Tape<float> t;
  int v = t.input(Tensor({2, 1}, {1.0f, 2.0f}));
  int w = t.input(Tensor({2}, {1.0f, 1.0f}));
  // Group 1 receives no elements.
  EXPECT_THROW(t.weighted_scatter_reduce(v, w, {0, 0}, 2), ContractError);
  EXPECT_THROW(t.weighted_scatter_reduce(v, w, {0, 5}, 2), ContractError);
  EXPECT_THROW(t.weighted_scatter_reduce(v, w, {0}, 1), ContractError);
  int wz = t.input(Tensor({2}, {1.0f, -1.0f}));
  EXPECT_THROW(t.weighted_scatter_reduce(v, wz, {0, 0}, 1), ContractError);
}

TEST(WeightedScatterReduce, PermutationInvariantWithinTolerance) {
  std::mt19937 rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    int n = 12;
    Tensor v({n, 3}), w({n});
    std::vector<int> groups(12);
    for (int k = 0; k < n; ++k) {
      for (int c = 0; c < 3; ++c) {
        v.at(k, c) = float(uniform_real(rng, -1.0, 1.0));
      }
      w.data[std::size_t(k)] = float(uniform_real(rng, 0.2, 2.0));
      groups[std::size_t(k)] = k % 4;
    }

    auto eval = [](const Tensor& vv, const Tensor& ww,
                   const std::vector<int>& gg) {
      Tape<float> t;
      int y = t.weighted_scatter_reduce(t.input(vv), t.input(ww), gg, 4);
      return t.value(y);
    };

    Tensor base = eval(v, w, groups);
    // The canonical order is bit-stable across runs.
    EXPECT_EQ(base.data, eval(v, w, groups).data);

    // Reversing the record order changes the intra-group summation order;
    // results agree to rounding only.
    Tensor vr({n, 3}), wr({n});
    std::vector<int> gr(12);
    for (int k = 0; k < n; ++k) {
      for (int c = 0; c < 3; ++c) vr.at(k, c) = v.at(n - 1 - k, c);
      wr.data[std::size_t(k)] = w.data[std::size_t(n - 1 - k)];
      gr[std::size_t(k)] = groups[std::size_t(n - 1 - k)];
    }
    Tensor perm = eval(vr, wr, gr);
    for (std::size_t i = 0; i < base.data.size(); ++i) {
      EXPECT_NEAR(base.data[i], perm.data[i], 1e-6);
    }
  }
}

TEST(Relu, ForwardValues) {
  Tape<float> t;
  int y = t.relu(t.input(Tensor({3}, {-1.0f, 0.0f, 2.0f})));
  EXPECT_EQ(t.value(y).data, (std::vector<float>{0.0f, 0.0f, 2.0f}));
}

TEST(Relu, SubgradientAtZeroIsZero) {
  Tape<float> t;
  int x = t.input(Tensor({3}, {-1.0f, 0.0f, 2.0f}));
  t.backward(t.sum(t.relu(x)));
  EXPECT_EQ(t.grad(x).data, (std::vector<float>{0.0f, 0.0f, 1.0f}));
}

TEST(Softplus, MatchesClosedFormAtZero) {
  Tape<double> t;
  int y = t.softplus(t.input(bair_test::DTensor({1}, {0.0})));
  EXPECT_NEAR(t.value(y).data[0], std::log(2.0), 1e-15);
}

TEST(Backward, SumOfSquares) {
  Tape<float> t;
  int x = t.input(Tensor({2}, {1.0f, 2.0f}));
  t.backward(t.sum(t.mul(x, x)));
  EXPECT_EQ(t.grad(x).data, (std::vector<float>{2.0f, 4.0f}));
}

TEST(Backward, RejectsNonScalarLoss) {
  Tape<float> t;
  int x = t.input(Tensor({2}, {1.0f, 2.0f}));
  EXPECT_THROW(t.backward(x), ContractError);
}

TEST(Ops, ShapeMismatchThrows) {
  Tape<float> t;
  int a = t.input(Tensor({2, 2}));
  int b = t.input(Tensor({2, 3}));
  EXPECT_THROW(t.add(a, b), ContractError);
  EXPECT_THROW(t.mul(a, b), ContractError);
  EXPECT_THROW(t.mean_abs_diff(a, b), ContractError);
  EXPECT_THROW(t.concat(a, t.input(Tensor({3, 1}))), ContractError);
  EXPECT_THROW(t.gather_rows(a, {0, 2}), ContractError);
  EXPECT_THROW(t.linear(a, b, t.input(Tensor({2}))), ContractError);
}

TEST(Conv2d, CenterTapIdentity) {
  std::mt19937 rng(3);
  Tensor x({2, 4, 5});
  for (float& v : x.data) v = float(uniform_real(rng, 0.0, 1.0));
  // Kernel with 1 at the center of the matching channel copies the input.
  Tensor w({2, 2, 3, 3});
  w.data[std::size_t(0 * 2 * 9 + 0 * 9 + 4)] = 1.0f;
  w.data[std::size_t(1 * 2 * 9 + 1 * 9 + 4)] = 1.0f;
  Tensor b({2});
  for (Pad pad : {Pad::kZero, Pad::kReplicate}) {
    Tape<float> t;
    int y = t.conv2d(t.input(x), t.input(w), t.input(b), pad);
    EXPECT_EQ(t.value(y).data, x.data);
  }
}

TEST(Conv2d, ReplicatePaddingPreservesConstants) {
  // A constant image under an averaging kernel stays constant only when the
  // borders replicate; zero padding darkens the frame.
  Tensor x = Tensor::full({1, 4, 4}, 1.0f);
  Tensor w = Tensor::full({1, 1, 3, 3}, 1.0f / 9.0f);
  Tensor b({1});
  Tape<float> t;
  int yr = t.conv2d(t.input(x), t.input(w), t.input(b), Pad::kReplicate);
  for (float v : t.value(yr).data) EXPECT_FLOAT_EQ(v, 1.0f);
  int yz = t.conv2d(t.input(x), t.input(w), t.input(b), Pad::kZero);
  EXPECT_LT(t.value(yz).data[0], 0.5f);           // corner
  EXPECT_FLOAT_EQ(t.value(yz).at(0, 1, 1), 1.0f);  // interior
}

TEST(Linear, SmallMatrixExample) {
  Tape<float> t;
  int x = t.input(Tensor({1, 2}, {1.0f, 2.0f}));
  int w = t.input(Tensor({2, 2}, {1.0f, 0.0f, 3.0f, -1.0f}));
  int b = t.input(Tensor({2}, {0.5f, 0.0f}));
  int y = t.linear(x, w, b);
  EXPECT_EQ(t.value(y).data, (std::vector<float>{1.5f, 1.0f}));
}

TEST(Determinism, RepeatRunsBitIdentical) {
  auto run = [] {
    std::mt19937 rng(11);
    Tape<float> t;
    Tensor x({2, 6, 6}), w({3, 2, 3, 3}), b({3});
    for (float& v : x.data) v = float(uniform_real(rng, -1.0, 1.0));
    for (float& v : w.data) v = float(uniform_real(rng, -0.5, 0.5));
    int xc = t.conv2d(t.input(x), t.input(w), t.input(b), Pad::kReplicate);
    int rows = t.chw_to_rows(t.relu(xc));
    int loss = t.sum(rows);
    t.backward(loss);
    std::vector<float> out = t.value(loss).data;
    const auto& g = t.grad(1).data;  // conv weights
    out.insert(out.end(), g.begin(), g.end());
    return out;
  };
  EXPECT_EQ(run(), run());
}

// ============================================================================
// Finite differences across the whole op set
// ============================================================================

TEST(GradientSuite, EveryOpPassesFiniteDifferences) {
  auto suite = run_op_fd_suite(123, 20);
  EXPECT_GE(suite.size(), 20u);
  for (const auto& op : suite) {
    EXPECT_LT(op.max_rel_err, 1e-4) << op.name;
    EXPECT_EQ(op.instances, 20) << op.name;
    EXPECT_GT(op.coords, 0) << op.name;
  }
}
