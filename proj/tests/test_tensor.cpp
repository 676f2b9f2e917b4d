#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "tabforge/adam.hpp"
#include "tabforge/common.hpp"
#include "tabforge/tensor.hpp"

using namespace tabforge;
using namespace tabforge::ad;

namespace {

// Central finite-difference check of d(loss)/d(param) for a forward function
// rebuilt from current parameter values. Returns the max relative error.
double finite_diff_check(const std::vector<Tensor>& params, const std::function<Tensor()>& forward,
                         double h = 1e-5) {
  for (auto& p : params) p->zero_grad();
  auto loss = forward();
  backward(loss);
  double worst = 0.0;
  for (auto& p : params) {
    for (std::size_t j = 0; j < p->value.size(); ++j) {
      const double keep = p->value[j];
      p->value[j] = keep + h;
      const double up = forward()->scalar();
      p->value[j] = keep - h;
      const double dn = forward()->scalar();
      p->value[j] = keep;
      const double fd = (up - dn) / (2 * h);
      const double an = p->grad[j];
      const double rel = std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-8});
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

}  // namespace

TEST(TensorOps, MatmulIdentity) {
  auto a = constant({2, 2}, {1, 2, 3, 4});
  auto id = constant({2, 2}, {1, 0, 0, 1});
  auto r = matmul(a, id);
  EXPECT_EQ(r->value, (std::vector<double>{1, 2, 3, 4}));
}

TEST(TensorOps, SoftmaxSymmetry) {
  auto r = softmax(constant({3}, {0, 0, 0}));
  for (double v : r->value) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
}

TEST(TensorOps, ExpLogInverse) {
  auto r = exp(log(constant({1}, {2.5})));
  EXPECT_NEAR(r->value[0], 2.5, 1e-12);
}

TEST(TensorOps, ShapeMismatchThrows) {
  auto a = constant({2, 3}, std::vector<double>(6, 1.0));
  auto b = constant({3, 2}, std::vector<double>(6, 1.0));
  EXPECT_THROW(add(a, b), ShapeMismatchError);
  EXPECT_THROW(matmul(a, a), ShapeMismatchError);
}

TEST(TensorOps, NonFiniteFailsFast) {
  auto a = constant({1}, {-1.0});
  EXPECT_THROW(log(a), NonFiniteError);
  auto big = constant({1}, {1e308});
  EXPECT_THROW(mul(big, big), NonFiniteError);
}

TEST(TensorOps, BroadcastBiasAdd) {
  auto x = constant({2, 3}, {1, 2, 3, 4, 5, 6});
  auto b = param({1, 3}, {10, 20, 30});
  auto y = add(x, b);
  EXPECT_EQ(y->value, (std::vector<double>{11, 22, 33, 14, 25, 36}));
  auto loss = sum(y);
  backward(loss);
  EXPECT_EQ(b->grad, (std::vector<double>{2, 2, 2}));  // summed over the broadcast dim
}

TEST(TensorOps, SliceConcatRoundTrip) {
  auto x = constant({2, 4}, {1, 2, 3, 4, 5, 6, 7, 8});
  auto a = slice(x, 1, 0, 2);
  auto b = slice(x, 1, 2, 2);
  auto r = concat({a, b}, 1);
  EXPECT_EQ(r->value, x->value);
}

TEST(Backward, SumGivesOnes) {
  auto x = param({3}, {5, -1, 2});
  auto loss = sum(x);
  backward(loss);
  EXPECT_EQ(x->grad, (std::vector<double>{1, 1, 1}));
}

TEST(Backward, SumOfSquares) {
  auto x = param({2}, {1, 2});
  auto loss = sum(square(x));
  backward(loss);
  EXPECT_EQ(x->grad, (std::vector<double>{2, 4}));
}

TEST(Backward, NotScalarThrows) {
  auto x = param({2}, {1, 2});
  auto y = square(x);
  EXPECT_THROW(backward(y), NotScalarError);
}

TEST(Backward, DetachedThrows) {
  auto x = constant({1}, {3.0});
  EXPECT_THROW(backward(x), DetachedGraphError);
}

TEST(Backward, TwoLayerMlpMatchesFiniteDifferences) {
  // >= 100 random parameters across the layers
  Rng rng(42);
  auto randv = [&](std::size_t n) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.uniform(-2.0, 2.0);
    return v;
  };
  auto W1 = param({5, 12}, randv(60));
  auto b1 = param({1, 12}, randv(12));
  auto W2 = param({12, 3}, randv(36));
  auto b2 = param({1, 3}, randv(3));
  auto x = constant({4, 5}, randv(20));
  auto forward = [&]() {
    auto h = tanh(add(matmul(x, W1), b1));
    auto o = add(matmul(h, W2), b2);
    return mean(square(o));
  };
  EXPECT_LT(finite_diff_check({W1, b1, W2, b2}, forward), 1e-4);
}

TEST(Backward, PerOpGradientsMatchFiniteDifferences) {
  Rng rng(7);
  auto randv = [&](std::size_t n) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.uniform(-2.0, 2.0);
    return v;
  };
  auto posv = [&](std::size_t n) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.uniform(0.2, 2.0);
    return v;
  };
  {
    auto a = param({3, 4}, randv(12));
    auto b = param({3, 4}, randv(12));
    EXPECT_LT(finite_diff_check({a, b}, [&] { return mean(mul(a, b)); }), 1e-4);
    EXPECT_LT(finite_diff_check({a, b}, [&] { return mean(sub(a, b)); }), 1e-4);
  }
  {
    auto a = param({3, 4}, randv(12));
    auto b = param({3, 4}, posv(12));
    EXPECT_LT(finite_diff_check({a, b}, [&] { return mean(div(a, b)); }), 1e-4);
  }
  {
    auto a = param({2, 3}, randv(6));
    EXPECT_LT(finite_diff_check({a}, [&] { return sum(exp(a)); }), 1e-4);
    EXPECT_LT(finite_diff_check({a}, [&] { return sum(tanh(a)); }), 1e-4);
    EXPECT_LT(finite_diff_check({a}, [&] { return sum(square(relu(a))); }), 1e-3);
    EXPECT_LT(finite_diff_check({a}, [&] { return mean(square(softmax(a))); }), 1e-4);
    EXPECT_LT(finite_diff_check({a}, [&] { return mean(square(log_softmax(a))); }), 1e-4);
  }
  {
    auto a = param({2, 3}, posv(6));
    EXPECT_LT(finite_diff_check({a}, [&] { return sum(log(a)); }), 1e-4);
  }
  {
    auto a = param({2, 3, 4}, randv(24));
    auto b = param({2, 4, 2}, randv(16));
    EXPECT_LT(finite_diff_check({a, b}, [&] { return mean(square(bmm(a, b))); }), 1e-4);
    EXPECT_LT(finite_diff_check({a}, [&] { return mean(square(transpose_last(a))); }), 1e-4);
    EXPECT_LT(finite_diff_check({a}, [&] { return mean(square(slice(a, 1, 1, 2))); }), 1e-4);
  }
}

TEST(Backward, ChainComposition) {
  // f(g(x)) with g = 2x, f = x^2: d/dx = 2 * g * 2 = 8x
  auto x = param({1}, {3.0});
  auto loss = sum(square(scale(x, 2.0)));
  backward(loss);
  EXPECT_NEAR(x->grad[0], 24.0, 1e-12);
}

TEST(Backward, DeterministicRepeat) {
  auto run = [] {
    Rng rng(9);
    std::vector<double> v(20);
    for (auto& x : v) x = rng.uniform(-1, 1);
    auto W = param({4, 5}, v);
    auto x4 = constant({3, 4}, std::vector<double>(12, 0.5));
    auto loss = mean(square(tanh(matmul(x4, W))));
    backward(loss);
    return std::make_pair(loss->scalar(), W->grad);
  };
  auto [l1, g1] = run();
  auto [l2, g2] = run();
  EXPECT_EQ(l1, l2);
  EXPECT_EQ(g1, g2);
}

TEST(Adam, ZeroGradientLeavesParams) {
  auto p = param({2}, {1.0, -2.0});
  Adam opt({p}, 0.05);
  p->zero_grad();
  opt.step();
  EXPECT_EQ(p->value, (std::vector<double>{1.0, -2.0}));
  EXPECT_EQ(opt.timestep(), 1);
}

TEST(Adam, MovesAgainstConstantGradient) {
  auto p = param({1}, {0.0});
  Adam opt({p}, 0.01);
  for (int i = 0; i < 10; ++i) {
    p->zero_grad();
    p->grad[0] = 3.0;
    opt.step();
  }
  EXPECT_LT(p->value[0], 0.0);
}

TEST(Adam, QuadraticConverges) {
  // minimize (x - 3)^2 from 0
  auto p = param({1}, {0.0});
  Adam opt({p}, 0.05);
  for (int i = 0; i < 2000; ++i) {
    opt.zero_grad();
    auto loss = sum(square(sub(p, scalar_const(3.0))));
    backward(loss);
    opt.step();
  }
  EXPECT_NEAR(p->value[0], 3.0, 1e-2);
}
