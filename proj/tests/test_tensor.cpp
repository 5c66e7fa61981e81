#include <gtest/gtest.h>

#include <cmath>
#include <thread>

#include "fap/error.hpp"
#include "fap/ops.hpp"
#include "gradcheck.hpp"

namespace fap {
namespace {

using testing::check_gradient;
using testing::random_tensor;
using Inputs = std::vector<Tensor>;

constexpr double kTol = 1e-5;

void expect_grad_ok(const std::function<Tensor(const Inputs&)>& f, const Inputs& in, double tol = kTol) {
  const auto r = check_gradient(f, in);
  EXPECT_GT(r.checked, 0u);
  EXPECT_LT(r.max_rel_error, tol) << r.worst;
  EXPECT_LE(r.skipped * 50, r.checked + r.skipped) << "too many non-smooth entries";
}

TEST(Tensor, ConstructionAndShape) {
  Tensor t({2, 3}, {1, 2, 3, 4, 5, 6});
  EXPECT_EQ(t.rank(), 2u);
  EXPECT_EQ(t.dim(1), 3u);
  EXPECT_EQ(t.numel(), 6u);
  EXPECT_DOUBLE_EQ(t[4], 5.0);
  EXPECT_THROW(Tensor({2, 2}, {1, 2, 3}), ShapeError);
  EXPECT_THROW(t.item(), ShapeError);
  EXPECT_DOUBLE_EQ(Tensor::scalar(3.5).item(), 3.5);
}

TEST(Tensor, RejectsNonFiniteValues) {
  EXPECT_THROW(Tensor({1}, {std::nan("")}), NumericError);
  Tensor a({1}, {0.0});
  EXPECT_THROW(ops::log(a), NumericError);
}

TEST(Backward, SumOfSquares) {
  Tensor x({3}, {1, 2, 3});
  x.set_requires_grad(true);
  backward(ops::sum(ops::mul(x, x)));
  const auto g = x.grad();
  EXPECT_DOUBLE_EQ(g[0], 2.0);
  EXPECT_DOUBLE_EQ(g[1], 4.0);
  EXPECT_DOUBLE_EQ(g[2], 6.0);
}

TEST(Backward, SumOfRelu) {
  Tensor x({2}, {-1, 5});
  x.set_requires_grad(true);
  backward(ops::sum(ops::relu(x)));
  EXPECT_DOUBLE_EQ(x.grad()[0], 0.0);
  EXPECT_DOUBLE_EQ(x.grad()[1], 1.0);
}

TEST(Backward, AccumulatesAcrossCallsUntilZeroed) {
  Tensor x({1}, {2.0});
  x.set_requires_grad(true);
  backward(ops::mul(x, x));
  backward(ops::mul(x, x));
  EXPECT_DOUBLE_EQ(x.grad()[0], 8.0);
  x.zero_grad();
  EXPECT_FALSE(x.has_grad());
}

TEST(Backward, RequiresScalarLoss) {
  Tensor x({2}, {1, 2});
  x.set_requires_grad(true);
  EXPECT_THROW(backward(ops::relu(x)), ShapeError);
}

TEST(Gradient, UnreachableInputsGetZerosAndGradBuffersStayUntouched) {
  Tensor x({2}, {1, 2}), y({2}, {3, 4});
  x.set_requires_grad(true);
  y.set_requires_grad(true);
  const auto g = gradient(ops::sum(ops::mul(x, x)), std::vector<Tensor>{x, y});
  EXPECT_DOUBLE_EQ(g[0][1], 4.0);
  EXPECT_DOUBLE_EQ(g[1][0], 0.0);
  EXPECT_DOUBLE_EQ(g[1][1], 0.0);
  EXPECT_FALSE(x.has_grad());
}

TEST(Gradient, DetachCutsHistory) {
  Tensor x({1}, {3.0});
  x.set_requires_grad(true);
  const Tensor d = ops::mul(x, x).detach();
  EXPECT_FALSE(d.requires_grad());
  const auto g = gradient(ops::sum(ops::mul(d, x)), std::vector<Tensor>{x});
  EXPECT_DOUBLE_EQ(g[0][0], 9.0);
}

TEST(NoGrad, GuardStopsRecordingAndIsThreadLocal) {
  Tensor x({1}, {1.0});
  x.set_requires_grad(true);
  {
    NoGradGuard guard;
    EXPECT_FALSE(grad_enabled());
    EXPECT_FALSE(ops::scale(x, 2.0).requires_grad());
    bool other_thread = false;
    std::thread t([&] { other_thread = grad_enabled(); });
    t.join();
    EXPECT_TRUE(other_thread);
  }
  EXPECT_TRUE(grad_enabled());
  EXPECT_TRUE(ops::scale(x, 2.0).requires_grad());
}

TEST(Ops, ReluAndSoftmaxValues) {
  const Tensor r = ops::relu(Tensor({3}, {-1, 0, 2}));
  EXPECT_EQ(std::vector<double>(r.values().begin(), r.values().end()), (std::vector<double>{0, 0, 2}));
  const Tensor s = ops::softmax(Tensor({2}, {0, 0}));
  EXPECT_DOUBLE_EQ(s[0], 0.5);
  EXPECT_DOUBLE_EQ(s[1], 0.5);
}

TEST(Ops, SoftmaxIsStableForLargeLogits) {
  const Tensor s = ops::softmax(Tensor({1, 3}, {1000, 1000, -1000}));
  EXPECT_NEAR(s[0], 0.5, 1e-15);
  EXPECT_NEAR(s[2], 0.0, 1e-300);
  const Tensor l = ops::log_softmax(Tensor({1, 2}, {800, 0}));
  EXPECT_NEAR(l[1], -800.0, 1e-9);
}

TEST(Ops, Conv2dIdentityKernel) {
  Rng rng(1);
  const Tensor x = random_tensor({1, 1, 4, 4}, rng, 1.0, false);
  const Tensor y = ops::conv2d(x, Tensor({1, 1, 1, 1}, {1.0}), 1, 0);
  for (std::size_t i = 0; i < 16; ++i) EXPECT_DOUBLE_EQ(y[i], x[i]);
}

TEST(Ops, Conv2dOnesKernelCenter) {
  const Tensor y = ops::conv2d(Tensor::full({1, 1, 3, 3}, 1.0), Tensor::full({1, 1, 3, 3}, 1.0), 1, 1);
  EXPECT_EQ(y.shape(), (Shape{1, 1, 3, 3}));
  EXPECT_DOUBLE_EQ(y[4], 9.0);
  EXPECT_DOUBLE_EQ(y[0], 4.0);
}

TEST(Ops, Conv2dStrideAndShapeErrors) {
  const Tensor y = ops::conv2d(Tensor::full({1, 1, 5, 5}, 1.0), Tensor::full({2, 1, 3, 3}, 1.0), 2, 1);
  EXPECT_EQ(y.shape(), (Shape{1, 2, 3, 3}));
  EXPECT_THROW(ops::conv2d(Tensor::full({1, 2, 4, 4}, 1.0), Tensor::full({1, 1, 3, 3}, 1.0), 1, 1), ShapeError);
  EXPECT_THROW(ops::conv2d(Tensor::full({1, 1, 4, 4}, 1.0), Tensor::full({1, 1, 2, 2}, 1.0), 1, 0), ShapeError);
}

TEST(Ops, MaxPoolTiesGoToFirstElement) {
  Tensor x({1, 1, 2, 2}, {3, 3, 3, 3});
  x.set_requires_grad(true);
  backward(ops::sum(ops::max_pool2d(x)));
  EXPECT_DOUBLE_EQ(x.grad()[0], 1.0);
  EXPECT_DOUBLE_EQ(x.grad()[1] + x.grad()[2] + x.grad()[3], 0.0);
  EXPECT_EQ(ops::max_pool2d(Tensor::full({1, 1, 3, 5}, 0.0)).shape(), (Shape{1, 1, 1, 2}));
  EXPECT_THROW(ops::max_pool2d(Tensor::full({1, 1, 1, 2}, 0.0)), ShapeError);
}

TEST(Ops, NoBroadcastingOnElementwise) {
  EXPECT_THROW(ops::add(Tensor::full({2, 2}, 1.0), Tensor::full({2}, 1.0)), ShapeError);
  EXPECT_THROW(ops::mul(Tensor::full({2}, 1.0), Tensor::full({3}, 1.0)), ShapeError);
}

TEST(Ops, PairwiseDistanceMatchesBruteForce) {
  Rng rng(4);
  const Tensor a = random_tensor({3, 5}, rng, 1.0, false), b = random_tensor({2, 5}, rng, 1.0, false);
  const Tensor d = ops::pairwise_sq_dist(a, b);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 2; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < 5; ++k) s += (a[i * 5 + k] - b[j * 5 + k]) * (a[i * 5 + k] - b[j * 5 + k]);
      EXPECT_NEAR(d[i * 2 + j], s, 1e-12);
    }
}

TEST(Ops, AttentionMatchesDenseOracle) {
  Rng rng(6);
  const Tensor q = random_tensor({2, 3, 2, 2}, rng, 1.0, false), k = random_tensor({2, 3, 2, 2}, rng, 1.0, false),
               v = random_tensor({2, 3, 2, 2}, rng, 1.0, false);
  const Tensor out = ops::attention(q, k, v);
  const std::size_t c = 3, t = 4;
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t r = 0; r < t; ++r) {
      std::vector<double> w(t);
      double mx = -1e300;
      for (std::size_t s = 0; s < t; ++s) {
        double dot = 0.0;
        for (std::size_t ch = 0; ch < c; ++ch) dot += q[(b * c + ch) * t + r] * k[(b * c + ch) * t + s];
        w[s] = dot / std::sqrt(3.0);
        mx = std::max(mx, w[s]);
      }
      double z = 0.0;
      for (double& x : w) z += (x = std::exp(x - mx));
      for (std::size_t ch = 0; ch < c; ++ch) {
        double o = 0.0;
        for (std::size_t s = 0; s < t; ++s) o += w[s] / z * v[(b * c + ch) * t + s];
        EXPECT_NEAR(out[(b * c + ch) * t + r], o, 1e-12);
      }
    }
}

// Finite-difference checks for every differentiable primitive.

TEST(GradCheck, Elementwise) {
  Rng rng(10);
  const Inputs in{random_tensor({3, 4}, rng), random_tensor({3, 4}, rng)};
  expect_grad_ok([](const Inputs& x) { return ops::sum(ops::mul(ops::add(x[0], x[1]), ops::sub(x[0], x[1]))); }, in);
  expect_grad_ok([](const Inputs& x) { return ops::mean(ops::scale(ops::mul(x[0], x[0]), -1.5)); }, in);
}

TEST(GradCheck, ReluLogClamp) {
  Rng rng(11);
  const Inputs in{random_tensor({2, 6}, rng)};
  expect_grad_ok([](const Inputs& x) { return ops::sum(ops::mul(ops::relu(x[0]), x[0])); }, in);
  expect_grad_ok(
      [](const Inputs& x) { return ops::sum(ops::log(ops::clamp_min(ops::mul(x[0], x[0]), 1e-3))); }, in);
}

TEST(GradCheck, ReshapeFlattenConcatSliceIndex) {
  Rng rng(12);
  const Inputs in{random_tensor({2, 3, 2}, rng), random_tensor({1, 3, 2}, rng)};
  expect_grad_ok(
      [](const Inputs& x) {
        const Tensor parts[] = {x[0], x[1]};
        const Tensor c = ops::concat(parts, 0);
        const Tensor s = ops::slice(c, 1, 3);
        const std::size_t rows[] = {0, 2, 2, 1};
        const Tensor g = ops::index_rows(ops::flatten(c), rows);
        return ops::add(ops::sum(ops::mul(ops::reshape(s, {12}), ops::reshape(s, {12}))),
                        ops::sum(ops::mul(g, g)));
      },
      in);
}

TEST(GradCheck, ConcatAlongLastAxis) {
  Rng rng(13);
  const Inputs in{random_tensor({2, 3}, rng), random_tensor({2, 2}, rng)};
  expect_grad_ok(
      [](const Inputs& x) {
        const Tensor parts[] = {x[0], x[1]};
        const Tensor c = ops::concat(parts, 1);
        return ops::sum(ops::mul(c, ops::scale(c, 0.5)));
      },
      in);
}

TEST(GradCheck, MatmulAndDense) {
  Rng rng(14);
  const Inputs in{random_tensor({5, 4}, rng), random_tensor({4, 3}, rng), random_tensor({3}, rng)};
  expect_grad_ok([](const Inputs& x) { return ops::sum(ops::mul(ops::matmul(x[0], x[1]), ops::matmul(x[0], x[1]))); },
                 in);
  expect_grad_ok(
      [](const Inputs& x) {
        const Tensor y = ops::dense(x[0], x[1], x[2]);
        return ops::sum(ops::mul(y, y));
      },
      in);
}

TEST(GradCheck, SoftmaxLogSoftmaxNll) {
  Rng rng(15);
  const Inputs in{random_tensor({4, 5}, rng, 2.0), random_tensor({4, 5}, rng)};
  expect_grad_ok([](const Inputs& x) { return ops::sum(ops::mul(ops::softmax(x[0]), x[1])); }, in);
  expect_grad_ok([](const Inputs& x) { return ops::sum(ops::mul(ops::log_softmax(x[0]), x[1])); }, in);
  const std::vector<int> labels{0, 3, 4, 1};
  expect_grad_ok([&](const Inputs& x) { return ops::nll_loss(ops::log_softmax(x[0]), labels); }, {in[0]});
}

TEST(GradCheck, Conv2dPaddedAndStrided) {
  Rng rng(16);
  const Inputs in{random_tensor({1, 2, 5, 5}, rng), random_tensor({3, 2, 3, 3}, rng)};
  expect_grad_ok([](const Inputs& x) { return ops::sum(ops::conv2d(x[0], x[1], 1, 1)); }, in);
  expect_grad_ok(
      [](const Inputs& x) {
        const Tensor y = ops::conv2d(x[0], x[1], 2, 1);
        return ops::sum(ops::mul(y, y));
      },
      in);
}

TEST(GradCheck, ChannelBiasAndMaxPool) {
  Rng rng(17);
  const Inputs in{random_tensor({2, 3, 4, 4}, rng), random_tensor({3}, rng)};
  expect_grad_ok(
      [](const Inputs& x) {
        const Tensor y = ops::max_pool2d(ops::add_channel_bias(x[0], x[1]));
        return ops::sum(ops::mul(y, y));
      },
      in);
}

TEST(GradCheck, PairwiseDistance) {
  Rng rng(18);
  const Inputs in{random_tensor({3, 4}, rng), random_tensor({2, 4}, rng)};
  expect_grad_ok(
      [](const Inputs& x) {
        const Tensor d = ops::pairwise_sq_dist(x[0], x[1]);
        return ops::sum(ops::mul(ops::softmax(ops::scale(d, -1.0)), d));
      },
      in);
  expect_grad_ok([](const Inputs& x) { return ops::sum(ops::pairwise_sq_dist(x[0], x[1])); }, in);
}

TEST(GradCheck, Attention) {
  Rng rng(19);
  const Inputs in{random_tensor({2, 3, 2, 3}, rng), random_tensor({2, 3, 2, 3}, rng), random_tensor({2, 3, 2, 3}, rng),
                  random_tensor({2, 3, 2, 3}, rng)};
  expect_grad_ok([](const Inputs& x) { return ops::sum(ops::mul(ops::attention(x[0], x[1], x[2]), x[3])); }, in);
}

}  // namespace
}  // namespace fap
