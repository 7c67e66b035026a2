#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "unmix/grad_check.hpp"
#include "unmix/nn_ops.hpp"
#include "unmix/tensor.hpp"

using namespace unmix;

namespace {

constexpr double kH = 1e-6;

Tensor random_tensor(Shape shape, RngStream& rng, double lo = -1.0, double hi = 1.0) {
    return Tensor::uniform(std::move(shape), lo, hi, rng, true);
}

}  // namespace

// ---------------------------------------------------------------------------
// RngStream
// ---------------------------------------------------------------------------

TEST(Rng, SameSeedSameSequence) {
    RngStream a(42), b(42);
    for (int i = 0; i < 100; ++i) ASSERT_EQ(a.next_u64(), b.next_u64());
}

TEST(Rng, SplitStreamsAreIndependentOfParentPosition) {
    RngStream a(42);
    RngStream child1 = a.split(7);
    a.next_u64();
    a.next_u64();
    RngStream child2 = a.split(7);
    ASSERT_EQ(child1.next_u64(), child2.next_u64());
}

TEST(Rng, UniformInRange) {
    RngStream rng(1);
    for (int i = 0; i < 1000; ++i) {
        const double u = rng.uniform();
        ASSERT_GE(u, 0.0);
        ASSERT_LT(u, 1.0);
    }
}

TEST(Rng, DirichletSumsToOne) {
    RngStream rng(3);
    for (int i = 0; i < 50; ++i) {
        auto d = rng.dirichlet(0.7, 4);
        ASSERT_NEAR(std::accumulate(d.begin(), d.end(), 0.0), 1.0, 1e-12);
        for (double v : d) ASSERT_GE(v, 0.0);
    }
}

// ---------------------------------------------------------------------------
// matmul
// ---------------------------------------------------------------------------

TEST(Matmul, IdentityLeavesOperandUnchanged) {
    Tensor eye = Tensor::from({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
    RngStream rng(5);
    Tensor b = random_tensor({3, 2}, rng);
    Tensor c = matmul(eye, b);
    for (std::size_t i = 0; i < b.data().size(); ++i) ASSERT_DOUBLE_EQ(c.data()[i], b.data()[i]);
}

TEST(Matmul, HandComputed2x2) {
    Tensor a = Tensor::from({2, 2}, {1, 2, 3, 4});
    Tensor b = Tensor::from({2, 1}, {5, 6});
    Tensor c = matmul(a, b);
    EXPECT_DOUBLE_EQ(c.at({0, 0}), 17.0);
    EXPECT_DOUBLE_EQ(c.at({1, 0}), 39.0);
}

TEST(Matmul, GradOfSumMatchesClosedFormAndFiniteDifferences) {
    RngStream rng(11);
    Tensor a = random_tensor({4, 5}, rng);
    Tensor b = random_tensor({5, 3}, rng);
    backward(sum(matmul(a, b)));
    // dL/da = ones(4x3) . b^T
    for (std::int64_t i = 0; i < 4; ++i)
        for (std::int64_t k = 0; k < 5; ++k) {
            double expected = 0.0;
            for (std::int64_t j = 0; j < 3; ++j) expected += b.at({k, j});
            ASSERT_NEAR(a.grad()[static_cast<std::size_t>(i * 5 + k)], expected, 1e-12);
        }
    const double err = grad_check([&] { return sum(matmul(a, b)); }, a, kH);
    EXPECT_LT(err, 1e-6);
}

TEST(Matmul, GradChecksAcrossShapes) {
    RngStream rng(12);
    const std::vector<std::pair<Shape, Shape>> cases = {
        {{2, 3}, {3, 4}}, {{1, 7}, {7, 2}}, {{5, 2}, {2, 5}}};
    for (const auto& [sa, sb] : cases) {
        Tensor a = random_tensor(sa, rng);
        Tensor b = random_tensor(sb, rng);
        Tensor probe = Tensor::uniform({sa[0], sb[1]}, -1, 1, rng);
        auto f = [&] { return sum(mul(matmul(a, b), probe)); };
        EXPECT_LT(grad_check(f, a, kH), 1e-6);
        EXPECT_LT(grad_check(f, b, kH), 1e-6);
    }
}

TEST(Matmul, ShapeMismatchNamesBothShapes) {
    Tensor a = Tensor::zeros({2, 3});
    Tensor b = Tensor::zeros({4, 2});
    try {
        matmul(a, b);
        FAIL() << "expected DimensionError";
    } catch (const DimensionError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("[2x3]"), std::string::npos) << msg;
        EXPECT_NE(msg.find("[4x2]"), std::string::npos) << msg;
    }
}

// ---------------------------------------------------------------------------
// conv2d
// ---------------------------------------------------------------------------

TEST(Conv2d, IdentityKernel) {
    RngStream rng(21);
    Tensor x = random_tensor({3, 4, 5}, rng);
    Tensor w = Tensor::zeros({3, 3, 1, 1});
    for (std::int64_t i = 0; i < 3; ++i) w.data()[static_cast<std::size_t>(i * 3 + i)] = 1.0;
    Tensor out = conv2d(x, w, Tensor(), 1, 0);
    for (std::size_t i = 0; i < x.data().size(); ++i) ASSERT_DOUBLE_EQ(out.data()[i], x.data()[i]);
}

TEST(Conv2d, OnesKernelCountsOverlap) {
    Tensor x = Tensor::full({1, 3, 3}, 1.0);
    Tensor w = Tensor::full({1, 1, 3, 3}, 1.0);
    Tensor out = conv2d(x, w, Tensor(), 1, 1);
    EXPECT_DOUBLE_EQ(out.at({0, 1, 1}), 9.0);  // center
    EXPECT_DOUBLE_EQ(out.at({0, 0, 0}), 4.0);  // corner
    EXPECT_DOUBLE_EQ(out.at({0, 0, 1}), 6.0);  // edge
}

TEST(Conv2d, GradCheck) {
    RngStream rng(22);
    struct Case {
        Shape x, w;
        std::int64_t stride, pad;
    };
    const std::vector<Case> cases = {{{2, 5, 5}, {3, 2, 3, 3}, 1, 1},
                                     {{1, 4, 4}, {2, 1, 1, 1}, 1, 0},
                                     {{3, 5, 5}, {2, 3, 3, 3}, 2, 1}};
    for (const auto& c : cases) {
        Tensor x = random_tensor(c.x, rng);
        Tensor w = random_tensor(c.w, rng);
        Tensor b = random_tensor({c.w[0]}, rng);
        auto f = [&] { return sum(mul(conv2d(x, w, b, c.stride, c.pad),
                                      conv2d(x, w, b, c.stride, c.pad))); };
        EXPECT_LT(grad_check(f, x, kH), 1e-5);
        EXPECT_LT(grad_check(f, w, kH), 1e-5);
        EXPECT_LT(grad_check(f, b, kH), 1e-5);
    }
}

TEST(Conv2d, NonIntegralOutputIsConfigError) {
    // (6 + 0 - 3) = 3 is not divisible by stride 2.
    Tensor x = Tensor::zeros({1, 6, 6});
    Tensor w = Tensor::zeros({1, 1, 3, 3});
    EXPECT_THROW(conv2d(x, w, Tensor(), 2, 0), ConfigError);
}

TEST(Conv2d, KernelSizeRestricted) {
    Tensor x = Tensor::zeros({1, 6, 6});
    Tensor w = Tensor::zeros({1, 1, 5, 5});
    EXPECT_THROW(conv2d(x, w, Tensor(), 1, 2), ConfigError);
}

// ---------------------------------------------------------------------------
// batch_norm2d
// ---------------------------------------------------------------------------

TEST(BatchNorm, ConstantChannelGivesShift) {
    Tensor x = Tensor::full({2, 3, 3}, 7.0);
    Tensor scale = Tensor::from({2}, {1.5, 2.0});
    Tensor shift = Tensor::from({2}, {0.25, -1.0});
    BatchNormState st(2);
    Tensor out = batch_norm2d(x, scale, shift, st, true);
    for (std::int64_t i = 0; i < 9; ++i) {
        ASSERT_NEAR(out.data()[static_cast<std::size_t>(i)], 0.25, 1e-12);
        ASSERT_NEAR(out.data()[static_cast<std::size_t>(9 + i)], -1.0, 1e-12);
    }
}

TEST(BatchNorm, TwoPointChannelScalesByUnitVariance) {
    Tensor x = Tensor::from({1, 1, 2}, {-1.0, 1.0});
    Tensor scale = Tensor::full({1}, 1.0);
    Tensor shift = Tensor::zeros({1});
    BatchNormState st(1);
    Tensor out = batch_norm2d(x, scale, shift, st, true);
    const double expected = 1.0 / std::sqrt(1.0 + st.eps);
    EXPECT_NEAR(out.data()[0], -expected, 1e-12);
    EXPECT_NEAR(out.data()[1], expected, 1e-12);
}

TEST(BatchNorm, RunningStatsUpdateWithMomentum) {
    Tensor x = Tensor::from({1, 1, 2}, {2.0, 4.0});
    Tensor scale = Tensor::full({1}, 1.0);
    Tensor shift = Tensor::zeros({1});
    BatchNormState st(1);
    batch_norm2d(x, scale, shift, st, true);
    EXPECT_NEAR(st.running_mean[0], 0.9 * 0.0 + 0.1 * 3.0, 1e-12);
    EXPECT_NEAR(st.running_var[0], 0.9 * 1.0 + 0.1 * 1.0, 1e-12);
    // Eval mode must not touch the stats.
    batch_norm2d(x, scale, shift, st, false);
    EXPECT_NEAR(st.running_mean[0], 0.3, 1e-12);
}

TEST(BatchNorm, GradCheck) {
    RngStream rng(31);
    const std::vector<Shape> shapes = {{3, 4, 4}, {1, 2, 5}, {2, 3, 3}};
    for (const auto& s : shapes) {
        Tensor x = random_tensor(s, rng);
        Tensor scale = random_tensor({s[0]}, rng, 0.5, 1.5);
        Tensor shift = random_tensor({s[0]}, rng);
        Tensor probe = Tensor::uniform(s, -1, 1, rng);
        BatchNormState st(s[0]);
        auto f = [&] {
            return sum(mul(batch_norm2d(x, scale, shift, st, true, /*update_stats=*/false), probe));
        };
        EXPECT_LT(grad_check(f, x, kH), 1e-5);
        EXPECT_LT(grad_check(f, scale, kH), 1e-5);
        EXPECT_LT(grad_check(f, shift, kH), 1e-5);
    }
}

TEST(BatchNorm, ChannelMismatchThrows) {
    Tensor x = Tensor::zeros({3, 2, 2});
    Tensor scale = Tensor::full({2}, 1.0);
    Tensor shift = Tensor::zeros({2});
    BatchNormState st(2);
    EXPECT_THROW(batch_norm2d(x, scale, shift, st, true), DimensionError);
}

// ---------------------------------------------------------------------------
// layer_norm
// ---------------------------------------------------------------------------

TEST(LayerNorm, ConstantRowGivesShift) {
    Tensor x = Tensor::full({2, 4}, 3.0);
    Tensor scale = Tensor::full({4}, 2.0);
    Tensor shift = Tensor::from({4}, {0.1, 0.2, 0.3, 0.4});
    Tensor out = layer_norm(x, scale, shift);
    for (std::int64_t r = 0; r < 2; ++r)
        for (std::int64_t i = 0; i < 4; ++i)
            ASSERT_NEAR(out.at({r, i}), shift.data()[static_cast<std::size_t>(i)], 1e-12);
}

TEST(LayerNorm, TwoPointRow) {
    Tensor x = Tensor::from({1, 2}, {-1.0, 1.0});
    Tensor scale = Tensor::full({2}, 1.0);
    Tensor shift = Tensor::zeros({2});
    Tensor out = layer_norm(x, scale, shift, 1e-5);
    const double expected = 1.0 / std::sqrt(1.0 + 1e-5);
    EXPECT_NEAR(out.data()[0], -expected, 1e-12);
    EXPECT_NEAR(out.data()[1], expected, 1e-12);
}

TEST(LayerNorm, GradCheck) {
    RngStream rng(41);
    const std::vector<Shape> shapes = {{4, 6}, {2, 3, 8}, {1, 5}};
    for (const auto& s : shapes) {
        Tensor x = random_tensor(s, rng);
        Tensor scale = random_tensor({s.back()}, rng, 0.5, 1.5);
        Tensor shift = random_tensor({s.back()}, rng);
        Tensor probe = Tensor::uniform(s, -1, 1, rng);
        auto f = [&] { return sum(mul(layer_norm(x, scale, shift), probe)); };
        EXPECT_LT(grad_check(f, x, kH), 1e-5);
        EXPECT_LT(grad_check(f, scale, kH), 1e-5);
        EXPECT_LT(grad_check(f, shift, kH), 1e-5);
    }
}

// ---------------------------------------------------------------------------
// softmax
// ---------------------------------------------------------------------------

TEST(Softmax, UniformForZeroInput) {
    Tensor x = Tensor::zeros({4});
    Tensor y = softmax(x, 0);
    for (double v : y.data()) ASSERT_DOUBLE_EQ(v, 0.25);
}

TEST(Softmax, StableForLargeLogits) {
    Tensor x = Tensor::from({2}, {1000.0, 0.0});
    Tensor y = softmax(x, 0);
    EXPECT_DOUBLE_EQ(y.data()[0], 1.0);
    EXPECT_DOUBLE_EQ(y.data()[1], 0.0);
}

TEST(Softmax, RowsSumToOneAndJacobianChecks) {
    RngStream rng(51);
    Tensor x = random_tensor({3, 5}, rng, -3, 3);
    Tensor y = softmax(x, 1);
    for (std::int64_t r = 0; r < 3; ++r) {
        double s = 0.0;
        for (std::int64_t c = 0; c < 5; ++c) s += y.at({r, c});
        ASSERT_NEAR(s, 1.0, 1e-12);
    }
    for (int probe_i = 0; probe_i < 3; ++probe_i) {
        Tensor probe = Tensor::uniform({3, 5}, -1, 1, rng);
        EXPECT_LT(grad_check([&] { return sum(mul(softmax(x, 1), probe)); }, x, kH), 1e-5);
    }
}

TEST(Softmax, PropertySlicesSumToOneAcrossShapesAndAxes) {
    RngStream rng(52);
    for (int trial = 0; trial < 30; ++trial) {
        const std::int64_t a = 1 + static_cast<std::int64_t>(rng.next_u64() % 5);
        const std::int64_t b = 1 + static_cast<std::int64_t>(rng.next_u64() % 5);
        const std::int64_t c = 1 + static_cast<std::int64_t>(rng.next_u64() % 5);
        Tensor x = Tensor::uniform({a, b, c}, -30, 30, rng);
        const int axis = static_cast<int>(rng.next_u64() % 3);
        Tensor y = softmax(x, axis);
        for (double v : y.data()) {
            ASSERT_GE(v, 0.0);
            ASSERT_LE(v, 1.0);
        }
        // Sum along the axis must be 1 for every slice.
        const auto& sh = x.shape();
        std::int64_t inner = 1, outer = 1;
        for (int i = axis + 1; i < 3; ++i) inner *= sh[static_cast<std::size_t>(i)];
        for (int i = 0; i < axis; ++i) outer *= sh[static_cast<std::size_t>(i)];
        const std::int64_t len = sh[static_cast<std::size_t>(axis)];
        for (std::int64_t o = 0; o < outer; ++o)
            for (std::int64_t in = 0; in < inner; ++in) {
                double s = 0.0;
                for (std::int64_t l = 0; l < len; ++l)
                    s += y.data()[static_cast<std::size_t>(o * len * inner + l * inner + in)];
                ASSERT_NEAR(s, 1.0, 1e-12);
            }
    }
}

// ---------------------------------------------------------------------------
// activations
// ---------------------------------------------------------------------------

TEST(Activation, LeakyReluDefinition) {
    Tensor x = Tensor::from({3}, {-1.0, 0.0, 2.0});
    Tensor y = leaky_relu(x, 0.01);
    EXPECT_DOUBLE_EQ(y.data()[0], -0.01);
    EXPECT_DOUBLE_EQ(y.data()[1], 0.0);
    EXPECT_DOUBLE_EQ(y.data()[2], 2.0);
}

TEST(Activation, GeluAtZero) {
    Tensor x = Tensor::zeros({1});
    EXPECT_DOUBLE_EQ(gelu(x).data()[0], 0.0);
}

TEST(Activation, GradChecksAwayFromKink) {
    RngStream rng(61);
    for (int trial = 0; trial < 3; ++trial) {
        Tensor x = Tensor::zeros({20}, true);
        for (auto& v : x.data()) {
            v = rng.uniform(0.1, 2.0);
            if (rng.uniform() < 0.5) v = -v;  // keeps |x| >= 0.1, away from 0
        }
        Tensor probe = Tensor::uniform({20}, -1, 1, rng);
        EXPECT_LT(grad_check([&] { return sum(mul(leaky_relu(x, 0.01), probe)); }, x, kH), 1e-5);
        EXPECT_LT(grad_check([&] { return sum(mul(gelu(x), probe)); }, x, kH), 1e-5);
    }
}

// ---------------------------------------------------------------------------
// dropout
// ---------------------------------------------------------------------------

TEST(Dropout, EvalModeIsIdentity) {
    RngStream rng(71);
    Tensor x = random_tensor({10}, rng);
    RngStream drop_rng(1);
    Tensor y = dropout(x, 0.5, false, drop_rng);
    for (std::size_t i = 0; i < x.data().size(); ++i) ASSERT_DOUBLE_EQ(y.data()[i], x.data()[i]);
}

TEST(Dropout, ZeroRateIsIdentity) {
    RngStream rng(72);
    Tensor x = random_tensor({10}, rng);
    RngStream drop_rng(1);
    Tensor y = dropout(x, 0.0, true, drop_rng);
    for (std::size_t i = 0; i < x.data().size(); ++i) ASSERT_DOUBLE_EQ(y.data()[i], x.data()[i]);
}

TEST(Dropout, RateOneRejected) {
    Tensor x = Tensor::zeros({4});
    RngStream rng(1);
    EXPECT_THROW(dropout(x, 1.0, true, rng), ConfigError);
}

TEST(Dropout, MonteCarloSurvivalAndMean) {
    const std::int64_t n = 100000;
    RngStream rng(4242);
    Tensor x = Tensor::uniform({n}, 0.5, 1.5, rng);
    RngStream drop_rng(777);
    Tensor y = dropout(x, 0.5, true, drop_rng);
    std::int64_t survivors = 0;
    double sum_x = 0.0, sum_y = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
        if (y.data()[static_cast<std::size_t>(i)] != 0.0) ++survivors;
        sum_x += x.data()[static_cast<std::size_t>(i)];
        sum_y += y.data()[static_cast<std::size_t>(i)];
    }
    const double frac = static_cast<double>(survivors) / static_cast<double>(n);
    EXPECT_NEAR(frac, 0.5, 0.01);
    EXPECT_NEAR(sum_y / sum_x, 1.0, 0.02);
}

TEST(Dropout, BackwardReusesForwardMask) {
    RngStream rng(73);
    Tensor x = random_tensor({50}, rng, 0.5, 1.5);
    // Reseeding per call freezes the mask, making f deterministic for FD.
    auto f = [&] {
        RngStream frozen(99);
        return sum(dropout(x, 0.3, true, frozen));
    };
    EXPECT_LT(grad_check(f, x, kH), 1e-6);
}

// ---------------------------------------------------------------------------
// backward
// ---------------------------------------------------------------------------

TEST(Backward, SumGivesOnes) {
    RngStream rng(81);
    Tensor x = random_tensor({3, 4}, rng);
    backward(sum(x));
    for (double g : x.grad()) ASSERT_DOUBLE_EQ(g, 1.0);
}

TEST(Backward, SumOfSquaresGivesTwoX) {
    RngStream rng(82);
    Tensor x = random_tensor({7}, rng);
    backward(sum(mul(x, x)));
    for (std::size_t i = 0; i < x.data().size(); ++i)
        ASSERT_NEAR(x.grad()[i], 2.0 * x.data()[i], 1e-12);
}

TEST(Backward, RepeatedCallsAccumulateUntilZeroed) {
    Tensor x = Tensor::full({3}, 2.0, true);
    backward(sum(x));
    backward(sum(x));
    for (double g : x.grad()) ASSERT_DOUBLE_EQ(g, 2.0);
    x.zero_grad();
    backward(sum(x));
    for (double g : x.grad()) ASSERT_DOUBLE_EQ(g, 1.0);
}

TEST(Backward, NonScalarLossIsContractError) {
    Tensor x = Tensor::full({3}, 1.0, true);
    EXPECT_THROW(backward(add(x, x)), ContractError);
}

TEST(Backward, DiamondGraphVisitsNodesOnce) {
    // loss = sum((x + x) * x); d/dx = 4x. Double-counting a node would break this.
    Tensor x = Tensor::from({3}, {1.0, -2.0, 3.0}, true);
    Tensor s = add(x, x);
    backward(sum(mul(s, x)));
    for (std::size_t i = 0; i < 3; ++i) ASSERT_NEAR(x.grad()[i], 4.0 * x.data()[i], 1e-12);
}

TEST(Backward, GraphIsReleasedAfterBackward) {
    // A backward closure capturing its own output would pin the whole graph.
    RngStream rng(84);
    Tensor x = Tensor::uniform({6, 6}, 0.1, 1.0, rng, true);
    std::weak_ptr<detail::TensorImpl> probe;
    {
        Tensor y = softmax(mul(x, x), 1);
        Tensor loss = sum(sqrt_t(clamp(y, 1e-9, 1.0)));
        backward(loss);
        probe = y.impl();
    }
    EXPECT_TRUE(probe.expired());
}

TEST(Backward, GraphReplayIsDeterministic) {
    RngStream rng(83);
    Tensor x = random_tensor({4, 4}, rng);
    Tensor w = random_tensor({4, 4}, rng);
    auto run = [&] { return softmax(matmul(x, w), 1).data(); };
    ASSERT_EQ(run(), run());
}

// ---------------------------------------------------------------------------
// grad_check harness itself
// ---------------------------------------------------------------------------

TEST(GradCheck, SumHasZeroError) {
    RngStream rng(91);
    Tensor x = random_tensor({6}, rng);
    EXPECT_LT(grad_check([&] { return sum(x); }, x, kH), 1e-10);
}

TEST(GradCheck, SoftmaxThenSumIsConstant) {
    RngStream rng(92);
    Tensor x = random_tensor({5}, rng);
    // The loss is identically 1 by conservation, so both gradient routes are
    // zero to rounding (raw differences; the relative formula's 1e-8 floor
    // dominates when both sides vanish).
    x.zero_grad();
    backward(sum(softmax(x, 0)));
    for (double g : x.grad()) ASSERT_NEAR(g, 0.0, 1e-14);
    NoGradGuard ng;
    for (std::size_t i = 0; i < 5; ++i) {
        const double orig = x.data()[i];
        x.data()[i] = orig + kH;
        const double lp = sum(softmax(x, 0)).value();
        x.data()[i] = orig - kH;
        const double lm = sum(softmax(x, 0)).value();
        x.data()[i] = orig;
        ASSERT_NEAR((lp - lm) / (2.0 * kH), 0.0, 1e-9);
    }
}

TEST(GradCheck, NonScalarRejected) {
    Tensor x = Tensor::full({2}, 1.0, true);
    EXPECT_THROW(grad_check([&] { return add(x, x); }, x, kH), ContractError);
}

// ---------------------------------------------------------------------------
// shape ops and misc kernels
// ---------------------------------------------------------------------------

TEST(ShapeOps, ReshapeConcatSliceGradCheck) {
    RngStream rng(101);
    Tensor a = random_tensor({2, 6}, rng);
    Tensor b = random_tensor({3, 6}, rng);
    Tensor probe = Tensor::uniform({5, 6}, -1, 1, rng);
    auto f = [&] { return sum(mul(concat_rows(a, b), probe)); };
    EXPECT_LT(grad_check(f, a, kH), 1e-6);
    EXPECT_LT(grad_check(f, b, kH), 1e-6);

    Tensor x = random_tensor({4, 6}, rng);
    Tensor probe2 = Tensor::uniform({2, 3}, -1, 1, rng);
    auto g = [&] { return sum(mul(slice_last(slice_rows(x, 1, 3), 2, 3), probe2)); };
    EXPECT_LT(grad_check(g, x, kH), 1e-6);

    Tensor y = random_tensor({3, 4}, rng);
    auto h = [&] { return sum(mul(reshape(y, {2, 6}), reshape(y, {2, 6}))); };
    EXPECT_LT(grad_check(h, y, kH), 1e-6);
}

TEST(ShapeOps, TransposeAndChwHwc) {
    RngStream rng(102);
    Tensor a = random_tensor({3, 5}, rng);
    Tensor t = transpose(a);
    for (std::int64_t i = 0; i < 3; ++i)
        for (std::int64_t j = 0; j < 5; ++j) ASSERT_DOUBLE_EQ(t.at({j, i}), a.at({i, j}));

    Tensor x = random_tensor({2, 3, 4}, rng);
    Tensor hwc = chw_to_hwc(x);
    ASSERT_EQ(hwc.shape(), (Shape{3, 4, 2}));
    for (std::int64_t c = 0; c < 2; ++c)
        for (std::int64_t y = 0; y < 3; ++y)
            for (std::int64_t xx = 0; xx < 4; ++xx)
                ASSERT_DOUBLE_EQ(hwc.at({y, xx, c}), x.at({c, y, xx}));
    Tensor probe = Tensor::uniform({3, 4, 2}, -1, 1, rng);
    EXPECT_LT(grad_check([&] { return sum(mul(chw_to_hwc(x), probe)); }, x, kH), 1e-6);
}

TEST(ShapeOps, UpsampleLinearIdentityAndGrad) {
    RngStream rng(103);
    Tensor x = random_tensor({3, 7}, rng);
    Tensor same = upsample_linear_rows(x, 7);
    for (std::size_t i = 0; i < x.data().size(); ++i) ASSERT_DOUBLE_EQ(same.data()[i], x.data()[i]);

    Tensor up = upsample_linear_rows(x, 13);
    ASSERT_EQ(up.shape(), (Shape{3, 13}));
    // Endpoints align exactly.
    for (std::int64_t r = 0; r < 3; ++r) {
        ASSERT_DOUBLE_EQ(up.at({r, 0}), x.at({r, 0}));
        ASSERT_DOUBLE_EQ(up.at({r, 12}), x.at({r, 6}));
    }
    Tensor probe = Tensor::uniform({3, 13}, -1, 1, rng);
    EXPECT_LT(grad_check([&] { return sum(mul(upsample_linear_rows(x, 13), probe)); }, x, kH), 1e-6);
}

TEST(ShapeOps, ElementwiseMathGradChecks) {
    RngStream rng(104);
    Tensor x = random_tensor({8}, rng, 0.2, 2.0);
    Tensor y = random_tensor({8}, rng, 0.2, 2.0);
    EXPECT_LT(grad_check([&] { return sum(sqrt_t(x)); }, x, kH), 1e-6);
    EXPECT_LT(grad_check([&] { return sum(div(x, y)); }, x, kH), 1e-6);
    EXPECT_LT(grad_check([&] { return sum(div(x, y)); }, y, kH), 1e-6);
    Tensor c = random_tensor({8}, rng, -0.9, 0.9);
    EXPECT_LT(grad_check([&] { return sum(acos_t(c)); }, c, kH), 1e-5);
    EXPECT_LT(grad_check([&] { return sum(sum_axis(reshape(mul(x, y), {2, 4}), 0)); }, x, kH), 1e-6);
}

TEST(Determinism, SeededTensorsAreBitwiseIdentical) {
    RngStream a(99), b(99);
    Tensor ta = Tensor::normal({100}, 0, 1, a);
    Tensor tb = Tensor::normal({100}, 0, 1, b);
    ASSERT_EQ(ta.data(), tb.data());
}
