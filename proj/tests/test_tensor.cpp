#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "respnet/tensor.hpp"
#include "test_util.hpp"

using namespace respnet;
using testutil::Rng;

TEST_CASE("conv1d scalar kernel scales the input") {
    Tensor x = Tensor::from({1, 2, 3, 4}, 1, 1, 4);
    Tensor w = Tensor::from({2}, 1, 1, 1);
    Tensor b(1, 1, 1);
    ConvSpec spec{1, 1, 1, 1, 1, 0};
    Tensor y = conv1d(x, w, b, spec);
    REQUIRE(y.shape() == Shape{1, 1, 4});
    CHECK(y.value()[0] == doctest::Approx(2));
    CHECK(y.value()[1] == doctest::Approx(4));
    CHECK(y.value()[2] == doctest::Approx(6));
    CHECK(y.value()[3] == doctest::Approx(8));
}

TEST_CASE("conv1d stride-2 sum kernel") {
    Tensor x = Tensor::from({1, 2, 3, 4}, 1, 1, 4);
    Tensor w = Tensor::from({1, 1}, 1, 1, 2);
    Tensor b(1, 1, 1);
    ConvSpec spec{1, 1, 2, 2, 1, 0};
    Tensor y = conv1d(x, w, b, spec);
    REQUIRE(y.l() == 2);
    CHECK(y.value()[0] == doctest::Approx(3));
    CHECK(y.value()[1] == doctest::Approx(7));
}

TEST_CASE("conv1d matches the brute-force oracle on a dilated strided case") {
    Rng rng(11);
    ConvSpec spec{3, 5, 4, 2, 2, 0};
    Tensor x = rng.tensor(2, 3, 32);
    Tensor w = rng.tensor(5, 3, 4);
    Tensor b = rng.tensor(1, 5, 1);
    Tensor got = conv1d(x, w, b, spec);
    Tensor want = testutil::conv1d_ref(x, w, b, spec);
    REQUIRE(got.shape() == want.shape());
    CHECK(testutil::max_abs_diff(got, want) <= 1e-12);
}

TEST_CASE("conv1d randomized shapes vs oracle") {
    Rng rng(202);
    for (int trial = 0; trial < 60; ++trial) {
        ConvSpec spec;
        spec.in_channels = rng.integer(1, 4);
        spec.out_channels = rng.integer(1, 4);
        spec.kernel_size = rng.integer(1, 8);
        spec.stride = rng.integer(1, 4);
        spec.dilation = rng.integer(1, 4);
        spec.padding = rng.integer(0, 4);
        const int64_t length = rng.integer(1, 64);
        if (spec.output_length(length) < 1) continue;
        Tensor x = rng.tensor(rng.integer(1, 4), spec.in_channels, length);
        Tensor w = rng.tensor(spec.out_channels, spec.in_channels, spec.kernel_size);
        Tensor b = rng.tensor(1, spec.out_channels, 1);
        CHECK(testutil::max_abs_diff(conv1d(x, w, b, spec),
                                     testutil::conv1d_ref(x, w, b, spec)) <= 1e-12);
    }
}

TEST_CASE("conv1d rejects bad shapes") {
    Tensor x(1, 2, 8);
    Tensor w(3, 2, 3);
    Tensor b(1, 3, 1);
    CHECK_THROWS_AS(conv1d(x, w, b, ConvSpec{3, 3, 3, 1, 1, 0}), ShapeMismatch);
    CHECK_THROWS_AS(conv1d(x, w, b, ConvSpec{2, 4, 3, 1, 1, 0}), ShapeMismatch);
    CHECK_THROWS_AS(conv1d(x, w, b, ConvSpec{2, 3, 3, 1, 8, 0}), EmptyOutput);
}

TEST_CASE("transposed_conv1d single impulse reproduces the kernel") {
    Tensor x = Tensor::from({1}, 1, 1, 1);
    Tensor w = Tensor::from({1, 2, 3}, 1, 1, 3);
    Tensor b(1, 1, 1);
    ConvSpec spec{1, 1, 3, 1, 1, 0};
    Tensor y = transposed_conv1d(x, w, b, spec);
    REQUIRE(y.l() == 3);
    CHECK(y.value()[0] == doctest::Approx(1));
    CHECK(y.value()[1] == doctest::Approx(2));
    CHECK(y.value()[2] == doctest::Approx(3));
}

TEST_CASE("transposed_conv1d non-overlapping scatter") {
    Tensor x = Tensor::from({1, 1}, 1, 1, 2);
    Tensor w = Tensor::from({1, 1}, 1, 1, 2);
    Tensor b(1, 1, 1);
    ConvSpec spec{1, 1, 2, 2, 1, 0};
    Tensor y = transposed_conv1d(x, w, b, spec);
    REQUIRE(y.l() == 4);
    for (double v : y.value()) CHECK(v == doctest::Approx(1));
}

TEST_CASE("transposed_conv1d matches scatter oracle and adjoint identity") {
    Rng rng(7);
    for (int trial = 0; trial < 40; ++trial) {
        ConvSpec spec;
        spec.in_channels = rng.integer(1, 4);
        spec.out_channels = rng.integer(1, 4);
        spec.kernel_size = rng.integer(1, 6);
        spec.stride = rng.integer(1, 3);
        spec.dilation = rng.integer(1, 3);
        spec.padding = rng.integer(0, 2);
        // pick the conv output length first so the transposed output length
        // lands exactly back on the conv input length
        const int64_t l_out = rng.integer(2, 16);
        const int64_t length = spec.transposed_output_length(l_out);
        if (length < 1 || spec.output_length(length) != l_out) continue;
        Tensor w = rng.tensor(spec.out_channels, spec.in_channels, spec.kernel_size);
        Tensor zero_hi(1, spec.out_channels, 1);
        Tensor zero_lo(1, spec.in_channels, 1);

        Tensor y = rng.tensor(2, spec.out_channels, l_out);
        CHECK(testutil::max_abs_diff(transposed_conv1d(y, w, zero_lo, spec),
                                     testutil::transposed_conv1d_ref(y, w, zero_lo, spec)) <=
              1e-12);

        // <conv(x), y> == <x, conv_T(y)>
        Tensor x = rng.tensor(2, spec.in_channels, length);
        const double lhs = testutil::inner(conv1d(x, w, zero_hi, spec), y);
        Tensor xt = transposed_conv1d(y, w, zero_lo, spec);
        REQUIRE(xt.l() == x.l());
        const double rhs = testutil::inner(x, xt);
        CHECK(std::abs(lhs - rhs) <= 1e-10 * std::max(1.0, std::abs(lhs)));
    }
}

TEST_CASE("batch_norm1d constant channel maps to beta") {
    Tensor x(1, 1, 4);
    std::fill(x.value().begin(), x.value().end(), 3.0);
    Tensor gamma = Tensor::from({1}, 1, 1, 1);
    Tensor beta(1, 1, 1);
    BatchNormState state{Tensor(1, 1, 1), Tensor(1, 1, 1), 0.1, 1e-5};
    std::fill(state.running_var.value().begin(), state.running_var.value().end(), 1.0);
    Tensor y = batch_norm1d(x, gamma, beta, state, BnMode::train);
    for (double v : y.value()) CHECK(v == doctest::Approx(0.0));
}

TEST_CASE("batch_norm1d two-point normalization and running stats") {
    Tensor x = Tensor::from({1, 3}, 1, 1, 2);
    Tensor gamma = Tensor::from({1}, 1, 1, 1);
    Tensor beta(1, 1, 1);
    BatchNormState state{Tensor(1, 1, 1), Tensor(1, 1, 1), 0.1, 1e-5};
    std::fill(state.running_var.value().begin(), state.running_var.value().end(), 1.0);
    Tensor y = batch_norm1d(x, gamma, beta, state, BnMode::train);
    const double expected = 1.0 / std::sqrt(1.0 + 1e-5);  // mean 2, biased var 1
    CHECK(y.value()[0] == doctest::Approx(-expected).epsilon(1e-10));
    CHECK(y.value()[1] == doctest::Approx(expected).epsilon(1e-10));
    // running mean: 0.9*0 + 0.1*2; running var: 0.9*1 + 0.1*unbiased(=2)
    CHECK(state.running_mean.value()[0] == doctest::Approx(0.2));
    CHECK(state.running_var.value()[0] == doctest::Approx(1.1));
}

TEST_CASE("batch_norm1d rejects a degenerate train batch") {
    Tensor x(1, 1, 1);
    Tensor gamma = Tensor::from({1}, 1, 1, 1);
    Tensor beta(1, 1, 1);
    BatchNormState state{Tensor(1, 1, 1), Tensor(1, 1, 1), 0.1, 1e-5};
    CHECK_THROWS_AS(batch_norm1d(x, gamma, beta, state, BnMode::train), DegenerateBatch);
    CHECK_NOTHROW(batch_norm1d(x, gamma, beta, state, BnMode::eval));
}

TEST_CASE("leaky_relu values and gradient") {
    Tensor x = Tensor::from({2.0, -2.0, -1.0}, 1, 1, 3, true);
    GradTape tape;
    Tensor y = leaky_relu(x, 0.2, &tape);
    CHECK(y.value()[0] == doctest::Approx(2.0));
    CHECK(y.value()[1] == doctest::Approx(-0.4));
    Tensor loss = testutil::weighted_sum(y, {0, 0, 1}, &tape);
    tape.backward(loss);
    CHECK(x.grad()[2] == doctest::Approx(0.2));
}

TEST_CASE("concat_channels order and errors") {
    Rng rng(3);
    Tensor a = rng.tensor(1, 2, 8);
    Tensor b = rng.tensor(1, 3, 8);
    Tensor y = concat_channels(a, b);
    REQUIRE(y.shape() == Shape{1, 5, 8});
    for (int64_t c = 0; c < 2; ++c)
        for (int64_t t = 0; t < 8; ++t) CHECK(y.at(0, c, t) == a.at(0, c, t));
    for (int64_t c = 0; c < 3; ++c)
        for (int64_t t = 0; t < 8; ++t) CHECK(y.at(0, 2 + c, t) == b.at(0, c, t));
    Tensor c9 = rng.tensor(1, 3, 9);
    CHECK_THROWS_AS(concat_channels(a, c9), ShapeMismatch);
}

TEST_CASE("smooth_l1_loss unit values") {
    auto single = [](double pred, double target) {
        return smooth_l1_loss(Tensor::from({pred}, 1, 1, 1), Tensor::from({target}, 1, 1, 1))
            .item();
    };
    CHECK(single(1.0, 1.0) == 0.0);
    CHECK(single(0.0, 0.5) == 0.125);
    CHECK(single(0.0, 2.0) == 1.5);
    CHECK_THROWS_AS(smooth_l1_loss(Tensor(1, 1, 2), Tensor(1, 1, 3)), ShapeMismatch);
}

TEST_CASE("backward matches the hand derivative of a scalar weight") {
    // loss = smooth_l1(w*x, y), all |d| < 1
    Tensor x = Tensor::from({0.5, -0.25, 0.75}, 1, 1, 3);
    Tensor y = Tensor::from({0.2, 0.1, -0.3}, 1, 1, 3);
    Tensor w = Tensor::from({0.4}, 1, 1, 1, true);
    Tensor b(1, 1, 1);
    ConvSpec spec{1, 1, 1, 1, 1, 0};
    GradTape tape;
    Tensor loss = smooth_l1_loss(conv1d(x, w, b, spec, &tape), y, &tape);
    tape.backward(loss);
    double expected = 0.0;
    for (int i = 0; i < 3; ++i) {
        const double d = y.value()[i] - w.value()[0] * x.value()[i];
        expected += -d * x.value()[i] / 3.0;
    }
    CHECK(w.grad()[0] == doctest::Approx(expected).epsilon(1e-10));
}

TEST_CASE("finite-difference gradient checks per layer type") {
    Rng rng(42);

    SUBCASE("conv1d") {
        ConvSpec spec{2, 3, 3, 2, 2, 2};
        Tensor x = rng.tensor(2, 2, 12, true);
        Tensor w = rng.tensor(3, 2, 3, true);
        Tensor b = rng.tensor(1, 3, 1, true);
        std::vector<double> c;
        for (int64_t i = 0; i < 2 * 3 * spec.output_length(12); ++i)
            c.push_back(rng.uniform(-1, 1));
        auto eval = [&]() {
            Tensor y = conv1d(x, w, b, spec);
            double acc = 0;
            for (int64_t i = 0; i < y.size(); ++i) acc += c[static_cast<size_t>(i)] * y.value()[i];
            return acc;
        };
        auto taped = [&](GradTape* tape) {
            return testutil::weighted_sum(conv1d(x, w, b, spec, tape), c, tape);
        };
        CHECK(testutil::grad_check(eval, {x, w, b}, taped) < 1e-4);
    }

    SUBCASE("transposed_conv1d") {
        ConvSpec spec{3, 2, 4, 2, 1, 1};
        Tensor x = rng.tensor(2, 2, 6, true);
        Tensor w = rng.tensor(2, 3, 4, true);
        Tensor b = rng.tensor(1, 3, 1, true);
        const int64_t out_size = 2 * 3 * spec.transposed_output_length(6);
        std::vector<double> c;
        for (int64_t i = 0; i < out_size; ++i) c.push_back(rng.uniform(-1, 1));
        auto eval = [&]() {
            Tensor y = transposed_conv1d(x, w, b, spec);
            double acc = 0;
            for (int64_t i = 0; i < y.size(); ++i) acc += c[static_cast<size_t>(i)] * y.value()[i];
            return acc;
        };
        auto taped = [&](GradTape* tape) {
            return testutil::weighted_sum(transposed_conv1d(x, w, b, spec, tape), c, tape);
        };
        CHECK(testutil::grad_check(eval, {x, w, b}, taped) < 1e-4);
    }

    SUBCASE("batch_norm1d train mode") {
        Tensor x = rng.tensor(2, 3, 5, true);
        Tensor gamma = rng.tensor(1, 3, 1, true, 0.5, 1.5);
        Tensor beta = rng.tensor(1, 3, 1, true);
        std::vector<double> c;
        for (int64_t i = 0; i < x.size(); ++i) c.push_back(rng.uniform(-1, 1));
        auto fresh_state = [] {
            BatchNormState s{Tensor(1, 3, 1), Tensor(1, 3, 1), 0.1, 1e-5};
            std::fill(s.running_var.value().begin(), s.running_var.value().end(), 1.0);
            return s;
        };
        auto eval = [&]() {
            BatchNormState s = fresh_state();
            Tensor y = batch_norm1d(x, gamma, beta, s, BnMode::train);
            double acc = 0;
            for (int64_t i = 0; i < y.size(); ++i) acc += c[static_cast<size_t>(i)] * y.value()[i];
            return acc;
        };
        auto taped = [&](GradTape* tape) {
            BatchNormState s = fresh_state();
            return testutil::weighted_sum(batch_norm1d(x, gamma, beta, s, BnMode::train, tape),
                                          c, tape);
        };
        CHECK(testutil::grad_check(eval, {x, gamma, beta}, taped) < 1e-4);
    }

    SUBCASE("leaky_relu, add, concat, smooth_l1 composite") {
        Tensor a = rng.tensor(1, 2, 6, true);
        Tensor b = rng.tensor(1, 2, 6, true);
        Tensor target = rng.tensor(1, 4, 6, false, -2.0, 2.0);
        auto compose = [&](GradTape* tape) {
            Tensor s = add(leaky_relu(a, 0.2, tape), b, tape);
            Tensor cat = concat_channels(s, leaky_relu(b, 0.2, tape), tape);
            return smooth_l1_loss(cat, target, tape);
        };
        auto eval = [&]() { return compose(nullptr).item(); };
        CHECK(testutil::grad_check(eval, {a, b}, compose) < 1e-4);
    }
}

TEST_CASE("backward on a loss with no dependence on a parameter leaves it untouched") {
    Tensor w = Tensor::from({1.0}, 1, 1, 1, true);
    Tensor x = Tensor::from({0.3, 0.4}, 1, 1, 2, true);
    GradTape tape;
    Tensor loss = smooth_l1_loss(leaky_relu(x, 0.2, &tape), Tensor(1, 1, 2), &tape);
    tape.backward(loss);
    CHECK_FALSE(w.has_grad());
    CHECK(x.has_grad());
}

TEST_CASE("backward accumulates across calls") {
    Tensor x = Tensor::from({1.0}, 1, 1, 1, true);
    GradTape tape;
    Tensor loss = smooth_l1_loss(leaky_relu(x, 0.2, &tape), Tensor::scalar(0.5), &tape);
    tape.backward(loss);
    const double once = x.grad()[0];
    tape.backward(loss);
    CHECK(x.grad()[0] == doctest::Approx(2.0 * once));
}

TEST_CASE("backward without a tape reports NoTape") {
    GradTape tape;
    CHECK_THROWS_AS(tape.backward(Tensor::scalar(1.0)), NoTape);
}

TEST_CASE("sgd_momentum_step follows the update rule") {
    Tensor p(1, 1, 1, true);
    p.grad()[0] = 1.0;
    std::vector<std::vector<double>> vel{{0.0}};
    std::vector<Tensor> params{p};
    sgd_momentum_step(params, vel, 0.01, 0.7);
    CHECK(p.value()[0] == doctest::Approx(-0.01));
    CHECK(vel[0][0] == doctest::Approx(1.0));
    CHECK(p.grad()[0] == 0.0);

    p.grad()[0] = 1.0;
    sgd_momentum_step(params, vel, 0.01, 0.7);
    CHECK(vel[0][0] == doctest::Approx(1.7));
    CHECK(p.value()[0] == doctest::Approx(-0.027));

    p.grad()[0] = 0.0;
    const double before = p.value()[0];
    std::vector<std::vector<double>> vel0{{0.0}};
    sgd_momentum_step(params, vel0, 0.01, 0.7);
    CHECK(p.value()[0] == doctest::Approx(before));
}

TEST_CASE("sgd with zero momentum is vanilla gradient descent") {
    Rng rng(5);
    Tensor p = rng.tensor(1, 1, 8, true);
    std::vector<double> expect(p.value().begin(), p.value().end());
    p.ensure_grad();
    for (int64_t i = 0; i < 8; ++i) {
        p.grad()[i] = rng.uniform(-1, 1);
        expect[static_cast<size_t>(i)] -= 0.05 * p.grad()[i];
    }
    std::vector<std::vector<double>> vel{std::vector<double>(8, 0.0)};
    std::vector<Tensor> params{p};
    sgd_momentum_step(params, vel, 0.05, 0.0);
    for (int64_t i = 0; i < 8; ++i) CHECK(p.value()[i] == expect[static_cast<size_t>(i)]);
}

TEST_CASE("sgd requires gradients") {
    Tensor p(1, 1, 2, true);
    std::vector<std::vector<double>> vel{std::vector<double>(2, 0.0)};
    std::vector<Tensor> params{p};
    CHECK_THROWS_AS(sgd_momentum_step(params, vel, 0.01, 0.7), MissingGrad);
}
