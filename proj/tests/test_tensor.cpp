#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "avd/conv.hpp"
#include "avd/fd.hpp"
#include "avd/tensor.hpp"
#include "grad_check.hpp"

using avd::Shape;
using avd::Tensor;
using avdtest::check_grad;
using D = Tensor<double>;

TEST_CASE("backward: identity Jacobian of sum") {
    auto p = D::from_data({3}, {1.0, 2.0, 3.0}, true);
    avd::sum_all(p).backward();
    for (double g : p.grad()) CHECK(g == doctest::Approx(1.0));
}

TEST_CASE("backward: analytic derivative of sum of squares") {
    auto p = D::from_data({2}, {1.0, -2.0}, true);
    avd::sum_all(avd::mul(p, p)).backward();
    CHECK(p.grad()[0] == doctest::Approx(2.0));
    CHECK(p.grad()[1] == doctest::Approx(-4.0));
}

TEST_CASE("backward accumulates across calls until zeroed") {
    auto p = D::from_data({2}, {1.0, 2.0}, true);
    avd::sum_all(p).backward();
    avd::sum_all(p).backward();
    CHECK(p.grad()[0] == doctest::Approx(2.0));
    p.zero_grad();
    avd::sum_all(p).backward();
    CHECK(p.grad()[0] == doctest::Approx(1.0));
}

TEST_CASE("backward errors: non-scalar loss, detached tape") {
    auto p = D::from_data({2}, {1.0, 2.0}, true);
    CHECK_THROWS(avd::mul(p, p).backward());
    auto c = D::from_data({1}, {1.0});
    CHECK_THROWS(c.backward());
}

TEST_CASE("finite differences: closed-form spot checks") {
    auto p = D::from_data({1}, {3.0}, true);
    auto g = avd::finite_difference_gradient<double>(
        [&] { return avd::sum_all(avd::mul(p, p)).item(); }, p, 1e-5);
    CHECK(g[0] == doctest::Approx(6.0).epsilon(1e-6));

    auto q = D::from_data({1}, {0.0}, true);
    auto gs = avd::finite_difference_gradient<double>(
        [&] { return avd::sigmoid(q).item(); }, q, 1e-5);
    CHECK(gs[0] == doctest::Approx(0.25).epsilon(1e-6));

    // f = -log(mean + 1e-6) at mean = 1 (the temporal-loss integrand shape)
    auto r = D::from_data({4}, {1.0, 1.0, 1.0, 1.0}, true);
    auto gl = avd::finite_difference_gradient<double>(
        [&] { return avd::scalar_mul(avd::log_(avd::scalar_add(avd::mean_all(r), 1e-6)), -1.0).item(); },
        r, 1e-5);
    for (double v : gl) CHECK(v == doctest::Approx(-0.25 / (1.0 + 1e-6)).epsilon(1e-5));
}

TEST_CASE("gradcheck: elementwise / activation / reduction ops") {
    for (int seed = 0; seed < 20; ++seed) {
        std::mt19937_64 rng(seed);
        auto p = D::randn({2, 3, 4}, rng, 0.7, true);
        auto q = D::randn({2, 3, 4}, rng, 0.7, false);
        check_grad(p, [&] { return avd::sum_all(avd::mul(avd::add(p, q), avd::sub(p, q))); });
        check_grad(p, [&] { return avd::mean_all(avd::sigmoid(p)); });
        check_grad(p, [&] { return avd::sum_all(avd::leaky_relu(p, 0.1)); });
        check_grad(p, [&] { return avd::mean_all(avd::exp_(avd::scalar_mul(p, 0.3))); });
        check_grad(p, [&] { return avd::sum_all(avd::log_(avd::scalar_add(avd::mul(p, p), 1.0))); });
        check_grad(p, [&] { return avd::sum_all(avd::rsqrt_(avd::scalar_add(avd::mul(p, p), 1.0))); });
        check_grad(p, [&] { return avd::mean_all(avd::abs_(avd::scalar_add(p, 3.0))); });
        check_grad(p, [&] { return avd::sum_all(avd::mean_axis(p, 1)); });
        check_grad(p, [&] { return avd::mean_all(avd::var_axis(avd::mul(p, p), 0)); });
        check_grad(p, [&] { return avd::sum_all(avd::mul(avd::sum_axis(p, 2), avd::sum_axis(p, 2))); });
    }
}

TEST_CASE("gradcheck: matmul, row ops, shape ops") {
    for (int seed = 0; seed < 20; ++seed) {
        std::mt19937_64 rng(seed + 100);
        auto a = D::randn({3, 4}, rng, 0.5, true);
        auto b = D::randn({4, 2}, rng, 0.5, false);
        check_grad(a, [&] { return avd::sum_all(avd::mul(avd::matmul(a, b), avd::matmul(a, b))); });
        auto bias = D::randn({4}, rng, 0.5, true);
        check_grad(bias, [&] { return avd::sum_all(avd::sigmoid(avd::add_row_bias(a.detach(), bias))); });
        auto tbl = D::randn({5, 3}, rng, 0.5, true);
        check_grad(tbl, [&] {
            return avd::sum_all(avd::mul(avd::rows(tbl, {0, 2, 2, 4}), avd::rows(tbl, {1, 2, 3, 4})));
        });
        auto p = D::randn({4, 6}, rng, 1.0, true);
        check_grad(p, [&] { return avd::mean_all(avd::mul(avd::row_norm(p), avd::row_norm(p))); });
        check_grad(p, [&] { return avd::sum_all(avd::slice_axis(avd::mul(p, p), 1, 2, 3)); });
        check_grad(p, [&] {
            auto r = avd::reshape(p, {2, 12});
            return avd::sum_all(avd::mul(avd::concat(r, avd::mul(r, r), 1),
                                         avd::concat(avd::mul(r, r), r, 1)));
        });
    }
}

TEST_CASE("gradcheck: conv2d stride 1 and 2, transposed conv, pooling") {
    for (int seed = 0; seed < 20; ++seed) {
        std::mt19937_64 rng(seed + 200);
        auto x = D::randn({2, 2, 6, 6}, rng, 0.8, true);
        auto w = D::randn({3, 2, 3, 3}, rng, 0.4, true);
        auto b = D::randn({3}, rng, 0.2, true);
        check_grad(x, [&] { auto y = avd::conv2d(x, w, b, 1, 1); return avd::sum_all(avd::mul(y, y)); });
        check_grad(w, [&] { auto y = avd::conv2d(x, w, b, 1, 1); return avd::sum_all(avd::mul(y, y)); });
        check_grad(b, [&] { auto y = avd::conv2d(x, w, b, 2, 1); return avd::sum_all(avd::mul(y, y)); });
        check_grad(x, [&] { auto y = avd::conv2d(x, w, b, 2, 1); return avd::sum_all(avd::mul(y, y)); });

        auto wt = D::randn({2, 3, 2, 2}, rng, 0.4, true);
        auto bt = D::randn({3}, rng, 0.2, true);
        check_grad(wt, [&] { auto y = avd::conv_transpose2d(x, wt, bt); return avd::mean_all(avd::mul(y, y)); });
        check_grad(x, [&] { auto y = avd::conv_transpose2d(x, wt, bt); return avd::mean_all(avd::mul(y, y)); });

        check_grad(x, [&] { auto y = avd::maxpool2x2(avd::mul(x, x)); return avd::sum_all(y); });
    }
}

TEST_CASE("gradcheck: temporal conv and channel-bias broadcast") {
    for (int seed = 0; seed < 20; ++seed) {
        std::mt19937_64 rng(seed + 300);
        auto x = D::randn({2, 3, 2, 4, 4}, rng, 0.8, true);  // [B,F,C,H,W]
        auto w = D::randn({2, 2, 3}, rng, 0.4, true);
        auto b = D::randn({2}, rng, 0.2, true);
        check_grad(x, [&] { auto y = avd::temporal_conv(x, w, b); return avd::sum_all(avd::mul(y, y)); });
        check_grad(w, [&] { auto y = avd::temporal_conv(x, w, b); return avd::sum_all(avd::mul(y, y)); });
        check_grad(b, [&] { auto y = avd::temporal_conv(x, w, b); return avd::sum_all(avd::mul(y, y)); });
        auto cb = D::randn({2, 2}, rng, 0.5, true);
        check_grad(cb, [&] {
            auto y = avd::add_channel_bias(x.detach(), cb);
            return avd::mean_all(avd::mul(y, y));
        });
    }
}

TEST_CASE("variance conventions") {
    // constant tensor: exactly zero
    auto c = D::filled({4, 3}, 2.5);
    auto vc = avd::var_axis(c, 0);
    for (double v : vc.data()) CHECK(v == 0.0);
    // {a, b}: ((a-b)/2)^2 under the population convention
    auto ab = D::from_data({2, 1}, {3.0, 7.0});
    CHECK(avd::var_axis(ab, 0).data()[0] == doctest::Approx(4.0));
}

TEST_CASE("stop_grad contributes zero upstream") {
    auto p = D::from_data({2}, {1.5, -0.5}, true);
    auto loss = avd::sum_all(avd::add(avd::mul(p, p), avd::stop_grad(avd::scalar_mul(p, 100.0))));
    loss.backward();
    CHECK(p.grad()[0] == doctest::Approx(3.0));
    CHECK(p.grad()[1] == doctest::Approx(-1.0));
}

TEST_CASE("NaN/Inf raise instead of propagating") {
    auto p = D::from_data({1}, {-1.0});
    CHECK_THROWS(avd::log_(p));
    auto q = D::from_data({1}, {1e308});
    CHECK_THROWS(avd::mul(q, q));
}

TEST_CASE("maxpool and slicing forward semantics") {
    auto x = D::from_data({1, 1, 2, 2}, {1.0, 4.0, 3.0, 2.0});
    CHECK(avd::maxpool2x2(x).data()[0] == 4.0);
    auto clip = D::from_data({3, 1, 1, 1}, {10.0, 20.0, 30.0});
    auto s = avd::slice_axis(clip, 0, 1, 2);
    CHECK(s.data()[0] == 20.0);
    CHECK(s.data()[1] == 30.0);
}
