#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "avd/losses.hpp"
#include "grad_check.hpp"

using avd::Condition;
using avd::Denoiser;
using avd::LossMeanCache;
using avd::LossWeights;
using avd::NoiseSchedule;
using avd::Tensor;
using D = Tensor<double>;

static double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

TEST_CASE("denoising_loss: identity, unit residual, gradient") {
    std::mt19937_64 rng(1);
    auto a = D::randn({2, 3}, rng);
    CHECK(avd::denoising_loss(a, a).item() == 0.0);
    auto b = avd::scalar_add(a, 1.0);
    CHECK(avd::denoising_loss(b, a).item() == doctest::Approx(1.0).epsilon(1e-12));

    auto p = D::randn({2, 3}, rng, 1.0, true);
    auto t = D::randn({2, 3}, rng);
    avdtest::check_grad(p, [&] { return avd::denoising_loss(p, t); });
    avd::denoising_loss(p, t).backward();
    // gradient = 2(pred - target)/N on top of the fd check
    p.zero_grad();
    avd::denoising_loss(p, t).backward();
    for (int i = 0; i < p.numel(); ++i)
        CHECK(p.grad()[i] == doctest::Approx(2.0 * (p.data()[i] - t.data()[i]) / 6.0).epsilon(1e-9));

    auto c = D::randn({3, 2}, rng);
    CHECK_THROWS(avd::denoising_loss(a, c));
}

TEST_CASE("regression_loss: per-sample semantics") {
    std::mt19937_64 rng(2);
    auto y = D::randn({2, 2, 1, 2, 2}, rng);
    auto l0 = avd::regression_loss(y, y);
    CHECK(l0.shape() == avd::Shape{2});
    for (double v : l0.data()) CHECK(v == 0.0);

    auto yh = avd::scalar_add(y, 0.5);
    auto l = avd::regression_loss(yh, y);
    REQUIRE(l.shape() == avd::Shape{2});
    for (double v : l.data()) CHECK(v == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("cache_update: recurrence, warmup, fixed point, geometric identity") {
    LossMeanCache c;
    c.update(0.5, 0.5);  // warmup: seed with first observation
    CHECK(c.means[0.5] == 0.5);
    c.update(0.5, 1.0);
    CHECK(c.means[0.5] == doctest::Approx(0.525).epsilon(1e-12));

    LossMeanCache c2;
    c2.update(0.1, 0.8);
    CHECK(c2.means[0.1] == 0.8);

    LossMeanCache c3;
    for (int i = 0; i < 100; ++i) c3.update(0.3, 0.7);
    CHECK(c3.means[0.3] == doctest::Approx(0.7).epsilon(1e-12));

    // |mean_n - v| = alpha^n * |mean_0 - v| exactly for constant input
    LossMeanCache c4;
    c4.update(0.2, 2.0);  // mean_0 = 2
    const double v = 0.5;
    for (int n = 1; n <= 30; ++n) {
        c4.update(0.2, v);
        CHECK(std::abs(c4.means[0.2] - v) ==
              doctest::Approx(std::pow(0.95, n) * 1.5).epsilon(1e-10));
    }

    CHECK_THROWS(c.update(0.5, -0.1));
    CHECK_THROWS(c.update(0.5, std::nan("")));
}

TEST_CASE("cache means stay within observed bounds after warmup") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> ud(0.1, 2.0);
    LossMeanCache c;
    double lo = 1e9, hi = -1e9;
    for (int i = 0; i < 200; ++i) {
        const double L = ud(rng);
        lo = std::min(lo, L);
        hi = std::max(hi, L);
        c.update(0.5, L);
        CHECK(c.means[0.5] >= lo);
        CHECK(c.means[0.5] <= hi);
    }
}

TEST_CASE("adaptive_weight: closed form, monotone, warmup") {
    LossMeanCache c;
    c.update(0.5, 1.0);
    CHECK(c.weight(0.5, 1.0, 3.0) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(c.weight(0.5, 1.7, 3.0) == doctest::Approx(1.0 - logistic(2.1)).epsilon(1e-9));
    CHECK(c.weight(0.5, 1.7, 3.0) == doctest::Approx(0.10909682).epsilon(1e-6));
    CHECK(c.weight(0.5, 0.7, 3.0) == doctest::Approx(logistic(0.9)).epsilon(1e-9));
    CHECK(c.weight(0.5, 0.7, 3.0) == doctest::Approx(0.71094950).epsilon(1e-6));
    CHECK(c.weight(0.9, 5.0, 3.0) == 1.0);  // warmup: no entry for this timestep

    // strictly decreasing in L, bounded in (0,1); closed form to 1e-9 on a grid
    double prev = 1.0;
    for (int i = 0; i <= 1000; ++i) {
        const double delta = -2.0 + 4.0 * i / 1000.0;
        const double w = c.weight(0.5, 1.0 + delta, 3.0);
        CHECK(w > 0.0);
        CHECK(w < 1.0);
        CHECK(w < prev);
        CHECK(std::abs(w - (1.0 - logistic(3.0 * delta))) <= 1e-9);
        prev = w;
    }
}

TEST_CASE("batch scaling preserves adaptive-weight ordering") {
    LossMeanCache c;
    c.update(0.5, 1.0);
    const std::vector<double> losses{0.2, 0.9, 1.4, 2.2};
    for (double scale : {0.5, 2.0, 7.0}) {
        for (size_t i = 1; i < losses.size(); ++i) {
            CHECK(c.weight(0.5, losses[i] * scale, 3.0) < c.weight(0.5, losses[i - 1] * scale, 3.0));
        }
    }
}

TEST_CASE("temporal_reg_loss: static clip, clip gate, teacher-average level") {
    auto x = D::filled({1, 4, 1, 2, 2}, 0.7);  // all frames equal
    auto r = avd::temporal_reg_loss(x, 1e-6, 0.6);
    CHECK(r.raw == doctest::Approx(-std::log(1e-6)).epsilon(1e-9));
    CHECK(r.raw == doctest::Approx(13.81551).epsilon(1e-5));

    // mean temporal variance 1 -> raw ~ 0 < clip: effective = clip, zero gradient
    auto alt = D::zeros({1, 2, 1, 1, 1});
    alt.data() = {1.0, -1.0};
    alt.set_requires_grad(true);
    auto r2 = avd::temporal_reg_loss(alt, 1e-6, 0.6);
    CHECK(r2.raw == doctest::Approx(-std::log(1.0 + 1e-6)).epsilon(1e-9));
    CHECK(r2.effective.item() == 0.6);
    CHECK_THROWS(r2.effective.backward());  // detached constant: no graph at all

    // mean temporal variance e^-1.5 -> raw ~ 1.5
    const double amp = std::sqrt(std::exp(-1.5));
    auto lvl = D::zeros({1, 2, 1, 1, 1});
    lvl.data() = {amp, -amp};
    auto r3 = avd::temporal_reg_loss(lvl, 1e-6, 0.6);
    CHECK(r3.raw == doctest::Approx(1.5).epsilon(1e-4));

    auto f1 = D::zeros({1, 1, 1, 2, 2});
    CHECK_THROWS(avd::temporal_reg_loss(f1, 1e-6, 0.6));
}

TEST_CASE("temporal_reg_loss gradient: zero below clip, finite above") {
    std::mt19937_64 rng(4);
    // low-variance clip: raw above clip -> gradient flows, matches fd
    auto x = D::randn({1, 4, 1, 2, 2}, rng, 0.05, true);
    auto r = avd::temporal_reg_loss(x, 1e-6, 0.6);
    REQUIRE(r.raw > 0.6);
    avdtest::check_grad(x, [&] { return avd::temporal_reg_loss(x, 1e-6, 0.6).effective; });
    x.zero_grad();
    avd::temporal_reg_loss(x, 1e-6, 0.6).effective.backward();
    bool any_nonzero = false;
    for (double g : x.grad()) any_nonzero |= (g != 0.0);
    CHECK(any_nonzero);

    // high-variance clip: gradient is exactly zero (loss is a constant)
    auto y = D::randn({1, 4, 1, 2, 2}, rng, 3.0, true);
    auto r2 = avd::temporal_reg_loss(y, 1e-6, 0.6);
    REQUIRE(r2.raw < 0.6);
    CHECK(r2.effective.item() == 0.6);
    CHECK_FALSE(r2.effective.requires_grad());
}

TEST_CASE("dmd_generator_loss: fixed point when fake == teacher at cfg 1") {
    std::mt19937_64 rng(5);
    auto teacher = Denoiser<double>::init(1, 3, 4, rng);
    auto fake = teacher.clone();
    auto x = D::randn({1, 2, 1, 4, 4}, rng, 1.0, true);
    LossWeights w;
    w.cfg_scale = 1.0;
    std::mt19937_64 lr(6);
    auto r = avd::dmd_generator_loss(x, teacher, fake, {Condition{0}}, NoiseSchedule{}, w, lr);
    CHECK(r.loss.item() == doctest::Approx(0.0).epsilon(1e-12));
    r.loss.backward();
    for (double g : x.grad()) CHECK(std::abs(g) <= 1e-6);
}

TEST_CASE("dmd_generator_loss: surrogate gradient equals stopgrad direction d/c") {
    std::mt19937_64 rng(7);
    auto teacher = Denoiser<double>::init(1, 3, 4, rng);
    auto fake = Denoiser<double>::init(1, 3, 4, rng);  // different weights
    auto x = D::randn({1, 2, 1, 4, 4}, rng, 1.0, true);
    LossWeights w;
    std::mt19937_64 lr(8);
    auto r = avd::dmd_generator_loss(x, teacher, fake, {Condition{1}}, NoiseSchedule{}, w, lr);
    r.loss.backward();
    for (int i = 0; i < x.numel(); ++i)
        CHECK(x.grad()[i] == doctest::Approx(r.direction.data()[i]).epsilon(1e-12));
    // and no gradient reached teacher or fake parameters
    for (auto* p : teacher.params())
        for (double g : p->grad()) CHECK(g == 0.0);
    for (auto* p : fake.params())
        for (double g : p->grad()) CHECK(g == 0.0);
}

TEST_CASE("1-D Gaussian toy: DMD direction pushes samples toward teacher mean") {
    // closed-form scores of N(0,1) teacher and N(m,1) fake under the forward
    // process: s_real = -x_t/(a^2+s^2), s_fake = -(x_t - a*m)/(a^2+s^2)
    NoiseSchedule sched;
    sched.shift = 1.0;
    std::mt19937_64 rng(9);
    std::vector<double> xs(256);
    std::normal_distribution<double> nd(3.0, 1.0);  // fake/current mean 3
    for (auto& v : xs) v = nd(rng);
    const double eta = 0.05;
    std::uniform_real_distribution<double> ut(0.02, 0.98);
    for (int step = 0; step < 500; ++step) {
        double m = 0.0;
        for (double v : xs) m += v;
        m /= xs.size();
        const double t = ut(rng);
        auto [a, s] = avd::schedule_coeffs(sched, t);
        const double denom = a * a + s * s;
        for (auto& v : xs) {
            std::normal_distribution<double> noise(0.0, 1.0);
            const double xt = a * v + s * noise(rng);
            const double s_real = -xt / denom;
            const double s_fake = -(xt - a * m) / denom;
            const double d = s_fake - s_real;  // = a*m/denom, independent of xt
            v -= eta * d;
        }
    }
    double final_mean = 0.0;
    for (double v : xs) final_mean += v;
    final_mean /= xs.size();
    CHECK(std::abs(final_mean) < 0.3);  // started at 3, teacher mean 0
}

TEST_CASE("combined_generator_loss: arithmetic and limits") {
    auto l_kl = D::scalar(1.0);
    auto l_reg = D::from_data({1}, {0.2});
    auto l_temp = D::scalar(0.6);
    LossWeights w;  // w_reg 2, w_temp 0.05
    auto l = avd::combined_generator_loss(l_kl, l_reg, {0.5}, l_temp, w);
    CHECK(l.item() == doctest::Approx(1.23).epsilon(1e-12));

    auto l0 = avd::combined_generator_loss(l_kl, l_reg, {0.0}, l_temp, w);
    CHECK(l0.item() == doctest::Approx(1.0 + 0.05 * 0.6).epsilon(1e-12));

    // omega = 0.5 with w_reg = 2 gives effective regression weight 1.0
    auto l1 = avd::combined_generator_loss(D::scalar(0.0), l_reg, {0.5}, D::scalar(0.0), w);
    CHECK(l1.item() == doctest::Approx(0.2).epsilon(1e-12));

    CHECK_THROWS(avd::combined_generator_loss(l_kl, l_reg, {0.5, 0.5}, l_temp, w));
}

TEST_CASE("combined loss: no gradient flows through omega") {
    // omega enters as plain numbers computed from detached losses; gradient
    // w.r.t. y_hat is omega-scaled MSE gradient only
    std::mt19937_64 rng(10);
    auto y_hat = D::randn({2, 1, 1, 1, 2}, rng, 1.0, true);
    auto y = D::randn({2, 1, 1, 1, 2}, rng);
    LossWeights w;
    auto reg = avd::regression_loss(y_hat, y);
    auto l = avd::combined_generator_loss(D::scalar(0.0), reg, {0.25, 0.75}, D::scalar(0.0), w);
    l.backward();
    const double n_per = 2.0;   // elements per sample
    const double batch = 2.0;
    for (int b = 0; b < 2; ++b) {
        const double om = b == 0 ? 0.25 : 0.75;
        for (int i = 0; i < 2; ++i) {
            const int idx = b * 2 + i;
            const double want =
                w.w_reg * om * 2.0 * (y_hat.data()[idx] - y.data()[idx]) / n_per / batch;
            CHECK(y_hat.grad()[idx] == doctest::Approx(want).epsilon(1e-9));
        }
    }
}
