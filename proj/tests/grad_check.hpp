// Shared gradient-check harness: reverse-mode vs the central-difference
// oracle at 64-bit, relative error <= 1e-4.
#pragma once

#include <doctest.h>

#include "avd/fd.hpp"
#include "avd/tensor.hpp"

namespace avdtest {

using avd::Tensor;

// builder must construct a fresh scalar loss from the current param data.
template <typename Builder>
void check_grad(Tensor<double>& params, Builder build, double rel_tol = 1e-4,
                double abs_floor = 1e-6) {
    params.zero_grad();
    auto loss = build();
    loss.backward();
    std::vector<double> got = params.grad();
    auto f = [&] { return build().item(); };
    auto fd = avd::finite_difference_gradient<double>(f, params, 1e-5);
    REQUIRE(got.size() == fd.size());
    auto rel_err = [&](double a, double b) {
        return std::abs(a - b) / std::max({std::abs(a), std::abs(b), abs_floor});
    };
    for (size_t i = 0; i < fd.size(); ++i) {
        if (std::abs(fd[i]) < abs_floor && std::abs(got[i]) < abs_floor) continue;
        double rel = rel_err(got[i], fd[i]);
        if (rel > rel_tol) {
            // a kink (relu family) inside the step window corrupts the
            // difference quotient; retry the coordinate with smaller steps
            auto& p = params.data();
            const double orig = p[i];
            for (double h : {1e-6, 1e-7}) {
                p[i] = orig + h;
                const double fp = f();
                p[i] = orig - h;
                const double fm = f();
                p[i] = orig;
                fd[i] = (fp - fm) / (2.0 * h);
                rel = rel_err(got[i], fd[i]);
                if (rel <= rel_tol) break;
            }
        }
        INFO("coord ", i, " analytic ", got[i], " fd ", fd[i]);
        CHECK(rel <= rel_tol);
    }
}

}  // namespace avdtest
