// Central-difference gradient oracle. Independent of the tape: it only
// perturbs parameter storage and re-evaluates the given scalar function.
#pragma once

#include "avd/tensor.hpp"

namespace avd {

// f() must be deterministic given fixed params (seed any rng outside).
template <typename T, typename F>
std::vector<T> finite_difference_gradient(F f, Tensor<T>& params, T step) {
    if (step <= T(0)) throw std::runtime_error("finite_difference_gradient: step must be > 0");
    auto& p = params.data();
    std::vector<T> g(p.size());
    const T base = f();
    const T base2 = f();
    if (base != base2)
        throw std::runtime_error("finite_difference_gradient: f is non-deterministic");
    for (size_t i = 0; i < p.size(); ++i) {
        const T orig = p[i];
        p[i] = orig + step;
        const T fp = f();
        p[i] = orig - step;
        const T fm = f();
        p[i] = orig;
        g[i] = (fp - fm) / (T(2) * step);
    }
    return g;
}

}  // namespace avd
