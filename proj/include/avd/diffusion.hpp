// Rectified-flow noise schedule, forward diffusion, prediction-space
// conversions, and the student's few-step timestep grid.
#pragma once

#include "avd/tensor.hpp"

namespace avd {

// alpha_t = 1 - tau(t), sigma_t = tau(t), tau(t) = s*t / (1 + (s-1)*t).
struct NoiseSchedule {
    double shift = 5.0;
    int n_train_steps = 1000;

    double tau(double t) const { return shift * t / (1.0 + (shift - 1.0) * t); }
};

struct TimestepSchedule {
    std::vector<double> steps;  // strictly descending, in (0,1]
    int count() const { return (int)steps.size(); }
};

inline std::pair<double, double> schedule_coeffs(const NoiseSchedule& sched, double t) {
    if (t < 0.0 || t > 1.0) throw std::runtime_error("schedule_coeffs: t outside [0,1]");
    const double sigma = sched.tau(t);
    return {1.0 - sigma, sigma};
}

// x_t = alpha_t * x0 + sigma_t * eps; differentiable w.r.t. x0.
template <typename T>
Tensor<T> forward_diffuse(const NoiseSchedule& sched, const Tensor<T>& x0, double t,
                          const Tensor<T>& eps) {
    if (x0.shape() != eps.shape()) throw std::runtime_error("forward_diffuse: shape mismatch");
    auto [alpha, sigma] = schedule_coeffs(sched, t);
    return add(scalar_mul(x0, (T)alpha), scalar_mul(eps, (T)sigma));
}

enum class PredSpace { Noise, Velocity, CleanX0, Score };

// Conversions between noise eps, velocity v = eps - x0, clean x0, and
// score s = -eps/sigma_t, all anchored by alpha_t*x0 + sigma_t*eps = x_t.
template <typename T>
Tensor<T> prediction_convert(const Tensor<T>& pred, const Tensor<T>& x_t, const NoiseSchedule& sched,
                             double t, PredSpace from, PredSpace to) {
    if (pred.shape() != x_t.shape()) throw std::runtime_error("prediction_convert: shape mismatch");
    auto [alpha, sigma] = schedule_coeffs(sched, t);
    if (from == to) return pred;
    // velocity <-> x0 directly: x0 = x_t - sigma*v holds even at alpha = 0
    if (from == PredSpace::Velocity && to == PredSpace::CleanX0)
        return sub(x_t, scalar_mul(pred, (T)sigma));
    if (from == PredSpace::CleanX0 && to == PredSpace::Velocity) {
        if (sigma == 0.0) throw std::runtime_error("prediction_convert: velocity undefined at sigma=0");
        return scalar_mul(sub(x_t, pred), (T)(1.0 / sigma));
    }
    // everything else via eps
    Tensor<T> eps;
    switch (from) {
        case PredSpace::Noise: eps = pred; break;
        case PredSpace::Score:
            if (sigma == 0.0) throw std::runtime_error("prediction_convert: score undefined at sigma=0");
            eps = scalar_mul(pred, (T)(-sigma));
            break;
        case PredSpace::Velocity:
            // x_t = alpha*x0 + sigma*eps, v = eps - x0  =>  eps = x_t + alpha*v (since alpha+sigma=1)
            eps = add(x_t, scalar_mul(pred, (T)alpha));
            break;
        case PredSpace::CleanX0:
            if (sigma == 0.0) throw std::runtime_error("prediction_convert: eps undefined at sigma=0");
            eps = scalar_mul(sub(x_t, scalar_mul(pred, (T)alpha)), (T)(1.0 / sigma));
            break;
    }
    switch (to) {
        case PredSpace::Noise: return eps;
        case PredSpace::Score:
            if (sigma == 0.0) throw std::runtime_error("prediction_convert: score undefined at sigma=0");
            return scalar_mul(eps, (T)(-1.0 / sigma));
        case PredSpace::Velocity:
            if (alpha == 0.0) {
                // at t=1, x_t = eps; v = eps - x0 needs x0 which is unrecoverable; alpha>0 in practice
                throw std::runtime_error("prediction_convert: velocity undefined at alpha=0");
            }
            return scalar_mul(sub(eps, x_t), (T)(1.0 / alpha));
        case PredSpace::CleanX0:
            if (alpha == 0.0) throw std::runtime_error("prediction_convert: x0 undefined at alpha=0");
            return scalar_mul(sub(x_t, scalar_mul(eps, (T)sigma)), (T)(1.0 / alpha));
    }
    throw std::runtime_error("prediction_convert: unreachable");
}

// Right endpoints of Q equal intervals, mapped through tau; descending so
// generation starts at t=1 (pure noise).
inline TimestepSchedule make_student_schedule(int q, const NoiseSchedule& sched) {
    if (q < 1) throw std::runtime_error("make_student_schedule: Q must be >= 1");
    TimestepSchedule ts;
    for (int k = q; k >= 1; --k) ts.steps.push_back(sched.tau((double)k / q));
    return ts;
}

}  // namespace avd
