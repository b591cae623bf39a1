// Training objectives: denoising MSE, DMD distribution-matching surrogate,
// adaptive regression loss with its per-timestep EMA cache, clipped temporal
// regularization, and the combined generator loss.
#pragma once

#include <map>

#include "avd/models.hpp"

namespace avd {

struct LossWeights {
    double w_kl = 1.0;
    double w_reg = 2.0;
    double w_temp = 0.05;
    double k = 3.0;          // sigmoid slope of the adaptive weight
    double temp_clip = 0.6;  // temporal loss truncation threshold
    double temp_eps = 1e-6;
    double cfg_scale = 5.0;
    double dmd_t_lo = 0.02;  // endpoints excluded to keep the score finite
    double dmd_t_hi = 0.98;
};

// Per-student-timestep EMA of regression losses. new = alpha*old + (1-alpha)*current;
// the first observation seeds the mean so early samples are not all down-weighted.
struct LossMeanCache {
    double alpha = 0.95;
    std::map<double, double> means;
    std::map<double, int64_t> counts;

    bool has(double t) const { return counts.count(t) && counts.at(t) > 0; }

    void update(double t, double loss) {
        if (!(loss >= 0.0) || !std::isfinite(loss))
            throw std::runtime_error("cache_update: loss must be finite and >= 0");
        auto it = counts.find(t);
        if (it == counts.end() || it->second == 0) {
            means[t] = loss;
            counts[t] = 1;
        } else {
            means[t] = alpha * means[t] + (1.0 - alpha) * loss;
            counts[t] += 1;
        }
    }

    // omega = 1 - sigmoid(k * (L - mean_t)); 1.0 during warmup.
    double weight(double t, double loss, double k) const {
        if (!has(t)) return 1.0;
        const double d = k * (loss - means.at(t));
        return 1.0 - 1.0 / (1.0 + std::exp(-d));
    }
};

// MSE over all elements.
template <typename T>
Tensor<T> denoising_loss(const Tensor<T>& pred, const Tensor<T>& target) {
    if (pred.shape() != target.shape()) throw std::runtime_error("denoising_loss: shape mismatch");
    auto d = sub(pred, target);
    return mean_all(mul(d, d));
}

// Per-sample MSE: [B, ...] -> [B].
template <typename T>
Tensor<T> regression_loss(const Tensor<T>& y_hat, const Tensor<T>& y) {
    if (y_hat.shape() != y.shape()) throw std::runtime_error("regression_loss: shape mismatch");
    const int B = y_hat.shape()[0];
    const int rest = (int)(y_hat.numel() / B);
    auto d = sub(y_hat, y);
    return mean_axis(reshape(mul(d, d), {B, rest}), 1);
}

template <typename T>
struct TemporalLossResult {
    Tensor<T> effective;  // max(raw, clip); constant (zero-gradient) below the clip
    double raw = 0.0;
};

// -log(mean per-pixel temporal variance + eps), truncated at `clip`.
// Below the clip the returned loss is a detached constant, so the gradient
// gate is exactly zero and can re-engage if variance later drops.
template <typename T>
TemporalLossResult<T> temporal_reg_loss(const Tensor<T>& x, double eps, double clip) {
    const Shape& s = x.shape();
    if (s.size() != 5 && s.size() != 4)
        throw std::runtime_error("temporal_reg_loss: expected [B,F,C,H,W] or [F,C,H,W]");
    const int frame_axis = s.size() == 5 ? 1 : 0;
    if (s[frame_axis] < 2) throw std::runtime_error("temporal_reg_loss: needs F >= 2");
    auto v = var_axis(x, frame_axis);
    auto raw = scalar_mul(log_(scalar_add(mean_all(v), (T)eps)), (T)-1);
    TemporalLossResult<T> r;
    r.raw = (double)raw.item();
    r.effective = r.raw >= clip ? raw : Tensor<T>::scalar((T)clip);
    return r;
}

template <typename T>
struct DmdResult {
    Tensor<T> loss;       // quadratic surrogate; d(loss)/dx = (s_fake - s_real)/c per element
    Tensor<T> direction;  // detached (s_fake - s_real)/c
    double t = 0.0;
    double normalizer = 0.0;
};

// DMD gradient objective as a stop-gradient surrogate. Teacher score is
// classifier-free guided; the fake score is evaluated conditionally (w=1).
// Direction d = s_fake - s_real, normalized by c = mean|x - x0_teacher| + 1e-8.
template <typename T, typename Rng>
DmdResult<T> dmd_generator_loss(const Tensor<T>& x, Denoiser<T>& teacher, Denoiser<T>& fake,
                                const std::vector<Condition>& conds, const NoiseSchedule& sched,
                                const LossWeights& w, Rng& rng) {
    std::uniform_real_distribution<double> ud(w.dmd_t_lo, w.dmd_t_hi);
    const double t = ud(rng);
    auto x_det = x.detach();
    auto eps = Tensor<T>::randn(x.shape(), rng);
    auto x_t = forward_diffuse(sched, x_det, t, eps);

    std::vector<double> ts(conds.size(), t);
    auto v_real = guided_prediction(teacher, x_t, ts, conds, w.cfg_scale);
    auto v_fake = denoiser_forward(fake, x_t, ts, conds);
    auto s_real = prediction_convert(v_real, x_t, sched, t, PredSpace::Velocity, PredSpace::Score);
    auto s_fake = prediction_convert(v_fake, x_t, sched, t, PredSpace::Velocity, PredSpace::Score);
    auto x0_teacher = prediction_convert(v_real, x_t, sched, t, PredSpace::Velocity, PredSpace::CleanX0);

    double c = 0.0;
    for (int64_t i = 0; i < x.numel(); ++i)
        c += std::abs((double)x_det.data()[i] - (double)x0_teacher.data()[i]);
    c = c / (double)x.numel() + 1e-8;

    // target = stopgrad(x - d/c)
    std::vector<T> tgt(x.numel()), dir(x.numel());
    for (int64_t i = 0; i < x.numel(); ++i) {
        const double d = (double)s_fake.data()[i] - (double)s_real.data()[i];
        dir[i] = (T)(d / c);
        tgt[i] = (T)((double)x_det.data()[i] - d / c);
    }
    auto target = Tensor<T>::from_data(x.shape(), std::move(tgt));
    auto diff = sub(x, target);
    DmdResult<T> r;
    r.loss = scalar_mul(sum_all(mul(diff, diff)), (T)0.5);
    r.direction = Tensor<T>::from_data(x.shape(), std::move(dir));
    r.t = t;
    r.normalizer = c;
    return r;
}

// L_G = w_kl * L_KL + w_reg * mean_b(omega_b * L_reg_b) + w_temp * L_temp.
// The adaptive weights are detached: no gradient flows through omega.
template <typename T>
Tensor<T> combined_generator_loss(const Tensor<T>& l_kl, const Tensor<T>& l_reg_per_sample,
                                  const std::vector<double>& omega, const Tensor<T>& l_temp,
                                  const LossWeights& w) {
    const int B = l_reg_per_sample.shape()[0];
    if ((int)omega.size() != B) throw std::runtime_error("combined_generator_loss: omega size mismatch");
    std::vector<T> om(omega.begin(), omega.end());
    auto omega_t = Tensor<T>::from_data({B}, std::move(om));
    auto reg = mean_all(mul(l_reg_per_sample, omega_t));
    return add(scalar_mul(l_kl, (T)w.w_kl),
               add(scalar_mul(reg, (T)w.w_reg), scalar_mul(l_temp, (T)w.w_temp)));
}

}  // namespace avd
