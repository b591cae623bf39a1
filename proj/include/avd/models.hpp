// Tiny video denoiser shared by teacher, student generator and fake-score
// model: per-frame conv encoder, temporal mixing conv, class + timestep
// conditioning, conv decoder. Predicts velocity.
#pragma once

#include "avd/conv.hpp"
#include "avd/diffusion.hpp"
#include "avd/tensor.hpp"

namespace avd {

struct Condition {
    static constexpr int kNull = -1;
    int class_id = kNull;
};

template <typename T>
struct Denoiser {
    int channels = 1;
    int base_width = 32;
    int n_classes = 4;
    int64_t forward_calls = 0;  // bookkeeping for per-step cost assertions

    // named parameters, in checkpoint order
    Tensor<T> enc1_w, enc1_b;      // C -> W0, 3x3
    Tensor<T> enc2_w, enc2_b;      // W0 -> W0, 3x3 stride 2
    Tensor<T> cond_table;          // [K+1, W0], row 0 = NULL
    Tensor<T> tmlp1_w, tmlp1_b;    // [W0, W0]
    Tensor<T> tmlp2_w, tmlp2_b;    // [W0, W0]
    Tensor<T> temp_w, temp_b;      // temporal conv W0 -> W0, k3
    Tensor<T> mid_w, mid_b;        // W0 -> W0, 3x3
    Tensor<T> up_w, up_b;          // transposed conv W0 -> W0
    Tensor<T> out_w, out_b;        // W0 -> C, 3x3

    std::vector<std::pair<std::string, Tensor<T>*>> named_params() {
        return {{"enc1_w", &enc1_w}, {"enc1_b", &enc1_b}, {"enc2_w", &enc2_w}, {"enc2_b", &enc2_b},
                {"cond_table", &cond_table}, {"tmlp1_w", &tmlp1_w}, {"tmlp1_b", &tmlp1_b},
                {"tmlp2_w", &tmlp2_w}, {"tmlp2_b", &tmlp2_b}, {"temp_w", &temp_w},
                {"temp_b", &temp_b}, {"mid_w", &mid_w}, {"mid_b", &mid_b}, {"up_w", &up_w},
                {"up_b", &up_b}, {"out_w", &out_w}, {"out_b", &out_b}};
    }
    std::vector<Tensor<T>*> params() {
        std::vector<Tensor<T>*> v;
        for (auto& [name, p] : named_params()) v.push_back(p);
        return v;
    }
    void zero_grads() {
        for (auto* p : params()) p->zero_grad();
    }

    template <typename Rng>
    static Denoiser init(int channels, int base_width, int n_classes, Rng& rng) {
        Denoiser m;
        m.channels = channels;
        m.base_width = base_width;
        m.n_classes = n_classes;
        const int w0 = base_width;
        auto u = [&rng](const Shape& s, int fan_in) {
            const double b = 1.0 / std::sqrt((double)fan_in);
            return Tensor<T>::uniform(s, rng, (T)-b, (T)b, true);
        };
        m.enc1_w = u({w0, channels, 3, 3}, channels * 9);
        m.enc1_b = Tensor<T>::zeros({w0}, true);
        m.enc2_w = u({w0, w0, 3, 3}, w0 * 9);
        m.enc2_b = Tensor<T>::zeros({w0}, true);
        m.cond_table = Tensor<T>::randn({n_classes + 1, w0}, rng, (T)0.1, true);
        m.tmlp1_w = u({w0, w0}, w0);
        m.tmlp1_b = Tensor<T>::zeros({w0}, true);
        m.tmlp2_w = u({w0, w0}, w0);
        m.tmlp2_b = Tensor<T>::zeros({w0}, true);
        m.temp_w = u({w0, w0, 3}, w0 * 3);
        m.temp_b = Tensor<T>::zeros({w0}, true);
        m.mid_w = u({w0, w0, 3, 3}, w0 * 9);
        m.mid_b = Tensor<T>::zeros({w0}, true);
        m.up_w = u({w0, w0, 2, 2}, w0 * 4);
        m.up_b = Tensor<T>::zeros({w0}, true);
        m.out_w = u({channels, w0, 3, 3}, w0 * 9);
        m.out_b = Tensor<T>::zeros({channels}, true);
        return m;
    }

    Denoiser clone() const {
        Denoiser m = *this;
        auto src = const_cast<Denoiser*>(this)->named_params();
        auto dst = m.named_params();
        for (size_t i = 0; i < src.size(); ++i) {
            *dst[i].second = Tensor<T>::from_data(src[i].second->shape(), src[i].second->data(), true);
        }
        return m;
    }

    void copy_params_from(const Denoiser& other) {
        auto src = const_cast<Denoiser&>(other).named_params();
        auto dst = named_params();
        for (size_t i = 0; i < src.size(); ++i) dst[i].second->data() = src[i].second->data();
    }
};

// sinusoidal timestep features, one row per batch element
template <typename T>
Tensor<T> timestep_features(const std::vector<double>& ts, int dim) {
    const int half = dim / 2;
    std::vector<T> d((size_t)ts.size() * dim);
    for (size_t b = 0; b < ts.size(); ++b)
        for (int j = 0; j < half; ++j) {
            const double freq = std::exp(-std::log(1000.0) * j / std::max(1, half - 1));
            d[b * dim + j] = (T)std::sin(ts[b] * freq * 2.0 * M_PI);
            d[b * dim + half + j] = (T)std::cos(ts[b] * freq * 2.0 * M_PI);
        }
    return Tensor<T>::from_data({(int)ts.size(), dim}, std::move(d));
}

inline int cond_row(const Condition& c, int n_classes) {
    if (c.class_id == Condition::kNull) return 0;
    if (c.class_id < 0 || c.class_id >= n_classes)
        throw std::runtime_error("denoiser: unknown class id " + std::to_string(c.class_id));
    return c.class_id + 1;
}

// x_t [B,F,C,H,W], per-sample timesteps and conditions; returns velocity.
template <typename T>
Tensor<T> denoiser_forward(Denoiser<T>& m, const Tensor<T>& x_t, const std::vector<double>& ts,
                           const std::vector<Condition>& conds) {
    const Shape& s = x_t.shape();
    if (s.size() != 5) throw std::runtime_error("denoiser_forward: input must be [B,F,C,H,W]");
    const int B = s[0];
    if ((int)ts.size() != B || (int)conds.size() != B)
        throw std::runtime_error("denoiser_forward: batch size mismatch");
    for (double t : ts)
        if (t < 0.0 || t > 1.0) throw std::runtime_error("denoiser_forward: t outside [0,1]");

    ++m.forward_calls;
    std::vector<int> rows_idx;
    for (const auto& c : conds) rows_idx.push_back(cond_row(c, m.n_classes));

    auto h = leaky_relu(conv2d(x_t, m.enc1_w, m.enc1_b, 1, 1));
    h = leaky_relu(conv2d(h, m.enc2_w, m.enc2_b, 2, 1));

    // conditioning: class embedding + 2-layer MLP over sinusoidal t features
    auto cemb = rows(m.cond_table, rows_idx);          // [B, W0]
    auto tf = timestep_features<T>(ts, m.base_width);  // [B, W0]
    auto h1 = relu(add_row_bias(matmul(tf, m.tmlp1_w), m.tmlp1_b));
    auto h2 = add_row_bias(matmul(h1, m.tmlp2_w), m.tmlp2_b);
    auto bias = add(cemb, h2);  // [B, W0]
    h = add_channel_bias(h, bias);

    h = leaky_relu(temporal_conv(h, m.temp_w, m.temp_b));
    h = leaky_relu(conv2d(h, m.mid_w, m.mid_b, 1, 1));
    h = leaky_relu(conv_transpose2d(h, m.up_w, m.up_b));
    return conv2d(h, m.out_w, m.out_b, 1, 1);
}

// convenience: shared t and condition for the whole batch
template <typename T>
Tensor<T> denoiser_forward(Denoiser<T>& m, const Tensor<T>& x_t, double t, const Condition& cond) {
    const int B = x_t.shape()[0];
    return denoiser_forward(m, x_t, std::vector<double>(B, t), std::vector<Condition>(B, cond));
}

// CFG: pred(NULL) + w * (pred(cond) - pred(NULL)).
template <typename T>
Tensor<T> guided_prediction(Denoiser<T>& teacher, const Tensor<T>& x_t,
                            const std::vector<double>& ts, const std::vector<Condition>& conds,
                            double w) {
    if (w < 0.0) throw std::runtime_error("guided_prediction: w must be >= 0");
    std::vector<Condition> nulls(conds.size());
    if (w == 0.0) return denoiser_forward(teacher, x_t, ts, nulls);
    auto pc = denoiser_forward(teacher, x_t, ts, conds);
    if (w == 1.0) return pc;
    auto pn = denoiser_forward(teacher, x_t, ts, nulls);
    return add(pn, scalar_mul(sub(pc, pn), (T)w));
}

// Multi-step sampling: predict clean, renoise with fresh eps at the next
// grid point, repeat; returns the final clean estimate. Optionally records
// every intermediate clean estimate (for the cosine-by-stage diagnostic).
template <typename T, typename Rng>
Tensor<T> student_sample(Denoiser<T>& g, const Tensor<T>& noise, const std::vector<Condition>& conds,
                         const TimestepSchedule& sched_t, const NoiseSchedule& sched, Rng& rng,
                         std::vector<Tensor<T>>* trace = nullptr) {
    if (sched_t.steps.empty()) throw std::runtime_error("student_sample: empty schedule");
    Tensor<T> x = noise;
    Tensor<T> x0;
    for (size_t k = 0; k < sched_t.steps.size(); ++k) {
        const double t = sched_t.steps[k];
        auto v = denoiser_forward(g, x, std::vector<double>(conds.size(), t), conds);
        x0 = prediction_convert(v, x, sched, t, PredSpace::Velocity, PredSpace::CleanX0);
        if (trace) trace->push_back(x0.detach());
        if (k + 1 < sched_t.steps.size()) {
            auto eps = Tensor<T>::randn(x0.shape(), rng);
            x = forward_diffuse(sched, x0, sched_t.steps[k + 1], eps);
        }
    }
    return x0;
}

// Single-call clean reconstruction of a noised real clip (regression branch).
template <typename T>
Tensor<T> student_denoise_once(Denoiser<T>& g, const Tensor<T>& y_t, double t,
                               const std::vector<Condition>& conds, const NoiseSchedule& sched) {
    auto v = denoiser_forward(g, y_t, std::vector<double>(conds.size(), t), conds);
    return prediction_convert(v, y_t, sched, t, PredSpace::Velocity, PredSpace::CleanX0);
}

}  // namespace avd
