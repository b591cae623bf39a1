// Latent frame-interpolation U-Net: three-level encoder with channel widths
// W0/2W0/4W0, symmetric decoder with skip connections, final 1x1 conv.
// Residual around the frame average with a zero-initialized output layer,
// so the untrained network predicts exactly (a+b)/2.
#pragma once

#include "avd/conv.hpp"
#include "avd/diffusion.hpp"
#include "avd/models.hpp"
#include "avd/tensor.hpp"

namespace avd {

template <typename T>
struct Interp {
    int channels = 1;
    int base_width = 32;

    // ConvBlock = 2x [3x3 conv + instance norm + leaky relu]
    Tensor<T> e1a_w, e1a_b, e1b_w, e1b_b;  // 2C -> W0
    Tensor<T> e2a_w, e2a_b, e2b_w, e2b_b;  // W0 -> 2W0
    Tensor<T> e3a_w, e3a_b, e3b_w, e3b_b;  // 2W0 -> 4W0 (bottleneck)
    Tensor<T> u2_w, u2_b;                  // transposed conv 4W0 -> 2W0
    Tensor<T> d2a_w, d2a_b, d2b_w, d2b_b;  // 4W0 -> 2W0 (after skip concat)
    Tensor<T> u1_w, u1_b;                  // transposed conv 2W0 -> W0
    Tensor<T> d1a_w, d1a_b, d1b_w, d1b_b;  // 2W0 -> W0
    Tensor<T> out_w, out_b;                // 1x1 conv W0 -> C, zero-init

    std::vector<std::pair<std::string, Tensor<T>*>> named_params() {
        return {{"e1a_w", &e1a_w}, {"e1a_b", &e1a_b}, {"e1b_w", &e1b_w}, {"e1b_b", &e1b_b},
                {"e2a_w", &e2a_w}, {"e2a_b", &e2a_b}, {"e2b_w", &e2b_w}, {"e2b_b", &e2b_b},
                {"e3a_w", &e3a_w}, {"e3a_b", &e3a_b}, {"e3b_w", &e3b_w}, {"e3b_b", &e3b_b},
                {"u2_w", &u2_w},   {"u2_b", &u2_b},   {"d2a_w", &d2a_w}, {"d2a_b", &d2a_b},
                {"d2b_w", &d2b_w}, {"d2b_b", &d2b_b}, {"u1_w", &u1_w},   {"u1_b", &u1_b},
                {"d1a_w", &d1a_w}, {"d1a_b", &d1a_b}, {"d1b_w", &d1b_w}, {"d1b_b", &d1b_b},
                {"out_w", &out_w}, {"out_b", &out_b}};
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
    static Interp init(int channels, int base_width, Rng& rng) {
        Interp m;
        m.channels = channels;
        m.base_width = base_width;
        const int w0 = base_width, w1 = 2 * base_width, w2 = 4 * base_width;
        auto u = [&rng](const Shape& s, int fan_in) {
            const double b = 1.0 / std::sqrt((double)fan_in);
            return Tensor<T>::uniform(s, rng, (T)-b, (T)b, true);
        };
        auto zb = [](int c) { return Tensor<T>::zeros({c}, true); };
        m.e1a_w = u({w0, 2 * channels, 3, 3}, 2 * channels * 9);
        m.e1a_b = zb(w0);
        m.e1b_w = u({w0, w0, 3, 3}, w0 * 9);
        m.e1b_b = zb(w0);
        m.e2a_w = u({w1, w0, 3, 3}, w0 * 9);
        m.e2a_b = zb(w1);
        m.e2b_w = u({w1, w1, 3, 3}, w1 * 9);
        m.e2b_b = zb(w1);
        m.e3a_w = u({w2, w1, 3, 3}, w1 * 9);
        m.e3a_b = zb(w2);
        m.e3b_w = u({w2, w2, 3, 3}, w2 * 9);
        m.e3b_b = zb(w2);
        m.u2_w = u({w2, w1, 2, 2}, w2 * 4);
        m.u2_b = zb(w1);
        m.d2a_w = u({w1, w2, 3, 3}, w2 * 9);
        m.d2a_b = zb(w1);
        m.d2b_w = u({w1, w1, 3, 3}, w1 * 9);
        m.d2b_b = zb(w1);
        m.u1_w = u({w1, w0, 2, 2}, w1 * 4);
        m.u1_b = zb(w0);
        m.d1a_w = u({w0, w1, 3, 3}, w1 * 9);
        m.d1a_b = zb(w0);
        m.d1b_w = u({w0, w0, 3, 3}, w0 * 9);
        m.d1b_b = zb(w0);
        m.out_w = Tensor<T>::zeros({channels, w0, 1, 1}, true);  // residual zero-init
        m.out_b = zb(channels);
        return m;
    }
};

namespace detail {
template <typename T>
Tensor<T> inorm(const Tensor<T>& x) {
    // per-(image,channel) normalization over the spatial extent
    int64_t n;
    int c, h, w;
    chw_split(x.shape(), n, c, h, w);
    auto flat = reshape(x, {(int)(n * c), h * w});
    return reshape(row_norm(flat), x.shape());
}
template <typename T>
Tensor<T> conv_block(const Tensor<T>& x, const Tensor<T>& wa, const Tensor<T>& ba,
                     const Tensor<T>& wb, const Tensor<T>& bb) {
    auto h = leaky_relu(inorm(conv2d(x, wa, ba, 1, 1)));
    return leaky_relu(inorm(conv2d(h, wb, bb, 1, 1)));
}
}  // namespace detail

// frames [N, C, H, W] (paired batches); returns the predicted mid frames.
template <typename T>
Tensor<T> interp_forward(Interp<T>& m, const Tensor<T>& frame_a, const Tensor<T>& frame_b) {
    if (frame_a.shape() != frame_b.shape()) throw std::runtime_error("interp_forward: shape mismatch");
    Shape s = frame_a.shape();
    const bool batched = s.size() == 4;
    if (!batched && s.size() != 3) throw std::runtime_error("interp_forward: frames must be [C,H,W] or [N,C,H,W]");
    auto a = batched ? frame_a : reshape(frame_a, {1, s[0], s[1], s[2]});
    auto b = batched ? frame_b : reshape(frame_b, {1, s[0], s[1], s[2]});

    auto x = concat(a, b, 1);  // [N, 2C, H, W]
    auto e1 = detail::conv_block(x, m.e1a_w, m.e1a_b, m.e1b_w, m.e1b_b);
    auto e2 = detail::conv_block(maxpool2x2(e1), m.e2a_w, m.e2a_b, m.e2b_w, m.e2b_b);
    auto e3 = detail::conv_block(maxpool2x2(e2), m.e3a_w, m.e3a_b, m.e3b_w, m.e3b_b);
    auto d2 = detail::conv_block(concat(conv_transpose2d(e3, m.u2_w, m.u2_b), e2, 1), m.d2a_w,
                                 m.d2a_b, m.d2b_w, m.d2b_b);
    auto d1 = detail::conv_block(concat(conv_transpose2d(d2, m.u1_w, m.u1_b), e1, 1), m.d1a_w,
                                 m.d1a_b, m.d1b_w, m.d1b_b);
    auto res = conv2d(d1, m.out_w, m.out_b, 1, 0);
    auto avg = scalar_mul(add(a, b), (T)0.5);
    auto out = add(avg, res);
    return batched ? out : reshape(out, s);
}

// F -> 2F-1 frames; even output indices are the inputs, copied bit-exactly.
template <typename T>
Tensor<T> expand_sequence(Interp<T>& m, const Tensor<T>& clip) {
    const Shape& s = clip.shape();
    if (s.size() != 4) throw std::runtime_error("expand_sequence: clip must be [F,C,H,W]");
    const int F = s[0], C = s[1], H = s[2], W = s[3];
    if (F < 2) throw std::runtime_error("expand_sequence: needs F >= 2");
    auto a = slice_axis(clip, 0, 0, F - 1);
    auto b = slice_axis(clip, 0, 1, F - 1);
    auto mids = interp_forward(m, a, b);  // [F-1, C, H, W]
    auto out = Tensor<T>::zeros({2 * F - 1, C, H, W});
    const int64_t fs = (int64_t)C * H * W;
    for (int f = 0; f < F; ++f)
        std::copy(clip.data().begin() + f * fs, clip.data().begin() + (f + 1) * fs,
                  out.data().begin() + (int64_t)(2 * f) * fs);
    for (int f = 0; f < F - 1; ++f)
        std::copy(mids.data().begin() + f * fs, mids.data().begin() + (f + 1) * fs,
                  out.data().begin() + (int64_t)(2 * f + 1) * fs);
    return out;
}

// keep frames 0, 2, 4, ...
template <typename T>
Tensor<T> temporal_downsample(const Tensor<T>& clip) {
    const Shape& s = clip.shape();
    if (s.size() != 4) throw std::runtime_error("temporal_downsample: clip must be [F,C,H,W]");
    const int F = s[0];
    if (F == 0) throw std::runtime_error("temporal_downsample: empty clip");
    const int Fo = (F + 1) / 2;
    auto out = Tensor<T>::zeros({Fo, s[1], s[2], s[3]});
    const int64_t fs = (int64_t)s[1] * s[2] * s[3];
    for (int f = 0; f < Fo; ++f)
        std::copy(clip.data().begin() + (int64_t)(2 * f) * fs,
                  clip.data().begin() + (int64_t)(2 * f) * fs + fs, out.data().begin() + f * fs);
    return out;
}

template <typename T>
struct HalfRateResult {
    Tensor<T> sample;          // [F,C,H,W]
    int64_t frame_steps = 0;   // frames processed summed over denoiser calls
    int64_t full_frame_steps = 0;
};

// Run the first `split` denoising steps at half frame rate, expand the clean
// estimate back to F frames, renoise with fresh eps, and finish at full rate.
template <typename T, typename Rng>
HalfRateResult<T> half_rate_sample(Denoiser<T>& g, Interp<T>& interp, const Tensor<T>& noise,
                                   const Condition& cond, const TimestepSchedule& sched_t,
                                   const NoiseSchedule& sched, Rng& rng, int split) {
    const Shape& s = noise.shape();
    if (s.size() != 4) throw std::runtime_error("half_rate_sample: noise must be [F,C,H,W]");
    const int F = s[0];
    if (F % 2 == 0) throw std::runtime_error("half_rate_sample: F must be odd");
    const int q = sched_t.count();
    if (q < 2) throw std::runtime_error("half_rate_sample: needs Q >= 2");
    if (split < 1 || split > q) throw std::runtime_error("half_rate_sample: split outside [1,Q]");

    HalfRateResult<T> r;
    const int Fh = (F + 1) / 2;
    auto x4 = temporal_downsample(noise);
    auto x = reshape(x4, {1, Fh, s[1], s[2], s[3]});
    std::vector<Condition> conds{cond};
    Tensor<T> x0;
    for (int k = 0; k < split; ++k) {
        const double t = sched_t.steps[k];
        auto v = denoiser_forward(g, x, std::vector<double>{t}, conds);
        x0 = prediction_convert(v, x, sched, t, PredSpace::Velocity, PredSpace::CleanX0);
        r.frame_steps += Fh;
        if (k + 1 < split) {
            auto eps = Tensor<T>::randn(x0.shape(), rng);
            x = forward_diffuse(sched, x0, sched_t.steps[k + 1], eps);
        }
    }
    // expand to full rate; renoise at the next grid point if steps remain
    auto x0_full = expand_sequence(interp, reshape(x0.detach(), {Fh, s[1], s[2], s[3]}));
    if (split == q) {
        r.sample = x0_full;
    } else {
        auto eps = Tensor<T>::randn(x0_full.shape(), rng);
        auto xf = reshape(forward_diffuse(sched, x0_full, sched_t.steps[split], eps),
                          {1, F, s[1], s[2], s[3]});
        Tensor<T> x0f;
        for (int k = split; k < q; ++k) {
            const double t = sched_t.steps[k];
            auto v = denoiser_forward(g, xf, std::vector<double>{t}, conds);
            x0f = prediction_convert(v, xf, sched, t, PredSpace::Velocity, PredSpace::CleanX0);
            r.frame_steps += F;
            if (k + 1 < q) {
                auto eps2 = Tensor<T>::randn(x0f.shape(), rng);
                xf = forward_diffuse(sched, x0f, sched_t.steps[k + 1], eps2);
            }
        }
        r.sample = reshape(x0f.detach(), {F, s[1], s[2], s[3]});
    }
    r.full_frame_steps = (int64_t)F * q;
    return r;
}

}  // namespace avd
