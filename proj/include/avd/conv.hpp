// Convolution-family primitives on [..., C, H, W] tensors.
// Leading dims are folded into a batch axis; im2col + matmul-style loops.
#pragma once

#include "avd/tensor.hpp"

namespace avd {

namespace detail {
// interpret trailing 3 dims as C,H,W; fold the rest into N
inline void chw_split(const Shape& s, int64_t& n, int& c, int& h, int& w) {
    if (s.size() < 3) throw std::runtime_error("conv: rank must be >= 3");
    c = s[s.size() - 3];
    h = s[s.size() - 2];
    w = s[s.size() - 1];
    n = 1;
    for (size_t i = 0; i + 3 < s.size(); ++i) n *= s[i];
}
inline Shape with_chw(const Shape& s, int c, int h, int w) {
    Shape r = s;
    r[r.size() - 3] = c;
    r[r.size() - 2] = h;
    r[r.size() - 1] = w;
    return r;
}
}  // namespace detail

// weight [Cout, Cin, kh, kw], bias [Cout]; zero padding.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias, int stride,
                 int pad) {
    int64_t N;
    int Cin, H, W;
    detail::chw_split(x.shape(), N, Cin, H, W);
    if (weight.shape().size() != 4 || weight.shape()[1] != Cin)
        throw std::runtime_error("conv2d: weight shape mismatch");
    const int Cout = weight.shape()[0], kh = weight.shape()[2], kw = weight.shape()[3];
    if (bias.shape() != Shape{Cout}) throw std::runtime_error("conv2d: bias shape mismatch");
    if (stride != 1 && stride != 2) throw std::runtime_error("conv2d: stride must be 1 or 2");
    const int Ho = (H + 2 * pad - kh) / stride + 1;
    const int Wo = (W + 2 * pad - kw) / stride + 1;
    if (Ho <= 0 || Wo <= 0) throw std::runtime_error("conv2d: empty output");

    auto n = detail::make_result<T>(detail::with_chw(x.shape(), Cout, Ho, Wo), {x, weight, bias});
    const T* X = x.data().data();
    const T* Wt = weight.data().data();
    const T* B = bias.data().data();
    T* Y = n->data.data();
    const int64_t in_im = (int64_t)Cin * H * W, out_im = (int64_t)Cout * Ho * Wo;
    for (int64_t im = 0; im < N; ++im) {
        const T* xi = X + im * in_im;
        T* yi = Y + im * out_im;
        for (int co = 0; co < Cout; ++co) {
            T* ych = yi + (int64_t)co * Ho * Wo;
            for (int64_t i = 0; i < (int64_t)Ho * Wo; ++i) ych[i] = B[co];
            for (int ci = 0; ci < Cin; ++ci) {
                const T* xch = xi + (int64_t)ci * H * W;
                const T* wch = Wt + (((int64_t)co * Cin + ci) * kh) * kw;
                for (int ky = 0; ky < kh; ++ky)
                    for (int kx = 0; kx < kw; ++kx) {
                        const T wv = wch[ky * kw + kx];
                        if (wv == T(0)) continue;
                        for (int oy = 0; oy < Ho; ++oy) {
                            const int iy = oy * stride + ky - pad;
                            if (iy < 0 || iy >= H) continue;
                            const T* xrow = xch + (int64_t)iy * W;
                            T* yrow = ych + (int64_t)oy * Wo;
                            for (int ox = 0; ox < Wo; ++ox) {
                                const int ix = ox * stride + kx - pad;
                                if (ix >= 0 && ix < W) yrow[ox] += wv * xrow[ix];
                            }
                        }
                    }
            }
        }
    }
    detail::check_finite(n->data, "conv2d");
    n->backfn = [N, Cin, H, W, Cout, kh, kw, Ho, Wo, stride, pad](Node<T>& self) {
        auto& px = self.parents[0];
        auto& pw = self.parents[1];
        auto& pb = self.parents[2];
        const int64_t in_im = (int64_t)Cin * H * W, out_im = (int64_t)Cout * Ho * Wo;
        const T* G = self.grad.data();
        if (detail::wants_grad(pb)) {
            pb->ensure_grad();
            for (int64_t im = 0; im < N; ++im)
                for (int co = 0; co < Cout; ++co) {
                    const T* grow = G + im * out_im + (int64_t)co * Ho * Wo;
                    T acc = 0;
                    for (int64_t i = 0; i < (int64_t)Ho * Wo; ++i) acc += grow[i];
                    pb->grad[co] += acc;
                }
        }
        const bool wx = detail::wants_grad(px), ww = detail::wants_grad(pw);
        if (wx) px->ensure_grad();
        if (ww) pw->ensure_grad();
        if (!wx && !ww) return;
        for (int64_t im = 0; im < N; ++im) {
            const T* gi = G + im * out_im;
            const T* xi = px->data.data() + im * in_im;
            T* gxi = wx ? px->grad.data() + im * in_im : nullptr;
            for (int co = 0; co < Cout; ++co) {
                const T* gch = gi + (int64_t)co * Ho * Wo;
                for (int ci = 0; ci < Cin; ++ci) {
                    const T* xch = xi + (int64_t)ci * H * W;
                    T* gxch = wx ? gxi + (int64_t)ci * H * W : nullptr;
                    const int64_t wbase = (((int64_t)co * Cin + ci) * kh) * kw;
                    for (int ky = 0; ky < kh; ++ky)
                        for (int kx = 0; kx < kw; ++kx) {
                            const T wv = pw->data[wbase + ky * kw + kx];
                            T wacc = 0;
                            for (int oy = 0; oy < Ho; ++oy) {
                                const int iy = oy * stride + ky - pad;
                                if (iy < 0 || iy >= H) continue;
                                const T* grow = gch + (int64_t)oy * Wo;
                                const T* xrow = xch + (int64_t)iy * W;
                                T* gxrow = wx ? gxch + (int64_t)iy * W : nullptr;
                                for (int ox = 0; ox < Wo; ++ox) {
                                    const int ix = ox * stride + kx - pad;
                                    if (ix < 0 || ix >= W) continue;
                                    const T g = grow[ox];
                                    if (ww) wacc += g * xrow[ix];
                                    if (wx) gxrow[ix] += g * wv;
                                }
                            }
                            if (ww) pw->grad[wbase + ky * kw + kx] += wacc;
                        }
                }
            }
        }
    };
    return Tensor<T>(n);
}

// Transposed conv with kernel 2x2, stride 2: exact spatial doubling.
// weight [Cin, Cout, 2, 2], bias [Cout].
template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
    int64_t N;
    int Cin, H, W;
    detail::chw_split(x.shape(), N, Cin, H, W);
    if (weight.shape().size() != 4 || weight.shape()[0] != Cin || weight.shape()[2] != 2 ||
        weight.shape()[3] != 2)
        throw std::runtime_error("conv_transpose2d: weight must be [Cin,Cout,2,2]");
    const int Cout = weight.shape()[1];
    if (bias.shape() != Shape{Cout}) throw std::runtime_error("conv_transpose2d: bias shape mismatch");
    const int Ho = H * 2, Wo = W * 2;
    auto n = detail::make_result<T>(detail::with_chw(x.shape(), Cout, Ho, Wo), {x, weight, bias});
    const T* X = x.data().data();
    const T* Wt = weight.data().data();
    const T* B = bias.data().data();
    T* Y = n->data.data();
    const int64_t in_im = (int64_t)Cin * H * W, out_im = (int64_t)Cout * Ho * Wo;
    for (int64_t im = 0; im < N; ++im) {
        const T* xi = X + im * in_im;
        T* yi = Y + im * out_im;
        for (int co = 0; co < Cout; ++co) {
            T* ych = yi + (int64_t)co * Ho * Wo;
            for (int64_t i = 0; i < (int64_t)Ho * Wo; ++i) ych[i] = B[co];
        }
        for (int ci = 0; ci < Cin; ++ci) {
            const T* xch = xi + (int64_t)ci * H * W;
            for (int co = 0; co < Cout; ++co) {
                T* ych = yi + (int64_t)co * Ho * Wo;
                const T* w = Wt + (((int64_t)ci * Cout + co) * 2) * 2;
                for (int iy = 0; iy < H; ++iy)
                    for (int ix = 0; ix < W; ++ix) {
                        const T v = xch[(int64_t)iy * W + ix];
                        T* o = ych + (int64_t)(2 * iy) * Wo + 2 * ix;
                        o[0] += v * w[0];
                        o[1] += v * w[1];
                        o[Wo] += v * w[2];
                        o[Wo + 1] += v * w[3];
                    }
            }
        }
    }
    detail::check_finite(n->data, "conv_transpose2d");
    n->backfn = [N, Cin, H, W, Cout, Ho, Wo](Node<T>& self) {
        auto& px = self.parents[0];
        auto& pw = self.parents[1];
        auto& pb = self.parents[2];
        const int64_t in_im = (int64_t)Cin * H * W, out_im = (int64_t)Cout * Ho * Wo;
        const T* G = self.grad.data();
        if (detail::wants_grad(pb)) {
            pb->ensure_grad();
            for (int64_t im = 0; im < N; ++im)
                for (int co = 0; co < Cout; ++co) {
                    const T* grow = G + im * out_im + (int64_t)co * Ho * Wo;
                    T acc = 0;
                    for (int64_t i = 0; i < (int64_t)Ho * Wo; ++i) acc += grow[i];
                    pb->grad[co] += acc;
                }
        }
        const bool wx = detail::wants_grad(px), ww = detail::wants_grad(pw);
        if (wx) px->ensure_grad();
        if (ww) pw->ensure_grad();
        if (!wx && !ww) return;
        for (int64_t im = 0; im < N; ++im) {
            const T* gi = G + im * out_im;
            const T* xi = px->data.data() + im * in_im;
            T* gxi = wx ? px->grad.data() + im * in_im : nullptr;
            for (int ci = 0; ci < Cin; ++ci) {
                const T* xch = xi + (int64_t)ci * H * W;
                T* gxch = wx ? gxi + (int64_t)ci * H * W : nullptr;
                for (int co = 0; co < Cout; ++co) {
                    const T* gch = gi + (int64_t)co * Ho * Wo;
                    const int64_t wbase = (((int64_t)ci * Cout + co) * 2) * 2;
                    const T w0 = pw->data[wbase], w1 = pw->data[wbase + 1];
                    const T w2 = pw->data[wbase + 2], w3 = pw->data[wbase + 3];
                    T gw0 = 0, gw1 = 0, gw2 = 0, gw3 = 0;
                    for (int iy = 0; iy < H; ++iy)
                        for (int ix = 0; ix < W; ++ix) {
                            const T* o = gch + (int64_t)(2 * iy) * Wo + 2 * ix;
                            const T v = xch[(int64_t)iy * W + ix];
                            if (ww) {
                                gw0 += o[0] * v;
                                gw1 += o[1] * v;
                                gw2 += o[Wo] * v;
                                gw3 += o[Wo + 1] * v;
                            }
                            if (wx)
                                gxch[(int64_t)iy * W + ix] +=
                                    o[0] * w0 + o[1] * w1 + o[Wo] * w2 + o[Wo + 1] * w3;
                        }
                    if (ww) {
                        pw->grad[wbase] += gw0;
                        pw->grad[wbase + 1] += gw1;
                        pw->grad[wbase + 2] += gw2;
                        pw->grad[wbase + 3] += gw3;
                    }
                }
            }
        }
    };
    return Tensor<T>(n);
}

template <typename T>
Tensor<T> maxpool2x2(const Tensor<T>& x) {
    int64_t N;
    int C, H, W;
    detail::chw_split(x.shape(), N, C, H, W);
    if (H % 2 || W % 2) throw std::runtime_error("maxpool2x2: odd spatial extent");
    const int Ho = H / 2, Wo = W / 2;
    auto n = detail::make_result<T>(detail::with_chw(x.shape(), C, Ho, Wo), {x});
    const int64_t NC = N * C;
    auto argmax = std::make_shared<std::vector<int64_t>>(n->data.size());
    const T* X = x.data().data();
    for (int64_t nc = 0; nc < NC; ++nc) {
        const T* xch = X + nc * H * W;
        T* ych = n->data.data() + nc * Ho * Wo;
        int64_t* am = argmax->data() + nc * Ho * Wo;
        for (int oy = 0; oy < Ho; ++oy)
            for (int ox = 0; ox < Wo; ++ox) {
                int64_t best = (int64_t)(2 * oy) * W + 2 * ox;
                T bv = xch[best];
                const int64_t cands[3] = {best + 1, best + W, best + W + 1};
                for (int64_t c2 : cands)
                    if (xch[c2] > bv) { bv = xch[c2]; best = c2; }
                ych[oy * Wo + ox] = bv;
                am[oy * Wo + ox] = nc * H * W + best;
            }
    }
    n->backfn = [argmax](Node<T>& self) {
        auto& p = self.parents[0];
        if (!detail::wants_grad(p)) return;
        p->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) p->grad[(*argmax)[i]] += self.grad[i];
    };
    return Tensor<T>(n);
}

// 1-D conv across the frame axis of [B,F,C,H,W] (or [F,C,H,W], B=1).
// weight [Cout, Cin, 3], bias [Cout]; zero padding keeps F.
template <typename T>
Tensor<T> temporal_conv(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
    const Shape& s = x.shape();
    if (s.size() != 4 && s.size() != 5) throw std::runtime_error("temporal_conv: rank must be 4 or 5");
    const int B = s.size() == 5 ? s[0] : 1;
    const int F = s[s.size() - 4], C = s[s.size() - 3], H = s[s.size() - 2], W = s[s.size() - 1];
    if (weight.shape().size() != 3 || weight.shape()[1] != C || weight.shape()[2] != 3)
        throw std::runtime_error("temporal_conv: weight must be [Cout,Cin,3]");
    const int Cout = weight.shape()[0];
    if (bias.shape() != Shape{Cout}) throw std::runtime_error("temporal_conv: bias shape mismatch");
    Shape so = s;
    so[so.size() - 3] = Cout;
    auto n = detail::make_result<T>(so, {x, weight, bias});
    const int64_t HW = (int64_t)H * W;
    const T* X = x.data().data();
    const T* Wt = weight.data().data();
    T* Y = n->data.data();
    for (int b = 0; b < B; ++b)
        for (int f = 0; f < F; ++f)
            for (int co = 0; co < Cout; ++co) {
                T* y = Y + (((int64_t)b * F + f) * Cout + co) * HW;
                for (int64_t i = 0; i < HW; ++i) y[i] = bias.data()[co];
                for (int k = -1; k <= 1; ++k) {
                    const int fs = f + k;
                    if (fs < 0 || fs >= F) continue;
                    for (int ci = 0; ci < C; ++ci) {
                        const T wv = Wt[((int64_t)co * C + ci) * 3 + (k + 1)];
                        const T* xp = X + (((int64_t)b * F + fs) * C + ci) * HW;
                        for (int64_t i = 0; i < HW; ++i) y[i] += wv * xp[i];
                    }
                }
            }
    detail::check_finite(n->data, "temporal_conv");
    n->backfn = [B, F, C, Cout, HW](Node<T>& self) {
        auto& px = self.parents[0];
        auto& pw = self.parents[1];
        auto& pb = self.parents[2];
        const T* G = self.grad.data();
        if (detail::wants_grad(pb)) {
            pb->ensure_grad();
            for (int64_t bf = 0; bf < (int64_t)B * F; ++bf)
                for (int co = 0; co < Cout; ++co) {
                    const T* g = G + (bf * Cout + co) * HW;
                    T acc = 0;
                    for (int64_t i = 0; i < HW; ++i) acc += g[i];
                    pb->grad[co] += acc;
                }
        }
        const bool wx = detail::wants_grad(px), ww = detail::wants_grad(pw);
        if (wx) px->ensure_grad();
        if (ww) pw->ensure_grad();
        if (!wx && !ww) return;
        for (int b = 0; b < B; ++b)
            for (int f = 0; f < F; ++f)
                for (int co = 0; co < Cout; ++co) {
                    const T* g = G + (((int64_t)b * F + f) * Cout + co) * HW;
                    for (int k = -1; k <= 1; ++k) {
                        const int fs = f + k;
                        if (fs < 0 || fs >= F) continue;
                        for (int ci = 0; ci < C; ++ci) {
                            const int64_t widx = ((int64_t)co * C + ci) * 3 + (k + 1);
                            const T wv = pw->data[widx];
                            const T* xp = px->data.data() + (((int64_t)b * F + fs) * C + ci) * HW;
                            T* gx = wx ? px->grad.data() + (((int64_t)b * F + fs) * C + ci) * HW : nullptr;
                            T wacc = 0;
                            for (int64_t i = 0; i < HW; ++i) {
                                if (ww) wacc += g[i] * xp[i];
                                if (wx) gx[i] += g[i] * wv;
                            }
                            if (ww) pw->grad[widx] += wacc;
                        }
                    }
                }
    };
    return Tensor<T>(n);
}

// Broadcast a per-batch channel bias [B,C] over x [B,F,C,H,W].
template <typename T>
Tensor<T> add_channel_bias(const Tensor<T>& x, const Tensor<T>& b) {
    const Shape& s = x.shape();
    if (s.size() != 5) throw std::runtime_error("add_channel_bias: x must be rank 5");
    const int B = s[0], F = s[1], C = s[2];
    const int64_t HW = (int64_t)s[3] * s[4];
    if (b.shape() != Shape{B, C}) throw std::runtime_error("add_channel_bias: bias must be [B,C]");
    auto n = detail::make_result<T>(s, {x, b});
    for (int bb = 0; bb < B; ++bb)
        for (int f = 0; f < F; ++f)
            for (int c = 0; c < C; ++c) {
                const int64_t off = (((int64_t)bb * F + f) * C + c) * HW;
                const T bv = b.data()[(int64_t)bb * C + c];
                for (int64_t i = 0; i < HW; ++i) n->data[off + i] = x.data()[off + i] + bv;
            }
    detail::check_finite(n->data, "add_channel_bias");
    n->backfn = [B, F, C, HW](Node<T>& self) {
        auto& px = self.parents[0];
        auto& pb = self.parents[1];
        if (detail::wants_grad(px)) {
            px->ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i) px->grad[i] += self.grad[i];
        }
        if (detail::wants_grad(pb)) {
            pb->ensure_grad();
            for (int bb = 0; bb < B; ++bb)
                for (int f = 0; f < F; ++f)
                    for (int c = 0; c < C; ++c) {
                        const int64_t off = (((int64_t)bb * F + f) * C + c) * HW;
                        T acc = 0;
                        for (int64_t i = 0; i < HW; ++i) acc += self.grad[off + i];
                        pb->grad[(int64_t)bb * C + c] += acc;
                    }
        }
    };
    return Tensor<T>(n);
}

}  // namespace avd
