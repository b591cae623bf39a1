// AdamW with global gradient-norm clipping.
#pragma once

#include "avd/tensor.hpp"

namespace avd {

template <typename T>
struct AdamW {
    double lr = 2.0e-6;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
    double max_grad_norm = 10.0;
    int64_t step_count = 0;
    std::vector<std::vector<T>> m, v;  // per-parameter moments

    void init(const std::vector<Tensor<T>*>& params) {
        m.clear();
        v.clear();
        for (auto* p : params) {
            m.emplace_back(p->numel(), T(0));
            v.emplace_back(p->numel(), T(0));
        }
    }

    double grad_norm(const std::vector<Tensor<T>*>& params) const {
        double sq = 0.0;
        for (auto* p : params)
            for (T g : p->grad()) sq += (double)g * (double)g;
        return std::sqrt(sq);
    }

    // Clips the global norm, then applies the bias-corrected moment update
    // with decoupled weight decay. Returns the pre-clip gradient norm.
    double step(const std::vector<Tensor<T>*>& params) {
        if (m.size() != params.size()) throw std::runtime_error("AdamW: not initialized");
        double norm = 0.0;
        for (auto* p : params)
            for (T g : p->grad()) {
                if (!std::isfinite((double)g)) throw std::runtime_error("AdamW: non-finite gradient");
                norm += (double)g * (double)g;
            }
        norm = std::sqrt(norm);
        const double scale = (max_grad_norm > 0.0 && norm > max_grad_norm) ? max_grad_norm / norm : 1.0;
        ++step_count;
        const double bc1 = 1.0 - std::pow(beta1, (double)step_count);
        const double bc2 = 1.0 - std::pow(beta2, (double)step_count);
        for (size_t i = 0; i < params.size(); ++i) {
            auto& pd = params[i]->data();
            auto& pg = params[i]->grad();
            for (size_t j = 0; j < pd.size(); ++j) {
                const double g = (double)pg[j] * scale;
                m[i][j] = (T)(beta1 * (double)m[i][j] + (1.0 - beta1) * g);
                v[i][j] = (T)(beta2 * (double)v[i][j] + (1.0 - beta2) * g * g);
                const double mh = (double)m[i][j] / bc1;
                const double vh = (double)v[i][j] / bc2;
                double upd = lr * mh / (std::sqrt(vh) + eps);
                upd += lr * weight_decay * (double)pd[j];
                pd[j] = (T)((double)pd[j] - upd);
            }
        }
        return norm;
    }

    static void zero_grads(const std::vector<Tensor<T>*>& params) {
        for (auto* p : params) p->zero_grad();
    }
};

}  // namespace avd
