#include "avd/interp_train.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include "avd/optimizer.hpp"

namespace avd {

namespace {

using D = Tensor<double>;

struct Triple {
    int clip, pair;  // pair i: frames (2i, 2i+1, 2i+2)
};

int pairs_in(const D& clip) {
    const Shape& s = clip.shape();
    if (s.size() != 4) throw std::runtime_error("train_interpolator: clip must be [F,C,H,W]");
    if (s[0] < 3 || s[0] % 2 == 0)
        throw std::runtime_error("train_interpolator: clips need odd F >= 3");
    return (s[0] - 1) / 2;
}

// stack selected frames into [N,C,H,W]
D gather_frames(const std::vector<D>& clips, const std::vector<Triple>& triples, int offset) {
    const Shape& s = clips[0].shape();
    const int C = s[1], H = s[2], W = s[3];
    const int64_t fs = (int64_t)C * H * W;
    std::vector<double> data;
    data.reserve((size_t)triples.size() * fs);
    for (const auto& t : triples) {
        const auto& src = clips[(size_t)t.clip].data();
        const int64_t base = (int64_t)(2 * t.pair + offset) * fs;
        data.insert(data.end(), src.begin() + base, src.begin() + base + fs);
    }
    return D::from_data({(int)triples.size(), C, H, W}, std::move(data));
}

}  // namespace

double heldout_interp_mse(Interp<double>& model, const std::vector<D>& clips,
                          bool average_baseline) {
    if (clips.empty()) throw std::runtime_error("heldout_interp_mse: empty clip set");
    std::vector<Triple> triples;
    for (size_t c = 0; c < clips.size(); ++c) {
        const int n = pairs_in(clips[c]);
        for (int p = 0; p < n; ++p) triples.push_back({(int)c, p});
    }
    auto a = gather_frames(clips, triples, 0);
    auto b = gather_frames(clips, triples, 2);
    auto target = gather_frames(clips, triples, 1);
    auto pred = average_baseline ? scalar_mul(add(a, b), 0.5) : interp_forward(model, a, b);
    auto err = sub(pred.detach(), target);
    return mean_all(mul(err, err)).item();
}

InterpTrainResult train_interpolator(const InterpTrainConfig& cfg,
                                     const std::vector<D>& train_clips,
                                     const std::vector<D>& heldout_clips) {
    if (train_clips.empty()) throw std::runtime_error("train_interpolator: empty training set");
    std::vector<Triple> all;
    for (size_t c = 0; c < train_clips.size(); ++c) {
        const int n = pairs_in(train_clips[c]);
        for (int p = 0; p < n; ++p) all.push_back({(int)c, p});
    }

    std::mt19937_64 rng(cfg.seed * 0x9e3779b97f4a7c15ull + 17);
    InterpTrainResult r;
    r.model = Interp<double>::init(cfg.channels, cfg.base_width, rng);
    r.baseline_mse = heldout_interp_mse(r.model, heldout_clips, /*average_baseline=*/true);

    auto params = r.model.params();
    AdamW<double> opt;
    opt.lr = cfg.lr;
    opt.weight_decay = 0.0;
    opt.max_grad_norm = cfg.max_grad_norm;
    opt.init(params);

    std::uniform_int_distribution<size_t> pick(0, all.size() - 1);
    for (int step = 0; step < cfg.steps; ++step) {
        std::vector<Triple> batch;
        for (int i = 0; i < cfg.batch; ++i) batch.push_back(all[pick(rng)]);
        auto a = gather_frames(train_clips, batch, 0);
        auto b = gather_frames(train_clips, batch, 2);
        auto target = gather_frames(train_clips, batch, 1);

        r.model.zero_grads();
        auto pred = interp_forward(r.model, a, b);
        auto err = sub(pred, target);
        auto loss = mean_all(mul(err, err));
        const double l = loss.item();
        if (!std::isfinite(l)) throw std::runtime_error("train_interpolator: diverged");
        loss.backward();
        opt.step(params);
        if (cfg.log_every > 0 && step % cfg.log_every == 0) r.loss_history.push_back(l);
    }

    r.trained_mse = heldout_interp_mse(r.model, heldout_clips, /*average_baseline=*/false);
    return r;
}

}  // namespace avd
