// Interpolator training: regress predicted mid frames against the true mid
// frames of odd-length clips, so the frame-average baseline is the literal
// starting point.
#pragma once

#include <cstdint>

#include "avd/interp.hpp"

namespace avd {

struct InterpTrainConfig {
    int channels = 1;
    int base_width = 8;
    double lr = 1e-4;
    int steps = 10000;
    int batch = 32;  // frame triples per step
    double max_grad_norm = 10.0;
    uint64_t seed = 0;
    int log_every = 50;
};

struct InterpTrainResult {
    Interp<double> model;
    double baseline_mse = 0.0;  // held-out MSE of the (a+b)/2 predictor
    double trained_mse = 0.0;   // held-out MSE of the trained model
    std::vector<double> loss_history;
};

// Clips are [F,C,H,W] with odd F >= 3. Minimizes the interpolated-position
// part of MSE(expand(downsample(clip)), clip); the copied even positions
// contribute zero by construction. Throws on divergence.
InterpTrainResult train_interpolator(const InterpTrainConfig& cfg,
                                     const std::vector<Tensor<double>>& train_clips,
                                     const std::vector<Tensor<double>>& heldout_clips);

// Held-out interpolated-frame MSE for an arbitrary predictor of the form
// (a, b) -> mid. Used for both the trained model and the average baseline.
double heldout_interp_mse(Interp<double>& model, const std::vector<Tensor<double>>& clips,
                          bool average_baseline = false);

}  // namespace avd
