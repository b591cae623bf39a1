// Teacher pre-training and the alternating distillation loop: one generator
// step per `update_ratio` fake-score steps, AdamW on both, per-timestep loss
// cache, metrics CSV and resumable checkpoints.
#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "avd/data.hpp"
#include "avd/losses.hpp"
#include "avd/models.hpp"
#include "avd/optimizer.hpp"

namespace avd {

using ClipBatchEntry = std::pair<Tensor<double>, Condition>;  // clip [F,C,H,W]

struct TeacherConfig {
    int channels = 1, base_width = 8, n_classes = 4;
    int steps = 20000, batch = 8;
    double lr = 1e-4;
    double null_cond_prob = 0.1;  // classifier-free dropout
    double shift = 5.0;
    uint64_t seed = 0;
    int log_every = 100;
    int snapshot_every = 50;  // last-good copy for divergence aborts
};

struct TeacherResult {
    Denoiser<double> model;
    double baseline_loss = 0.0;  // zero predictor on held-out velocity targets
    double final_loss = 0.0;     // trained model on the same batches
    std::vector<double> loss_history;  // every log_every steps
};

// Trains a velocity-predicting denoiser from scratch. On divergence the last
// good parameter snapshot is restored into `model` before the error is
// rethrown (callers may still checkpoint it).
TeacherResult train_teacher(const TeacherConfig& cfg, const std::vector<ClipBatchEntry>& dataset);

struct DistillConfig {
    int channels = 1, base_width = 8, n_classes = 4;
    int frames = 8, height = 16, width = 16;
    int generator_steps = 4000;
    int update_ratio = 5;
    int batch = 8;
    int q = 4;
    double g_lr = 2e-6;
    double fake_lr = 2e-6;
    double shift = 5.0;
    LossWeights weights;
    bool no_temporal = false;      // ablation: drop L_temp
    bool naive_regression = false; // ablation: omega fixed at 1
    bool no_regression = false;    // ablation: drop L_reg entirely
    uint64_t seed = 0;
    std::string metrics_path;      // append-only CSV; empty = no log
    std::string checkpoint_path;   // empty = no checkpoints
    int checkpoint_every = 0;      // 0 = final only
    int sample_every = 0;          // dump a student sample every N generator steps
    std::string sample_dir;
};

struct DistillState {
    DistillConfig cfg;
    Denoiser<double> g, fake, teacher;  // teacher frozen after construction
    AdamW<double> opt_g, opt_fake;
    LossMeanCache cache;
    NoiseSchedule sched;
    TimestepSchedule sched_t;
    std::mt19937_64 rng;
    int64_t step = 0;        // completed generator steps
    int64_t fake_steps = 0;
    Tensor<double> last_sample;  // detached latest student batch, fake-step input
    std::vector<Condition> last_conds;
};

DistillState make_distill_state(const DistillConfig& cfg, const Denoiser<double>& teacher);

struct GenStepLog {
    double l_kl = 0.0;
    double l_reg_mean = 0.0;
    double l_temp_raw = 0.0;
    double l_temp_eff = 0.0;
    double omega_mean = 1.0, omega_min = 1.0, omega_max = 1.0;
    double t_reg = 0.0;      // regression timestep drawn from the student grid
    double grad_norm = 0.0;
};

// Generator branch: sample from the student, DMD + adaptive
// regression + clipped temporal loss, one AdamW step on G, cache EMA update.
// Leaves the detached sample batch in state for the following fake steps.
GenStepLog generator_step(DistillState& st, const std::vector<ClipBatchEntry>& real_batch);

// One denoising-loss step on s_fake over the latest (detached) student batch.
// Returns the loss; G's parameters are untouched.
double fake_score_step(DistillState& st);

// Interleaves generator and fake steps at the configured ratio until the
// step budget, logging and checkpointing along the way. If the checkpoint
// path already holds a compatible run, resumes from it.
DistillState run_distillation(const DistillConfig& cfg, const Denoiser<double>& teacher,
                              const std::vector<ClipBatchEntry>& dataset);

void save_distill_state(const std::string& path, DistillState& st);
void load_distill_state(const std::string& path, DistillState& st);

// CSV header for the metrics log given the student grid size.
std::string metrics_header(int q);

Clip clip_from_tensor(const Tensor<double>& x);  // [F,C,H,W]
Tensor<double> tensor_from_clip(const Clip& c);

}  // namespace avd
