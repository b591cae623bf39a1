#include "avd/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "avd/model_io.hpp"

namespace avd {

namespace {

using D = Tensor<double>;

D stack_clips(const std::vector<ClipBatchEntry>& entries, const std::vector<size_t>& idx) {
    if (idx.empty()) throw std::runtime_error("stack_clips: empty batch");
    const Shape& s = entries[idx[0]].first.shape();
    if (s.size() != 4) throw std::runtime_error("stack_clips: clips must be [F,C,H,W]");
    std::vector<double> data;
    data.reserve(idx.size() * (size_t)entries[idx[0]].first.numel());
    for (size_t i : idx) {
        const auto& clip = entries[i].first;
        if (clip.shape() != s) throw std::runtime_error("stack_clips: inhomogeneous clip shapes");
        data.insert(data.end(), clip.data().begin(), clip.data().end());
    }
    return D::from_data({(int)idx.size(), s[0], s[1], s[2], s[3]}, std::move(data));
}

std::vector<Condition> gather_conds(const std::vector<ClipBatchEntry>& entries,
                                    const std::vector<size_t>& idx) {
    std::vector<Condition> conds;
    for (size_t i : idx) conds.push_back(entries[i].second);
    return conds;
}

std::string rng_to_string(const std::mt19937_64& rng) {
    std::ostringstream ss;
    ss << rng;
    return ss.str();
}

void rng_from_string(std::mt19937_64& rng, const std::string& s) {
    std::istringstream ss(s);
    ss >> rng;
    if (!ss) throw std::runtime_error("checkpoint: corrupt rng state");
}

void save_optimizer(Checkpoint& ck, const std::string& prefix, const AdamW<double>& opt) {
    ck.put_scalar(prefix + ".step_count", opt.step_count);
    for (size_t i = 0; i < opt.m.size(); ++i) {
        ck.put_f64(prefix + ".m." + std::to_string(i), {(int)opt.m[i].size()}, opt.m[i]);
        ck.put_f64(prefix + ".v." + std::to_string(i), {(int)opt.v[i].size()}, opt.v[i]);
    }
}

void load_optimizer(const Checkpoint& ck, const std::string& prefix, AdamW<double>& opt) {
    opt.step_count = ck.scalar(prefix + ".step_count");
    for (size_t i = 0; i < opt.m.size(); ++i) {
        const auto& m = ck.at(prefix + ".m." + std::to_string(i)).f64;
        const auto& v = ck.at(prefix + ".v." + std::to_string(i)).f64;
        if (m.size() != opt.m[i].size() || v.size() != opt.v[i].size())
            throw std::runtime_error("checkpoint: optimizer moment size mismatch");
        opt.m[i] = m;
        opt.v[i] = v;
    }
}

}  // namespace

Clip clip_from_tensor(const Tensor<double>& x) {
    const Shape& s = x.shape();
    if (s.size() != 4) throw std::runtime_error("clip_from_tensor: expected [F,C,H,W]");
    Clip c;
    c.f = s[0]; c.c = s[1]; c.h = s[2]; c.w = s[3];
    c.data.assign(x.data().begin(), x.data().end());
    return c;
}

Tensor<double> tensor_from_clip(const Clip& c) {
    std::vector<double> data(c.data.begin(), c.data.end());
    return D::from_data({c.f, c.c, c.h, c.w}, std::move(data));
}

// ---------------------------------------------------------------------------
// teacher
// ---------------------------------------------------------------------------

TeacherResult train_teacher(const TeacherConfig& cfg, const std::vector<ClipBatchEntry>& dataset) {
    if (dataset.size() < 2) throw std::runtime_error("train_teacher: need at least 2 clips");
    std::mt19937_64 rng(cfg.seed * 0x9e3779b97f4a7c15ull + 0xdeadbeef);

    // hold out the tail for validation
    const size_t n_val = std::max<size_t>(1, dataset.size() / 8);
    const size_t n_train = dataset.size() - n_val;

    NoiseSchedule sched;
    sched.shift = cfg.shift;

    TeacherResult r;
    r.model = Denoiser<double>::init(cfg.channels, cfg.base_width, cfg.n_classes, rng);
    auto params = r.model.params();
    AdamW<double> opt;
    opt.lr = cfg.lr;
    opt.init(params);

    // fixed validation draws, shared by the zero-predictor baseline and the
    // final model so the comparison is paired
    struct ValItem {
        D x_t, v;
        std::vector<Condition> conds;
        double t;
    };
    std::vector<ValItem> val;
    {
        std::mt19937_64 vrng(cfg.seed * 131 + 7);
        std::uniform_real_distribution<double> ut(0.02, 0.98);
        std::vector<size_t> idx;
        for (size_t i = n_train; i < dataset.size(); ++i) idx.push_back(i);
        for (int rep = 0; rep < 4; ++rep) {
            auto x0 = stack_clips(dataset, idx);
            auto eps = D::randn(x0.shape(), vrng);
            ValItem item;
            item.t = ut(vrng);
            item.x_t = forward_diffuse(sched, x0, item.t, eps);
            item.v = sub(eps, x0);
            item.conds = gather_conds(dataset, idx);
            val.push_back(std::move(item));
            r.baseline_loss += mean_all(mul(val.back().v, val.back().v)).item();
        }
        r.baseline_loss /= (double)val.size();
    }

    auto eval_model = [&] {
        double total = 0.0;
        for (auto& item : val) {
            auto pred = denoiser_forward(r.model, item.x_t,
                                         std::vector<double>(item.conds.size(), item.t),
                                         item.conds);
            total += denoising_loss(pred.detach(), item.v).item();
        }
        return total / (double)val.size();
    };

    std::uniform_int_distribution<size_t> pick(0, n_train - 1);
    std::uniform_real_distribution<double> ut(0.0, 1.0), ud(0.0, 1.0);
    Denoiser<double> snapshot = r.model.clone();
    for (int step = 0; step < cfg.steps; ++step) {
        try {
            std::vector<size_t> idx;
            for (int b = 0; b < cfg.batch; ++b) idx.push_back(pick(rng));
            auto x0 = stack_clips(dataset, idx);
            auto conds = gather_conds(dataset, idx);
            for (auto& c : conds)
                if (ud(rng) < cfg.null_cond_prob) c.class_id = Condition::kNull;
            const double t = ut(rng);
            auto eps = D::randn(x0.shape(), rng);
            auto x_t = forward_diffuse(sched, x0, t, eps);
            auto target = sub(eps, x0);

            r.model.zero_grads();
            auto pred = denoiser_forward(r.model, x_t, std::vector<double>(idx.size(), t), conds);
            auto loss = denoising_loss(pred, target);
            const double l = loss.item();
            if (!std::isfinite(l)) throw std::runtime_error("non-finite loss");
            loss.backward();
            opt.step(params);
            if (cfg.log_every > 0 && step % cfg.log_every == 0) r.loss_history.push_back(l);
            if (cfg.snapshot_every > 0 && (step + 1) % cfg.snapshot_every == 0)
                snapshot.copy_params_from(r.model);
        } catch (const std::exception& e) {
            r.model.copy_params_from(snapshot);  // abort with the last good params
            throw std::runtime_error(std::string("train_teacher: diverged at step ") +
                                     std::to_string(step) + " (" + e.what() + ")");
        }
    }

    r.final_loss = eval_model();
    return r;
}

// ---------------------------------------------------------------------------
// distillation
// ---------------------------------------------------------------------------

DistillState make_distill_state(const DistillConfig& cfg, const Denoiser<double>& teacher) {
    if (cfg.update_ratio < 1) throw std::runtime_error("distill: update_ratio must be >= 1");
    if (cfg.q < 1) throw std::runtime_error("distill: q must be >= 1");
    DistillState st;
    st.cfg = cfg;
    st.teacher = teacher.clone();
    st.g = teacher.clone();     // student initialized from the teacher
    st.fake = teacher.clone();  // online score model likewise
    st.sched.shift = cfg.shift;
    st.sched_t = make_student_schedule(cfg.q, st.sched);
    st.rng.seed(cfg.seed * 0x9e3779b97f4a7c15ull + 0x1234abcd);

    st.opt_g.lr = cfg.g_lr;
    st.opt_g.init(st.g.params());
    st.opt_fake.lr = cfg.fake_lr;
    st.opt_fake.init(st.fake.params());
    return st;
}

GenStepLog generator_step(DistillState& st, const std::vector<ClipBatchEntry>& real_batch) {
    const DistillConfig& cfg = st.cfg;
    if (real_batch.empty()) throw std::runtime_error("generator_step: empty batch");
    const int B = (int)real_batch.size();
    std::vector<size_t> idx(real_batch.size());
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    auto real = stack_clips(real_batch, idx);
    auto conds = gather_conds(real_batch, idx);

    st.g.zero_grads();
    GenStepLog log;

    // sample from the student (Q forwards, with gradient)
    auto z = D::randn(real.shape(), st.rng);
    auto x = student_sample(st.g, z, conds, st.sched_t, st.sched, st.rng);

    // DMD branch
    auto dmd = dmd_generator_loss(x, st.teacher, st.fake, conds, st.sched, cfg.weights, st.rng);
    log.l_kl = dmd.loss.item();

    // temporal branch on the same sample (no extra forward pass)
    auto temp = temporal_reg_loss(x, cfg.weights.temp_eps, cfg.weights.temp_clip);
    log.l_temp_raw = temp.raw;
    log.l_temp_eff = temp.effective.item();

    // adaptive regression branch (one extra student forward)
    LossWeights w_eff = cfg.weights;
    if (cfg.no_temporal) w_eff.w_temp = 0.0;
    D l_reg;
    std::vector<double> omega((size_t)B, 1.0);
    if (cfg.no_regression) {
        w_eff.w_reg = 0.0;
        l_reg = D::zeros({B});
    } else {
        std::uniform_int_distribution<int> tk(0, st.sched_t.count() - 1);
        log.t_reg = st.sched_t.steps[(size_t)tk(st.rng)];
        auto eps = D::randn(real.shape(), st.rng);
        auto y_t = forward_diffuse(st.sched, real, log.t_reg, eps);
        auto y_hat = student_denoise_once(st.g, y_t, log.t_reg, conds, st.sched);
        l_reg = regression_loss(y_hat, real);
        if (!cfg.naive_regression)
            for (int b = 0; b < B; ++b)
                omega[(size_t)b] = st.cache.weight(log.t_reg, l_reg.data()[(size_t)b],
                                                   cfg.weights.k);
    }

    auto loss = combined_generator_loss(dmd.loss, l_reg, omega, temp.effective, w_eff);
    const double l = loss.item();
    if (!std::isfinite(l))
        throw std::runtime_error("generator_step: non-finite loss at step " +
                                 std::to_string(st.step));
    loss.backward();
    log.grad_norm = st.opt_g.step(st.g.params());

    // EMA cache update with the detached batch mean, after the weights were read
    if (!cfg.no_regression) {
        double mean = 0.0;
        for (double v : l_reg.data()) mean += v;
        mean /= (double)B;
        st.cache.update(log.t_reg, mean);
        log.l_reg_mean = mean;
    }
    log.omega_mean = 0.0;
    log.omega_min = omega[0];
    log.omega_max = omega[0];
    for (double o : omega) {
        log.omega_mean += o;
        log.omega_min = std::min(log.omega_min, o);
        log.omega_max = std::max(log.omega_max, o);
    }
    log.omega_mean /= (double)B;

    st.last_sample = x.detach();
    st.last_conds = conds;
    ++st.step;
    return log;
}

double fake_score_step(DistillState& st) {
    if (!st.last_sample.defined())
        throw std::runtime_error("fake_score_step: no student batch available");
    auto x = st.last_sample;  // already detached; the fake step never sees generator gradients
    std::uniform_real_distribution<double> ut(0.0, 1.0);
    const double t = ut(st.rng);
    auto eps = D::randn(x.shape(), st.rng);
    auto x_t = forward_diffuse(st.sched, x, t, eps);
    auto target = sub(eps, x);

    st.fake.zero_grads();
    auto pred = denoiser_forward(st.fake, x_t, std::vector<double>(st.last_conds.size(), t),
                                 st.last_conds);
    auto loss = denoising_loss(pred, target);
    const double l = loss.item();
    if (!std::isfinite(l)) throw std::runtime_error("fake_score_step: non-finite loss");
    loss.backward();
    st.opt_fake.step(st.fake.params());
    ++st.fake_steps;
    return l;
}

std::string metrics_header(int q) {
    std::string h =
        "step,phase,L_KL,L_reg_mean,L_temp_raw,L_temp_eff,omega_mean,omega_min,omega_max";
    for (int i = 1; i <= q; ++i) h += ",cache_t" + std::to_string(i);
    h += ",grad_norm";
    return h;
}

namespace {

void write_metric_row(std::ofstream& os, const DistillState& st, const std::string& phase,
                      const GenStepLog& log) {
    os << st.step << ',' << phase << ',' << log.l_kl << ',' << log.l_reg_mean << ','
       << log.l_temp_raw << ',' << log.l_temp_eff << ',' << log.omega_mean << ','
       << log.omega_min << ',' << log.omega_max;
    for (double t : st.sched_t.steps) {
        os << ',';
        if (st.cache.has(t)) os << st.cache.means.at(t);
    }
    os << ',' << log.grad_norm << '\n';
}

}  // namespace

void save_distill_state(const std::string& path, DistillState& st) {
    Checkpoint ck;
    save_params(ck, "g", st.g);
    save_params(ck, "fake", st.fake);
    save_params(ck, "teacher", st.teacher);
    save_optimizer(ck, "opt_g", st.opt_g);
    save_optimizer(ck, "opt_fake", st.opt_fake);
    std::vector<double> cache_t, cache_mean;
    std::vector<int64_t> cache_count;
    for (const auto& [t, m] : st.cache.means) {
        cache_t.push_back(t);
        cache_mean.push_back(m);
        cache_count.push_back(st.cache.counts.at(t));
    }
    ck.put_f64("cache.t", {(int)cache_t.size()}, cache_t);
    ck.put_f64("cache.mean", {(int)cache_mean.size()}, cache_mean);
    ck.put_i64("cache.count", cache_count);
    ck.put_string("rng", rng_to_string(st.rng));
    ck.put_scalar("step", st.step);
    ck.put_scalar("fake_steps", st.fake_steps);
    ck.put_scalar("base_width", st.g.base_width);
    ck.put_scalar("q", st.cfg.q);
    if (st.last_sample.defined()) {
        ck.put_f64("last_sample", st.last_sample.shape(), st.last_sample.data());
        std::vector<int64_t> cc;
        for (const auto& c : st.last_conds) cc.push_back(c.class_id);
        ck.put_i64("last_conds", cc);
    }
    ck.save(path);
}

void load_distill_state(const std::string& path, DistillState& st) {
    Checkpoint ck = Checkpoint::load(path);
    if (ck.scalar("base_width") != st.g.base_width || ck.scalar("q") != st.cfg.q)
        throw std::runtime_error("load_distill_state: incompatible checkpoint " + path);
    load_params(ck, "g", st.g);
    load_params(ck, "fake", st.fake);
    load_params(ck, "teacher", st.teacher);
    load_optimizer(ck, "opt_g", st.opt_g);
    load_optimizer(ck, "opt_fake", st.opt_fake);
    st.cache.means.clear();
    st.cache.counts.clear();
    const auto& ct = ck.at("cache.t").f64;
    const auto& cm = ck.at("cache.mean").f64;
    const auto& cc = ck.at("cache.count").i64;
    for (size_t i = 0; i < ct.size(); ++i) {
        st.cache.means[ct[i]] = cm[i];
        st.cache.counts[ct[i]] = cc[i];
    }
    rng_from_string(st.rng, ck.str("rng"));
    st.step = ck.scalar("step");
    st.fake_steps = ck.scalar("fake_steps");
    if (ck.has("last_sample")) {
        const auto& e = ck.at("last_sample");
        st.last_sample = D::from_data(e.shape, e.f64);
        st.last_conds.clear();
        for (int64_t id : ck.at("last_conds").i64) st.last_conds.push_back(Condition{(int)id});
    }
}

DistillState run_distillation(const DistillConfig& cfg, const Denoiser<double>& teacher,
                              const std::vector<ClipBatchEntry>& dataset) {
    if (dataset.empty()) throw std::runtime_error("run_distillation: empty dataset");
    DistillState st = make_distill_state(cfg, teacher);

    const bool resuming = !cfg.checkpoint_path.empty() &&
                          std::filesystem::exists(cfg.checkpoint_path);
    if (resuming) load_distill_state(cfg.checkpoint_path, st);

    std::ofstream metrics;
    if (!cfg.metrics_path.empty()) {
        const bool append = resuming && std::filesystem::exists(cfg.metrics_path);
        metrics.open(cfg.metrics_path, append ? std::ios::app : std::ios::out);
        if (!metrics) throw std::runtime_error("run_distillation: cannot open " + cfg.metrics_path);
        if (!append) metrics << metrics_header(cfg.q) << '\n';
    }

    std::uniform_int_distribution<size_t> pick(0, dataset.size() - 1);
    while (st.step < cfg.generator_steps) {
        std::vector<ClipBatchEntry> batch;
        for (int b = 0; b < cfg.batch; ++b) batch.push_back(dataset[pick(st.rng)]);
        auto log = generator_step(st, batch);
        if (metrics.is_open()) write_metric_row(metrics, st, "gen", log);

        for (int r = 0; r < cfg.update_ratio; ++r) {
            GenStepLog flog;
            flog.l_kl = fake_score_step(st);  // fake denoising loss, logged in L_KL
            if (metrics.is_open()) write_metric_row(metrics, st, "fake", flog);
        }

        if (!cfg.checkpoint_path.empty() && cfg.checkpoint_every > 0 &&
            st.step % cfg.checkpoint_every == 0)
            save_distill_state(cfg.checkpoint_path, st);
        if (cfg.sample_every > 0 && !cfg.sample_dir.empty() && st.step % cfg.sample_every == 0) {
            const Shape& s = st.last_sample.shape();
            auto one = reshape(slice_axis(st.last_sample, 0, 0, 1), {s[1], s[2], s[3], s[4]});
            save_clip(cfg.sample_dir + "/sample_step" + std::to_string(st.step) + ".avdt",
                      clip_from_tensor(one));
        }
    }

    if (metrics.is_open()) metrics.flush();
    if (!cfg.checkpoint_path.empty()) save_distill_state(cfg.checkpoint_path, st);
    return st;
}

}  // namespace avd
