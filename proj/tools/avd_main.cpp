// avd: single executable driving every pipeline stage. Subcommands mirror
// the pipeline: gen-data -> filter -> train-teacher -> distill ->
// train-interp -> sample -> eval -> plot. Flags mirror config keys
// one-to-one (flag wins); AVD_-prefixed environment variables override
// defaults where noted in --help.
#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <random>

#include "avd/checkpoint.hpp"
#include "avd/config.hpp"
#include "avd/data.hpp"
#include "avd/eval.hpp"
#include "avd/interp.hpp"
#include "avd/interp_train.hpp"
#include "avd/model_io.hpp"
#include "avd/trainer.hpp"

namespace fs = std::filesystem;
using avd::ClipBatchEntry;
using avd::Condition;
using D = avd::Tensor<double>;

namespace {

constexpr int kExitOk = 0, kExitConfig = 2, kExitRuntime = 3, kExitDiverged = 4;

struct Common {
    uint64_t seed = 0;
    std::string out = ".";
    std::string config_path;
    int threads = 1;
    bool dry_run = false;
};

void add_common(CLI::App* cmd, Common& c) {
    cmd->add_option("--seed", c.seed, "rng seed (env AVD_SEED)")->envname("AVD_SEED");
    cmd->add_option("--out", c.out, "output directory (env AVD_OUT)")->envname("AVD_OUT");
    cmd->add_option("--config", c.config_path, "key = value config file; flags override");
    cmd->add_option("--threads", c.threads, "worker threads for data/eval (env AVD_THREADS)")
        ->envname("AVD_THREADS");
    cmd->add_flag("--dry-run", c.dry_run, "validate configuration and exit without compute");
}

avd::Config load_config(const Common& c) {
    avd::Config cfg;
    if (!c.config_path.empty()) cfg = avd::Config::parse_file(c.config_path);
    cfg.validate();
    return cfg;
}

// flag value wins over config key; config wins over the built-in default
template <typename T>
T resolve(const CLI::App* cmd, const std::string& flag, T flag_value, const avd::Config& cfg,
          const std::string& key, T def) {
    if (cmd->count(flag) > 0) return flag_value;
    if constexpr (std::is_same_v<T, std::string>)
        return cfg.get_string(key, def);
    else if constexpr (std::is_floating_point_v<T>)
        return (T)cfg.get_double(key, (double)def);
    else
        return (T)cfg.get_int(key, (int64_t)def);
}

std::string clip_name(int class_id, int index) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "clip_c%d_%04d.avdt", class_id, index);
    return buf;
}

int class_from_name(const std::string& name) {
    const auto c = name.find("_c");
    if (c == std::string::npos) return Condition::kNull;
    try {
        return std::stoi(name.substr(c + 2));
    } catch (...) {
        return Condition::kNull;
    }
}

std::vector<std::pair<std::string, avd::Clip>> load_clip_dir(const std::string& dir) {
    std::vector<std::string> names;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.path().extension() == ".avdt") names.push_back(e.path().string());
    std::sort(names.begin(), names.end());
    std::vector<std::pair<std::string, avd::Clip>> out;
    for (const auto& n : names) {
        avd::Clip clip;
        try {
            clip = avd::load_clip(n);
        } catch (const std::exception&) {
            // undecodable: keep the zero-frame sentinel so filtering records it
        }
        out.emplace_back(fs::path(n).filename().string(), std::move(clip));
    }
    return out;
}

std::vector<ClipBatchEntry> load_dataset(const std::string& dir) {
    std::vector<ClipBatchEntry> out;
    for (auto& [name, clip] : load_clip_dir(dir)) {
        if (clip.f == 0) throw std::runtime_error("undecodable clip " + name);
        out.emplace_back(avd::tensor_from_clip(clip), Condition{class_from_name(name)});
    }
    if (out.empty()) throw std::runtime_error("no .avdt clips in " + dir);
    return out;
}

avd::Denoiser<double> load_denoiser(const std::string& path, const std::string& prefix) {
    auto ck = avd::Checkpoint::load(path);
    std::mt19937_64 rng(0);
    auto m = avd::Denoiser<double>::init((int)ck.scalar(prefix + ".channels"),
                                         (int)ck.scalar(prefix + ".base_width"),
                                         (int)ck.scalar(prefix + ".n_classes"), rng);
    avd::load_params(ck, prefix, m);
    return m;
}

void save_denoiser(const std::string& path, const std::string& prefix,
                   avd::Denoiser<double>& m) {
    avd::Checkpoint ck;
    avd::save_params(ck, prefix, m);
    ck.put_scalar(prefix + ".channels", m.channels);
    ck.put_scalar(prefix + ".base_width", m.base_width);
    ck.put_scalar(prefix + ".n_classes", m.n_classes);
    ck.save(path);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{
        "avd: toy video-diffusion distillation pipeline.\n"
        "Environment overrides: AVD_SEED, AVD_OUT, AVD_THREADS."};
    app.require_subcommand(1);

    // ---- gen-data ----
    auto* gen = app.add_subcommand("gen-data", "generate synthetic sprite clips");
    Common gen_c;
    add_common(gen, gen_c);
    int gen_n = 64, gen_frames = 8, gen_size = 16, gen_channels = 1;
    gen->add_option("--n", gen_n, "number of clips");
    gen->add_option("--frames", gen_frames, "frames per clip");
    gen->add_option("--size", gen_size, "frame height/width");
    gen->add_option("--channels", gen_channels, "channels");

    // ---- filter ----
    auto* fil = app.add_subcommand("filter", "run the corpus filtering pipeline");
    Common fil_c;
    add_common(fil, fil_c);
    std::string fil_in, fil_report = "report.csv";
    double fil_hue = 0.60, fil_blur = 20.0, fil_flow = 0.2;
    fil->add_option("--in", fil_in, "directory of .avdt clips")->required();
    fil->add_option("--report", fil_report, "FilterReport CSV filename (under --out)");
    fil->add_option("--hue-min", fil_hue, "hue-entropy threshold");
    fil->add_option("--blur-min", fil_blur, "Laplacian-variance threshold");
    fil->add_option("--flow-min", fil_flow, "mean-flow threshold");

    // ---- train-teacher ----
    auto* tt = app.add_subcommand("train-teacher", "pre-train the teacher denoiser");
    Common tt_c;
    add_common(tt, tt_c);
    std::string tt_data;
    int tt_steps = 20000, tt_width = 8, tt_batch = 8;
    double tt_lr = 1e-4;
    tt->add_option("--data", tt_data, "training clip directory")->required();
    tt->add_option("--steps", tt_steps, "optimizer steps");
    tt->add_option("--width", tt_width, "base channel width");
    tt->add_option("--batch", tt_batch, "batch size");
    tt->add_option("--lr", tt_lr, "learning rate");

    // ---- distill ----
    auto* di = app.add_subcommand("distill", "distill the teacher into a few-step student");
    Common di_c;
    add_common(di, di_c);
    std::string di_teacher, di_data;
    int di_steps = 4000, di_batch = 8, di_q = 4, di_ratio = 5, di_ckpt_every = 0;
    double di_glr = 2e-6, di_flr = 2e-6;
    bool di_no_temporal = false, di_naive_reg = false, di_no_reg = false;
    di->add_option("--teacher", di_teacher, "teacher checkpoint")->required();
    di->add_option("--data", di_data, "training clip directory")->required();
    di->add_option("--steps", di_steps, "generator steps");
    di->add_option("--batch", di_batch, "batch size");
    di->add_option("--q", di_q, "student sampling steps");
    di->add_option("--update-ratio", di_ratio, "fake steps per generator step");
    di->add_option("--g-lr", di_glr, "generator learning rate");
    di->add_option("--fake-lr", di_flr, "fake-score learning rate");
    di->add_option("--checkpoint-every", di_ckpt_every, "checkpoint cadence (0 = final only)");
    double di_wreg = 2.0, di_wtemp = 0.05;
    di->add_option("--w-reg", di_wreg, "regression loss weight");
    di->add_option("--w-temp", di_wtemp, "temporal loss weight");
    di->add_flag("--no-temporal", di_no_temporal, "ablation: drop the temporal loss");
    di->add_flag("--naive-regression", di_naive_reg, "ablation: fixed regression weights");
    di->add_flag("--no-regression", di_no_reg, "ablation: drop the regression loss");

    // ---- train-interp ----
    auto* ti = app.add_subcommand("train-interp", "train the frame interpolator");
    Common ti_c;
    add_common(ti, ti_c);
    std::string ti_data;
    int ti_steps = 10000, ti_width = 8, ti_batch = 32;
    double ti_lr = 1e-4;
    ti->add_option("--data", ti_data, "odd-frame-count clip directory")->required();
    ti->add_option("--steps", ti_steps, "optimizer steps");
    ti->add_option("--width", ti_width, "base channel width");
    ti->add_option("--batch", ti_batch, "batch size");
    ti->add_option("--lr", ti_lr, "learning rate");

    // ---- sample ----
    auto* sa = app.add_subcommand("sample", "sample clips from a distilled student");
    Common sa_c;
    add_common(sa, sa_c);
    std::string sa_ckpt, sa_interp;
    int sa_n = 4, sa_class = 0, sa_frames = 8, sa_size = 16, sa_q = 4, sa_split = 2;
    bool sa_half = false;
    sa->add_option("--ckpt", sa_ckpt, "distillation checkpoint")->required();
    sa->add_option("--n", sa_n, "number of clips");
    sa->add_option("--class", sa_class, "condition class id");
    sa->add_option("--frames", sa_frames, "frames per clip (odd for --half-rate)");
    sa->add_option("--size", sa_size, "frame height/width");
    sa->add_option("--q", sa_q, "sampling steps");
    sa->add_flag("--half-rate", sa_half, "half-frame-rate sampling via the interpolator");
    sa->add_option("--split", sa_split, "half-rate steps before expansion");
    sa->add_option("--interp", sa_interp, "interpolator checkpoint (required for --half-rate)");

    // ---- eval ----
    auto* ev = app.add_subcommand("eval", "compute metrics over a clip directory");
    Common ev_c;
    add_common(ev, ev_c);
    std::string ev_in, ev_csv = "metrics.csv", ev_run = "run";
    ev->add_option("--in", ev_in, "clip directory")->required();
    ev->add_option("--csv", ev_csv, "metrics CSV filename (under --out)");
    ev->add_option("--run-id", ev_run, "run id column value");

    // ---- plot ----
    auto* pl = app.add_subcommand("plot", "render a metrics CSV column as an SVG chart");
    Common pl_c;
    add_common(pl, pl_c);
    std::string pl_metrics, pl_column = "L_KL", pl_svg = "chart.svg", pl_phase = "gen";
    pl->add_option("--metrics", pl_metrics, "metrics CSV from distill")->required();
    pl->add_option("--column", pl_column, "column to plot");
    pl->add_option("--phase", pl_phase, "phase rows to select");
    pl->add_option("--svg", pl_svg, "output SVG filename (under --out)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        std::cerr << "error: config: " << e.what() << "\n";
        return kExitConfig;
    }

    auto run = [&](const Common& c, auto body) -> int {
        try {
            avd::Config cfg = load_config(c);
            fs::create_directories(c.out);
            if (c.dry_run) {
                std::cout << "dry-run ok\n" << cfg.to_string();
                return kExitOk;
            }
            body(cfg);
            return kExitOk;
        } catch (const std::runtime_error& e) {
            const std::string msg = e.what();
            if (msg.find("diverged") != std::string::npos ||
                msg.find("non-finite") != std::string::npos) {
                std::cerr << "error: divergence: " << msg << "\n";
                return kExitDiverged;
            }
            if (msg.find("config") != std::string::npos) {
                const bool tagged = msg.rfind("config: ", 0) == 0;
                std::cerr << "error: config: " << (tagged ? msg.substr(8) : msg) << "\n";
                return kExitConfig;
            }
            std::cerr << "error: runtime: " << msg << "\n";
            return kExitRuntime;
        } catch (const std::exception& e) {
            std::cerr << "error: runtime: " << e.what() << "\n";
            return kExitRuntime;
        }
    };

    if (*gen)
        return run(gen_c, [&](const avd::Config& cfg) {
            const int n = resolve(gen, "--n", gen_n, cfg, "data.n", 64);
            const int frames = resolve(gen, "--frames", gen_frames, cfg, "data.frames", 8);
            const int size = resolve(gen, "--size", gen_size, cfg, "data.height", 16);
            for (int i = 0; i < n; ++i) {
                avd::SpriteSpec spec;
                spec.motion_class = (avd::MotionClass)(i % avd::kNumMotionClasses);
                spec.frames = frames;
                spec.height = spec.width = size;
                spec.channels = resolve(gen, "--channels", gen_channels, cfg, "data.channels", 1);
                spec.seed = gen_c.seed * 100003ull + (uint64_t)i;
                auto [clip, cond] = avd::gen_synthetic_clip(spec);
                avd::save_clip((fs::path(gen_c.out) / clip_name(cond.class_id, i)).string(),
                               clip);
            }
            std::cout << "wrote " << n << " clips to " << gen_c.out << "\n";
        });

    if (*fil)
        return run(fil_c, [&](const avd::Config& cfg) {
            avd::FilterConfig fc;
            fc.hue_entropy_min = resolve(fil, "--hue-min", fil_hue, cfg, "filter.hue_min", 0.60);
            fc.laplacian_min = resolve(fil, "--blur-min", fil_blur, cfg, "filter.blur_min", 20.0);
            fc.flow_min = resolve(fil, "--flow-min", fil_flow, cfg, "filter.flow_min", 0.2);
            fc.threads = fil_c.threads;
            auto corpus = load_clip_dir(fil_in);
            auto [accepted, records] = avd::filter_corpus(fc, corpus);
            avd::write_filter_report((fs::path(fil_c.out) / fil_report).string(), records);
            std::ofstream acc(fs::path(fil_c.out) / "accepted.txt");
            for (const auto& id : accepted) acc << id << "\n";
            std::cout << "accepted " << accepted.size() << "/" << corpus.size() << " clips\n";
        });

    if (*tt)
        return run(tt_c, [&](const avd::Config& cfg) {
            avd::TeacherConfig tc;
            tc.steps = resolve(tt, "--steps", tt_steps, cfg, "teacher.steps", 20000);
            tc.base_width = resolve(tt, "--width", tt_width, cfg, "model.base_width", 8);
            tc.batch = resolve(tt, "--batch", tt_batch, cfg, "teacher.batch", 8);
            tc.lr = resolve(tt, "--lr", tt_lr, cfg, "teacher.lr", 1e-4);
            tc.seed = tt_c.seed;
            auto data = load_dataset(tt_data);
            tc.channels = data[0].first.shape()[1];
            auto r = avd::train_teacher(tc, data);
            save_denoiser((fs::path(tt_c.out) / "teacher.ckpt").string(), "teacher", r.model);
            std::cout << "teacher baseline " << r.baseline_loss << " final " << r.final_loss
                      << "\n";
        });

    if (*di)
        return run(di_c, [&](const avd::Config& cfg) {
            avd::DistillConfig dc;
            dc.generator_steps = resolve(di, "--steps", di_steps, cfg, "distill.steps", 4000);
            dc.batch = resolve(di, "--batch", di_batch, cfg, "distill.batch", 8);
            dc.q = resolve(di, "--q", di_q, cfg, "sched.q", 4);
            dc.update_ratio =
                resolve(di, "--update-ratio", di_ratio, cfg, "distill.update_ratio", 5);
            dc.g_lr = resolve(di, "--g-lr", di_glr, cfg, "opt.lr", 2e-6);
            dc.fake_lr = resolve(di, "--fake-lr", di_flr, cfg, "opt.fake_lr", 2e-6);
            dc.weights.w_reg = resolve(di, "--w-reg", di_wreg, cfg, "losses.w_reg", 2.0);
            dc.weights.w_temp = resolve(di, "--w-temp", di_wtemp, cfg, "losses.w_temp", 0.05);
            dc.no_temporal = di_no_temporal;
            dc.naive_regression = di_naive_reg;
            dc.no_regression = di_no_reg;
            dc.seed = di_c.seed;
            dc.checkpoint_every = di_ckpt_every;
            dc.metrics_path = (fs::path(di_c.out) / "metrics.csv").string();
            dc.checkpoint_path = (fs::path(di_c.out) / "distill.ckpt").string();
            auto teacher = load_denoiser(di_teacher, "teacher");
            dc.base_width = teacher.base_width;
            dc.channels = teacher.channels;
            dc.n_classes = teacher.n_classes;
            auto data = load_dataset(di_data);
            auto st = avd::run_distillation(dc, teacher, data);
            save_denoiser((fs::path(di_c.out) / "student.ckpt").string(), "student", st.g);
            std::cout << "distilled " << st.step << " generator steps (" << st.fake_steps
                      << " fake steps)\n";
        });

    if (*ti)
        return run(ti_c, [&](const avd::Config& cfg) {
            avd::InterpTrainConfig ic;
            ic.steps = resolve(ti, "--steps", ti_steps, cfg, "interp.steps", 10000);
            ic.base_width = resolve(ti, "--width", ti_width, cfg, "interp.base_width", 8);
            ic.batch = resolve(ti, "--batch", ti_batch, cfg, "interp.batch", 32);
            ic.lr = resolve(ti, "--lr", ti_lr, cfg, "interp.lr", 1e-4);
            ic.seed = ti_c.seed;
            auto data = load_dataset(ti_data);
            ic.channels = data[0].first.shape()[1];
            std::vector<D> clips;
            for (auto& [clip, cond] : data) clips.push_back(clip);
            const size_t n_held = std::max<size_t>(1, clips.size() / 8);
            std::vector<D> held(clips.end() - (ptrdiff_t)n_held, clips.end());
            clips.resize(clips.size() - n_held);
            auto r = avd::train_interpolator(ic, clips, held);
            avd::Checkpoint ck;
            avd::save_params(ck, "interp", r.model);
            ck.put_scalar("interp.channels", r.model.channels);
            ck.put_scalar("interp.base_width", r.model.base_width);
            ck.save((fs::path(ti_c.out) / "interp.ckpt").string());
            std::cout << "interp baseline mse " << r.baseline_mse << " trained "
                      << r.trained_mse << "\n";
        });

    if (*sa)
        return run(sa_c, [&](const avd::Config&) {
            auto g = load_denoiser(sa_ckpt, "student");
            avd::NoiseSchedule sched;
            auto sched_t = avd::make_student_schedule(sa_q, sched);
            std::mt19937_64 rng(sa_c.seed * 977 + 3);
            avd::Interp<double> interp;
            if (sa_half) {
                if (sa_interp.empty())
                    throw std::runtime_error("config: --half-rate requires --interp");
                auto ck = avd::Checkpoint::load(sa_interp);
                std::mt19937_64 irng(0);
                interp = avd::Interp<double>::init((int)ck.scalar("interp.channels"),
                                                   (int)ck.scalar("interp.base_width"), irng);
                avd::load_params(ck, "interp", interp);
            }
            for (int i = 0; i < sa_n; ++i) {
                Condition cond{sa_class};
                D clip;
                if (sa_half) {
                    auto noise = D::randn({sa_frames, g.channels, sa_size, sa_size}, rng);
                    clip = avd::half_rate_sample(g, interp, noise, cond, sched_t, sched, rng,
                                                 sa_split)
                               .sample;
                } else {
                    auto noise = D::randn({1, sa_frames, g.channels, sa_size, sa_size}, rng);
                    auto x = avd::student_sample(g, noise, {cond}, sched_t, sched, rng);
                    clip = reshape(x.detach(), {sa_frames, g.channels, sa_size, sa_size});
                }
                avd::save_clip((fs::path(sa_c.out) / clip_name(sa_class, i)).string(),
                               avd::clip_from_tensor(clip));
            }
            std::cout << "wrote " << sa_n << " samples to " << sa_c.out << "\n";
        });

    if (*ev)
        return run(ev_c, [&](const avd::Config&) {
            auto corpus = load_clip_dir(ev_in);
            std::vector<avd::Clip> clips;
            for (auto& [name, clip] : corpus)
                if (clip.f >= 2) clips.push_back(clip);
            if (clips.empty()) throw std::runtime_error("no usable clips in " + ev_in);
            std::vector<avd::MetricRow> rows;
            const int64_t n = (int64_t)clips.size();
            rows.push_back({ev_run, "dynamic_degree", avd::dynamic_degree(clips), n});
            rows.push_back(
                {ev_run, "sprite_count_consistency", avd::sprite_count_consistency(clips), n});
            double tv = 0.0;
            for (const auto& c : clips) tv += avd::temporal_variance_metric(c);
            rows.push_back({ev_run, "temporal_variance_mean", tv / (double)n, n});
            avd::write_metrics_csv((fs::path(ev_c.out) / ev_csv).string(), rows);
            std::cout << "wrote metrics for " << n << " clips\n";
        });

    if (*pl)
        return run(pl_c, [&](const avd::Config&) {
            std::ifstream is(pl_metrics);
            if (!is) throw std::runtime_error("cannot open " + pl_metrics);
            std::string line;
            std::getline(is, line);
            std::vector<std::string> cols;
            std::stringstream hs(line);
            std::string cell;
            while (std::getline(hs, cell, ',')) cols.push_back(cell);
            const auto it = std::find(cols.begin(), cols.end(), pl_column);
            if (it == cols.end())
                throw std::runtime_error("config: unknown column " + pl_column);
            const size_t ci = (size_t)(it - cols.begin());
            avd::SvgSeries series;
            series.label = pl_column;
            while (std::getline(is, line)) {
                std::vector<std::string> row;
                std::stringstream rs(line);
                while (std::getline(rs, cell, ',')) row.push_back(cell);
                if (row.size() <= ci || row.size() < 2 || row[1] != pl_phase) continue;
                if (!row[ci].empty()) series.ys.push_back(std::stod(row[ci]));
            }
            if (series.ys.empty()) throw std::runtime_error("no data rows for " + pl_column);
            avd::write_svg_chart((fs::path(pl_c.out) / pl_svg).string(), {series},
                                 pl_column + " (" + pl_phase + ")");
            std::cout << "wrote " << (fs::path(pl_c.out) / pl_svg).string() << "\n";
        });

    return kExitConfig;
}
