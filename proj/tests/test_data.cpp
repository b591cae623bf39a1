#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "avd/data.hpp"

using avd::Clip;
using avd::FilterConfig;
using avd::MotionClass;
using avd::SpriteSpec;

namespace {

void hsv_to_rgb(double h, double s, double v, double& r, double& g, double& b) {
    const double c = v * s;
    const double hp = h / 60.0;
    const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
    double r1 = 0, g1 = 0, b1 = 0;
    if (hp < 1) { r1 = c; g1 = x; }
    else if (hp < 2) { r1 = x; g1 = c; }
    else if (hp < 3) { g1 = c; b1 = x; }
    else if (hp < 4) { g1 = x; b1 = c; }
    else if (hp < 5) { r1 = x; b1 = c; }
    else { r1 = c; b1 = x; }
    const double m = v - c;
    r = r1 + m; g = g1 + m; b = b1 + m;
}

// RGB frame builder: fn(y, x) -> (h, s, v), pixels written in [-1, 1]
template <typename Fn>
std::vector<float> rgb_frame(int h, int w, Fn fn) {
    std::vector<float> frame((size_t)3 * h * w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            auto [hu, sa, va] = fn(y, x);
            double r, g, b;
            hsv_to_rgb(hu, sa, va, r, g, b);
            frame[(size_t)y * w + x] = (float)(2.0 * r - 1.0);
            frame[(size_t)(h * w + y * w + x)] = (float)(2.0 * g - 1.0);
            frame[(size_t)(2 * h * w + y * w + x)] = (float)(2.0 * b - 1.0);
        }
    return frame;
}

double mean_temporal_variance(const Clip& c) {
    const size_t plane = (size_t)c.c * c.h * c.w;
    double total = 0.0;
    for (size_t i = 0; i < plane; ++i) {
        double mean = 0.0;
        for (int fi = 0; fi < c.f; ++fi) mean += c.data[(size_t)fi * plane + i];
        mean /= c.f;
        double var = 0.0;
        for (int fi = 0; fi < c.f; ++fi) {
            const double d = c.data[(size_t)fi * plane + i] - mean;
            var += d * d;
        }
        total += var / c.f;
    }
    return total / (double)plane;
}

Clip clip_from_frames(int c, int h, int w, const std::vector<std::vector<float>>& frames) {
    Clip out;
    out.f = (int)frames.size(); out.c = c; out.h = h; out.w = w;
    for (const auto& fr : frames) out.data.insert(out.data.end(), fr.begin(), fr.end());
    return out;
}

std::vector<float> toroidal_shift(const std::vector<float>& frame, int c, int h, int w,
                                  int dy, int dx) {
    std::vector<float> out(frame.size());
    for (int ci = 0; ci < c; ++ci)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                out[(size_t)(ci * h + (y + dy % h + h) % h) * w + (x + dx % w + w) % w] =
                    frame[(size_t)(ci * h + y) * w + x];
    return out;
}

}  // namespace

TEST_CASE("gen_synthetic_clip: static class variance equals the flicker amplitude squared") {
    SpriteSpec spec;
    spec.motion_class = MotionClass::StaticFlicker;
    spec.flicker_amp = 0.1;
    spec.seed = 3;
    auto [clip, cond] = avd::gen_synthetic_clip(spec);
    CHECK(cond.class_id == 3);
    CHECK(mean_temporal_variance(clip) == doctest::Approx(0.01).epsilon(1e-6));
    // whole-frame flicker can slightly confuse block matching on texture;
    // still far below the 0.2 motion gate
    CHECK(avd::mean_flow_magnitude(clip) < 0.1);
}

TEST_CASE("gen_synthetic_clip: horizontal motion is an exact toroidal shift") {
    SpriteSpec spec;
    spec.motion_class = MotionClass::Horizontal;
    spec.speed = 1.0;
    spec.seed = 11;
    auto [clip, cond] = avd::gen_synthetic_clip(spec);
    CHECK(cond.class_id == 0);
    const size_t plane = (size_t)clip.c * clip.h * clip.w;
    std::vector<float> f0(clip.data.begin(), clip.data.begin() + (ptrdiff_t)plane);
    for (int fi = 1; fi < clip.f; ++fi) {
        const auto want = toroidal_shift(f0, clip.c, clip.h, clip.w, 0, fi);
        for (size_t i = 0; i < plane; ++i)
            REQUIRE(clip.data[(size_t)fi * plane + i] == want[i]);
    }
}

TEST_CASE("gen_synthetic_clip: deterministic per seed, different across seeds") {
    SpriteSpec spec;
    spec.seed = 5;
    auto [a, ca] = avd::gen_synthetic_clip(spec);
    auto [b, cb] = avd::gen_synthetic_clip(spec);
    CHECK(a.data == b.data);
    spec.seed = 6;
    auto [c, cc] = avd::gen_synthetic_clip(spec);
    CHECK(a.data != c.data);
    CHECK(ca.class_id == cc.class_id);
    CHECK_THROWS(avd::gen_synthetic_clip([] {
        SpriteSpec s;
        s.sprite_size = 99;
        return s;
    }()));
}

TEST_CASE("gen_synthetic_clip: class-mean flow is ordered static < slow < fast over 100 seeds") {
    auto class_mean_flow = [](MotionClass mc, double speed) {
        double total = 0.0;
        for (uint64_t s = 0; s < 100; ++s) {
            SpriteSpec spec;
            spec.motion_class = mc;
            spec.speed = speed;
            spec.seed = s;
            total += avd::mean_flow_magnitude(avd::gen_synthetic_clip(spec).first);
        }
        return total / 100.0;
    };
    const double f_static = class_mean_flow(MotionClass::StaticFlicker, 0.0);
    const double f_slow = class_mean_flow(MotionClass::Horizontal, 1.0);
    const double f_fast = class_mean_flow(MotionClass::Horizontal, 2.0);
    const double f_vert = class_mean_flow(MotionClass::Vertical, 1.0);
    const double f_diag = class_mean_flow(MotionClass::Diagonal, 1.0);
    CHECK(f_static < f_slow);
    CHECK(f_slow < f_fast);
    CHECK(f_vert > f_static);
    CHECK(f_diag > f_slow);  // diagonal step has magnitude sqrt(2)
}

TEST_CASE("hue_entropy: degenerate and maximal histograms") {
    const int H = 6, W = 6;
    auto solid = rgb_frame(H, W, [](int, int) { return std::tuple{120.0, 1.0, 0.8}; });
    CHECK(avd::hue_entropy(solid.data(), 3, H, W) == doctest::Approx(0.0));

    // one pixel per hue bin, repeated to fill the frame: uniform histogram
    auto uniform = rgb_frame(H, W, [&](int y, int x) {
        const int i = (y * W + x) % 36;
        return std::tuple{10.0 * i + 5.0, 1.0, 0.9};
    });
    CHECK(avd::hue_entropy(uniform.data(), 3, H, W) == doctest::Approx(1.0).epsilon(1e-9));

    auto two_bins = rgb_frame(H, W, [&](int y, int x) {
        return std::tuple{(y * W + x) % 2 == 0 ? 5.0 : 185.0, 1.0, 0.9};
    });
    CHECK(avd::hue_entropy(two_bins.data(), 3, H, W) ==
          doctest::Approx(std::log(2.0) / std::log(36.0)).epsilon(1e-9));

    std::vector<float> gray((size_t)H * W, 0.25f);
    CHECK(avd::hue_entropy(gray.data(), 1, H, W) == doctest::Approx(0.0));
    CHECK_THROWS(avd::hue_entropy(solid.data(), 3, 0, 0));
}

TEST_CASE("laplacian_variance: constant frame and brute-force oracle") {
    std::vector<float> flat((size_t)5 * 5, 0.3f);
    CHECK(avd::laplacian_variance(flat.data(), 1, 5, 5) == doctest::Approx(0.0));

    std::vector<float> spot((size_t)5 * 5, -1.0f);
    spot[2 * 5 + 2] = 1.0f;
    // independent oracle: direct 4-neighbor convolution on the 8-bit image
    auto v8 = [&](int y, int x) { return (spot[(size_t)y * 5 + x] + 1.0) * 0.5 * 255.0; };
    std::vector<double> resp;
    for (int y = 1; y < 4; ++y)
        for (int x = 1; x < 4; ++x)
            resp.push_back(4 * v8(y, x) - v8(y - 1, x) - v8(y + 1, x) - v8(y, x - 1) -
                           v8(y, x + 1));
    double mean = 0.0;
    for (double r : resp) mean += r;
    mean /= (double)resp.size();
    double var = 0.0;
    for (double r : resp) var += (r - mean) * (r - mean);
    var /= (double)resp.size();
    CHECK(avd::laplacian_variance(spot.data(), 1, 5, 5) == doctest::Approx(var).epsilon(1e-12));

    CHECK_THROWS(avd::laplacian_variance(flat.data(), 1, 2, 2));
}

TEST_CASE("laplacian_variance: blurring a checkerboard lowers the score") {
    const int H = 8, W = 8;
    std::vector<float> board((size_t)H * W);
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) board[(size_t)y * W + x] = ((y + x) % 2 == 0) ? 1.0f : -1.0f;
    std::vector<float> blurred((size_t)H * W);
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            double s = 0.0;
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    const int yy = std::clamp(y + dy, 0, H - 1);
                    const int xx = std::clamp(x + dx, 0, W - 1);
                    s += board[(size_t)yy * W + xx];
                }
            blurred[(size_t)y * W + x] = (float)(s / 9.0);
        }
    CHECK(avd::laplacian_variance(board.data(), 1, H, W) >
          avd::laplacian_variance(blurred.data(), 1, H, W));
}

TEST_CASE("mean_flow_magnitude: still and uniformly translating content") {
    std::mt19937 rng(7);
    std::uniform_real_distribution<float> u(-1.0f, 1.0f);
    const int H = 16, W = 16;
    std::vector<float> base((size_t)H * W);
    for (auto& v : base) v = u(rng);

    Clip still = clip_from_frames(1, H, W, {base, base, base});
    CHECK(avd::mean_flow_magnitude(still) == doctest::Approx(0.0));

    std::vector<std::vector<float>> moving{base};
    for (int i = 1; i < 4; ++i)
        moving.push_back(toroidal_shift(moving.back(), 1, H, W, 0, 1));
    CHECK(avd::mean_flow_magnitude(clip_from_frames(1, H, W, moving)) ==
          doctest::Approx(1.0).epsilon(0.05));

    Clip one = clip_from_frames(1, H, W, {base});
    CHECK_THROWS(avd::mean_flow_magnitude(one));
}

TEST_CASE("temporal_consistency: identical frames score 1, sign-flipped frames score -1") {
    std::mt19937 rng(9);
    std::uniform_real_distribution<float> u(-1.0f, 1.0f);
    std::vector<float> a((size_t)4 * 4);
    for (auto& v : a) v = u(rng);
    std::vector<float> neg = a;
    for (auto& v : neg) v = -v;
    CHECK(avd::temporal_consistency(clip_from_frames(1, 4, 4, {a, a})) == doctest::Approx(1.0));
    CHECK(avd::temporal_consistency(clip_from_frames(1, 4, 4, {a, neg})) == doctest::Approx(-1.0));
}

namespace {

// colorful, sharp, moving clip: a smooth full-circle hue ramp translated
// toroidally, with optional per-frame noise to degrade temporal consistency
Clip good_clip(uint64_t seed, double noise_amp = 0.0) {
    const int H = 16, W = 16, F = 4;
    std::mt19937 rng((unsigned)(seed * 977 + 13));
    std::uniform_real_distribution<double> un(-1.0, 1.0);
    auto base = rgb_frame(H, W, [&](int y, int x) {
        // hue sweeps the full circle along each row (diagonal offset per row):
        // entropy near 1, texture sharp at 8-bit scale, high shift
        // autocorrelation
        const double frac = std::fmod((x + (double)W * y / H) / W, 1.0);
        return std::tuple{360.0 * frac, 1.0, 0.8};
    });
    std::vector<std::vector<float>> frames{base};
    for (int i = 1; i < F; ++i) frames.push_back(toroidal_shift(frames.back(), 3, H, W, 0, 1));
    if (noise_amp > 0.0)
        for (int i = 0; i < F; ++i)
            for (auto& v : frames[(size_t)i])
                v = (float)std::clamp((double)v + noise_amp * un(rng), -1.0, 1.0);
    return clip_from_frames(3, H, W, frames);
}

}  // namespace

TEST_CASE("filter_corpus: each stage rejects its crafted clip with short-circuit records") {
    std::vector<std::pair<std::string, Clip>> corpus;

    Clip lowres = good_clip(1);
    lowres.f = 4; lowres.c = 3; lowres.h = 8; lowres.w = 8;
    lowres.data.resize((size_t)lowres.numel());
    corpus.emplace_back("lowres", lowres);

    // grayscale: every pixel achromatic -> hue entropy 0
    Clip gray = good_clip(2);
    for (int fi = 0; fi < gray.f; ++fi)
        for (int y = 0; y < gray.h; ++y)
            for (int x = 0; x < gray.w; ++x) {
                const float v = gray.at(fi, 0, y, x);
                gray.at(fi, 1, y, x) = v;
                gray.at(fi, 2, y, x) = v;
            }
    corpus.emplace_back("gray", gray);

    // colorful but smooth: slow hue ramp, constant value -> low Laplacian
    {
        const int H = 16, W = 16;
        auto frame = rgb_frame(H, W, [&](int y, int x) {
            return std::tuple{360.0 * (y * W + x) / (double)(H * W), 0.1, 0.5};
        });
        corpus.emplace_back("smooth", clip_from_frames(3, H, W, {frame, frame, frame, frame}));
    }

    // colorful and sharp but static -> motion stage with measured value 0
    {
        Clip g = good_clip(3);
        const size_t plane = (size_t)g.c * g.h * g.w;
        for (int fi = 1; fi < g.f; ++fi)
            std::copy(g.data.begin(), g.data.begin() + (ptrdiff_t)plane,
                      g.data.begin() + (ptrdiff_t)(fi * plane));
        corpus.emplace_back("static", g);
    }

    Clip broken;  // zero frames: undecodable stand-in
    corpus.emplace_back("broken", broken);

    corpus.emplace_back("good", good_clip(4));

    FilterConfig cfg;
    auto [accepted, records] = avd::filter_corpus(cfg, corpus);

    auto rec = [&](const std::string& id) -> const avd::FilterRecord& {
        for (const auto& r : records)
            if (r.id == id) return r;
        throw std::runtime_error("missing record " + id);
    };
    CHECK(rec("lowres").reject_stage == "resolution");
    CHECK(std::isnan(rec("lowres").hue));
    CHECK(rec("gray").reject_stage == "monochrome");
    CHECK(std::isnan(rec("gray").blur));
    CHECK(rec("smooth").reject_stage == "blur");
    CHECK(std::isnan(rec("smooth").flow));
    CHECK(rec("static").reject_stage == "motion");
    CHECK(rec("static").flow == doctest::Approx(0.0));
    CHECK(rec("broken").reject_stage == "decode");
    CHECK(rec("good").accepted);
    CHECK(accepted == std::vector<std::string>{"good"});
    // the lone survivor has every measurement recorded
    CHECK_FALSE(std::isnan(rec("good").consistency));
    CHECK_FALSE(std::isnan(rec("good").aesthetic));
}

TEST_CASE("filter_corpus: consistency stage keeps exactly the top half of 8 survivors") {
    std::vector<std::pair<std::string, Clip>> corpus;
    for (int i = 0; i < 8; ++i)
        corpus.emplace_back("v" + std::to_string(i), good_clip((uint64_t)i, 0.05 * i));
    FilterConfig cfg;
    cfg.aesthetic_keep_frac = 1.0;  // isolate the consistency stage
    auto [accepted, records] = avd::filter_corpus(cfg, corpus);
    REQUIRE(accepted.size() == 4);
    // noisier clips have lower adjacent-frame similarity, so the cleanest
    // four survive
    CHECK(accepted == std::vector<std::string>{"v0", "v1", "v2", "v3"});
    int with_reason = 0;
    for (const auto& r : records)
        if (r.reject_stage == "consistency") ++with_reason;
    CHECK(with_reason == 4);
}

TEST_CASE("filter_corpus: both percentile stages compose (8 -> 4 -> 2)") {
    std::vector<std::pair<std::string, Clip>> corpus;
    for (int i = 0; i < 8; ++i)
        corpus.emplace_back("v" + std::to_string(i), good_clip((uint64_t)i, 0.05 * i));
    auto [accepted, records] = avd::filter_corpus(FilterConfig{}, corpus);
    CHECK(accepted.size() == 2);
}

TEST_CASE("filter_corpus: threshold decisions are order independent, threads agree") {
    std::vector<std::pair<std::string, Clip>> corpus;
    for (int i = 0; i < 6; ++i)
        corpus.emplace_back("v" + std::to_string(i), good_clip((uint64_t)i, 0.04 * i));
    FilterConfig cfg;
    auto [acc1, rec1] = avd::filter_corpus(cfg, corpus);
    std::reverse(corpus.begin(), corpus.end());
    auto [acc2, rec2] = avd::filter_corpus(cfg, corpus);
    for (const auto& a : rec1)
        for (const auto& b : rec2)
            if (a.id == b.id) {
                CHECK(a.accepted == b.accepted);
                CHECK(a.reject_stage == b.reject_stage);
            }
    std::reverse(corpus.begin(), corpus.end());
    cfg.threads = 4;
    auto [acc3, rec3] = avd::filter_corpus(cfg, corpus);
    CHECK(acc3 == acc1);
    for (size_t i = 0; i < rec1.size(); ++i) {
        CHECK(rec3[i].id == rec1[i].id);
        CHECK(rec3[i].reject_stage == rec1[i].reject_stage);
    }
}

TEST_CASE("clip files round trip and reject bad input") {
    const auto path = (std::filesystem::temp_directory_path() / "avd_clip_test.bin").string();
    auto [clip, cond] = avd::gen_synthetic_clip(SpriteSpec{});
    avd::save_clip(path, clip);
    Clip r = avd::load_clip(path);
    CHECK(r.f == clip.f);
    CHECK(r.c == clip.c);
    CHECK(r.h == clip.h);
    CHECK(r.w == clip.w);
    CHECK(r.data == clip.data);
    {
        std::ofstream os(path, std::ios::binary);
        os << "XXXX";
    }
    CHECK_THROWS(avd::load_clip(path));
    std::remove(path.c_str());
    CHECK_THROWS(avd::load_clip(path));
}

TEST_CASE("filter report CSV layout") {
    const auto path = (std::filesystem::temp_directory_path() / "avd_report_test.csv").string();
    std::vector<std::pair<std::string, Clip>> corpus;
    corpus.emplace_back("ok", good_clip(1));
    Clip broken;
    corpus.emplace_back("bad", broken);
    auto [accepted, records] = avd::filter_corpus(FilterConfig{}, corpus);
    avd::write_filter_report(path, records);
    std::ifstream is(path);
    std::string line;
    std::getline(is, line);
    CHECK(line.rfind("#", 0) == 0);
    std::getline(is, line);
    CHECK(line ==
          "id,resolution,hue_entropy,laplacian_var,flow,consistency,aesthetic,reject_stage,"
          "accepted");
    std::getline(is, line);
    CHECK(line.rfind("ok,", 0) == 0);
    CHECK(line.back() == '1');
    std::getline(is, line);
    CHECK(line == "bad,,,,,,,decode,0");
    std::remove(path.c_str());
}
