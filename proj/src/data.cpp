#include "avd/data.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace avd {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

int wrap(int v, int n) {
    v %= n;
    return v < 0 ? v + n : v;
}

// [-1,1] -> 8-bit intensity scale
double to_8bit(double v) { return (v + 1.0) * 0.5 * 255.0; }

std::vector<double> luma_8bit(const float* frame, int c, int h, int w) {
    std::vector<double> out((size_t)h * w);
    const int64_t plane = (int64_t)h * w;
    for (int64_t i = 0; i < plane; ++i) {
        double y;
        if (c >= 3)
            y = 0.299 * frame[i] + 0.587 * frame[plane + i] + 0.114 * frame[2 * plane + i];
        else
            y = frame[i];
        out[(size_t)i] = to_8bit(y);
    }
    return out;
}

std::vector<int> uniform_frame_indices(int f, int n) {
    n = std::min(n, f);
    std::vector<int> idx;
    if (n <= 1) {
        idx.push_back(0);
        return idx;
    }
    for (int i = 0; i < n; ++i) idx.push_back((int)((int64_t)i * (f - 1) / (n - 1)));
    idx.erase(std::unique(idx.begin(), idx.end()), idx.end());
    return idx;
}

}  // namespace

std::pair<Clip, Condition> gen_synthetic_clip(const SpriteSpec& spec) {
    const int F = spec.frames, C = spec.channels, H = spec.height, W = spec.width;
    if (spec.sprite_size > H || spec.sprite_size > W)
        throw std::runtime_error("gen_synthetic_clip: sprite larger than frame");
    if (F < 1 || C < 1) throw std::runtime_error("gen_synthetic_clip: bad dims");

    std::mt19937_64 rng(spec.seed * 0x9e3779b97f4a7c15ull + 0x2545f4914f6cdd1dull);
    std::uniform_int_distribution<int> pos_y(0, H - 1), pos_x(0, W - 1);
    std::uniform_real_distribution<double> tex(0.0, 0.5);

    const int y0 = pos_y(rng), x0 = pos_x(rng);
    const int S = spec.sprite_size;
    // fixed per-clip texture so the sprite is trackable by block matching
    std::vector<double> pattern((size_t)S * S);
    for (auto& p : pattern) p = 0.3 + tex(rng);

    double dy = 0.0, dx = 0.0;
    switch (spec.motion_class) {
        case MotionClass::Horizontal: dx = spec.speed; break;
        case MotionClass::Vertical: dy = spec.speed; break;
        case MotionClass::Diagonal: dy = spec.speed; dx = spec.speed; break;
        case MotionClass::StaticFlicker: break;
    }

    Clip clip;
    clip.f = F; clip.c = C; clip.h = H; clip.w = W;
    clip.data.assign((size_t)clip.numel(), 0.0f);
    for (int fi = 0; fi < F; ++fi) {
        const double flick =
            spec.motion_class == MotionClass::StaticFlicker
                ? (fi % 2 == 0 ? spec.flicker_amp : -spec.flicker_amp)
                : 0.0;
        const int oy = y0 + (int)std::lround(dy * fi);
        const int ox = x0 + (int)std::lround(dx * fi);
        for (int ci = 0; ci < C; ++ci)
            for (int y = 0; y < H; ++y)
                for (int x = 0; x < W; ++x)
                    clip.at(fi, ci, y, x) = (float)std::clamp(spec.background + flick, -1.0, 1.0);
        for (int ci = 0; ci < C; ++ci)
            for (int sy = 0; sy < S; ++sy)
                for (int sx = 0; sx < S; ++sx) {
                    const double v = pattern[(size_t)sy * S + sx] + flick;
                    clip.at(fi, ci, wrap(oy + sy, H), wrap(ox + sx, W)) =
                        (float)std::clamp(v, -1.0, 1.0);
                }
    }
    Condition cond;
    cond.class_id = (int)spec.motion_class;
    return {clip, cond};
}

double hue_entropy(const float* frame, int c, int h, int w) {
    if (h <= 0 || w <= 0) throw std::runtime_error("hue_entropy: empty frame");
    constexpr int kBins = 36;
    std::vector<double> hist(kBins, 0.0);
    const int64_t plane = (int64_t)h * w;
    for (int64_t i = 0; i < plane; ++i) {
        double r, g, b;
        if (c >= 3) {
            r = (frame[i] + 1.0) * 0.5;
            g = (frame[plane + i] + 1.0) * 0.5;
            b = (frame[2 * plane + i] + 1.0) * 0.5;
        } else {
            r = g = b = (frame[i] + 1.0) * 0.5;
        }
        const double mx = std::max({r, g, b}), mn = std::min({r, g, b});
        const double d = mx - mn;
        double hue = 0.0;  // achromatic -> bin 0
        if (d > 1e-12) {
            if (mx == r)
                hue = 60.0 * std::fmod((g - b) / d + 6.0, 6.0);
            else if (mx == g)
                hue = 60.0 * ((b - r) / d + 2.0);
            else
                hue = 60.0 * ((r - g) / d + 4.0);
        }
        int bin = (int)(hue / 10.0);
        if (bin >= kBins) bin = kBins - 1;
        hist[bin] += 1.0;
    }
    double ent = 0.0;
    for (double n : hist)
        if (n > 0.0) {
            const double p = n / (double)plane;
            ent -= p * std::log(p);
        }
    return ent / std::log((double)kBins);
}

double laplacian_variance(const float* frame, int c, int h, int w) {
    if (h < 3 || w < 3) throw std::runtime_error("laplacian_variance: frame smaller than 3x3");
    const std::vector<double> y = luma_8bit(frame, c, h, w);
    std::vector<double> resp;
    resp.reserve((size_t)(h - 2) * (w - 2));
    for (int r = 1; r < h - 1; ++r)
        for (int col = 1; col < w - 1; ++col) {
            const double v = 4.0 * y[(size_t)r * w + col] - y[(size_t)(r - 1) * w + col] -
                             y[(size_t)(r + 1) * w + col] - y[(size_t)r * w + col - 1] -
                             y[(size_t)r * w + col + 1];
            resp.push_back(v);
        }
    const double mean = std::accumulate(resp.begin(), resp.end(), 0.0) / (double)resp.size();
    double var = 0.0;
    for (double v : resp) var += (v - mean) * (v - mean);
    return var / (double)resp.size();
}

double mean_flow_magnitude(const Clip& clip) {
    if (clip.f < 2) throw std::runtime_error("mean_flow_magnitude: need F >= 2");
    constexpr int kBlock = 4, kRadius = 2;
    const int H = clip.h, W = clip.w;
    std::vector<std::vector<double>> lumas((size_t)clip.f);
    for (int fi = 0; fi < clip.f; ++fi)
        lumas[(size_t)fi] =
            luma_8bit(clip.data.data() + (size_t)fi * clip.c * H * W, clip.c, H, W);

    // candidate displacements ordered by magnitude, so ties keep the smallest
    std::vector<std::pair<int, int>> cands;
    for (int dy = -kRadius; dy <= kRadius; ++dy)
        for (int dx = -kRadius; dx <= kRadius; ++dx) cands.emplace_back(dy, dx);
    std::stable_sort(cands.begin(), cands.end(), [](auto a, auto b) {
        return a.first * a.first + a.second * a.second < b.first * b.first + b.second * b.second;
    });

    double total = 0.0;
    int pairs = 0;
    for (int fi = 0; fi + 1 < clip.f; ++fi) {
        const auto& a = lumas[(size_t)fi];
        const auto& b = lumas[(size_t)fi + 1];
        double block_sum = 0.0;
        int blocks = 0;
        for (int by = 0; by + kBlock <= H; by += kBlock)
            for (int bx = 0; bx + kBlock <= W; bx += kBlock) {
                double best = std::numeric_limits<double>::infinity();
                double best_mag = 0.0;
                for (auto [dy, dx] : cands) {
                    double sad = 0.0;
                    for (int y = 0; y < kBlock; ++y)
                        for (int x = 0; x < kBlock; ++x)
                            sad += std::abs(a[(size_t)(by + y) * W + bx + x] -
                                            b[(size_t)wrap(by + y + dy, H) * W +
                                              wrap(bx + x + dx, W)]);
                    if (sad < best - 1e-9) {
                        best = sad;
                        best_mag = std::sqrt((double)(dy * dy + dx * dx));
                    }
                }
                block_sum += best_mag;
                ++blocks;
            }
        total += block_sum / (double)blocks;
        ++pairs;
    }
    return total / (double)pairs;
}

double temporal_consistency(const Clip& clip) {
    if (clip.f < 2) throw std::runtime_error("temporal_consistency: need F >= 2");
    const size_t n = (size_t)clip.c * clip.h * clip.w;
    double total = 0.0;
    for (int fi = 0; fi + 1 < clip.f; ++fi) {
        const float* a = clip.data.data() + (size_t)fi * n;
        const float* b = a + n;
        double dot = 0.0, na = 0.0, nb = 0.0;
        for (size_t i = 0; i < n; ++i) {
            dot += (double)a[i] * b[i];
            na += (double)a[i] * a[i];
            nb += (double)b[i] * b[i];
        }
        const double denom = std::sqrt(na) * std::sqrt(nb);
        total += denom > 0.0 ? dot / denom : 1.0;
    }
    return total / (double)(clip.f - 1);
}

double aesthetic_score(const Clip& clip, int n_frames) {
    const auto idx = uniform_frame_indices(clip.f, n_frames);
    const size_t plane = (size_t)clip.c * clip.h * clip.w;
    double total = 0.0;
    for (int fi : idx) {
        const float* fr = clip.data.data() + (size_t)fi * plane;
        const double lv = laplacian_variance(fr, clip.c, clip.h, clip.w);
        const auto y = luma_8bit(fr, clip.c, clip.h, clip.w);
        const double mean = std::accumulate(y.begin(), y.end(), 0.0) / (double)y.size();
        double var = 0.0;
        for (double v : y) var += (v - mean) * (v - mean);
        const double spread = std::sqrt(var / (double)y.size()) / 127.5;
        total += lv / (lv + 50.0) + spread;
    }
    return total / (double)idx.size();
}

std::pair<std::vector<std::string>, std::vector<FilterRecord>> filter_corpus(
    const FilterConfig& cfg, const std::vector<std::pair<std::string, Clip>>& corpus) {
    std::vector<FilterRecord> records(corpus.size());

    auto process = [&](size_t i) {
        FilterRecord& r = records[i];
        r.id = corpus[i].first;
        const Clip& clip = corpus[i].second;
        r.resolution = r.hue = r.blur = r.flow = r.consistency = r.aesthetic = kNaN;
        if (clip.f < 1 || clip.numel() <= 0 ||
            (int64_t)clip.data.size() != clip.numel()) {
            r.reject_stage = "decode";
            return;
        }
        r.resolution = (double)std::min(clip.h, clip.w);
        if (clip.w < cfg.min_width || clip.h < cfg.min_height) {
            r.reject_stage = "resolution";
            return;
        }
        const auto idx = uniform_frame_indices(clip.f, cfg.sample_frames);
        const size_t plane = (size_t)clip.c * clip.h * clip.w;
        double hue = 0.0;
        for (int fi : idx)
            hue += hue_entropy(clip.data.data() + (size_t)fi * plane, clip.c, clip.h, clip.w);
        r.hue = hue / (double)idx.size();
        if (r.hue < cfg.hue_entropy_min) {
            r.reject_stage = "monochrome";
            return;
        }
        double lap = 0.0;
        for (int fi : idx)
            lap += laplacian_variance(clip.data.data() + (size_t)fi * plane, clip.c, clip.h,
                                      clip.w);
        r.blur = lap / (double)idx.size();
        if (r.blur < cfg.laplacian_min) {
            r.reject_stage = "blur";
            return;
        }
        if (clip.f < 2) {
            r.flow = 0.0;
            r.reject_stage = "motion";
            return;
        }
        r.flow = mean_flow_magnitude(clip);
        if (r.flow < cfg.flow_min) {
            r.reject_stage = "motion";
            return;
        }
        r.consistency = temporal_consistency(clip);
        r.aesthetic = aesthetic_score(clip, cfg.aesthetic_frames);
    };

    const int threads = std::max(1, cfg.threads);
    if (threads == 1 || corpus.size() < 2) {
        for (size_t i = 0; i < corpus.size(); ++i) process(i);
    } else {
        std::vector<std::thread> pool;
        std::atomic<size_t> next{0};
        for (int t = 0; t < threads; ++t)
            pool.emplace_back([&] {
                for (size_t i = next++; i < corpus.size(); i = next++) process(i);
            });
        for (auto& th : pool) th.join();
    }

    // percentile stages over the threshold-stage survivors, in corpus order
    auto percentile_stage = [&](const char* stage, double keep_frac,
                                double FilterRecord::*score) {
        std::vector<size_t> alive;
        for (size_t i = 0; i < records.size(); ++i)
            if (records[i].reject_stage.empty()) alive.push_back(i);
        if (alive.empty()) return;
        const size_t keep = (size_t)std::ceil(keep_frac * (double)alive.size());
        std::vector<size_t> order = alive;
        std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
            return records[a].*score > records[b].*score;  // stable: ties keep corpus order
        });
        for (size_t k = keep; k < order.size(); ++k) records[order[k]].reject_stage = stage;
    };
    percentile_stage("consistency", cfg.consistency_keep_frac, &FilterRecord::consistency);
    percentile_stage("aesthetic", cfg.aesthetic_keep_frac, &FilterRecord::aesthetic);

    std::vector<std::string> accepted;
    for (auto& r : records) {
        r.accepted = r.reject_stage.empty();
        if (r.accepted) accepted.push_back(r.id);
    }
    return {accepted, records};
}

void write_filter_report(const std::string& path, const std::vector<FilterRecord>& records) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("write_filter_report: cannot open " + path);
    os << "# hue-entropy (36 bins, log-normalized) and blur (8-bit Laplacian) thresholds are "
          "toy-calibrated stand-ins\n";
    os << "id,resolution,hue_entropy,laplacian_var,flow,consistency,aesthetic,reject_stage,"
          "accepted\n";
    auto cell = [](double v) {
        if (std::isnan(v)) return std::string();
        std::ostringstream ss;
        ss << v;
        return ss.str();
    };
    for (const auto& r : records)
        os << r.id << ',' << cell(r.resolution) << ',' << cell(r.hue) << ',' << cell(r.blur)
           << ',' << cell(r.flow) << ',' << cell(r.consistency) << ',' << cell(r.aesthetic)
           << ',' << r.reject_stage << ',' << (r.accepted ? 1 : 0) << '\n';
}

namespace {
void write_i32(std::ostream& os, int32_t v) {
    unsigned char b[4] = {(unsigned char)(v & 0xff), (unsigned char)(v >> 8 & 0xff),
                          (unsigned char)(v >> 16 & 0xff), (unsigned char)(v >> 24 & 0xff)};
    os.write((const char*)b, 4);
}
int32_t read_i32(std::istream& is) {
    unsigned char b[4];
    is.read((char*)b, 4);
    return (int32_t)((uint32_t)b[0] | (uint32_t)b[1] << 8 | (uint32_t)b[2] << 16 |
                     (uint32_t)b[3] << 24);
}
}  // namespace

void save_clip(const std::string& path, const Clip& clip) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("save_clip: cannot open " + path);
    os.write("AVDT", 4);
    write_i32(os, clip.f);
    write_i32(os, clip.c);
    write_i32(os, clip.h);
    write_i32(os, clip.w);
    os.write((const char*)clip.data.data(), (std::streamsize)(clip.data.size() * 4));
    if (!os) throw std::runtime_error("save_clip: write failed for " + path);
}

Clip load_clip(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("load_clip: cannot open " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "AVDT", 4) != 0)
        throw std::runtime_error("load_clip: bad magic in " + path);
    Clip clip;
    clip.f = read_i32(is);
    clip.c = read_i32(is);
    clip.h = read_i32(is);
    clip.w = read_i32(is);
    if (clip.f < 1 || clip.c < 1 || clip.h < 1 || clip.w < 1)
        throw std::runtime_error("load_clip: bad dims in " + path);
    clip.data.resize((size_t)clip.numel());
    is.read((char*)clip.data.data(), (std::streamsize)(clip.data.size() * 4));
    if (!is) throw std::runtime_error("load_clip: truncated file " + path);
    return clip;
}

}  // namespace avd
