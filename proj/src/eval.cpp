#include "avd/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace avd {

double temporal_variance_metric(const Clip& clip) {
    if (clip.f < 2) throw std::runtime_error("temporal_variance_metric: need F >= 2");
    const size_t plane = (size_t)clip.c * clip.h * clip.w;
    double total = 0.0;
    for (size_t i = 0; i < plane; ++i) {
        double mean = 0.0;
        for (int fi = 0; fi < clip.f; ++fi) mean += clip.data[(size_t)fi * plane + i];
        mean /= clip.f;
        double var = 0.0;
        for (int fi = 0; fi < clip.f; ++fi) {
            const double d = clip.data[(size_t)fi * plane + i] - mean;
            var += d * d;
        }
        total += var / clip.f;
    }
    return total / (double)plane;
}

double dynamic_degree(const std::vector<Clip>& clips, double flow_threshold) {
    if (clips.empty()) throw std::runtime_error("dynamic_degree: empty clip set");
    int moving = 0;
    for (const auto& c : clips)
        if (mean_flow_magnitude(c) >= flow_threshold) ++moving;
    return (double)moving / (double)clips.size();
}

SaturationProfile saturation_profile(const Clip& clip) {
    SaturationProfile p;
    if (clip.c != 3) return p;  // sentinel for grayscale toys
    p.valid = true;
    p.hist.assign(16, 0.0);
    const int64_t plane = (int64_t)clip.h * clip.w;
    int64_t n = 0;
    for (int fi = 0; fi < clip.f; ++fi) {
        const float* fr = clip.data.data() + (size_t)fi * 3 * plane;
        for (int64_t i = 0; i < plane; ++i) {
            const double r = (fr[i] + 1.0) * 0.5;
            const double g = (fr[plane + i] + 1.0) * 0.5;
            const double b = (fr[2 * plane + i] + 1.0) * 0.5;
            const double mx = std::max({r, g, b}), mn = std::min({r, g, b});
            const double s = mx > 1e-12 ? (mx - mn) / mx : 0.0;
            p.mean += s;
            int bin = (int)(s * 16.0);
            if (bin > 15) bin = 15;
            p.hist[(size_t)bin] += 1.0;
            ++n;
        }
    }
    p.mean /= (double)n;
    return p;
}

double histogram_l1(const SaturationProfile& a, const SaturationProfile& b) {
    if (!a.valid || !b.valid) throw std::runtime_error("histogram_l1: invalid profile");
    if (a.hist.size() != b.hist.size()) throw std::runtime_error("histogram_l1: bin mismatch");
    double na = 0.0, nb = 0.0;
    for (double v : a.hist) na += v;
    for (double v : b.hist) nb += v;
    double d = 0.0;
    for (size_t i = 0; i < a.hist.size(); ++i) d += std::abs(a.hist[i] / na - b.hist[i] / nb);
    return d;
}

std::vector<double> cosine_profile(const std::vector<Clip>& trace) {
    if (trace.empty()) throw std::runtime_error("cosine_profile: empty trace");
    std::vector<double> out;
    out.reserve(trace.size());
    for (const auto& clip : trace) {
        if (clip.f < 2) throw std::runtime_error("cosine_profile: need F >= 2");
        out.push_back(temporal_consistency(clip));
    }
    return out;
}

double psnr(const Clip& a, const Clip& b) {
    if (a.f != b.f || a.c != b.c || a.h != b.h || a.w != b.w)
        throw std::runtime_error("psnr: shape mismatch");
    double mse = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i) {
        const double d = ((double)a.data[i] - b.data[i]) * 0.5;  // [-1,1] -> [0,1]
        mse += d * d;
    }
    mse /= (double)a.data.size();
    if (mse <= 0.0) return 100.0;
    return std::min(100.0, 10.0 * std::log10(1.0 / mse));
}

std::vector<int> sprite_counts(const Clip& clip, double threshold) {
    const int H = clip.h, W = clip.w;
    std::vector<int> counts;
    std::vector<int> label((size_t)H * W);
    std::vector<int> stack;
    for (int fi = 0; fi < clip.f; ++fi) {
        std::fill(label.begin(), label.end(), 0);
        // luma mask
        std::vector<char> mask((size_t)H * W);
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) {
                double v;
                if (clip.c >= 3)
                    v = 0.299 * clip.at(fi, 0, y, x) + 0.587 * clip.at(fi, 1, y, x) +
                        0.114 * clip.at(fi, 2, y, x);
                else
                    v = clip.at(fi, 0, y, x);
                mask[(size_t)y * W + x] = v > threshold;
            }
        int n = 0;
        for (int start = 0; start < H * W; ++start) {
            if (!mask[(size_t)start] || label[(size_t)start]) continue;
            ++n;
            stack.assign(1, start);
            label[(size_t)start] = n;
            while (!stack.empty()) {
                const int p = stack.back();
                stack.pop_back();
                const int y = p / W, x = p % W;
                const int nbrs[4] = {((y + 1) % H) * W + x, ((y + H - 1) % H) * W + x,
                                     y * W + (x + 1) % W, y * W + (x + W - 1) % W};
                for (int q : nbrs)
                    if (mask[(size_t)q] && !label[(size_t)q]) {
                        label[(size_t)q] = n;
                        stack.push_back(q);
                    }
            }
        }
        counts.push_back(n);
    }
    return counts;
}

double sprite_count_consistency(const std::vector<Clip>& clips, double threshold) {
    if (clips.empty()) throw std::runtime_error("sprite_count_consistency: empty clip set");
    double total = 0.0;
    for (const auto& clip : clips) {
        const auto counts = sprite_counts(clip, threshold);
        std::map<int, int> freq;
        for (int c : counts) ++freq[c];
        int modal = 0;
        for (const auto& [count, n] : freq) modal = std::max(modal, n);
        total += (double)modal / (double)counts.size();
    }
    return total / (double)clips.size();
}

void write_metrics_csv(const std::string& path, const std::vector<MetricRow>& rows) {
    for (const auto& r : rows)
        if (r.count <= 0) throw std::runtime_error("write_metrics_csv: sample count must be > 0");
    std::ofstream os(path);
    if (!os) throw std::runtime_error("write_metrics_csv: cannot open " + path);
    os << "run_id,metric,value,count\n";
    for (const auto& r : rows)
        os << r.run_id << ',' << r.metric << ',' << r.value << ',' << r.count << '\n';
}

void write_svg_chart(const std::string& path, const std::vector<SvgSeries>& series,
                     const std::string& title) {
    const int W = 640, H = 360, pad = 40;
    double lo = 0.0, hi = 1.0;
    size_t n = 0;
    bool first = true;
    for (const auto& s : series)
        for (double y : s.ys) {
            if (first) { lo = hi = y; first = false; }
            lo = std::min(lo, y);
            hi = std::max(hi, y);
        }
    for (const auto& s : series) n = std::max(n, s.ys.size());
    if (hi - lo < 1e-12) hi = lo + 1.0;

    std::ofstream os(path);
    if (!os) throw std::runtime_error("write_svg_chart: cannot open " + path);
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
       << "\">\n";
    os << "<rect width=\"" << W << "\" height=\"" << H << "\" fill=\"white\"/>\n";
    if (!title.empty())
        os << "<text x=\"" << W / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">"
           << title << "</text>\n";
    os << "<path d=\"M" << pad << ' ' << pad << " L" << pad << ' ' << H - pad << " L" << W - pad
       << ' ' << H - pad << "\" stroke=\"black\" fill=\"none\"/>\n";
    int li = 0;
    for (const auto& s : series) {
        if (s.ys.empty()) continue;
        os << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"1.5\" points=\"";
        for (size_t i = 0; i < s.ys.size(); ++i) {
            const double fx = n > 1 ? (double)i / (double)(n - 1) : 0.5;
            const double fy = (s.ys[i] - lo) / (hi - lo);
            os << pad + fx * (W - 2 * pad) << ',' << (H - pad) - fy * (H - 2 * pad) << ' ';
        }
        os << "\"/>\n";
        if (!s.label.empty())
            os << "<text x=\"" << pad + 4 << "\" y=\"" << pad + 14 + 16 * li
               << "\" font-size=\"12\" fill=\"" << s.color << "\">" << s.label << "</text>\n";
        ++li;
    }
    os << "</svg>\n";
    if (!os) throw std::runtime_error("write_svg_chart: write failed for " + path);
}

}  // namespace avd
