// Diagnostics: temporal variance, dynamic-degree, saturation profile,
// per-denoising-step cosine similarity, PSNR, and a sprite-count
// consistency proxy. All pure functions over Clip.
#pragma once

#include <string>
#include <vector>

#include "avd/data.hpp"

namespace avd {

// Mean per-pixel population variance along the frame axis.
double temporal_variance_metric(const Clip& clip);

// Fraction of clips whose mean block-matching flow is >= flow_threshold.
double dynamic_degree(const std::vector<Clip>& clips, double flow_threshold = 0.2);

struct SaturationProfile {
    bool valid = false;       // false sentinel for non-RGB clips
    double mean = 0.0;
    std::vector<double> hist;  // 16 bins over [0,1], counts sum to pixel count
};
SaturationProfile saturation_profile(const Clip& clip);

// L1 distance between two count-normalized saturation histograms.
double histogram_l1(const SaturationProfile& a, const SaturationProfile& b);

// Per-step mean adjacent-frame cosine similarity over a sampler trace of
// intermediate clean estimates (one clip per denoising step).
std::vector<double> cosine_profile(const std::vector<Clip>& trace);

// 10*log10(1/MSE) with values mapped from [-1,1] to [0,1]; identical clips
// cap at 100 dB.
double psnr(const Clip& a, const Clip& b);

// Connected components (toroidal 4-connectivity) of pixels with luma above
// `threshold`, per frame.
std::vector<int> sprite_counts(const Clip& clip, double threshold = 0.0);

// Fraction of frames whose component count equals the clip's modal count,
// averaged over clips. Stand-in for an instance-preservation score; higher
// means sprites neither split nor vanish over time.
double sprite_count_consistency(const std::vector<Clip>& clips, double threshold = 0.0);

struct MetricRow {
    std::string run_id;
    std::string metric;
    double value = 0.0;
    int64_t count = 0;  // samples behind the value; must be > 0
};
void write_metrics_csv(const std::string& path, const std::vector<MetricRow>& rows);

// Minimal SVG line chart (paths + polylines only).
struct SvgSeries {
    std::string label;
    std::vector<double> ys;  // x is the index
    std::string color = "#1f77b4";
};
void write_svg_chart(const std::string& path, const std::vector<SvgSeries>& series,
                     const std::string& title = "");

}  // namespace avd
