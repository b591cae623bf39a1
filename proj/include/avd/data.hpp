// Synthetic sprite clips with controllable motion, plus the corpus
// filtering pipeline (resolution, monochrome, blur, motion, then the two
// percentile stages). Clips are plain float buffers in [-1, 1].
#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "avd/models.hpp"

namespace avd {

struct Clip {
    int f = 0, c = 0, h = 0, w = 0;
    std::vector<float> data;  // [F,C,H,W]

    int64_t numel() const { return (int64_t)f * c * h * w; }
    float& at(int fi, int ci, int y, int x) {
        return data[((size_t)(fi * c + ci) * h + y) * w + x];
    }
    float at(int fi, int ci, int y, int x) const {
        return data[((size_t)(fi * c + ci) * h + y) * w + x];
    }
};

enum class MotionClass { Horizontal = 0, Vertical = 1, Diagonal = 2, StaticFlicker = 3 };
constexpr int kNumMotionClasses = 4;

struct SpriteSpec {
    MotionClass motion_class = MotionClass::Horizontal;
    double speed = 1.0;          // pixels per frame (ignored for StaticFlicker)
    int sprite_size = 6;
    double background = -0.8;    // background intensity
    double flicker_amp = 0.1;    // StaticFlicker: whole-frame alternating offset
    uint64_t seed = 0;
    int frames = 8, channels = 1, height = 16, width = 16;
};

// Deterministic given the seed. Sprite positions wrap toroidally so the
// apparent velocity is constant across the clip.
std::pair<Clip, Condition> gen_synthetic_clip(const SpriteSpec& spec);

// Shannon entropy of the 36-bin hue histogram over one frame, normalized by
// log(36) into [0,1]. Achromatic pixels land in bin 0, so grayscale input
// scores 0. `frame` points at C*H*W floats in [-1,1].
double hue_entropy(const float* frame, int c, int h, int w);

// Variance of the 4-neighbor Laplacian of the luma image on the 8-bit
// intensity scale, evaluated over interior pixels.
double laplacian_variance(const float* frame, int c, int h, int w);

// Coarse block-matching flow (block 4, search radius 2, toroidal indexing):
// mean over adjacent frame pairs of the mean per-block displacement
// magnitude. Ties prefer the smaller displacement, so identical frames
// score exactly 0.
double mean_flow_magnitude(const Clip& clip);

// Adjacent-frame cosine similarity of flattened frames, averaged over pairs.
double temporal_consistency(const Clip& clip);

// Sharpness (saturating Laplacian variance) plus intensity spread, averaged
// over `n_frames` uniformly sampled frames.
double aesthetic_score(const Clip& clip, int n_frames = 8);

struct FilterConfig {
    int min_width = 16;
    int min_height = 16;
    double hue_entropy_min = 0.60;
    double laplacian_min = 20.0;
    double flow_min = 0.2;
    double consistency_keep_frac = 0.5;
    double aesthetic_keep_frac = 0.5;
    int sample_frames = 4;      // frames sampled for the per-frame gates
    int aesthetic_frames = 8;
    int threads = 1;
};

struct FilterRecord {
    std::string id;
    // Measured values in stage order; NaN when the stage was never reached.
    double resolution = 0.0;    // min(height, width)
    double hue = 0.0;
    double blur = 0.0;
    double flow = 0.0;
    double consistency = 0.0;
    double aesthetic = 0.0;
    std::string reject_stage;   // empty when accepted
    bool accepted = false;
};

// Stage-ordered short-circuit filter. Threshold stages depend only on the
// individual clip; the two percentile stages rank the survivors and keep the
// top fraction, ties broken by position in the input corpus. A clip with
// zero frames is recorded as rejected at the "decode" stage.
std::pair<std::vector<std::string>, std::vector<FilterRecord>> filter_corpus(
    const FilterConfig& cfg, const std::vector<std::pair<std::string, Clip>>& corpus);

void write_filter_report(const std::string& path, const std::vector<FilterRecord>& records);

// Clip files: magic "AVDT", F/C/H/W as LE int32, then LE float32 payload.
void save_clip(const std::string& path, const Clip& clip);
Clip load_clip(const std::string& path);

}  // namespace avd
