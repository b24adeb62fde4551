#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "caunet/image.hpp"
#include "caunet/rng.hpp"

#include "caunet/error.hpp"

namespace caunet {

// ---- deterministic transforms (explicit parameters) ----
// Geometric transforms move image (bilinear) and mask (nearest) identically;
// everything else touches the image only.

Sample hflip(const Sample& s);
Sample rotate(const Sample& s, double degrees);              // fill 0 outside frame
Sample crop(const Sample& s, int y0, int x0, int h, int w);  // throws ParameterError if out of range
Sample scale_about_center(const Sample& s, double factor);   // same output size, fill 0

// Rectangle of b pasted into a (image and mask), CutMix-style.
Sample mixcut(const Sample& a, const Sample& b, RngStream& rng);

Image apply_gamma(const Image& img, double gamma);           // gamma in [0.5, 2.0]
Image posterize(const Image& img, int bits);                 // bits in [1, 8]
Image color_jitter(const Image& img, double brightness, double contrast, double saturation);
Image downscale(const Image& img, double factor);            // factor in [0.25, 0.9]
Image hue_saturation(const Image& img, double hue_shift_deg, double sat_scale, double val_scale);
Image clahe(const Image& img, double clip_limit, int tiles_x, int tiles_y);

Image gaussian_blur(const Image& img, double sigma);
Image glass_blur(const Image& img, int delta, int iterations, RngStream& rng);
Image motion_blur(const Image& img, int length, double angle_deg);
Image iso_noise(const Image& img, double sigma_lum, double sigma_col, RngStream& rng);
Image optical_distortion(const Image& img, double k);

Image fog(const Image& img, double density);
Image rain(const Image& img, double slant_deg, int drop_length, int count, RngStream& rng);
Image snow(const Image& img, double coeff, RngStream& rng);
Image sunflare(const Image& img, double cx, double cy, double radius, double intensity);

// Scalar histogram helper exposed for the single-tile oracle: the mapping a
// clipped-equalization tile applies to each of the 256 levels.
std::vector<std::uint8_t> clahe_tile_mapping(const std::vector<int>& histogram, int pixel_count,
                                             double clip_limit);

// ---- seeded pipeline ----

struct AugStep {
    std::string kind;
    double probability = 1.0;
    nlohmann::json params; // per-kind parameter ranges, may be empty for defaults
};

struct AugPipelineSpec {
    std::vector<AugStep> steps;
    std::uint64_t master_seed = 0;
    std::string profile; // "light", "heavy" or "" for custom

    static AugPipelineSpec light(std::uint64_t seed);
    static AugPipelineSpec heavy(std::uint64_t seed);
    static AugPipelineSpec from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
};

// Applies every step that fires; per-step streams are keyed by
// (master_seed, epoch, sample_index, step_index) so results do not depend on
// processing order.  `provenance`, when given, receives one record per step.
Sample apply_pipeline(const AugPipelineSpec& spec, const Sample& sample, long long sample_index,
                      long long epoch, nlohmann::json* provenance = nullptr);

} // namespace caunet
