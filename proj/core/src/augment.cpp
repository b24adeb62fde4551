#include "caunet/augment.hpp"

#include <algorithm>
#include <cmath>

#include "caunet/error.hpp"

namespace caunet {

namespace {

constexpr double kPi = 3.14159265358979323846;

double bilinear_fill0(const Image& img, double fy, double fx, int c) {
    const int y0 = static_cast<int>(std::floor(fy));
    const int x0 = static_cast<int>(std::floor(fx));
    const double wy = fy - y0, wx = fx - x0;
    double acc = 0.0;
    for (int dy = 0; dy < 2; ++dy)
        for (int dx = 0; dx < 2; ++dx) {
            const int y = y0 + dy, x = x0 + dx;
            const double w = (dy ? wy : 1 - wy) * (dx ? wx : 1 - wx);
            if (w == 0.0) continue;
            if (y >= 0 && y < img.height && x >= 0 && x < img.width) acc += w * img.at(y, x, c);
        }
    return acc;
}

std::uint8_t nearest_fill0(const Mask& m, double fy, double fx) {
    const int y = static_cast<int>(std::lround(fy));
    const int x = static_cast<int>(std::lround(fx));
    if (y < 0 || y >= m.height || x < 0 || x >= m.width) return 0;
    return m.at(y, x);
}

// Inverse-map affine resample about the image center.
Sample affine_resample(const Sample& s, double cos_t, double sin_t, double inv_scale) {
    const int h = s.image.height, w = s.image.width;
    Sample out = s;
    const double cy = (h - 1) / 2.0, cx = (w - 1) / 2.0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double dy = y - cy, dx = x - cx;
            const double sy = cy + inv_scale * (cos_t * dy - sin_t * dx);
            const double sx = cx + inv_scale * (sin_t * dy + cos_t * dx);
            for (int c = 0; c < 3; ++c) out.image.at(y, x, c) = clamp_u8(bilinear_fill0(s.image, sy, sx, c));
            out.mask.at(y, x) = nearest_fill0(s.mask, sy, sx);
        }
    return out;
}

double edge_bilinear(const Image& img, double fy, double fx, int c) {
    fy = std::clamp(fy, 0.0, static_cast<double>(img.height - 1));
    fx = std::clamp(fx, 0.0, static_cast<double>(img.width - 1));
    const int y0 = static_cast<int>(fy);
    const int x0 = static_cast<int>(fx);
    const int y1 = std::min(y0 + 1, img.height - 1);
    const int x1 = std::min(x0 + 1, img.width - 1);
    const double wy = fy - y0, wx = fx - x0;
    return (1 - wy) * ((1 - wx) * img.at(y0, x0, c) + wx * img.at(y0, x1, c)) +
           wy * ((1 - wx) * img.at(y1, x0, c) + wx * img.at(y1, x1, c));
}

int edge_clamp(int v, int lo, int hi) { return v < lo ? lo : (v > hi ? hi : v); }

Image convolve_replicate(const Image& img, const std::vector<double>& kernel, int kh, int kw) {
    Image out = img;
    const int ry = kh / 2, rx = kw / 2;
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < 3; ++c) {
                double acc = 0.0;
                for (int i = 0; i < kh; ++i)
                    for (int j = 0; j < kw; ++j) {
                        const int sy = edge_clamp(y + i - ry, 0, img.height - 1);
                        const int sx = edge_clamp(x + j - rx, 0, img.width - 1);
                        acc += kernel[static_cast<std::size_t>(i) * kw + j] * img.at(sy, sx, c);
                    }
                out.at(y, x, c) = clamp_u8(acc);
            }
    return out;
}

void rgb_to_hsv(double r, double g, double b, double& h, double& s, double& v) {
    const double mx = std::max({r, g, b}), mn = std::min({r, g, b});
    v = mx;
    const double d = mx - mn;
    s = mx > 0 ? d / mx : 0.0;
    if (d == 0.0) {
        h = 0.0;
    } else if (mx == r) {
        h = 60.0 * std::fmod((g - b) / d, 6.0);
    } else if (mx == g) {
        h = 60.0 * ((b - r) / d + 2.0);
    } else {
        h = 60.0 * ((r - g) / d + 4.0);
    }
    if (h < 0) h += 360.0;
}

void hsv_to_rgb(double h, double s, double v, double& r, double& g, double& b) {
    const double c = v * s;
    const double hp = std::fmod(h / 60.0, 6.0);
    const double x = c * (1.0 - std::fabs(std::fmod(hp, 2.0) - 1.0));
    const double m = v - c;
    double rr = 0, gg = 0, bb = 0;
    if (hp < 1) { rr = c; gg = x; }
    else if (hp < 2) { rr = x; gg = c; }
    else if (hp < 3) { gg = c; bb = x; }
    else if (hp < 4) { gg = x; bb = c; }
    else if (hp < 5) { rr = x; bb = c; }
    else { rr = c; bb = x; }
    r = rr + m;
    g = gg + m;
    b = bb + m;
}

} // namespace

Sample hflip(const Sample& s) {
    Sample out = s;
    for (int y = 0; y < s.image.height; ++y)
        for (int x = 0; x < s.image.width; ++x) {
            const int sx = s.image.width - 1 - x;
            for (int c = 0; c < 3; ++c) out.image.at(y, x, c) = s.image.at(y, sx, c);
            out.mask.at(y, x) = s.mask.at(y, sx);
        }
    return out;
}

Sample rotate(const Sample& s, double degrees) {
    if (degrees == 0.0) return s;
    const double t = degrees * kPi / 180.0;
    return affine_resample(s, std::cos(t), std::sin(t), 1.0);
}

Sample crop(const Sample& s, int y0, int x0, int h, int w) {
    if (h < 1 || w < 1 || y0 < 0 || x0 < 0 || y0 + h > s.image.height || x0 + w > s.image.width)
        throw ParameterError("crop: region " + std::to_string(w) + "x" + std::to_string(h) +
                             " at (" + std::to_string(x0) + "," + std::to_string(y0) +
                             ") exceeds image " + std::to_string(s.image.width) + "x" +
                             std::to_string(s.image.height));
    Sample out;
    out.meta = s.meta;
    out.image.height = h;
    out.image.width = w;
    out.image.data.resize(static_cast<std::size_t>(h) * w * 3);
    out.mask = Mask::zeros(h, w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            for (int c = 0; c < 3; ++c) out.image.at(y, x, c) = s.image.at(y0 + y, x0 + x, c);
            out.mask.at(y, x) = s.mask.at(y0 + y, x0 + x);
        }
    return out;
}

Sample scale_about_center(const Sample& s, double factor) {
    if (factor <= 0.0) throw ParameterError("scale_about_center: factor must be positive");
    if (factor == 1.0) return s;
    return affine_resample(s, 1.0, 0.0, 1.0 / factor);
}

Sample mixcut(const Sample& a, const Sample& b, RngStream& rng) {
    if (a.image.height != b.image.height || a.image.width != b.image.width)
        throw ParameterError("mixcut: samples must have equal sizes");
    const int h = a.image.height, w = a.image.width;
    const double frac = rng.uniform(0.1, 0.4);
    const double aspect = rng.uniform(0.5, 2.0);
    const int rw = std::clamp(static_cast<int>(std::lround(w * std::sqrt(frac * aspect))), 1, w);
    const int rh = std::clamp(static_cast<int>(std::lround(h * std::sqrt(frac / aspect))), 1, h);
    const int x0 = rng.uniform_int(0, w - rw);
    const int y0 = rng.uniform_int(0, h - rh);
    Sample out = a;
    for (int y = y0; y < y0 + rh; ++y)
        for (int x = x0; x < x0 + rw; ++x) {
            for (int c = 0; c < 3; ++c) out.image.at(y, x, c) = b.image.at(y, x, c);
            out.mask.at(y, x) = b.mask.at(y, x);
        }
    return out;
}

Image apply_gamma(const Image& img, double gamma) {
    if (gamma < 0.5 || gamma > 2.0)
        throw ParameterError("apply_gamma: gamma must be in [0.5, 2.0]");
    std::uint8_t lut[256];
    for (int v = 0; v < 256; ++v)
        lut[v] = clamp_u8(255.0 * std::pow(v / 255.0, gamma));
    Image out = img;
    for (auto& v : out.data) v = lut[v];
    return out;
}

Image posterize(const Image& img, int bits) {
    if (bits < 1 || bits > 8) throw ParameterError("posterize: bits must be in [1, 8]");
    const std::uint8_t mask = static_cast<std::uint8_t>(0xFF << (8 - bits));
    Image out = img;
    for (auto& v : out.data) v &= mask;
    return out;
}

Image color_jitter(const Image& img, double brightness, double contrast, double saturation) {
    double mean_luma = 0.0;
    for (std::size_t i = 0; i < img.data.size(); i += 3)
        mean_luma += 0.299 * img.data[i] + 0.587 * img.data[i + 1] + 0.114 * img.data[i + 2];
    mean_luma /= static_cast<double>(img.data.size() / 3);
    mean_luma *= brightness;
    Image out = img;
    for (std::size_t i = 0; i < img.data.size(); i += 3) {
        double ch[3];
        for (int c = 0; c < 3; ++c) ch[c] = img.data[i + c] * brightness;
        for (int c = 0; c < 3; ++c) ch[c] = (ch[c] - mean_luma) * contrast + mean_luma;
        const double luma = 0.299 * ch[0] + 0.587 * ch[1] + 0.114 * ch[2];
        for (int c = 0; c < 3; ++c) out.data[i + c] = clamp_u8(luma + (ch[c] - luma) * saturation);
    }
    return out;
}

Image downscale(const Image& img, double factor) {
    if (factor < 0.25 || factor > 0.9)
        throw ParameterError("downscale: factor must be in [0.25, 0.9]");
    const int h = std::max(1, static_cast<int>(std::lround(img.height * factor)));
    const int w = std::max(1, static_cast<int>(std::lround(img.width * factor)));
    return resize_bilinear(resize_bilinear(img, h, w), img.height, img.width);
}

Image hue_saturation(const Image& img, double hue_shift_deg, double sat_scale, double val_scale) {
    Image out = img;
    for (std::size_t i = 0; i < img.data.size(); i += 3) {
        double h, s, v;
        rgb_to_hsv(img.data[i] / 255.0, img.data[i + 1] / 255.0, img.data[i + 2] / 255.0, h, s, v);
        h = std::fmod(h + hue_shift_deg + 360.0, 360.0);
        s = std::clamp(s * sat_scale, 0.0, 1.0);
        v = std::clamp(v * val_scale, 0.0, 1.0);
        double r, g, b;
        hsv_to_rgb(h, s, v, r, g, b);
        out.data[i] = clamp_u8(r * 255.0);
        out.data[i + 1] = clamp_u8(g * 255.0);
        out.data[i + 2] = clamp_u8(b * 255.0);
    }
    return out;
}

std::vector<std::uint8_t> clahe_tile_mapping(const std::vector<int>& histogram, int pixel_count,
                                             double clip_limit) {
    std::vector<long long> hist(histogram.begin(), histogram.end());
    const long long clip =
        std::max<long long>(1, static_cast<long long>(clip_limit * pixel_count / 256.0));
    long long excess = 0;
    for (auto& h : hist)
        if (h > clip) {
            excess += h - clip;
            h = clip;
        }
    const long long share = excess / 256;
    long long remainder = excess % 256;
    for (int i = 0; i < 256; ++i) {
        hist[static_cast<std::size_t>(i)] += share + (i < remainder ? 1 : 0);
    }
    std::vector<std::uint8_t> mapping(256);
    long long cdf = 0;
    for (int i = 0; i < 256; ++i) {
        cdf += hist[static_cast<std::size_t>(i)];
        mapping[static_cast<std::size_t>(i)] =
            clamp_u8(255.0 * static_cast<double>(cdf) / static_cast<double>(pixel_count));
    }
    return mapping;
}

// Contrast-limited adaptive histogram equalization on the luminance channel;
// RGB is rescaled by the per-pixel luminance gain.
Image clahe(const Image& img, double clip_limit, int tiles_x, int tiles_y) {
    if (clip_limit <= 0.0 || tiles_x < 1 || tiles_y < 1)
        throw ParameterError("clahe: clip limit and tile counts must be positive");
    tiles_x = std::min(tiles_x, img.width);
    tiles_y = std::min(tiles_y, img.height);
    const int h = img.height, w = img.width;
    std::vector<std::uint8_t> luma(static_cast<std::size_t>(h) * w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            luma[static_cast<std::size_t>(y) * w + x] =
                static_cast<std::uint8_t>(luma601(img.at(y, x, 0), img.at(y, x, 1), img.at(y, x, 2)));

    auto tile_x0 = [&](int tx) { return tx * w / tiles_x; };
    auto tile_y0 = [&](int ty) { return ty * h / tiles_y; };
    std::vector<std::vector<std::uint8_t>> maps(static_cast<std::size_t>(tiles_x) * tiles_y);
    for (int ty = 0; ty < tiles_y; ++ty)
        for (int tx = 0; tx < tiles_x; ++tx) {
            std::vector<int> hist(256, 0);
            int count = 0;
            for (int y = tile_y0(ty); y < tile_y0(ty + 1); ++y)
                for (int x = tile_x0(tx); x < tile_x0(tx + 1); ++x) {
                    ++hist[luma[static_cast<std::size_t>(y) * w + x]];
                    ++count;
                }
            maps[static_cast<std::size_t>(ty) * tiles_x + tx] =
                clahe_tile_mapping(hist, count, clip_limit);
        }

    auto tile_center_x = [&](int tx) { return (tile_x0(tx) + tile_x0(tx + 1) - 1) / 2.0; };
    auto tile_center_y = [&](int ty) { return (tile_y0(ty) + tile_y0(ty + 1) - 1) / 2.0; };
    Image out = img;
    for (int y = 0; y < h; ++y) {
        int ty0 = 0;
        while (ty0 + 1 < tiles_y && tile_center_y(ty0 + 1) <= y) ++ty0;
        int ty1 = std::min(ty0 + 1, tiles_y - 1);
        if (y < tile_center_y(ty0)) ty1 = ty0;
        const double cy0 = tile_center_y(ty0), cy1 = tile_center_y(ty1);
        const double wy = cy1 > cy0 ? std::clamp((y - cy0) / (cy1 - cy0), 0.0, 1.0) : 0.0;
        for (int x = 0; x < w; ++x) {
            int tx0 = 0;
            while (tx0 + 1 < tiles_x && tile_center_x(tx0 + 1) <= x) ++tx0;
            int tx1 = std::min(tx0 + 1, tiles_x - 1);
            if (x < tile_center_x(tx0)) tx1 = tx0;
            const double cx0 = tile_center_x(tx0), cx1 = tile_center_x(tx1);
            const double wx = cx1 > cx0 ? std::clamp((x - cx0) / (cx1 - cx0), 0.0, 1.0) : 0.0;
            const std::uint8_t v = luma[static_cast<std::size_t>(y) * w + x];
            const double m00 = maps[static_cast<std::size_t>(ty0) * tiles_x + tx0][v];
            const double m01 = maps[static_cast<std::size_t>(ty0) * tiles_x + tx1][v];
            const double m10 = maps[static_cast<std::size_t>(ty1) * tiles_x + tx0][v];
            const double m11 = maps[static_cast<std::size_t>(ty1) * tiles_x + tx1][v];
            const double mapped = (1 - wy) * ((1 - wx) * m00 + wx * m01) + wy * ((1 - wx) * m10 + wx * m11);
            const double gain = v > 0 ? mapped / v : 1.0;
            for (int c = 0; c < 3; ++c) out.at(y, x, c) = clamp_u8(img.at(y, x, c) * gain);
        }
    }
    return out;
}

Image gaussian_blur(const Image& img, double sigma) {
    if (sigma <= 0.0) throw ParameterError("gaussian_blur: sigma must be positive");
    const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        k[static_cast<std::size_t>(i + radius)] = std::exp(-0.5 * i * i / (sigma * sigma));
        sum += k[static_cast<std::size_t>(i + radius)];
    }
    for (auto& v : k) v /= sum;
    // separable: horizontal pass in doubles, then vertical
    const int h = img.height, w = img.width;
    std::vector<double> tmp(static_cast<std::size_t>(h) * w * 3);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c) {
                double acc = 0.0;
                for (int i = -radius; i <= radius; ++i)
                    acc += k[static_cast<std::size_t>(i + radius)] *
                           img.at(y, edge_clamp(x + i, 0, w - 1), c);
                tmp[(static_cast<std::size_t>(y) * w + x) * 3 + c] = acc;
            }
    Image out = img;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c) {
                double acc = 0.0;
                for (int i = -radius; i <= radius; ++i)
                    acc += k[static_cast<std::size_t>(i + radius)] *
                           tmp[(static_cast<std::size_t>(edge_clamp(y + i, 0, h - 1)) * w + x) * 3 + c];
                out.at(y, x, c) = clamp_u8(acc);
            }
    return out;
}

Image glass_blur(const Image& img, int delta, int iterations, RngStream& rng) {
    if (delta < 0 || iterations < 1)
        throw ParameterError("glass_blur: delta must be >= 0 and iterations >= 1");
    Image out = img;
    for (int it = 0; it < iterations; ++it)
        for (int y = 0; y < img.height; ++y)
            for (int x = 0; x < img.width; ++x) {
                const int sy = edge_clamp(y + rng.uniform_int(-delta, delta), 0, img.height - 1);
                const int sx = edge_clamp(x + rng.uniform_int(-delta, delta), 0, img.width - 1);
                for (int c = 0; c < 3; ++c) std::swap(out.at(y, x, c), out.at(sy, sx, c));
            }
    return out;
}

Image motion_blur(const Image& img, int length, double angle_deg) {
    if (length < 1 || length % 2 == 0)
        throw ParameterError("motion_blur: length must be a positive odd number");
    if (length == 1) return img;
    const double t = angle_deg * kPi / 180.0;
    std::vector<double> kernel(static_cast<std::size_t>(length) * length, 0.0);
    const int r = length / 2;
    int taps = 0;
    for (int i = -r; i <= r; ++i) {
        const int x = static_cast<int>(std::lround(i * std::cos(t)));
        const int y = static_cast<int>(std::lround(i * std::sin(t)));
        double& cell = kernel[static_cast<std::size_t>(y + r) * length + (x + r)];
        if (cell == 0.0) {
            cell = 1.0;
            ++taps;
        }
    }
    for (auto& v : kernel) v /= taps;
    return convolve_replicate(img, kernel, length, length);
}

Image iso_noise(const Image& img, double sigma_lum, double sigma_col, RngStream& rng) {
    if (sigma_lum < 0.0 || sigma_col < 0.0)
        throw ParameterError("iso_noise: noise scales must be non-negative");
    Image out = img;
    for (std::size_t i = 0; i < img.data.size(); i += 3) {
        const double lum_noise = rng.normal(0.0, sigma_lum * 255.0);
        for (int c = 0; c < 3; ++c) {
            const double col_noise = rng.normal(0.0, sigma_col * 255.0);
            out.data[i + c] = clamp_u8(img.data[i + c] + lum_noise + col_noise);
        }
    }
    return out;
}

Image optical_distortion(const Image& img, double k) {
    Image out = img;
    const double cy = (img.height - 1) / 2.0, cx = (img.width - 1) / 2.0;
    const double rmax = std::sqrt(cy * cy + cx * cx);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            const double dy = y - cy, dx = x - cx;
            const double rn = rmax > 0 ? std::sqrt(dy * dy + dx * dx) / rmax : 0.0;
            const double f = 1.0 + k * rn * rn;
            for (int c = 0; c < 3; ++c)
                out.at(y, x, c) = clamp_u8(edge_bilinear(img, cy + dy * f, cx + dx * f, c));
        }
    return out;
}

Image fog(const Image& img, double density) {
    if (density < 0.0 || density > 1.0) throw ParameterError("fog: density must be in [0, 1]");
    if (density == 0.0) return img;
    Image out = img;
    const double cy = (img.height - 1) / 2.0, cx = (img.width - 1) / 2.0;
    const double rmax = std::max(1.0, std::sqrt(cy * cy + cx * cx));
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            const double dy = y - cy, dx = x - cx;
            const double falloff = 1.0 - std::sqrt(dy * dy + dx * dx) / rmax;
            const double alpha = density * (0.5 + 0.5 * std::clamp(falloff, 0.0, 1.0));
            for (int c = 0; c < 3; ++c) {
                const double v = img.at(y, x, c);
                out.at(y, x, c) = clamp_u8(v + (255.0 - v) * alpha);
            }
        }
    return out;
}

Image rain(const Image& img, double slant_deg, int drop_length, int count, RngStream& rng) {
    if (drop_length < 1 || count < 0)
        throw ParameterError("rain: drop_length must be >= 1 and count >= 0");
    Image out = img;
    const double t = (90.0 - slant_deg) * kPi / 180.0;
    const double dy = std::sin(t), dx = std::cos(t);
    for (int d = 0; d < count; ++d) {
        double y = rng.uniform(0.0, img.height - 1.0);
        double x = rng.uniform(0.0, img.width - 1.0);
        for (int s = 0; s < drop_length; ++s) {
            const int iy = static_cast<int>(std::lround(y)), ix = static_cast<int>(std::lround(x));
            if (iy >= 0 && iy < img.height && ix >= 0 && ix < img.width)
                for (int c = 0; c < 3; ++c)
                    out.at(iy, ix, c) = clamp_u8(0.4 * out.at(iy, ix, c) + 0.6 * 210.0);
            y += dy;
            x += dx;
        }
    }
    return gaussian_blur(out, 0.6);
}

Image snow(const Image& img, double coeff, RngStream& rng) {
    if (coeff < 0.0 || coeff > 1.0) throw ParameterError("snow: coefficient must be in [0, 1]");
    const double threshold = rng.uniform(130.0, 180.0);
    Image out = img;
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            const int l = luma601(img.at(y, x, 0), img.at(y, x, 1), img.at(y, x, 2));
            if (l <= threshold) continue;
            for (int c = 0; c < 3; ++c) {
                const double v = img.at(y, x, c);
                out.at(y, x, c) = clamp_u8(v + (255.0 - v) * coeff);
            }
        }
    return out;
}

Image sunflare(const Image& img, double cx, double cy, double radius, double intensity) {
    if (radius <= 0.0 || intensity < 0.0 || intensity > 1.0)
        throw ParameterError("sunflare: radius must be positive and intensity in [0, 1]");
    Image out = img;
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            const double d = std::sqrt((y - cy) * (y - cy) + (x - cx) * (x - cx));
            if (d >= radius) continue;
            const double add = intensity * 255.0 * (1.0 - d / radius);
            for (int c = 0; c < 3; ++c) out.at(y, x, c) = clamp_u8(img.at(y, x, c) + add);
        }
    return out;
}

// ---- pipeline ----

namespace {

AugStep step(const std::string& kind, double p, nlohmann::json params = nlohmann::json::object()) {
    return AugStep{kind, p, std::move(params)};
}

Sample apply_step(const AugStep& st, const Sample& s, RngStream& rng, nlohmann::json& record) {
    const auto& pr = st.params;
    auto get = [&](const char* key, double dflt) { return pr.value(key, dflt); };
    const std::string& k = st.kind;
    if (k == "hflip") return hflip(s);
    if (k == "rotate") {
        const double deg = rng.uniform(get("min_deg", -15.0), get("max_deg", 15.0));
        record["degrees"] = deg;
        return rotate(s, deg);
    }
    if (k == "random_crop") {
        const double frac = get("frac", 0.8);
        const int ch = std::max(1, static_cast<int>(std::lround(s.image.height * frac)));
        const int cw = std::max(1, static_cast<int>(std::lround(s.image.width * frac)));
        bool source_has_road = false;
        for (std::uint8_t v : s.mask.data)
            if (v) source_has_road = true;
        for (int attempt = 0; attempt < 8; ++attempt) {
            const int y0 = rng.uniform_int(0, s.image.height - ch);
            const int x0 = rng.uniform_int(0, s.image.width - cw);
            Sample cr = crop(s, y0, x0, ch, cw);
            bool has_road = false;
            for (std::uint8_t v : cr.mask.data)
                if (v) has_road = true;
            if (source_has_road && !has_road) continue; // degenerate crop, redraw
            record["y0"] = y0;
            record["x0"] = x0;
            record["h"] = ch;
            record["w"] = cw;
            cr.image = resize_bilinear(cr.image, s.image.height, s.image.width);
            cr.mask = resize_nearest(cr.mask, s.mask.height, s.mask.width);
            return cr;
        }
        record["skipped"] = true;
        return s;
    }
    if (k == "random_scale") {
        const double f = rng.uniform(get("min", 0.8), get("max", 1.2));
        record["factor"] = f;
        return scale_about_center(s, f);
    }
    Sample out = s;
    if (k == "clahe") {
        const double clip = rng.uniform(get("clip_min", 1.0), get("clip_max", 4.0));
        record["clip"] = clip;
        out.image = clahe(s.image, clip, static_cast<int>(get("tiles", 8.0)),
                          static_cast<int>(get("tiles", 8.0)));
    } else if (k == "random_gamma") {
        const double g = rng.uniform(get("min", 0.7), get("max", 1.5));
        record["gamma"] = g;
        out.image = apply_gamma(s.image, g);
    } else if (k == "color_jitter") {
        const double b = rng.uniform(1.0 - get("brightness", 0.2), 1.0 + get("brightness", 0.2));
        const double c = rng.uniform(1.0 - get("contrast", 0.2), 1.0 + get("contrast", 0.2));
        const double sa = rng.uniform(1.0 - get("saturation", 0.2), 1.0 + get("saturation", 0.2));
        record["b"] = b;
        record["c"] = c;
        record["s"] = sa;
        out.image = color_jitter(s.image, b, c, sa);
    } else if (k == "posterize") {
        const int bits = rng.uniform_int(static_cast<int>(get("min_bits", 4.0)),
                                         static_cast<int>(get("max_bits", 7.0)));
        record["bits"] = bits;
        out.image = posterize(s.image, bits);
    } else if (k == "downscale") {
        const double f = rng.uniform(get("min", 0.25), get("max", 0.9));
        record["factor"] = f;
        out.image = downscale(s.image, f);
    } else if (k == "hue_saturation") {
        const double hshift = rng.uniform(-get("hue", 12.0), get("hue", 12.0));
        const double sscale = rng.uniform(1.0 - get("sat", 0.3), 1.0 + get("sat", 0.3));
        const double vscale = rng.uniform(1.0 - get("val", 0.2), 1.0 + get("val", 0.2));
        out.image = hue_saturation(s.image, hshift, sscale, vscale);
    } else if (k == "gaussian_blur") {
        const double sg = rng.uniform(get("sigma_min", 0.3), get("sigma_max", 2.0));
        record["sigma"] = sg;
        out.image = gaussian_blur(s.image, sg);
    } else if (k == "glass_blur") {
        out.image = glass_blur(s.image, static_cast<int>(get("delta", 2.0)),
                               static_cast<int>(get("iterations", 1.0)), rng);
    } else if (k == "motion_blur") {
        int len = rng.uniform_int(static_cast<int>(get("min_len", 3.0)),
                                  static_cast<int>(get("max_len", 9.0)));
        if (len % 2 == 0) ++len;
        const double angle = rng.uniform(0.0, 180.0);
        record["length"] = len;
        record["angle"] = angle;
        out.image = motion_blur(s.image, len, angle);
    } else if (k == "iso_noise") {
        out.image = iso_noise(s.image, get("lum", 0.05), get("col", 0.02), rng);
    } else if (k == "optical_distortion") {
        const double kk = rng.uniform(get("k_min", -0.3), get("k_max", 0.3));
        record["k"] = kk;
        out.image = optical_distortion(s.image, kk);
    } else if (k == "fog") {
        const double d = rng.uniform(get("min", 0.1), get("max", 0.45));
        record["density"] = d;
        out.image = fog(s.image, d);
    } else if (k == "rain") {
        const double slant = rng.uniform(-get("slant", 20.0), get("slant", 20.0));
        const int count = rng.uniform_int(static_cast<int>(get("count", 80.0)) / 2,
                                          static_cast<int>(get("count", 80.0)));
        out.image = rain(s.image, slant, static_cast<int>(get("len", 12.0)), count, rng);
    } else if (k == "snow") {
        out.image = snow(s.image, rng.uniform(get("min", 0.1), get("max", 0.5)), rng);
    } else if (k == "sunflare") {
        const double cx = rng.uniform(0.0, s.image.width - 1.0);
        const double cy = rng.uniform(0.0, s.image.height / 2.0);
        const double radius = get("radius_frac", 0.2) * std::min(s.image.height, s.image.width);
        out.image = sunflare(s.image, cx, cy, std::max(1.0, radius), get("intensity", 0.4));
    } else {
        throw ConfigError("unknown augmentation step kind: " + k);
    }
    return out;
}

} // namespace

AugPipelineSpec AugPipelineSpec::light(std::uint64_t seed) {
    AugPipelineSpec spec;
    spec.master_seed = seed;
    spec.profile = "light";
    spec.steps = {step("random_crop", 0.5), step("rotate", 0.5), step("hflip", 0.5)};
    return spec;
}

AugPipelineSpec AugPipelineSpec::heavy(std::uint64_t seed) {
    AugPipelineSpec spec = light(seed);
    spec.profile = "heavy";
    for (const char* kind :
         {"clahe", "random_gamma", "color_jitter", "posterize", "downscale", "hue_saturation"})
        spec.steps.push_back(step(kind, 0.25));
    spec.steps.push_back(step("gaussian_blur", 0.2));
    spec.steps.push_back(step("glass_blur", 0.1));
    spec.steps.push_back(step("motion_blur", 0.2));
    spec.steps.push_back(step("iso_noise", 0.2));
    spec.steps.push_back(step("optical_distortion", 0.15));
    spec.steps.push_back(step("fog", 0.15));
    spec.steps.push_back(step("rain", 0.15));
    spec.steps.push_back(step("snow", 0.1));
    spec.steps.push_back(step("sunflare", 0.1));
    return spec;
}

AugPipelineSpec AugPipelineSpec::from_json(const nlohmann::json& j) {
    if (j.contains("profile") && !j.contains("steps")) {
        const std::string profile = j.at("profile");
        const std::uint64_t seed = j.value("master_seed", 0ull);
        if (profile == "light") return light(seed);
        if (profile == "heavy") return heavy(seed);
        throw ConfigError("unknown augmentation profile: " + profile);
    }
    AugPipelineSpec spec;
    spec.master_seed = j.value("master_seed", 0ull);
    spec.profile = j.value("profile", std::string());
    for (const auto& js : j.at("steps")) {
        AugStep st;
        st.kind = js.at("kind");
        st.probability = js.value("p", 1.0);
        if (st.probability < 0.0 || st.probability > 1.0)
            throw ParameterError("pipeline step probability must be in [0, 1]");
        st.params = js.value("params", nlohmann::json::object());
        spec.steps.push_back(std::move(st));
    }
    return spec;
}

nlohmann::json AugPipelineSpec::to_json() const {
    nlohmann::json j;
    j["master_seed"] = master_seed;
    if (!profile.empty()) j["profile"] = profile;
    j["steps"] = nlohmann::json::array();
    for (const auto& st : steps)
        j["steps"].push_back({{"kind", st.kind}, {"p", st.probability}, {"params", st.params}});
    return j;
}

Sample apply_pipeline(const AugPipelineSpec& spec, const Sample& sample, long long sample_index,
                      long long epoch, nlohmann::json* provenance) {
    validate_sample(sample);
    Sample out = sample;
    for (std::size_t i = 0; i < spec.steps.size(); ++i) {
        const AugStep& st = spec.steps[i];
        RngStream rng = RngStream::derive(
            spec.master_seed, static_cast<std::uint64_t>(epoch),
            static_cast<std::uint64_t>(sample_index), static_cast<std::uint64_t>(i));
        const bool fired = rng.bernoulli(st.probability);
        nlohmann::json record{{"kind", st.kind}, {"fired", fired}};
        if (fired) out = apply_step(st, out, rng, record);
        if (provenance) provenance->push_back(std::move(record));
    }
    return out;
}

} // namespace caunet
