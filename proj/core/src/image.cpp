#include "caunet/image.hpp"

#include <cmath>

#include "caunet/error.hpp"

namespace caunet {

Image Image::filled(int h, int w, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    Image img;
    img.height = h;
    img.width = w;
    img.data.resize(static_cast<std::size_t>(h) * w * 3);
    for (std::size_t i = 0; i < img.data.size(); i += 3) {
        img.data[i] = r;
        img.data[i + 1] = g;
        img.data[i + 2] = b;
    }
    return img;
}

Mask Mask::zeros(int h, int w) {
    Mask m;
    m.height = h;
    m.width = w;
    m.data.assign(static_cast<std::size_t>(h) * w, 0);
    return m;
}

void validate_sample(const Sample& s) {
    if (s.image.height != s.mask.height || s.image.width != s.mask.width)
        throw ContractError("sample: image and mask spatial sizes differ");
    if (s.image.data.size() != static_cast<std::size_t>(s.image.height) * s.image.width * 3)
        throw ContractError("sample: image buffer size mismatch");
    if (s.mask.data.size() != static_cast<std::size_t>(s.mask.height) * s.mask.width)
        throw ContractError("sample: mask buffer size mismatch");
    for (std::uint8_t v : s.mask.data)
        if (v > 1) throw ContractError("sample: mask is not binary");
}

Image resize_bilinear(const Image& src, int out_h, int out_w) {
    Image dst;
    dst.height = out_h;
    dst.width = out_w;
    dst.data.resize(static_cast<std::size_t>(out_h) * out_w * 3);
    const double sy = out_h > 1 ? static_cast<double>(src.height - 1) / (out_h - 1) : 0.0;
    const double sx = out_w > 1 ? static_cast<double>(src.width - 1) / (out_w - 1) : 0.0;
    for (int y = 0; y < out_h; ++y) {
        const double fy = y * sy;
        const int y0 = static_cast<int>(fy);
        const int y1 = y0 + 1 < src.height ? y0 + 1 : y0;
        const double wy = fy - y0;
        for (int x = 0; x < out_w; ++x) {
            const double fx = x * sx;
            const int x0 = static_cast<int>(fx);
            const int x1 = x0 + 1 < src.width ? x0 + 1 : x0;
            const double wx = fx - x0;
            for (int c = 0; c < 3; ++c) {
                const double v = (1 - wy) * ((1 - wx) * src.at(y0, x0, c) + wx * src.at(y0, x1, c)) +
                                 wy * ((1 - wx) * src.at(y1, x0, c) + wx * src.at(y1, x1, c));
                dst.at(y, x, c) = clamp_u8(v);
            }
        }
    }
    return dst;
}

Mask resize_nearest(const Mask& src, int out_h, int out_w) {
    Mask dst = Mask::zeros(out_h, out_w);
    for (int y = 0; y < out_h; ++y) {
        int sy = out_h > 1 ? static_cast<int>(std::lround(
                                 static_cast<double>(y) * (src.height - 1) / (out_h - 1)))
                           : 0;
        for (int x = 0; x < out_w; ++x) {
            int sx = out_w > 1 ? static_cast<int>(std::lround(
                                     static_cast<double>(x) * (src.width - 1) / (out_w - 1)))
                               : 0;
            dst.at(y, x) = src.at(sy, sx);
        }
    }
    return dst;
}

} // namespace caunet
