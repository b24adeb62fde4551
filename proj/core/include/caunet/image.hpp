#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "caunet/error.hpp"

namespace caunet {

// 8-bit RGB image, row-major, interleaved channels.
struct Image {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> data; // height * width * 3

    static Image filled(int h, int w, std::uint8_t r, std::uint8_t g, std::uint8_t b);
    std::uint8_t& at(int y, int x, int c) { return data[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
    std::uint8_t at(int y, int x, int c) const { return data[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
};

// Binary mask, values strictly in {0, 1}.
struct Mask {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> data; // height * width

    static Mask zeros(int h, int w);
    std::uint8_t& at(int y, int x) { return data[static_cast<std::size_t>(y) * width + x]; }
    std::uint8_t at(int y, int x) const { return data[static_cast<std::size_t>(y) * width + x]; }
};

struct SampleMeta {
    std::string id;
    std::string city;
    std::string split;
};

// An image and its same-sized binary drivable-area mask.
struct Sample {
    Image image;
    Mask mask;
    SampleMeta meta;
};

void validate_sample(const Sample& s); // throws ContractError on violation

// Resampling helpers shared by augmentation and loading.
Image resize_bilinear(const Image& src, int out_h, int out_w);
Mask resize_nearest(const Mask& src, int out_h, int out_w);

// ITU-R 601 luma of one pixel.
inline int luma601(int r, int g, int b) {
    return static_cast<int>(0.299 * r + 0.587 * g + 0.114 * b + 0.5);
}

inline std::uint8_t clamp_u8(double v) {
    return static_cast<std::uint8_t>(v < 0.0 ? 0 : (v > 255.0 ? 255 : v + 0.5));
}

} // namespace caunet
