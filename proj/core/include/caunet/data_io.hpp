#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "caunet/image.hpp"

#include "caunet/error.hpp"

namespace caunet {

struct DatasetEntry {
    std::string split;
    std::string city;
    std::string image_path;
    std::string label_path;
    std::string frame_id;
};

struct DatasetIndex {
    std::string root;
    std::vector<DatasetEntry> entries;
    std::vector<std::string> warnings; // unpaired files, reported not fatal

    nlohmann::json to_json() const;
};

// Label ids mapped to mask value 1 (Cityscapes "road" by default).
struct LabelMapping {
    std::set<int> drivable_ids{7};
};

// Walks leftImg8bit/{split}/{city}/ and pairs each *_leftImg8bit.png with its
// gtFine labelIds file; deterministic lexicographic order.
DatasetIndex scan(const std::string& root);

Sample load_sample(const DatasetEntry& entry, const LabelMapping& mapping,
                   std::optional<std::pair<int, int>> target_wh = std::nullopt);

// Seeded synthetic road scenes: a perspective trapezoid road on a textured
// background; drivable fraction stays within [0.15, 0.6].
std::vector<Sample> synth_generate(int n, int width, int height, std::uint64_t seed);

// PNG codec boundary (8-bit; 16-bit sources are tone-mapped by right shift).
Image read_image_rgb8(const std::string& path);
std::vector<std::uint8_t> read_image_gray8(const std::string& path, int& width, int& height);
void write_png_rgb8(const std::string& path, const Image& img);
void write_png_gray8(const std::string& path, int width, int height,
                     const std::vector<std::uint8_t>& data);

// Flat corpus layout used by the synth generator: dir/images/*.png paired
// with dir/masks/*.png (mask pixel 255 = drivable).
void save_flat_sample(const Sample& s, const std::string& dir, const std::string& name);
std::vector<Sample> load_flat(const std::string& dir);

// Loads any supported dataset directory: a Cityscapes tree if it contains
// leftImg8bit/, otherwise a flat corpus.
std::vector<Sample> load_dataset(const std::string& dir, const LabelMapping& mapping,
                                 std::optional<std::pair<int, int>> target_wh = std::nullopt);

} // namespace caunet
