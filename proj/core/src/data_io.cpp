#include "caunet/data_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>

#include <png.h>

#include "caunet/error.hpp"
#include "caunet/rng.hpp"

namespace fs = std::filesystem;

namespace caunet {

namespace {

struct PngReadCloser {
    png_structp png = nullptr;
    png_infop info = nullptr;
    std::FILE* fp = nullptr;
    ~PngReadCloser() {
        if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
        if (fp) std::fclose(fp);
    }
};

// Decodes any PNG into 8-bit rows with `channels` samples per pixel.
// 16-bit inputs are tone-mapped by dropping the low byte.
std::vector<std::uint8_t> read_png_generic(const std::string& path, int& width, int& height,
                                           int channels) {
    PngReadCloser ctx;
    ctx.fp = std::fopen(path.c_str(), "rb");
    if (!ctx.fp) throw DecodeError("cannot open PNG file: " + path);
    png_byte header[8];
    if (std::fread(header, 1, 8, ctx.fp) != 8 || png_sig_cmp(header, 0, 8))
        throw DecodeError("not a PNG file: " + path);
    ctx.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    ctx.info = png_create_info_struct(ctx.png);
    if (!ctx.png || !ctx.info) throw DecodeError("libpng initialization failed for " + path);
    if (setjmp(png_jmpbuf(ctx.png))) throw DecodeError("corrupt PNG: " + path);
    png_init_io(ctx.png, ctx.fp);
    png_set_sig_bytes(ctx.png, 8);
    png_read_info(ctx.png, ctx.info);

    width = static_cast<int>(png_get_image_width(ctx.png, ctx.info));
    height = static_cast<int>(png_get_image_height(ctx.png, ctx.info));
    const int color = png_get_color_type(ctx.png, ctx.info);
    const int depth = png_get_bit_depth(ctx.png, ctx.info);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(ctx.png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(ctx.png);
    if (png_get_valid(ctx.png, ctx.info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(ctx.png);
    if (depth == 16) png_set_strip_16(ctx.png); // keep the high byte
    if (channels == 3) {
        if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA)
            png_set_gray_to_rgb(ctx.png);
        png_set_strip_alpha(ctx.png);
    } else {
        if (color & PNG_COLOR_MASK_COLOR) png_set_rgb_to_gray_fixed(ctx.png, 1, -1, -1);
        png_set_strip_alpha(ctx.png);
    }
    png_read_update_info(ctx.png, ctx.info);

    std::vector<std::uint8_t> data(static_cast<std::size_t>(width) * height * channels);
    std::vector<png_bytep> rows(static_cast<std::size_t>(height));
    for (int y = 0; y < height; ++y)
        rows[static_cast<std::size_t>(y)] = data.data() + static_cast<std::size_t>(y) * width * channels;
    png_read_image(ctx.png, rows.data());
    png_read_end(ctx.png, nullptr);
    return data;
}

struct PngWriteCloser {
    png_structp png = nullptr;
    png_infop info = nullptr;
    std::FILE* fp = nullptr;
    ~PngWriteCloser() {
        if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
        if (fp) std::fclose(fp);
    }
};

void write_png_generic(const std::string& path, int width, int height, int channels,
                       const std::uint8_t* data) {
    PngWriteCloser ctx;
    ctx.fp = std::fopen(path.c_str(), "wb");
    if (!ctx.fp) throw DecodeError("cannot create PNG file: " + path);
    ctx.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    ctx.info = png_create_info_struct(ctx.png);
    if (!ctx.png || !ctx.info) throw DecodeError("libpng initialization failed for " + path);
    if (setjmp(png_jmpbuf(ctx.png))) throw DecodeError("PNG write failed: " + path);
    png_init_io(ctx.png, ctx.fp);
    png_set_IHDR(ctx.png, ctx.info, static_cast<png_uint_32>(width),
                 static_cast<png_uint_32>(height), 8,
                 channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(ctx.png, ctx.info);
    std::vector<png_bytep> rows(static_cast<std::size_t>(height));
    for (int y = 0; y < height; ++y)
        rows[static_cast<std::size_t>(y)] =
            const_cast<png_bytep>(data + static_cast<std::size_t>(y) * width * channels);
    png_write_image(ctx.png, rows.data());
    png_write_end(ctx.png, nullptr);
}

} // namespace

Image read_image_rgb8(const std::string& path) {
    Image img;
    img.data = read_png_generic(path, img.width, img.height, 3);
    return img;
}

std::vector<std::uint8_t> read_image_gray8(const std::string& path, int& width, int& height) {
    return read_png_generic(path, width, height, 1);
}

void write_png_rgb8(const std::string& path, const Image& img) {
    write_png_generic(path, img.width, img.height, 3, img.data.data());
}

void write_png_gray8(const std::string& path, int width, int height,
                     const std::vector<std::uint8_t>& data) {
    write_png_generic(path, width, height, 1, data.data());
}

nlohmann::json DatasetIndex::to_json() const {
    nlohmann::json j;
    j["root"] = root;
    j["entries"] = nlohmann::json::array();
    for (const auto& e : entries)
        j["entries"].push_back({{"split", e.split},
                                {"city", e.city},
                                {"image", e.image_path},
                                {"label", e.label_path},
                                {"frame", e.frame_id}});
    j["warnings"] = warnings;
    return j;
}

DatasetIndex scan(const std::string& root) {
    DatasetIndex index;
    index.root = root;
    if (!fs::exists(root)) throw DecodeError("dataset root does not exist: " + root);
    const fs::path images_root = fs::path(root) / "leftImg8bit";
    if (!fs::exists(images_root)) return index;

    const std::string image_suffix = "_leftImg8bit.png";
    const std::string label_suffix = "_gtFine_labelIds.png";

    std::vector<std::string> splits;
    for (const auto& d : fs::directory_iterator(images_root))
        if (d.is_directory()) splits.push_back(d.path().filename().string());
    std::sort(splits.begin(), splits.end());
    for (const auto& split : splits) {
        std::vector<std::string> cities;
        for (const auto& d : fs::directory_iterator(images_root / split))
            if (d.is_directory()) cities.push_back(d.path().filename().string());
        std::sort(cities.begin(), cities.end());
        for (const auto& city : cities) {
            std::vector<std::string> files;
            for (const auto& f : fs::directory_iterator(images_root / split / city)) {
                const std::string name = f.path().filename().string();
                if (name.size() > image_suffix.size() &&
                    name.compare(name.size() - image_suffix.size(), image_suffix.size(),
                                 image_suffix) == 0)
                    files.push_back(name);
            }
            std::sort(files.begin(), files.end());
            for (const auto& name : files) {
                const std::string frame = name.substr(0, name.size() - image_suffix.size());
                const fs::path label =
                    fs::path(root) / "gtFine" / split / city / (frame + label_suffix);
                if (!fs::exists(label)) {
                    index.warnings.push_back("unpaired image (no labelIds file): " +
                                             (images_root / split / city / name).string());
                    continue;
                }
                index.entries.push_back({split, city,
                                         (images_root / split / city / name).string(),
                                         label.string(), frame});
            }
        }
    }
    return index;
}

Sample load_sample(const DatasetEntry& entry, const LabelMapping& mapping,
                   std::optional<std::pair<int, int>> target_wh) {
    if (mapping.drivable_ids.empty())
        throw ConfigError("load_sample: drivable id set must be non-empty");
    Sample s;
    s.image = read_image_rgb8(entry.image_path);
    int lw = 0, lh = 0;
    const auto labels = read_image_gray8(entry.label_path, lw, lh);
    if (lw != s.image.width || lh != s.image.height)
        throw DecodeError("label size differs from image for frame " + entry.frame_id);
    s.mask = Mask::zeros(lh, lw);
    for (std::size_t i = 0; i < labels.size(); ++i)
        s.mask.data[i] = mapping.drivable_ids.count(labels[i]) ? 1 : 0;
    s.meta = {entry.frame_id, entry.city, entry.split};
    if (target_wh) {
        const auto [tw, th] = *target_wh;
        if (tw != s.image.width || th != s.image.height) {
            s.image = resize_bilinear(s.image, th, tw);
            s.mask = resize_nearest(s.mask, th, tw);
        }
    }
    return s;
}

std::vector<Sample> synth_generate(int n, int width, int height, std::uint64_t seed) {
    std::vector<Sample> out;
    out.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        RngStream rng = RngStream::derive(seed, static_cast<std::uint64_t>(i));
        Sample s;
        s.meta.id = "synth_" + std::to_string(i);
        s.meta.split = "synth";
        s.image.height = height;
        s.image.width = width;
        s.image.data.resize(static_cast<std::size_t>(height) * width * 3);
        s.mask = Mask::zeros(height, width);

        const int horizon = static_cast<int>(std::lround(height * rng.uniform(0.30, 0.45)));
        const double top_half = width * rng.uniform(0.05, 0.12);
        const double bottom_half = width * rng.uniform(0.35, 0.49);
        const double top_cx = width * rng.uniform(0.45, 0.55);
        const double bottom_cx = width * rng.uniform(0.40, 0.60);

        // base colors, jittered per scene
        const double sky_r = rng.uniform(110, 150), sky_g = rng.uniform(150, 190),
                     sky_b = rng.uniform(200, 240);
        const double grass_r = rng.uniform(60, 110), grass_g = rng.uniform(110, 160),
                     grass_b = rng.uniform(40, 80);
        const double road_v = rng.uniform(90, 140);

        for (int y = 0; y < height; ++y) {
            double half = 0.0, cx = 0.0;
            const bool below_horizon = y >= horizon;
            if (below_horizon) {
                const double t = height > horizon + 1
                                     ? static_cast<double>(y - horizon) / (height - 1 - horizon)
                                     : 1.0;
                half = top_half + t * (bottom_half - top_half);
                cx = top_cx + t * (bottom_cx - top_cx);
            }
            for (int x = 0; x < width; ++x) {
                const double noise = rng.uniform(-12.0, 12.0);
                double r, g, b;
                const bool road = below_horizon && std::fabs(x - cx) <= half;
                if (road) {
                    s.mask.at(y, x) = 1;
                    r = g = b = road_v + noise;
                } else if (!below_horizon) {
                    const double t = horizon > 1 ? static_cast<double>(y) / horizon : 0.0;
                    r = sky_r + 20 * t + noise;
                    g = sky_g + 15 * t + noise;
                    b = sky_b + noise;
                } else {
                    r = grass_r + noise;
                    g = grass_g + noise;
                    b = grass_b + noise;
                }
                s.image.at(y, x, 0) = clamp_u8(r);
                s.image.at(y, x, 1) = clamp_u8(g);
                s.image.at(y, x, 2) = clamp_u8(b);
            }
        }
        out.push_back(std::move(s));
    }
    return out;
}

void save_flat_sample(const Sample& s, const std::string& dir, const std::string& name) {
    fs::create_directories(fs::path(dir) / "images");
    fs::create_directories(fs::path(dir) / "masks");
    write_png_rgb8((fs::path(dir) / "images" / (name + ".png")).string(), s.image);
    std::vector<std::uint8_t> m(s.mask.data.size());
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = s.mask.data[i] ? 255 : 0;
    write_png_gray8((fs::path(dir) / "masks" / (name + ".png")).string(), s.mask.width,
                    s.mask.height, m);
}

std::vector<Sample> load_flat(const std::string& dir) {
    const fs::path images = fs::path(dir) / "images";
    const fs::path masks = fs::path(dir) / "masks";
    if (!fs::exists(images) || !fs::exists(masks))
        throw DecodeError("flat corpus needs images/ and masks/ under " + dir);
    std::vector<std::string> names;
    for (const auto& f : fs::directory_iterator(images))
        if (f.path().extension() == ".png") names.push_back(f.path().stem().string());
    std::sort(names.begin(), names.end());
    std::vector<Sample> out;
    for (const auto& name : names) {
        Sample s;
        s.image = read_image_rgb8((images / (name + ".png")).string());
        int w = 0, h = 0;
        const auto gray = read_image_gray8((masks / (name + ".png")).string(), w, h);
        if (w != s.image.width || h != s.image.height)
            throw DecodeError("mask size differs from image for " + name);
        s.mask = Mask::zeros(h, w);
        for (std::size_t i = 0; i < gray.size(); ++i) s.mask.data[i] = gray[i] >= 128 ? 1 : 0;
        s.meta.id = name;
        out.push_back(std::move(s));
    }
    return out;
}

std::vector<Sample> load_dataset(const std::string& dir, const LabelMapping& mapping,
                                 std::optional<std::pair<int, int>> target_wh) {
    if (fs::exists(fs::path(dir) / "leftImg8bit")) {
        std::vector<Sample> out;
        for (const auto& entry : scan(dir).entries)
            out.push_back(load_sample(entry, mapping, target_wh));
        return out;
    }
    auto out = load_flat(dir);
    if (target_wh)
        for (auto& s : out) {
            const auto [tw, th] = *target_wh;
            if (tw != s.image.width || th != s.image.height) {
                s.image = resize_bilinear(s.image, th, tw);
                s.mask = resize_nearest(s.mask, th, tw);
            }
        }
    return out;
}

} // namespace caunet
