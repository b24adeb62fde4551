#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "caunet/augment.hpp"
#include "caunet/data_io.hpp"

using namespace caunet;

namespace {

Sample make_sample(int h, int w, std::uint64_t seed) {
    return synth_generate(1, w, h, seed)[0];
}

bool same_sample(const Sample& a, const Sample& b) {
    return a.image.data == b.image.data && a.mask.data == b.mask.data;
}

} // namespace

TEST_CASE("identity parameterizations are exact") {
    const Sample s = make_sample(48, 64, 3);

    CHECK(same_sample(rotate(s, 0.0), s));
    {
        const Sample c = crop(s, 0, 0, s.image.height, s.image.width);
        CHECK(same_sample(c, s));
    }
    CHECK(apply_gamma(s.image, 1.0).data == s.image.data);
    CHECK(posterize(s.image, 8).data == s.image.data);
    CHECK(fog(s.image, 0.0).data == s.image.data);
    CHECK(motion_blur(s.image, 1, 30.0).data == s.image.data);
    CHECK(scale_about_center(s, 1.0).image.data == s.image.data);
    CHECK(color_jitter(s.image, 1.0, 1.0, 1.0).data == s.image.data);
    CHECK(hue_saturation(s.image, 0.0, 1.0, 1.0).data == s.image.data);
    CHECK(sunflare(s.image, 0.5, 0.5, 0.1, 0.0).data == s.image.data);
}

TEST_CASE("hflip is an involution and moves the mask with the image") {
    const Sample s = make_sample(32, 40, 4);
    const Sample f = hflip(s);
    CHECK_FALSE(same_sample(f, s));
    CHECK(same_sample(hflip(f), s));
    for (int y = 0; y < s.mask.height; ++y)
        for (int x = 0; x < s.mask.width; ++x)
            CHECK(f.mask.at(y, x) == s.mask.at(y, s.mask.width - 1 - x));
}

TEST_CASE("photometric transforms never touch the mask") {
    const Sample s = make_sample(32, 32, 5);
    AugPipelineSpec spec = AugPipelineSpec::heavy(11);
    // keep only the photometric steps, forced to fire
    AugPipelineSpec photo;
    photo.master_seed = 11;
    for (const auto& st : spec.steps)
        if (st.kind != "random_crop" && st.kind != "rotate" && st.kind != "hflip") {
            AugStep forced = st;
            forced.probability = 1.0;
            photo.steps.push_back(forced);
        }
    CHECK(photo.steps.size() >= 10);
    const Sample out = apply_pipeline(photo, s, 0, 0);
    CHECK(out.mask.data == s.mask.data); // bitwise mask invariance
    CHECK(out.image.data != s.image.data);
}

TEST_CASE("geometric mask consistency: rotation keeps image and mask aligned") {
    Sample s = make_sample(40, 40, 6);
    // paint the drivable region pure red so it is recoverable from the image
    for (int y = 0; y < 40; ++y)
        for (int x = 0; x < 40; ++x) {
            s.image.at(y, x, 0) = s.mask.at(y, x) ? 255 : 0;
            s.image.at(y, x, 1) = 0;
            s.image.at(y, x, 2) = s.mask.at(y, x) ? 0 : 255;
        }
    const Sample r = rotate(s, 17.0);
    // nearest-neighbour mask and bilinear image agree except at boundaries;
    // require interior agreement: strongly red pixels must be masked 1
    int disagree = 0, strong = 0;
    for (int y = 0; y < 40; ++y)
        for (int x = 0; x < 40; ++x) {
            if (r.image.at(y, x, 0) > 240 && r.image.at(y, x, 2) < 15) {
                ++strong;
                if (r.mask.at(y, x) != 1) ++disagree;
            }
        }
    CHECK(strong > 50);
    CHECK(disagree == 0);
}

TEST_CASE("crop bounds are enforced") {
    const Sample s = make_sample(16, 16, 7);
    CHECK_THROWS_AS(crop(s, 0, 0, 17, 16), ParameterError);
    CHECK_THROWS_AS(crop(s, 8, 8, 9, 8), ParameterError);
    CHECK_THROWS_AS(crop(s, -1, 0, 4, 4), ParameterError);
}

TEST_CASE("parameter range validation") {
    const Sample s = make_sample(16, 16, 8);
    CHECK_THROWS_AS(apply_gamma(s.image, 0.3), ParameterError);
    CHECK_THROWS_AS(apply_gamma(s.image, 2.5), ParameterError);
    CHECK_THROWS_AS(posterize(s.image, 0), ParameterError);
    CHECK_THROWS_AS(posterize(s.image, 9), ParameterError);
    CHECK_THROWS_AS(downscale(s.image, 0.1), ParameterError);
    CHECK_THROWS_AS(motion_blur(s.image, 4, 0.0), ParameterError); // even length
}

TEST_CASE("gamma LUT matches a direct per-pixel power law") {
    const Sample s = make_sample(8, 8, 9);
    const double g = 1.7;
    const Image out = apply_gamma(s.image, g);
    for (std::size_t i = 0; i < out.data.size(); ++i) {
        const double v = s.image.data[i] / 255.0;
        CHECK(out.data[i] == clamp_u8(std::pow(v, g) * 255.0));
    }
}

TEST_CASE("posterize keeps the top bits") {
    Image img = Image::filled(1, 1, 0b10110111, 0b01111111, 0xFF);
    const Image out = posterize(img, 3);
    CHECK(out.at(0, 0, 0) == 0b10100000);
    CHECK(out.at(0, 0, 1) == 0b01100000);
    CHECK(out.at(0, 0, 2) == 0b11100000);
}

TEST_CASE("clahe single-tile mapping matches a scalar oracle") {
    // two-level 8x8 tile: 48 dark pixels at level 50, 16 bright at level 200
    std::vector<int> hist(256, 0);
    hist[50] = 48;
    hist[200] = 16;
    const auto mapping = clahe_tile_mapping(hist, 64, 2.0);
    // clip = max(1, 2*64/256) = 1 -> both occupied bins clipped to 1,
    // excess 62 spread evenly: 62/256 = 0 each, remainder 62 to bins 0..61
    // cdf(50) = 51*1 + 1 = 52? -> recompute directly here
    std::vector<double> h(256, 0);
    h[50] = 48;
    h[200] = 16;
    const double clip = std::max(1.0, 2.0 * 64 / 256);
    double excess = 0;
    for (auto& v : h)
        if (v > clip) {
            excess += v - clip;
            v = clip;
        }
    const int even = static_cast<int>(excess / 256);
    int rem = static_cast<int>(excess) - even * 256;
    for (int i = 0; i < 256; ++i) h[static_cast<std::size_t>(i)] += even + (i < rem ? 1 : 0);
    double cdf = 0;
    for (int i = 0; i < 256; ++i) {
        cdf += h[static_cast<std::size_t>(i)];
        const auto want = static_cast<std::uint8_t>(255.0 * cdf / 64.0 + 0.5);
        CHECK(mapping[static_cast<std::size_t>(i)] == want);
    }
}

TEST_CASE("heavy pipeline is byte-identical across repeated application") {
    const auto corpus = synth_generate(20, 48, 48, 21);
    const AugPipelineSpec spec = AugPipelineSpec::heavy(99);
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        const Sample a = apply_pipeline(spec, corpus[i], static_cast<long long>(i), 3);
        const Sample b = apply_pipeline(spec, corpus[i], static_cast<long long>(i), 3);
        CHECK(same_sample(a, b));
        // a different epoch or sample key gives a different stream
        const Sample c = apply_pipeline(spec, corpus[i], static_cast<long long>(i), 4);
        const Sample d = apply_pipeline(spec, corpus[i], static_cast<long long>(i) + 100, 3);
        CHECK((!same_sample(a, c) || !same_sample(a, d)));
    }
}

TEST_CASE("pipeline results do not depend on processing order") {
    const auto corpus = synth_generate(6, 32, 32, 31);
    const AugPipelineSpec spec = AugPipelineSpec::heavy(5);
    std::vector<Sample> forward_order, reverse_order(corpus.size());
    for (std::size_t i = 0; i < corpus.size(); ++i)
        forward_order.push_back(apply_pipeline(spec, corpus[i], static_cast<long long>(i), 0));
    for (std::size_t i = corpus.size(); i-- > 0;)
        reverse_order[i] = apply_pipeline(spec, corpus[i], static_cast<long long>(i), 0);
    for (std::size_t i = 0; i < corpus.size(); ++i)
        CHECK(same_sample(forward_order[i], reverse_order[i]));
}

TEST_CASE("pipeline spec JSON round trip") {
    const AugPipelineSpec spec = AugPipelineSpec::heavy(1234);
    const AugPipelineSpec back = AugPipelineSpec::from_json(spec.to_json());
    CHECK(back.master_seed == spec.master_seed);
    CHECK(back.profile == spec.profile);
    REQUIRE(back.steps.size() == spec.steps.size());
    for (std::size_t i = 0; i < spec.steps.size(); ++i) {
        CHECK(back.steps[i].kind == spec.steps[i].kind);
        CHECK(back.steps[i].probability == spec.steps[i].probability);
    }
    // round trip preserves behaviour
    const Sample s = make_sample(32, 32, 41);
    CHECK(same_sample(apply_pipeline(spec, s, 0, 0), apply_pipeline(back, s, 0, 0)));
}

TEST_CASE("provenance records every fired step") {
    const Sample s = make_sample(32, 32, 51);
    AugPipelineSpec spec = AugPipelineSpec::light(7);
    for (auto& st : spec.steps) st.probability = 1.0;
    nlohmann::json prov;
    (void)apply_pipeline(spec, s, 0, 0, &prov);
    REQUIRE(prov.is_array());
    CHECK(prov.size() == spec.steps.size());
    for (const auto& rec : prov) {
        CHECK(rec.contains("kind"));
        CHECK(rec.contains("fired"));
        CHECK(rec.at("fired").get<bool>());
    }
}

TEST_CASE("mixcut pastes a rectangle of b into a") {
    const Sample a = make_sample(32, 32, 61);
    const Sample b = make_sample(32, 32, 62);
    RngStream rng(63);
    const Sample m = mixcut(a, b, rng);
    int from_a = 0, from_b = 0, other = 0;
    for (std::size_t i = 0; i < m.image.data.size(); ++i) {
        if (m.image.data[i] == a.image.data[i]) ++from_a;
        else if (m.image.data[i] == b.image.data[i]) ++from_b;
        else ++other;
    }
    CHECK(other == 0);
    CHECK(from_b > 0);
    CHECK(from_a > from_b); // patch area is at most 0.4 * 0.4-ish of the frame

    const Sample small = make_sample(16, 16, 64);
    RngStream rng2(65);
    CHECK_THROWS_AS(mixcut(a, small, rng2), ParameterError);
}
