#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "caunet/attention.hpp"
#include "gradcheck.hpp"

using namespace caunet;
using testutil::GradCheck;
using testutil::random_tensor;

namespace {

template <typename T>
ChannelAttentionParams<T> zero_channel(int c, int r) {
    ChannelAttentionParams<T> p;
    p.reduction = r;
    p.w0 = Tensor<T>::zeros({c / r, c, 1, 1}, false);
    p.w1 = Tensor<T>::zeros({c, c / r, 1, 1}, false);
    return p;
}

template <typename T>
SpatialAttentionParams<T> zero_spatial() {
    SpatialAttentionParams<T> p;
    p.w7 = Tensor<T>::zeros({1, 2, 7, 7}, false);
    p.bias = Tensor<T>::zeros({1}, false);
    return p;
}

} // namespace

TEST_CASE("zero weights give 0.5 attention maps") {
    RngStream rng(5);
    auto f = random_tensor({2, 4, 8, 8}, rng, -1, 1, false);
    auto cp = zero_channel<double>(4, 2);
    auto sp = zero_spatial<double>();

    auto mc = channel_attention(f, cp);
    CHECK(mc.shape() == Shape{2, 4, 1, 1});
    for (double v : mc.values()) CHECK(v == doctest::Approx(0.5).epsilon(1e-12));

    auto ms = spatial_attention(f, sp);
    CHECK(ms.shape() == Shape{2, 1, 8, 8});
    for (double v : ms.values()) CHECK(v == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("zero-weight cbam output is 1.25 * F") {
    RngStream rng(6);
    // 64-bit
    {
        auto f = random_tensor({1, 4, 6, 6}, rng, -2, 2, false);
        auto out = cbam_block(f, zero_channel<double>(4, 2), zero_spatial<double>());
        for (std::size_t i = 0; i < out.values().size(); ++i)
            CHECK(out.values()[i] ==
                  doctest::Approx(1.25 * f.values()[i]).epsilon(1e-12));
    }
    // 32-bit
    {
        std::vector<float> v(4 * 6 * 6);
        for (auto& x : v) x = static_cast<float>(rng.uniform(-2, 2));
        Tensor<float> f({1, 4, 6, 6}, std::move(v), false);
        auto out = cbam_block(f, zero_channel<float>(4, 2), zero_spatial<float>());
        for (std::size_t i = 0; i < out.values().size(); ++i)
            CHECK(std::abs(out.values()[i] - 1.25f * f.values()[i]) < 1e-6f);
    }
}

TEST_CASE("channel attention hand example with identity MLP") {
    // C=2, r=1, identity weights: per-channel (avg, max) = (1, 2) and (3, 5)
    // give sigma(1+2) and sigma(3+5).
    ChannelAttentionParams<double> p;
    p.reduction = 1;
    p.w0 = Tensor<double>({2, 2, 1, 1}, {1, 0, 0, 1}, false);
    p.w1 = Tensor<double>({2, 2, 1, 1}, {1, 0, 0, 1}, false);
    // channel 0 holds {0, 2} (avg 1, max 2); channel 1 holds {1, 5} (avg 3, max 5)
    Tensor<double> f({1, 2, 1, 2}, {0, 2, 1, 5}, false);
    auto mc = channel_attention(f, p);
    const auto sig = [](double z) { return 1.0 / (1.0 + std::exp(-z)); };
    CHECK(mc.values()[0] == doctest::Approx(sig(3)).epsilon(1e-12));
    CHECK(mc.values()[1] == doctest::Approx(sig(8)).epsilon(1e-12));
}

TEST_CASE("channel attention rejects a non-dividing reduction ratio") {
    ChannelAttentionParams<double> p = zero_channel<double>(4, 2);
    p.reduction = 3;
    RngStream rng(7);
    auto f = random_tensor({1, 4, 2, 2}, rng, -1, 1, false);
    CHECK_THROWS_AS(channel_attention(f, p), ConfigError);
}

TEST_CASE("attention gradients") {
    RngStream rng(8);
    GradCheck gc;
    const int c = 4, r = 2;
    auto f = random_tensor({2, c, 8, 8}, rng, -1, 1);
    ChannelAttentionParams<double> cp;
    cp.reduction = r;
    cp.w0 = random_tensor({c / r, c, 1, 1}, rng);
    cp.w1 = random_tensor({c, c / r, 1, 1}, rng);
    SpatialAttentionParams<double> sp;
    sp.w7 = random_tensor({1, 2, 7, 7}, rng, -0.3, 0.3);
    sp.bias = random_tensor({1}, rng, -0.3, 0.3);

    std::vector<Tensor<double>> inputs{f, cp.w0, cp.w1, sp.w7, sp.bias};
    CHECK(gc.run(inputs, [&] { return sum_all(mul(channel_attention(f, cp), channel_attention(f, cp))); }) <
          1e-4);
    CHECK(gc.run(inputs, [&] { return sum_all(mul(spatial_attention(f, sp), spatial_attention(f, sp))); }) <
          1e-4);
    // linear random-weighted loss: a quadratic one grows to O(100) and its FD
    // noise swamps the small MLP-weight gradients
    auto rw = random_tensor({2, c, 8, 8}, rng, 0.5, 1.5, false);
    CHECK(gc.run(inputs, [&] { return sum_all(mul(cbam_block(f, cp, sp), rw)); }) < 1e-4);
}
