#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "caunet/attention.hpp"
#include "caunet/tensor.hpp"

namespace caunet {

struct NetworkConfig {
    int in_channels = 3;
    int base_channels = 16;
    int depth = 4;
    int reduction_ratio = 16;
    int dropblock_block_size = 7;
    double dropblock_prob_start = 0.05;
    double dropblock_prob_end = 0.25;
    int out_channels = 1;
    bool use_attention = true;

    int bottleneck_channels() const { return base_channels << depth; }
    int resolution_multiple() const { return 1 << depth; }
    // effective reduction ratio, clamped so the hidden width stays >= 1
    int effective_reduction() const {
        int r = reduction_ratio;
        while (r > 1 && bottleneck_channels() % r != 0) r /= 2;
        return r < 1 ? 1 : r;
    }

    nlohmann::json to_json() const {
        return {{"in_channels", in_channels},
                {"base_channels", base_channels},
                {"depth", depth},
                {"reduction_ratio", reduction_ratio},
                {"dropblock_block_size", dropblock_block_size},
                {"dropblock_prob_start", dropblock_prob_start},
                {"dropblock_prob_end", dropblock_prob_end},
                {"out_channels", out_channels},
                {"use_attention", use_attention}};
    }

    static NetworkConfig from_json(const nlohmann::json& j) {
        NetworkConfig c;
        c.in_channels = j.value("in_channels", c.in_channels);
        c.base_channels = j.value("base_channels", c.base_channels);
        c.depth = j.value("depth", c.depth);
        c.reduction_ratio = j.value("reduction_ratio", c.reduction_ratio);
        c.dropblock_block_size = j.value("dropblock_block_size", c.dropblock_block_size);
        c.dropblock_prob_start = j.value("dropblock_prob_start", c.dropblock_prob_start);
        c.dropblock_prob_end = j.value("dropblock_prob_end", c.dropblock_prob_end);
        c.out_channels = j.value("out_channels", c.out_channels);
        c.use_attention = j.value("use_attention", c.use_attention);
        return c;
    }
};

template <typename T>
struct Conv2dLayer {
    Tensor<T> weight;
    Tensor<T> bias;
    ConvSpec spec;
};

template <typename T>
struct DeconvLayer {
    Tensor<T> weight;
    Tensor<T> bias;
    int stride = 2;
};

template <typename T>
struct BatchNormLayer {
    Tensor<T> gamma;
    Tensor<T> beta;
    BatchNormState<T> state;
};

// Encoder block: conv-ReLU, conv-ReLU, dropblock, batchnorm.
template <typename T>
struct EncoderBlock {
    Conv2dLayer<T> conv1, conv2;
    BatchNormLayer<T> norm;
};

// Decoder block: transposed conv (halves channels), skip concat, conv-ReLU x2.
template <typename T>
struct DecoderBlock {
    DeconvLayer<T> up;
    Conv2dLayer<T> conv1, conv2;
};

template <typename T>
struct CAUNet {
    NetworkConfig config;
    std::vector<EncoderBlock<T>> encoder; // config.depth stages
    EncoderBlock<T> bottleneck;
    ChannelAttentionParams<T> channel_attn;
    SpatialAttentionParams<T> spatial_attn;
    std::vector<DecoderBlock<T>> decoder; // config.depth stages, deepest first
    Conv2dLayer<T> head;

    // Trainable parameters in a fixed (name, tensor) order; this order also
    // defines the checkpoint layout.
    std::vector<std::pair<std::string, Tensor<T>>> parameters() {
        std::vector<std::pair<std::string, Tensor<T>>> out;
        auto conv = [&](const std::string& name, Conv2dLayer<T>& l) {
            out.emplace_back(name + ".weight", l.weight);
            if (l.bias.defined()) out.emplace_back(name + ".bias", l.bias);
        };
        for (std::size_t i = 0; i < encoder.size(); ++i) {
            const std::string p = "enc" + std::to_string(i);
            conv(p + ".conv1", encoder[i].conv1);
            conv(p + ".conv2", encoder[i].conv2);
            out.emplace_back(p + ".norm.gamma", encoder[i].norm.gamma);
            out.emplace_back(p + ".norm.beta", encoder[i].norm.beta);
        }
        conv("bottleneck.conv1", bottleneck.conv1);
        conv("bottleneck.conv2", bottleneck.conv2);
        out.emplace_back("bottleneck.norm.gamma", bottleneck.norm.gamma);
        out.emplace_back("bottleneck.norm.beta", bottleneck.norm.beta);
        if (config.use_attention) {
            out.emplace_back("attn.channel.w0", channel_attn.w0);
            out.emplace_back("attn.channel.w1", channel_attn.w1);
            out.emplace_back("attn.spatial.w7", spatial_attn.w7);
            out.emplace_back("attn.spatial.bias", spatial_attn.bias);
        }
        for (std::size_t i = 0; i < decoder.size(); ++i) {
            const std::string p = "dec" + std::to_string(i);
            out.emplace_back(p + ".up.weight", decoder[i].up.weight);
            out.emplace_back(p + ".up.bias", decoder[i].up.bias);
            conv(p + ".conv1", decoder[i].conv1);
            conv(p + ".conv2", decoder[i].conv2);
        }
        conv("head", head);
        return out;
    }

    std::vector<std::pair<std::string, BatchNormState<T>*>> norm_states() {
        std::vector<std::pair<std::string, BatchNormState<T>*>> out;
        for (std::size_t i = 0; i < encoder.size(); ++i)
            out.emplace_back("enc" + std::to_string(i) + ".norm", &encoder[i].norm.state);
        out.emplace_back("bottleneck.norm", &bottleneck.norm.state);
        return out;
    }
};

namespace detail {

template <typename T>
Tensor<T> kaiming_conv_weight(Shape shape, int fan_in, RngStream& rng) {
    const double stddev = std::sqrt(2.0 / fan_in);
    std::vector<T> v(static_cast<std::size_t>(numel(shape)));
    for (auto& x : v) x = static_cast<T>(rng.normal(0.0, stddev));
    return Tensor<T>(std::move(shape), std::move(v), true);
}

template <typename T>
Conv2dLayer<T> make_conv3x3(int c_in, int c_out, RngStream& rng) {
    Conv2dLayer<T> l;
    l.spec = ConvSpec{3, 3, 1, 1, 1};
    l.weight = kaiming_conv_weight<T>({c_out, c_in, 3, 3}, c_in * 9, rng);
    l.bias = Tensor<T>::zeros({c_out}, true);
    return l;
}

template <typename T>
EncoderBlock<T> make_encoder_block(int c_in, int c_out, RngStream& rng) {
    EncoderBlock<T> b;
    b.conv1 = make_conv3x3<T>(c_in, c_out, rng);
    b.conv2 = make_conv3x3<T>(c_out, c_out, rng);
    b.norm.gamma = Tensor<T>::full({c_out}, T(1), true);
    b.norm.beta = Tensor<T>::zeros({c_out}, true);
    b.norm.state = BatchNormState<T>(c_out);
    return b;
}

} // namespace detail

template <typename T>
CAUNet<T> build(const NetworkConfig& config, RngStream& rng) {
    if (config.base_channels < 1 || config.depth < 1 || config.in_channels < 1 ||
        config.out_channels < 1)
        throw ConfigError("build: channel counts and depth must be positive");
    CAUNet<T> net;
    net.config = config;

    int c = config.base_channels;
    net.encoder.push_back(detail::make_encoder_block<T>(config.in_channels, c, rng));
    for (int i = 1; i < config.depth; ++i) {
        net.encoder.push_back(detail::make_encoder_block<T>(c, 2 * c, rng));
        c *= 2;
    }
    const int cb = 2 * c; // bottleneck width = base * 2^depth
    net.bottleneck = detail::make_encoder_block<T>(c, cb, rng);

    if (config.use_attention) {
        const int r = config.effective_reduction();
        const int hidden = cb / r;
        net.channel_attn.reduction = r;
        net.channel_attn.w0 = detail::kaiming_conv_weight<T>({hidden, cb, 1, 1}, cb, rng);
        net.channel_attn.w1 = detail::kaiming_conv_weight<T>({cb, hidden, 1, 1}, hidden, rng);
        net.spatial_attn.w7 = detail::kaiming_conv_weight<T>({1, 2, 7, 7}, 2 * 49, rng);
        net.spatial_attn.bias = Tensor<T>::zeros({1}, true);
    }

    int cd = cb;
    for (int i = 0; i < config.depth; ++i) {
        DecoderBlock<T> d;
        d.up.stride = 2;
        d.up.weight = detail::kaiming_conv_weight<T>({cd, cd / 2, 2, 2}, cd * 4, rng);
        d.up.bias = Tensor<T>::zeros({cd / 2}, true);
        // after skip concat the block sees cd channels again
        d.conv1 = detail::make_conv3x3<T>(cd, cd / 2, rng);
        d.conv2 = detail::make_conv3x3<T>(cd / 2, cd / 2, rng);
        net.decoder.push_back(std::move(d));
        cd /= 2;
    }

    net.head.spec = ConvSpec{1, 1, 1, 0, 1};
    net.head.weight =
        detail::kaiming_conv_weight<T>({config.out_channels, cd, 1, 1}, cd, rng);
    net.head.bias = Tensor<T>::zeros({config.out_channels}, true);
    return net;
}

namespace detail {

template <typename T>
Tensor<T> run_encoder_block(EncoderBlock<T>& block, const Tensor<T>& x, bool training,
                            double drop_prob, int block_size, RngStream* rng) {
    Tensor<T> h = relu(conv2d(x, block.conv1.weight, block.conv1.bias, block.conv1.spec));
    h = relu(conv2d(h, block.conv2.weight, block.conv2.bias, block.conv2.spec));
    if (training && drop_prob > 0.0 && rng != nullptr)
        h = dropblock(h, std::min({block_size, h.dim(2), h.dim(3)}), drop_prob, *rng, true);
    return batchnorm2d(h, block.norm.gamma, block.norm.beta, block.norm.state, training);
}

} // namespace detail

// Full forward pass.  training selects batch statistics and dropblock with
// probability start + epoch_fraction * (end - start); rng may be null in
// eval mode.
template <typename T>
Tensor<T> forward(CAUNet<T>& net, const Tensor<T>& batch, bool training, double epoch_fraction,
                  RngStream* rng) {
    detail::require_4d(batch.shape(), "forward input");
    const int mult = net.config.resolution_multiple();
    if (batch.dim(2) % mult != 0 || batch.dim(3) % mult != 0)
        throw DimensionError("forward: input H and W must be multiples of " + std::to_string(mult) +
                             " at depth " + std::to_string(net.config.depth) + ", got " +
                             shape_str(batch.shape()));
    if (batch.dim(1) != net.config.in_channels)
        throw DimensionError("forward: input channel axis must be " +
                             std::to_string(net.config.in_channels));
    const double drop_prob =
        net.config.dropblock_prob_start +
        epoch_fraction * (net.config.dropblock_prob_end - net.config.dropblock_prob_start);
    const int bs = net.config.dropblock_block_size;

    std::vector<Tensor<T>> skips;
    Tensor<T> x = batch;
    for (auto& block : net.encoder) {
        x = detail::run_encoder_block(block, x, training, drop_prob, bs, rng);
        skips.push_back(x);
        x = maxpool2d(x);
    }
    x = detail::run_encoder_block(net.bottleneck, x, training, drop_prob, bs, rng);
    if (net.config.use_attention) x = cbam_block(x, net.channel_attn, net.spatial_attn);
    for (std::size_t i = 0; i < net.decoder.size(); ++i) {
        auto& d = net.decoder[i];
        x = conv_transpose2d(x, d.up.weight, d.up.bias, d.up.stride);
        x = concat_channels(skips[skips.size() - 1 - i], x);
        x = relu(conv2d(x, d.conv1.weight, d.conv1.bias, d.conv1.spec));
        x = relu(conv2d(x, d.conv2.weight, d.conv2.bias, d.conv2.spec));
    }
    return sigmoid(conv2d(x, net.head.weight, net.head.bias, net.head.spec));
}

template <typename T>
Tensor<T> forward_eval(CAUNet<T>& net, const Tensor<T>& batch) {
    return forward(net, batch, false, 0.0, nullptr);
}

template <typename T>
long long param_count(CAUNet<T>& net) {
    long long total = 0;
    for (auto& [name, tensor] : net.parameters()) total += tensor.size();
    return total;
}

} // namespace caunet
