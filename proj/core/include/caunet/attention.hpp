#pragma once

#include <string>

#include "caunet/tensor.hpp"

namespace caunet {

// Shared two-layer MLP of the channel gate, realized as two 1x1 convolutions
// without bias.  w0: (C/r) x C x 1 x 1, w1: C x (C/r) x 1 x 1.
template <typename T>
struct ChannelAttentionParams {
    Tensor<T> w0;
    Tensor<T> w1;
    int reduction = 16;
};

// 7x7 convolution over the 2-channel concatenated descriptor, with bias.
template <typename T>
struct SpatialAttentionParams {
    Tensor<T> w7;   // 1 x 2 x 7 x 7
    Tensor<T> bias; // 1
};

// Per-channel gate in (0,1): sigmoid of the shared MLP applied to the
// average-pooled and max-pooled spatial descriptors, summed.
template <typename T>
Tensor<T> channel_attention(const Tensor<T>& f, const ChannelAttentionParams<T>& params) {
    detail::require_4d(f.shape(), "channel_attention input");
    const int c = f.dim(1);
    if (params.reduction < 1 || c % params.reduction != 0)
        throw ConfigError("channel_attention: channel count " + std::to_string(c) +
                          " is not divisible by reduction ratio " +
                          std::to_string(params.reduction));
    const ConvSpec one{1, 1, 1, 0, 1};
    const Tensor<T> none;
    auto mlp = [&](const Tensor<T>& descriptor) {
        return conv2d(relu(conv2d(descriptor, params.w0, none, one)), params.w1, none, one);
    };
    const Tensor<T> avg_branch = mlp(global_pool(f, ReduceMode::Avg));
    const Tensor<T> max_branch = mlp(global_pool(f, ReduceMode::Max));
    return sigmoid(add(avg_branch, max_branch));
}

// Per-pixel gate in (0,1): sigmoid of the 7x7 convolution over the stacked
// channel-mean and channel-max maps, zero padding 3 to keep H x W.
template <typename T>
Tensor<T> spatial_attention(const Tensor<T>& f, const SpatialAttentionParams<T>& params) {
    detail::require_4d(f.shape(), "spatial_attention input");
    const Tensor<T> descriptor =
        concat_channels(channel_reduce(f, ReduceMode::Avg), channel_reduce(f, ReduceMode::Max));
    const ConvSpec seven{7, 7, 1, 3, 1};
    return sigmoid(conv2d(descriptor, params.w7, params.bias, seven));
}

// Residual attention block: F + (F (.) Mc(F)) (.) Ms(F (.) Mc(F)).
template <typename T>
Tensor<T> cbam_block(const Tensor<T>& f, const ChannelAttentionParams<T>& cp,
                     const SpatialAttentionParams<T>& sp) {
    const Tensor<T> f1 = mul(f, channel_attention(f, cp));
    const Tensor<T> f2 = mul(f1, spatial_attention(f1, sp));
    return add(f, f2);
}

} // namespace caunet
