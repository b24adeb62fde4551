#pragma once

#include <string>

#include <json.hpp>

#include "caunet/network.hpp"

namespace caunet {

// On-disk layout: 8-byte magic "CAUNET01", little-endian u32 JSON header
// length, the JSON header, then one flat little-endian float32 array per
// header entry in header order. Parameters come first (parameters() order),
// then batchnorm running statistics.
struct CheckpointMeta {
    int epoch = -1;
    double val_iou = -1;
    nlohmann::json extra;
};

void save_checkpoint(const std::string& path, const CAUNet<float>& net,
                     const CheckpointMeta& meta);

// Rebuilds the network from the header config; throws DecodeError on any
// structural mismatch.
CAUNet<float> load_checkpoint(const std::string& path, CheckpointMeta* meta = nullptr);

} // namespace caunet
