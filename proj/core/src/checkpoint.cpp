#include "caunet/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include "caunet/error.hpp"
#include "caunet/rng.hpp"

namespace caunet {

namespace {

constexpr char kMagic[8] = {'C', 'A', 'U', 'N', 'E', 'T', '0', '1'};

static_assert(sizeof(float) == 4, "checkpoint format assumes 4-byte floats");

void write_u32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::istream& in, const std::string& path) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw DecodeError("checkpoint truncated: " + path);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

bool host_is_little_endian() {
    const std::uint32_t probe = 1;
    unsigned char first;
    std::memcpy(&first, &probe, 1);
    return first == 1;
}

void write_floats(std::ostream& out, const float* data, std::size_t count) {
    if (host_is_little_endian()) {
        out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(count * 4));
        return;
    }
    for (std::size_t i = 0; i < count; ++i) {
        std::uint32_t bits;
        std::memcpy(&bits, data + i, 4);
        write_u32(out, bits);
    }
}

void read_floats(std::istream& in, float* data, std::size_t count, const std::string& path) {
    if (host_is_little_endian()) {
        in.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(count * 4));
        if (!in) throw DecodeError("checkpoint truncated: " + path);
        return;
    }
    for (std::size_t i = 0; i < count; ++i) {
        const std::uint32_t bits = read_u32(in, path);
        std::memcpy(data + i, &bits, 4);
    }
}

} // namespace

void save_checkpoint(const std::string& path, const CAUNet<float>& net,
                     const CheckpointMeta& meta) {
    auto& mutable_net = const_cast<CAUNet<float>&>(net);
    auto params = mutable_net.parameters();
    auto norms = mutable_net.norm_states();

    nlohmann::json entries = nlohmann::json::array();
    for (auto& [name, tensor] : params)
        entries.push_back({{"name", name}, {"count", tensor.size()}});
    for (auto& [name, state] : norms) {
        entries.push_back({{"name", name + ".running_mean"},
                           {"count", static_cast<long long>(state->running_mean.size())}});
        entries.push_back({{"name", name + ".running_var"},
                           {"count", static_cast<long long>(state->running_var.size())}});
    }
    nlohmann::json header = {{"format", "caunet-checkpoint"},
                             {"version", 1},
                             {"network", net.config.to_json()},
                             {"epoch", meta.epoch},
                             {"val_iou", meta.val_iou},
                             {"entries", std::move(entries)}};
    if (!meta.extra.is_null()) header["meta"] = meta.extra;
    const std::string header_text = header.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw DecodeError("cannot open for writing: " + path);
    out.write(kMagic, sizeof(kMagic));
    write_u32(out, static_cast<std::uint32_t>(header_text.size()));
    out.write(header_text.data(), static_cast<std::streamsize>(header_text.size()));
    for (auto& [name, tensor] : params)
        write_floats(out, tensor.values().data(), tensor.values().size());
    for (auto& [name, state] : norms) {
        write_floats(out, state->running_mean.data(), state->running_mean.size());
        write_floats(out, state->running_var.data(), state->running_var.size());
    }
    if (!out) throw DecodeError("write failed: " + path);
}

CAUNet<float> load_checkpoint(const std::string& path, CheckpointMeta* meta) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DecodeError("cannot open checkpoint: " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kMagic, 8) != 0)
        throw DecodeError("not a checkpoint file: " + path);
    const std::uint32_t header_len = read_u32(in, path);
    std::string header_text(header_len, '\0');
    in.read(header_text.data(), header_len);
    if (!in) throw DecodeError("checkpoint truncated: " + path);

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(header_text);
    } catch (const nlohmann::json::exception& e) {
        throw DecodeError("bad checkpoint header in " + path + ": " + e.what());
    }
    if (header.value("format", "") != "caunet-checkpoint")
        throw DecodeError("unrecognized checkpoint format in " + path);

    const NetworkConfig config = NetworkConfig::from_json(header.at("network"));
    RngStream rng(0); // shapes only; every value is overwritten below
    CAUNet<float> net = build<float>(config, rng);
    auto params = net.parameters();
    auto norms = net.norm_states();

    std::vector<std::pair<std::string, std::pair<float*, std::size_t>>> slots;
    for (auto& [name, tensor] : params)
        slots.emplace_back(name, std::make_pair(tensor.values().data(), tensor.values().size()));
    for (auto& [name, state] : norms) {
        slots.emplace_back(name + ".running_mean",
                           std::make_pair(state->running_mean.data(), state->running_mean.size()));
        slots.emplace_back(name + ".running_var",
                           std::make_pair(state->running_var.data(), state->running_var.size()));
    }

    const auto& entries = header.at("entries");
    if (entries.size() != slots.size())
        throw DecodeError("checkpoint entry count " + std::to_string(entries.size()) +
                          " does not match network layout (" + std::to_string(slots.size()) +
                          ") in " + path);
    for (std::size_t i = 0; i < slots.size(); ++i) {
        const auto& entry = entries[i];
        if (entry.at("name").get<std::string>() != slots[i].first ||
            entry.at("count").get<long long>() !=
                static_cast<long long>(slots[i].second.second))
            throw DecodeError("checkpoint entry '" + entry.at("name").get<std::string>() +
                              "' does not match expected '" + slots[i].first + "' in " + path);
        read_floats(in, slots[i].second.first, slots[i].second.second, path);
    }
    if (meta != nullptr) {
        meta->epoch = header.value("epoch", -1);
        meta->val_iou = header.value("val_iou", -1.0);
        meta->extra = header.value("meta", nlohmann::json());
    }
    return net;
}

} // namespace caunet
