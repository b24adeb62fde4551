#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "caunet/image.hpp"
#include "caunet/metrics.hpp"
#include "caunet/network.hpp"
#include "caunet/tensor.hpp"

namespace caunet {

struct TrainConfig {
    double lr_initial = 0.001;
    double lr_late = 0.0001;
    int lr_switch_epoch = 100;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    double weight_decay = 1e-5;
    int epochs = 100;
    int batch_size = 4;
    std::string augmentation_profile = "heavy"; // "light" | "heavy" | "none"
    std::uint64_t seed = 0;

    static TrainConfig from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
    void validate() const;

    double lr_at(int epoch) const { return epoch < lr_switch_epoch ? lr_initial : lr_late; }
    double dropblock_prob_fraction(int epoch) const {
        return epochs > 1 ? static_cast<double>(epoch) / (epochs - 1) : 0.0;
    }
};

struct EpochRow {
    int epoch = 0;
    double loss = 0;
    double acc = 0, iou = 0, dice = 0, spec = 0, mcc = 0;
    double val_loss = 0;
    double val_acc = 0, val_iou = 0, val_dice = 0, val_spec = 0, val_mcc = 0;
    double seconds = 0;
};

struct RunLog {
    std::vector<EpochRow> rows;
    nlohmann::json config_snapshot;
    int best_epoch = -1;
    double best_val_iou = -1;
    bool aborted_on_nan = false;

    static std::string csv_header();
    std::string csv() const;
};

// Mean binary cross-entropy over all pixels; probabilities are clamped to
// [1e-7, 1 - 1e-7] before the logs.
template <typename T>
Tensor<T> bce_loss(const Tensor<T>& pred, const Tensor<T>& truth) {
    if (pred.shape() != truth.shape())
        throw DimensionError("bce_loss: prediction " + shape_str(pred.shape()) +
                             " and truth " + shape_str(truth.shape()) + " differ");
    const T lo = static_cast<T>(1e-7), hi = static_cast<T>(1.0 - 1e-7);
    const auto& pv = pred.values();
    const auto& yv = truth.values();
    const long long n = pred.size();
    double acc = 0.0;
    for (long long i = 0; i < n; ++i) {
        const T p = std::clamp(pv[static_cast<std::size_t>(i)], lo, hi);
        const T y = yv[static_cast<std::size_t>(i)];
        acc -= y * std::log(p) + (T(1) - y) * std::log(T(1) - p);
    }
    auto p_node = pred.node;
    auto y_node = truth.node;
    auto backprop = [p_node, y_node, lo, hi, n](TensorNode<T>& self) {
        if (!p_node->requires_grad) return;
        p_node->ensure_grad();
        const T g = self.grad[0] / static_cast<T>(n);
        for (long long i = 0; i < n; ++i) {
            const T raw = p_node->values[static_cast<std::size_t>(i)];
            if (raw < lo || raw > hi) continue; // clamped: zero slope
            const T y = y_node->values[static_cast<std::size_t>(i)];
            p_node->grad[static_cast<std::size_t>(i)] += g * (raw - y) / (raw * (T(1) - raw));
        }
    };
    return detail::make_op_result<T>({1}, {static_cast<T>(acc / static_cast<double>(n))},
                                     {pred.node, truth.node}, std::move(backprop));
}

// Per-parameter Adam moments; slot order matches the parameter list.
template <typename T>
struct AdamState {
    std::vector<std::vector<T>> m;
    std::vector<std::vector<T>> v;
    long long step = 0;
};

// Bias-corrected Adam with L2 weight decay added to the gradient; learning
// rate follows the epoch schedule.
template <typename T>
void adam_step(std::vector<Tensor<T>>& params, AdamState<T>& state, const TrainConfig& config,
               int epoch) {
    if (state.m.empty()) {
        state.m.resize(params.size());
        state.v.resize(params.size());
        for (std::size_t i = 0; i < params.size(); ++i) {
            state.m[i].assign(params[i].values().size(), T(0));
            state.v[i].assign(params[i].values().size(), T(0));
        }
    }
    if (state.m.size() != params.size())
        throw ContractError("adam_step: state and parameter counts differ");
    ++state.step;
    const T lr = static_cast<T>(config.lr_at(epoch));
    const T b1 = static_cast<T>(config.beta1), b2 = static_cast<T>(config.beta2);
    const T eps = static_cast<T>(config.adam_eps);
    const T wd = static_cast<T>(config.weight_decay);
    const T bc1 = T(1) - static_cast<T>(std::pow(static_cast<double>(b1), static_cast<double>(state.step)));
    const T bc2 = T(1) - static_cast<T>(std::pow(static_cast<double>(b2), static_cast<double>(state.step)));
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& values = params[i].values();
        if (state.m[i].size() != values.size())
            throw ContractError("adam_step: state shape mismatch at parameter " + std::to_string(i));
        const bool has_grad = params[i].has_grad();
        for (std::size_t j = 0; j < values.size(); ++j) {
            const T g = (has_grad ? params[i].grad()[j] : T(0)) + wd * values[j];
            state.m[i][j] = b1 * state.m[i][j] + (T(1) - b1) * g;
            state.v[i][j] = b2 * state.v[i][j] + (T(1) - b2) * g * g;
            const T mhat = state.m[i][j] / bc1;
            const T vhat = state.v[i][j] / bc2;
            values[j] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
}

// Trains on in-memory samples; returns per-epoch rows and keeps the
// best-validation-IoU checkpoint when out_dir is set.
RunLog train(const TrainConfig& config, const std::vector<Sample>& train_set,
             const std::vector<Sample>& val_set, CAUNet<float>& net,
             const std::string& out_dir = "");

MetricsReport evaluate(CAUNet<float>& net, const std::vector<Sample>& samples,
                       double threshold = 0.5, double* mean_loss = nullptr,
                       std::vector<double>* scores = nullptr,
                       std::vector<std::uint8_t>* labels = nullptr);

struct BenchResult {
    std::vector<double> seconds_per_run;
    double mean = 0;
    double stddev = 0;

    std::string csv() const;
};

// Mean/stddev over injected durations (the timing-free half of the
// benchmark, unit-testable).
BenchResult summarize_runs(const std::vector<double>& seconds_per_run);

// Times `runs` single-image eval forwards after one untimed warm-up pass.
BenchResult benchmark_inference(CAUNet<float>& net, int width, int height, int runs = 20);

// Tensor packing helpers shared by train, eval and the CLI.
Tensor<float> batch_images(const std::vector<Sample>& samples, std::size_t first,
                           std::size_t count);
Tensor<float> batch_masks(const std::vector<Sample>& samples, std::size_t first,
                          std::size_t count);

} // namespace caunet
