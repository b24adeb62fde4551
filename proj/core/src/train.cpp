#include "caunet/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "caunet/augment.hpp"
#include "caunet/checkpoint.hpp"

namespace caunet {

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
    TrainConfig c;
    c.lr_initial = j.value("lr_initial", c.lr_initial);
    c.lr_late = j.value("lr_late", c.lr_late);
    c.lr_switch_epoch = j.value("lr_switch_epoch", c.lr_switch_epoch);
    c.beta1 = j.value("beta1", c.beta1);
    c.beta2 = j.value("beta2", c.beta2);
    c.adam_eps = j.value("adam_eps", c.adam_eps);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.augmentation_profile = j.value("augmentation_profile", c.augmentation_profile);
    c.seed = j.value("seed", c.seed);
    c.validate();
    return c;
}

nlohmann::json TrainConfig::to_json() const {
    return {{"lr_initial", lr_initial},
            {"lr_late", lr_late},
            {"lr_switch_epoch", lr_switch_epoch},
            {"beta1", beta1},
            {"beta2", beta2},
            {"adam_eps", adam_eps},
            {"weight_decay", weight_decay},
            {"epochs", epochs},
            {"batch_size", batch_size},
            {"augmentation_profile", augmentation_profile},
            {"seed", seed}};
}

void TrainConfig::validate() const {
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (lr_initial <= 0 || lr_late <= 0) throw ConfigError("learning rates must be positive");
    if (beta1 < 0 || beta1 >= 1 || beta2 < 0 || beta2 >= 1)
        throw ConfigError("Adam betas must lie in [0, 1)");
    if (augmentation_profile != "light" && augmentation_profile != "heavy" &&
        augmentation_profile != "none")
        throw ConfigError("augmentation_profile must be light, heavy or none, got '" +
                          augmentation_profile + "'");
}

std::string RunLog::csv_header() {
    return "epoch,loss,acc,iou,dice,spec,mcc,val_loss,val_acc,val_iou,val_dice,val_spec,val_mcc,"
           "seconds";
}

std::string RunLog::csv() const {
    std::ostringstream out;
    out << csv_header() << '\n';
    out.setf(std::ios::fixed);
    out.precision(6);
    for (const auto& r : rows)
        out << r.epoch << ',' << r.loss << ',' << r.acc << ',' << r.iou << ',' << r.dice << ','
            << r.spec << ',' << r.mcc << ',' << r.val_loss << ',' << r.val_acc << ','
            << r.val_iou << ',' << r.val_dice << ',' << r.val_spec << ',' << r.val_mcc << ','
            << r.seconds << '\n';
    return out.str();
}

Tensor<float> batch_images(const std::vector<Sample>& samples, std::size_t first,
                           std::size_t count) {
    if (count == 0 || first + count > samples.size())
        throw ContractError("batch_images: empty or out-of-range batch");
    const int h = samples[first].image.height, w = samples[first].image.width;
    std::vector<float> v(count * 3u * static_cast<std::size_t>(h) * static_cast<std::size_t>(w));
    std::size_t pos = 0;
    for (std::size_t s = first; s < first + count; ++s) {
        const Image& im = samples[s].image;
        if (im.height != h || im.width != w)
            throw DimensionError("batch_images: mixed sizes within one batch");
        for (int c = 0; c < 3; ++c)
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x)
                    v[pos++] = static_cast<float>(im.at(y, x, c)) / 255.0f;
    }
    return Tensor<float>({static_cast<int>(count), 3, h, w}, std::move(v), false);
}

Tensor<float> batch_masks(const std::vector<Sample>& samples, std::size_t first,
                          std::size_t count) {
    if (count == 0 || first + count > samples.size())
        throw ContractError("batch_masks: empty or out-of-range batch");
    const int h = samples[first].mask.height, w = samples[first].mask.width;
    std::vector<float> v(count * static_cast<std::size_t>(h) * static_cast<std::size_t>(w));
    std::size_t pos = 0;
    for (std::size_t s = first; s < first + count; ++s) {
        const Mask& m = samples[s].mask;
        if (m.height != h || m.width != w)
            throw DimensionError("batch_masks: mixed sizes within one batch");
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) v[pos++] = static_cast<float>(m.at(y, x));
    }
    return Tensor<float>({static_cast<int>(count), 1, h, w}, std::move(v), false);
}

namespace {

bool finite(double x) { return std::isfinite(x); }

void fill_row_train(EpochRow& row, const ConfusionCounts& c, double loss) {
    const MetricsReport m = metrics_from_counts(c);
    row.loss = loss;
    row.acc = m.accuracy;
    row.iou = m.jaccard;
    row.dice = m.dice;
    row.spec = m.specificity;
    row.mcc = m.mcc;
}

} // namespace

MetricsReport evaluate(CAUNet<float>& net, const std::vector<Sample>& samples, double threshold,
                       double* mean_loss, std::vector<double>* scores,
                       std::vector<std::uint8_t>* labels) {
    if (samples.empty()) throw ContractError("evaluate: no samples");
    NoGradGuard no_grad;
    ConfusionCounts total;
    double loss_sum = 0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        Tensor<float> x = batch_images(samples, i, 1);
        Tensor<float> y = batch_masks(samples, i, 1);
        Tensor<float> p = forward_eval(net, x);
        if (mean_loss != nullptr) loss_sum += bce_loss(p, y).values()[0];
        const std::vector<std::uint8_t> pred = binarize(p.values(), threshold);
        std::vector<std::uint8_t> truth(y.values().size());
        for (std::size_t k = 0; k < truth.size(); ++k)
            truth[k] = y.values()[k] > 0.5f ? 1 : 0;
        total += confusion(pred, truth);
        if (scores != nullptr)
            for (float v : p.values()) scores->push_back(static_cast<double>(v));
        if (labels != nullptr) labels->insert(labels->end(), truth.begin(), truth.end());
    }
    if (mean_loss != nullptr) *mean_loss = loss_sum / static_cast<double>(samples.size());
    return metrics_from_counts(total, threshold);
}

RunLog train(const TrainConfig& config, const std::vector<Sample>& train_set,
             const std::vector<Sample>& val_set, CAUNet<float>& net, const std::string& out_dir) {
    config.validate();
    if (train_set.empty()) throw ContractError("train: empty training set");
    if (val_set.empty()) throw ContractError("train: empty validation set");

    RunLog log;
    log.config_snapshot = {{"train", config.to_json()}, {"network", net.config.to_json()}};

    AugPipelineSpec aug;
    const bool augment = config.augmentation_profile != "none";
    if (config.augmentation_profile == "light") aug = AugPipelineSpec::light(config.seed);
    if (config.augmentation_profile == "heavy") aug = AugPipelineSpec::heavy(config.seed);

    auto params = net.parameters();
    std::vector<Tensor<float>> param_tensors;
    for (auto& [name, t] : params) param_tensors.push_back(t);
    AdamState<float> opt;

    if (!out_dir.empty()) std::filesystem::create_directories(out_dir);
    const std::string best_path = out_dir.empty() ? "" : out_dir + "/best.ckpt";

    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        RngStream shuffle_rng = RngStream::derive(config.seed, 0x5ffu, epoch, 0);
        for (std::size_t i = order.size(); i > 1; --i) {
            const std::size_t j =
                static_cast<std::size_t>(shuffle_rng.uniform_int(0, static_cast<int>(i) - 1));
            std::swap(order[i - 1], order[j]);
        }

        const double frac = config.dropblock_prob_fraction(epoch);
        ConfusionCounts train_counts;
        double loss_sum = 0;
        long long steps = 0;
        bool nan_hit = false;

        for (std::size_t start = 0; start < order.size() && !nan_hit;
             start += static_cast<std::size_t>(config.batch_size)) {
            const std::size_t count =
                std::min<std::size_t>(config.batch_size, order.size() - start);
            std::vector<Sample> batch;
            batch.reserve(count);
            for (std::size_t k = 0; k < count; ++k) {
                const std::size_t idx = order[start + k];
                batch.push_back(augment ? apply_pipeline(aug, train_set[idx],
                                                         static_cast<long long>(idx), epoch)
                                        : train_set[idx]);
            }
            Tensor<float> x = batch_images(batch, 0, count);
            Tensor<float> y = batch_masks(batch, 0, count);
            RngStream drop_rng = RngStream::derive(config.seed, 0xd0bu, epoch,
                                                   static_cast<std::uint64_t>(start));
            Tensor<float> p = forward(net, x, true, frac, &drop_rng);
            Tensor<float> loss = bce_loss(p, y);
            const double loss_val = loss.values()[0];
            if (!finite(loss_val)) {
                nan_hit = true;
                break;
            }
            backward(loss);
            adam_step(param_tensors, opt, config, epoch);
            loss_sum += loss_val;
            ++steps;

            const std::vector<std::uint8_t> pred = binarize(p.values(), 0.5);
            std::vector<std::uint8_t> truth(y.values().size());
            for (std::size_t k = 0; k < truth.size(); ++k)
                truth[k] = y.values()[k] > 0.5f ? 1 : 0;
            train_counts += confusion(pred, truth);
        }

        if (nan_hit) {
            log.aborted_on_nan = true;
            break;
        }

        EpochRow row;
        row.epoch = epoch;
        fill_row_train(row, train_counts, steps > 0 ? loss_sum / static_cast<double>(steps) : 0);
        double val_loss = 0;
        const MetricsReport val = evaluate(net, val_set, 0.5, &val_loss);
        row.val_loss = val_loss;
        row.val_acc = val.accuracy;
        row.val_iou = val.jaccard;
        row.val_dice = val.dice;
        row.val_spec = val.specificity;
        row.val_mcc = val.mcc;
        row.seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        log.rows.push_back(row);

        if (val.jaccard > log.best_val_iou) {
            log.best_val_iou = val.jaccard;
            log.best_epoch = epoch;
            if (!best_path.empty()) {
                CheckpointMeta meta;
                meta.epoch = epoch;
                meta.val_iou = val.jaccard;
                save_checkpoint(best_path, net, meta);
            }
        }
    }

    if (!out_dir.empty()) {
        std::ofstream csv(out_dir + "/runlog.csv");
        csv << log.csv();
    }
    return log;
}

std::string BenchResult::csv() const {
    std::ostringstream out;
    out << "run,seconds\n";
    out.setf(std::ios::fixed);
    out.precision(9);
    for (std::size_t i = 0; i < seconds_per_run.size(); ++i)
        out << i << ',' << seconds_per_run[i] << '\n';
    out << "mean," << mean << "\nstd," << stddev << '\n';
    return out.str();
}

BenchResult summarize_runs(const std::vector<double>& seconds_per_run) {
    if (seconds_per_run.empty()) throw ContractError("summarize_runs: no runs");
    BenchResult r;
    r.seconds_per_run = seconds_per_run;
    r.mean = std::accumulate(seconds_per_run.begin(), seconds_per_run.end(), 0.0) /
             static_cast<double>(seconds_per_run.size());
    double sq = 0;
    for (double v : seconds_per_run) sq += (v - r.mean) * (v - r.mean);
    // population standard deviation over the fixed run count
    r.stddev = std::sqrt(sq / static_cast<double>(seconds_per_run.size()));
    return r;
}

BenchResult benchmark_inference(CAUNet<float>& net, int width, int height, int runs) {
    if (runs < 1) throw ContractError("benchmark_inference: runs must be >= 1");
    NoGradGuard no_grad;
    RngStream rng(9); // fixed input; timing should not depend on content
    std::vector<float> v(3u * static_cast<std::size_t>(height) * static_cast<std::size_t>(width));
    for (auto& x : v) x = static_cast<float>(rng.uniform());
    Tensor<float> input({1, 3, height, width}, std::move(v), false);
    (void)forward_eval(net, input); // warm-up, untimed
    std::vector<double> times;
    times.reserve(static_cast<std::size_t>(runs));
    for (int i = 0; i < runs; ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        volatile float sink = forward_eval(net, input).values()[0];
        (void)sink;
        times.push_back(
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    }
    return summarize_runs(times);
}

} // namespace caunet
