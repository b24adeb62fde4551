// caunet command line: train/eval/augment/stats/bench/synth subcommands over
// the drivable-area segmentation library.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "caunet/augment.hpp"
#include "caunet/checkpoint.hpp"
#include "caunet/data_io.hpp"
#include "caunet/metrics.hpp"
#include "caunet/network.hpp"
#include "caunet/stats.hpp"
#include "caunet/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct GlobalOpts {
    std::uint64_t seed = 0;
    std::string config_path;
    std::string out_dir = ".";
};

json load_config(const std::string& path) {
    if (path.empty()) return json::object();
    std::ifstream in(path);
    if (!in) throw caunet::ConfigError("cannot open config file: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw caunet::ConfigError("bad JSON in " + path + ": " + e.what());
    }
    return j;
}

void write_text(const std::string& path, const std::string& text) {
    fs::create_directories(fs::path(path).parent_path());
    std::ofstream out(path);
    if (!out) throw caunet::ConfigError("cannot write: " + path);
    out << text;
}

std::vector<caunet::Sample> load_or_fail(const std::string& dir,
                                         std::optional<std::pair<int, int>> wh) {
    caunet::LabelMapping mapping;
    auto samples = caunet::load_dataset(dir, mapping, wh);
    if (samples.empty()) throw caunet::DecodeError("no samples found under " + dir);
    return samples;
}

int cmd_synth(const GlobalOpts& g, int count, int width, int height) {
    auto samples = caunet::synth_generate(count, width, height, g.seed);
    for (std::size_t i = 0; i < samples.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "synth_%04zu", i);
        caunet::save_flat_sample(samples[i], g.out_dir, name);
    }
    std::cout << "wrote " << samples.size() << " samples under " << g.out_dir << "\n";
    return 0;
}

int cmd_train(const GlobalOpts& g, const std::string& data_dir, const std::string& val_dir,
              int size) {
    const json cfg = load_config(g.config_path);
    caunet::TrainConfig tc = caunet::TrainConfig::from_json(cfg.value("train", json::object()));
    tc.seed = g.seed;
    caunet::NetworkConfig nc = caunet::NetworkConfig::from_json(cfg.value("network", json::object()));

    std::optional<std::pair<int, int>> wh;
    if (size > 0) wh = std::make_pair(size, size);
    auto train_set = load_or_fail(data_dir, wh);
    auto val_set = load_or_fail(val_dir.empty() ? data_dir : val_dir, wh);

    caunet::RngStream init_rng = caunet::RngStream::derive(g.seed, 0x1417u);
    auto net = caunet::build<float>(nc, init_rng);
    std::cout << "parameters: " << caunet::param_count(net) << "\n";

    const caunet::RunLog log = caunet::train(tc, train_set, val_set, net, g.out_dir);
    if (log.aborted_on_nan) {
        std::cerr << "error: training aborted on non-finite loss; last good checkpoint kept\n";
        return 3;
    }
    std::cout << "best epoch " << log.best_epoch << " val_iou " << log.best_val_iou << "\n"
              << "runlog: " << g.out_dir << "/runlog.csv\n";
    return 0;
}

int cmd_eval(const GlobalOpts& g, const std::string& data_dir, const std::string& ckpt_path,
             double threshold, int size) {
    caunet::CheckpointMeta meta;
    auto net = caunet::load_checkpoint(ckpt_path, &meta);
    std::optional<std::pair<int, int>> wh;
    if (size > 0) wh = std::make_pair(size, size);
    auto samples = load_or_fail(data_dir, wh);

    double loss = 0;
    std::vector<double> scores;
    std::vector<std::uint8_t> labels;
    const caunet::MetricsReport report =
        caunet::evaluate(net, samples, threshold, &loss, &scores, &labels);

    json out = report.to_json();
    out["bce_loss"] = loss;
    out["samples"] = samples.size();
    out["checkpoint_epoch"] = meta.epoch;
    try {
        const caunet::CurveData roc = caunet::roc_curve(scores, labels);
        const caunet::CurveData pr = caunet::pr_curve(scores, labels);
        out["roc_auc"] = roc.auc;
        out["pr_auc"] = pr.auc;
        std::ostringstream roc_csv, pr_csv;
        roc.write_csv(roc_csv);
        pr.write_csv(pr_csv);
        write_text(g.out_dir + "/roc.csv", roc_csv.str());
        write_text(g.out_dir + "/pr.csv", pr_csv.str());
    } catch (const caunet::ContractError&) {
        out["curves"] = "skipped: validation masks contain a single class";
    }
    write_text(g.out_dir + "/metrics.json", out.dump(2) + "\n");
    std::cout << out.dump(2) << "\n";
    return 0;
}

int cmd_augment(const GlobalOpts& g, const std::string& data_dir, const std::string& profile,
                int epoch) {
    caunet::AugPipelineSpec spec;
    if (!g.config_path.empty())
        spec = caunet::AugPipelineSpec::from_json(load_config(g.config_path));
    else if (profile == "light")
        spec = caunet::AugPipelineSpec::light(g.seed);
    else if (profile == "heavy")
        spec = caunet::AugPipelineSpec::heavy(g.seed);
    else
        throw caunet::ConfigError("augment: profile must be light or heavy, or pass --config");

    auto samples = load_or_fail(data_dir, std::nullopt);
    json provenance = json::array();
    for (std::size_t i = 0; i < samples.size(); ++i) {
        json steps;
        const caunet::Sample out =
            caunet::apply_pipeline(spec, samples[i], static_cast<long long>(i), epoch, &steps);
        char name[32];
        std::snprintf(name, sizeof(name), "aug_%04zu", i);
        caunet::save_flat_sample(out, g.out_dir, name);
        provenance.push_back({{"index", i}, {"id", samples[i].meta.id}, {"steps", steps}});
    }
    write_text(g.out_dir + "/provenance.json", provenance.dump(2) + "\n");
    std::cout << "augmented " << samples.size() << " samples under " << g.out_dir << "\n";
    return 0;
}

int cmd_stats(const GlobalOpts& g, const std::string& dir_a, const std::string& dir_b) {
    auto group_a = load_or_fail(dir_a, std::nullopt);
    auto group_b = load_or_fail(dir_b, std::nullopt);
    std::vector<double> fa, fb;
    for (const auto& s : group_a) fa.push_back(caunet::drivable_fraction(s.mask).drivable_fraction);
    for (const auto& s : group_b) fb.push_back(caunet::drivable_fraction(s.mask).drivable_fraction);

    json out = {{"group_a", {{"dir", dir_a}, {"n", fa.size()}}},
                {"group_b", {{"dir", dir_b}, {"n", fb.size()}}},
                {"t_test", caunet::test_result_to_json(caunet::t_test(fa, fb))},
                {"bartlett", caunet::test_result_to_json(caunet::bartlett(fa, fb))}};
    if (group_a.size() == group_b.size()) {
        std::vector<std::pair<caunet::Mask, caunet::Mask>> pairs;
        for (std::size_t i = 0; i < group_a.size(); ++i)
            pairs.emplace_back(group_a[i].mask, group_b[i].mask);
        out["jaccard_mean"] = caunet::jaccard_aggregate(pairs);
    }
    write_text(g.out_dir + "/stats.json", out.dump(2) + "\n");
    std::cout << out.dump(2) << "\n";
    return 0;
}

int cmd_bench(const GlobalOpts& g, const std::string& ckpt_path, int width, int height,
              int runs) {
    caunet::CAUNet<float> net = [&] {
        if (!ckpt_path.empty()) return caunet::load_checkpoint(ckpt_path);
        const json cfg = load_config(g.config_path);
        caunet::NetworkConfig nc =
            caunet::NetworkConfig::from_json(cfg.value("network", json::object()));
        caunet::RngStream rng = caunet::RngStream::derive(g.seed, 0x1417u);
        return caunet::build<float>(nc, rng);
    }();
    const caunet::BenchResult r = caunet::benchmark_inference(net, width, height, runs);
    write_text(g.out_dir + "/bench.csv", r.csv());
    std::cout << "runs " << r.seconds_per_run.size() << " mean " << r.mean << " s std "
              << r.stddev << " s\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"drivable-area segmentation toolkit"};
    app.require_subcommand(1);

    GlobalOpts g;
    app.add_option("--seed", g.seed, "master random seed")->capture_default_str();
    app.add_option("--config", g.config_path, "JSON config file");
    app.add_option("--out", g.out_dir, "output directory")->capture_default_str();
    app.fallthrough();

    auto* synth = app.add_subcommand("synth", "generate a synthetic road dataset");
    int synth_count = 16, synth_w = 64, synth_h = 64;
    synth->add_option("--count", synth_count)->capture_default_str();
    synth->add_option("--width", synth_w)->capture_default_str();
    synth->add_option("--height", synth_h)->capture_default_str();

    auto* train = app.add_subcommand("train", "train a network");
    std::string train_data, train_val;
    int train_size = 0;
    train->add_option("--data", train_data, "training dataset directory")->required();
    train->add_option("--val", train_val, "validation dataset directory");
    train->add_option("--size", train_size, "resize inputs to size x size");

    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
    std::string eval_data, eval_ckpt;
    double eval_threshold = 0.5;
    int eval_size = 0;
    eval->add_option("--data", eval_data)->required();
    eval->add_option("--checkpoint", eval_ckpt)->required();
    eval->add_option("--threshold", eval_threshold)->capture_default_str();
    eval->add_option("--size", eval_size, "resize inputs to size x size");

    auto* augment = app.add_subcommand("augment", "apply an augmentation pipeline");
    std::string aug_data, aug_profile = "light";
    int aug_epoch = 0;
    augment->add_option("--data", aug_data)->required();
    augment->add_option("--profile", aug_profile, "light or heavy")->capture_default_str();
    augment->add_option("--epoch", aug_epoch)->capture_default_str();

    auto* stats = app.add_subcommand("stats", "compare drivable-area statistics of two datasets");
    std::string stats_a, stats_b;
    stats->add_option("--data-a", stats_a)->required();
    stats->add_option("--data-b", stats_b)->required();

    auto* bench = app.add_subcommand("bench", "time single-image inference");
    std::string bench_ckpt;
    int bench_w = 256, bench_h = 256, bench_runs = 20;
    bench->add_option("--checkpoint", bench_ckpt);
    bench->add_option("--width", bench_w)->capture_default_str();
    bench->add_option("--height", bench_h)->capture_default_str();
    bench->add_option("--runs", bench_runs)->capture_default_str();

    CLI11_PARSE(app, argc, argv);

    try {
        if (synth->parsed()) return cmd_synth(g, synth_count, synth_w, synth_h);
        if (train->parsed()) return cmd_train(g, train_data, train_val, train_size);
        if (eval->parsed()) return cmd_eval(g, eval_data, eval_ckpt, eval_threshold, eval_size);
        if (augment->parsed()) return cmd_augment(g, aug_data, aug_profile, aug_epoch);
        if (stats->parsed()) return cmd_stats(g, stats_a, stats_b);
        if (bench->parsed()) return cmd_bench(g, bench_ckpt, bench_w, bench_h, bench_runs);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
