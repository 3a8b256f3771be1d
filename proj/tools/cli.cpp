#include <cstdio>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "prunekit/checkpoint.hpp"
#include "prunekit/driver.hpp"

using namespace prunekit;

namespace {

struct CommonArgs {
    std::string config_path;
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::string objective;
    int rounds = -1;
    double acc_floor = -2.0;
    std::string resume_path;
};

void add_common(CLI::App* app, CommonArgs& a) {
    app->add_option("--config", a.config_path, "key = value config file");
    app->add_option("--seed", a.seed, "master seed")->each([&](const std::string&) { a.seed_set = true; });
    app->add_option("--objective", a.objective, "params|flops")
        ->check(CLI::IsMember({"params", "flops"}));
    app->add_option("--rounds", a.rounds, "max progressive rounds");
    app->add_option("--acc-floor", a.acc_floor, "held-out accuracy stop floor");
    app->add_option("--resume", a.resume_path, "checkpoint to continue from");
}

RunConfig make_run_config(const CommonArgs& a) {
    RunConfig rc;
    if (!a.config_path.empty())
        rc = run_config_from(Config::parse_file(a.config_path, run_config_keys()));
    if (a.seed_set) rc.seed = a.seed;
    if (!a.objective.empty())
        rc.objective = a.objective == "flops" ? Objective::Flops : Objective::Params;
    if (a.rounds > 0) rc.max_rounds = a.rounds;
    if (a.acc_floor >= -1.0) rc.acc_floor = a.acc_floor;
    rc.resume_path = a.resume_path;
    return rc;
}

std::pair<DatasetHandle, DatasetHandle> make_splits(const RunConfig& rc) {
    DatasetHandle all = rc.data_path.empty()
                            ? synth_dataset(derive_seed(rc.seed, 0x22), rc.synth_n,
                                            rc.synth_classes, rc.synth_channels, rc.synth_h,
                                            rc.synth_w, rc.synth_noise)
                            : load_dataset(rc.data_path, rc.data_format);
    // same deterministic split the pipeline uses
    const int n = all.size();
    const int n_hold = std::clamp(static_cast<int>(std::lround(rc.holdout_frac * n)), 1, n - 1);
    std::vector<int> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(rc.seed, 0x44));
    for (int i = n - 1; i > 0; --i)
        std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(rng.uniform_int(0, i))]);
    auto take = [&](int from, int count, const std::string& split) {
        DatasetHandle d;
        d.split = split;
        d.num_classes = all.num_classes;
        const auto& s = all.images.shape();
        d.images = Tensor({count, s[1], s[2], s[3]});
        const size_t stride = all.images.numel() / static_cast<size_t>(s[0]);
        for (int i = 0; i < count; ++i) {
            const int src = order[static_cast<size_t>(from + i)];
            std::copy_n(all.images.data() + static_cast<size_t>(src) * stride, stride,
                        d.images.data() + static_cast<size_t>(i) * stride);
            d.labels.push_back(all.labels[static_cast<size_t>(src)]);
        }
        return d;
    };
    return {take(0, n - n_hold, "train"), take(n - n_hold, n_hold, "heldout")};
}

void write_text(const std::string& path, const std::string& text) {
    if (path.empty() || path == "-") {
        std::cout << text;
        return;
    }
    std::ofstream out(path);
    out << text;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"structured pruning pipeline"};
    app.require_subcommand(1);

    CommonArgs args;
    std::string out_path, in_path, report_path;

    auto* c_train = app.add_subcommand("train", "train a dense baseline and checkpoint it");
    add_common(c_train, args);
    c_train->add_option("--out", out_path, "checkpoint output path");

    auto* c_compress = app.add_subcommand("compress", "full progressive pruning pipeline");
    add_common(c_compress, args);
    c_compress->add_option("--report", report_path, "CSV report path (default stdout)");

    auto* c_purify = app.add_subcommand("purify", "purification pass on a checkpoint");
    add_common(c_purify, args);
    c_purify->add_option("--in", in_path, "input checkpoint")->required();
    c_purify->add_option("--out", out_path, "output checkpoint");

    auto* c_eval = app.add_subcommand("eval", "held-out accuracy of a checkpoint");
    add_common(c_eval, args);
    c_eval->add_option("--in", in_path, "input checkpoint")->required();

    auto* c_scratch = app.add_subcommand("scratch", "re-train the pruned structure from scratch");
    add_common(c_scratch, args);
    c_scratch->add_option("--in", in_path, "input checkpoint")->required();

    auto* c_report = app.add_subcommand("report", "render the CSV report of a checkpoint");
    add_common(c_report, args);
    c_report->add_option("--in", in_path, "input checkpoint")->required();
    c_report->add_option("--out", report_path, "CSV output path (default stdout)");

    CLI11_PARSE(app, argc, argv);

    try {
        RunConfig rc = make_run_config(args);
        if (c_train->parsed()) {
            rc.max_rounds = 1;
            auto [train_data, heldout] = make_splits(rc);
            Network net = build_network(rc.arch, derive_seed(rc.seed, 0x10),
                                        {train_data.images.dim(1), train_data.images.dim(2),
                                         train_data.images.dim(3)},
                                        train_data.num_classes);
            TrainOptions opt;
            opt.epochs = rc.baseline_epochs;
            opt.lr = rc.lr;
            opt.batch = rc.batch;
            opt.seed = derive_seed(rc.seed, 0x20);
            train(net, train_data, opt);
            const double acc = evaluate_accuracy(net, heldout);
            std::printf("baseline accuracy: %.4f\n", acc);
            if (!out_path.empty())
                save_checkpoint(net, MaskSet::all_ones(net),
                                {{"baseline_accuracy", std::to_string(acc)}}, out_path);
        } else if (c_compress->parsed()) {
            const RunResult result = run_autocompress(rc);
            write_text(report_path, render_csv(result.report));
            if (!result.report.stop_reason.empty())
                std::fprintf(stderr, "stopped: %s\n", result.report.stop_reason.c_str());
        } else if (c_purify->parsed()) {
            CheckpointData ckpt = load_checkpoint(in_path);
            auto [train_data, heldout] = make_splits(rc);
            for (const auto& [li, m] : ckpt.masks.layers)
                for (size_t i = 0; i < m.filter.size(); ++i)
                    if (!m.filter[i]) ckpt.net.layers[static_cast<size_t>(li)].b[i] = 0.0;
            PurifySearchConfig pcfg = rc.purify;
            pcfg.seed = derive_seed(rc.seed, 0x300);
            const PurifyOutcome outcome = search_thresholds(ckpt.net, ckpt.masks, heldout, pcfg);
            ckpt.masks = outcome.masks;
            for (const auto& [li, m] : ckpt.masks.layers)
                for (size_t i = 0; i < m.filter.size(); ++i)
                    if (!m.filter[i]) ckpt.net.layers[static_cast<size_t>(li)].b[i] = 0.0;
            apply_mask(ckpt.net, ckpt.masks);
            std::printf("purified accuracy: %.4f\n", outcome.accuracy);
            if (!out_path.empty()) save_checkpoint(ckpt.net, ckpt.masks, ckpt.metadata, out_path);
        } else if (c_eval->parsed()) {
            const CheckpointData ckpt = load_checkpoint(in_path);
            auto [train_data, heldout] = make_splits(rc);
            std::printf("held-out accuracy: %.4f\n",
                        evaluate_accuracy(ckpt.net, heldout));
        } else if (c_scratch->parsed()) {
            const CheckpointData ckpt = load_checkpoint(in_path);
            auto [train_data, heldout] = make_splits(rc);
            const double acc = train_from_scratch(
                ckpt.net, train_data, heldout,
                rc.scratch_epochs > 0 ? rc.scratch_epochs : rc.baseline_epochs, rc.lr, rc.batch,
                derive_seed(rc.seed, 0x400), &ckpt.masks);
            std::printf("from-scratch accuracy: %.4f\n", acc);
        } else if (c_report->parsed()) {
            const CheckpointData ckpt = load_checkpoint(in_path);
            RunReport report;
            const auto rows_it = ckpt.metadata.find("run.rows");
            if (rows_it == ckpt.metadata.end())
                throw format_error("checkpoint has no embedded report");
            std::string csv =
                "round,phase,objective,params_rate,flops_rate,accuracy,wall_seconds,action_digest\n";
            const int rows = std::stoi(rows_it->second);
            for (int i = 0; i < rows; ++i)
                csv += ckpt.metadata.at("run.row" + std::to_string(i)) + "\n";
            write_text(report_path, csv);
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
