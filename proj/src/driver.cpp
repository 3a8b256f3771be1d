#include "prunekit/driver.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "prunekit/checkpoint.hpp"

namespace prunekit {

namespace {

std::string fmt_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

double now_seconds() {
    using clock = std::chrono::steady_clock;
    return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

std::pair<DatasetHandle, DatasetHandle> split_dataset(const DatasetHandle& all, double holdout_frac,
                                                      std::uint64_t seed) {
    const int n = all.size();
    const int n_hold = std::clamp(static_cast<int>(std::lround(holdout_frac * n)), 1, n - 1);
    std::vector<int> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(seed, 0x44));
    for (int i = n - 1; i > 0; --i) std::swap(order[static_cast<size_t>(i)],
                                              order[static_cast<size_t>(rng.uniform_int(0, i))]);
    auto take = [&](int from, int count, const std::string& split) {
        DatasetHandle d;
        d.split = split;
        d.num_classes = all.num_classes;
        const std::vector<int>& s = all.images.shape();
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

std::pair<DatasetHandle, DatasetHandle> load_splits(const RunConfig& cfg) {
    DatasetHandle all = cfg.data_path.empty()
                            ? synth_dataset(derive_seed(cfg.seed, 0x22), cfg.synth_n,
                                            cfg.synth_classes, cfg.synth_channels, cfg.synth_h,
                                            cfg.synth_w, cfg.synth_noise)
                            : load_dataset(cfg.data_path, cfg.data_format);
    return split_dataset(all, cfg.holdout_frac, cfg.seed);
}

void he_reinit(Network& net, std::uint64_t seed) {
    Rng rng(derive_seed(seed, 0x11));
    for (auto& l : net.layers) {
        if (!l.has_params()) continue;
        const int fan_in = l.kind == LayerKind::Conv ? l.cin * l.kh * l.kw : l.in_dim;
        const double sd = std::sqrt(2.0 / fan_in);
        for (size_t i = 0; i < l.W.numel(); ++i) l.W[i] = rng.normal() * sd;
        for (size_t i = 0; i < l.b.numel(); ++i) l.b[i] = 0.0;
    }
}

// dense template of a possibly compacted structure: compacted columns turn
// into column masks, so training sees the same sparsity pattern
std::pair<Network, MaskSet> dense_template(const Network& structure) {
    Network net;
    net.input_shape = structure.input_shape;
    net.num_classes = structure.num_classes;
    for (const auto& l : structure.layers) {
        LayerSpec nl = l;
        if (l.has_params()) {
            if (l.kind == LayerKind::Conv)
                nl.W = Tensor::zeros({l.cout, l.cin, l.kh, l.kw});
            else
                nl.W = Tensor::zeros({l.out_dim, l.in_dim});
            nl.b = Tensor::zeros({l.gemm_rows()});
            nl.kept_cols.clear();
        }
        net.layers.push_back(std::move(nl));
    }
    MaskSet masks = MaskSet::all_ones(net);
    for (size_t li = 0; li < structure.layers.size(); ++li) {
        const auto& l = structure.layers[li];
        if (!l.has_params() || !l.compacted()) continue;
        auto& m = masks.layers.at(static_cast<int>(li));
        std::fill(m.column.begin(), m.column.end(), 0);
        for (int c : l.kept_cols) m.column[static_cast<size_t>(c)] = 1;
    }
    return {net, masks};
}

std::string objective_name(Objective o) { return o == Objective::Params ? "params" : "flops"; }

void append_row(RunReport& report, ReportRow row) { report.rows.push_back(std::move(row)); }

std::string row_to_csv(const ReportRow& r) {
    std::ostringstream out;
    out << r.round << "," << r.phase << "," << r.objective << "," << fmt_double(r.params_rate)
        << "," << fmt_double(r.flops_rate) << "," << fmt_double(r.accuracy) << ","
        << fmt_double(r.wall_seconds) << "," << r.action_digest;
    return out.str();
}

ReportRow row_from_csv(const std::string& line) {
    std::vector<std::string> f;
    std::istringstream in(line);
    std::string tok;
    while (std::getline(in, tok, ',')) f.push_back(tok);
    if (f.size() != 8) throw format_error("malformed report row: " + line);
    ReportRow r;
    r.round = std::stoi(f[0]);
    r.phase = f[1];
    r.objective = f[2];
    r.params_rate = std::stod(f[3]);
    r.flops_rate = std::stod(f[4]);
    r.accuracy = std::stod(f[5]);
    r.wall_seconds = std::stod(f[6]);
    r.action_digest = std::stoull(f[7]);
    return r;
}

void zero_masked_filter_biases(Network& net, const MaskSet& masks) {
    for (const auto& [li, m] : masks.layers) {
        auto& l = net.layers[static_cast<size_t>(li)];
        for (size_t i = 0; i < m.filter.size(); ++i)
            if (!m.filter[i]) l.b[i] = 0.0;
    }
}

struct RunState {
    Network net;
    MaskSet masks;
    RunReport report;
    int next_round = 1;
};

void save_state(const RunState& st, const RunConfig& cfg, const std::string& path) {
    std::map<std::string, std::string> meta;
    meta["run.next_round"] = std::to_string(st.next_round);
    meta["run.baseline_accuracy"] = fmt_double(st.report.baseline_accuracy);
    meta["run.final_accuracy"] = fmt_double(st.report.final_accuracy);
    meta["run.stop_reason"] = st.report.stop_reason;
    meta["run.rows"] = std::to_string(st.report.rows.size());
    for (size_t i = 0; i < st.report.rows.size(); ++i)
        meta["run.row" + std::to_string(i)] = row_to_csv(st.report.rows[i]);
    meta["run.seed"] = std::to_string(cfg.seed);
    save_checkpoint(st.net, st.masks, meta, path);
}

RunState load_state(const std::string& path) {
    CheckpointData data = load_checkpoint(path);
    RunState st;
    st.net = std::move(data.net);
    st.masks = std::move(data.masks);
    auto get = [&](const std::string& k) {
        const auto it = data.metadata.find(k);
        if (it == data.metadata.end()) throw format_error("checkpoint missing run key: " + k);
        return it->second;
    };
    st.next_round = std::stoi(get("run.next_round"));
    st.report.baseline_accuracy = std::stod(get("run.baseline_accuracy"));
    st.report.final_accuracy = std::stod(get("run.final_accuracy"));
    st.report.stop_reason = get("run.stop_reason");
    const int rows = std::stoi(get("run.rows"));
    for (int i = 0; i < rows; ++i)
        st.report.rows.push_back(row_from_csv(get("run.row" + std::to_string(i))));
    return st;
}

}  // namespace

const std::set<std::string>& run_config_keys() {
    static const std::set<std::string> keys = {
        "arch", "data_path", "data_format", "synth_n", "synth_classes", "synth_channels",
        "synth_h", "synth_w", "synth_noise", "holdout_frac", "seed", "baseline_epochs", "lr",
        "batch", "max_rounds", "target", "objective", "acc_floor", "run_purify",
        "purify_per_round", "run_scratch", "scratch_epochs", "out_dir",
        "sa.t0", "sa.t_stop", "sa.eta", "sa.boltzmann_k", "sa.iters_per_temp", "sa.eval_subset",
        "sa.delta_max", "sa.calibration_moves", "sa.sigma_fixed",
        "admm.rho0", "admm.rho_growth", "admm.rho_period", "admm.iterations",
        "admm.epochs_per_iter", "admm.retrain_epochs", "admm.lr", "admm.batch",
        "purify.accuracy_epsilon", "purify.eval_subset", "purify.eta", "purify.boltzmann_k",
        "purify.iters_per_temp", "purify.cooling_levels",
    };
    return keys;
}

RunConfig run_config_from(const Config& cfg) {
    RunConfig rc;
    rc.arch = cfg.get_string("arch", rc.arch);
    rc.data_path = cfg.get_string("data_path", rc.data_path);
    rc.data_format = cfg.get_string("data_format", rc.data_format);
    rc.synth_n = static_cast<int>(cfg.get_int("synth_n", rc.synth_n));
    rc.synth_classes = static_cast<int>(cfg.get_int("synth_classes", rc.synth_classes));
    rc.synth_channels = static_cast<int>(cfg.get_int("synth_channels", rc.synth_channels));
    rc.synth_h = static_cast<int>(cfg.get_int("synth_h", rc.synth_h));
    rc.synth_w = static_cast<int>(cfg.get_int("synth_w", rc.synth_w));
    rc.synth_noise = cfg.get_double("synth_noise", rc.synth_noise);
    rc.holdout_frac = cfg.get_double("holdout_frac", rc.holdout_frac);
    rc.seed = cfg.get_u64("seed", rc.seed);
    rc.baseline_epochs = static_cast<int>(cfg.get_int("baseline_epochs", rc.baseline_epochs));
    rc.lr = cfg.get_double("lr", rc.lr);
    rc.batch = static_cast<int>(cfg.get_int("batch", rc.batch));
    rc.max_rounds = static_cast<int>(cfg.get_int("max_rounds", rc.max_rounds));
    rc.target = cfg.get_double("target", rc.target);
    const std::string obj = cfg.get_string("objective", "params");
    if (obj == "params")
        rc.objective = Objective::Params;
    else if (obj == "flops")
        rc.objective = Objective::Flops;
    else
        throw config_error("objective must be 'params' or 'flops', got '" + obj + "'");
    rc.acc_floor = cfg.get_double("acc_floor", rc.acc_floor);
    rc.run_purify = cfg.get_bool("run_purify", rc.run_purify);
    rc.purify_per_round = cfg.get_bool("purify_per_round", rc.purify_per_round);
    rc.run_scratch = cfg.get_bool("run_scratch", rc.run_scratch);
    rc.scratch_epochs = static_cast<int>(cfg.get_int("scratch_epochs", rc.scratch_epochs));
    rc.out_dir = cfg.get_string("out_dir", rc.out_dir);

    rc.sa.t0 = cfg.get_double("sa.t0", rc.sa.t0);
    rc.sa.t_stop = cfg.get_double("sa.t_stop", rc.sa.t_stop);
    rc.sa.eta = cfg.get_double("sa.eta", rc.sa.eta);
    rc.sa.boltzmann_k = cfg.get_double("sa.boltzmann_k", rc.sa.boltzmann_k);
    rc.sa.iters_per_temp = static_cast<int>(cfg.get_int("sa.iters_per_temp", rc.sa.iters_per_temp));
    rc.sa.eval_subset = static_cast<int>(cfg.get_int("sa.eval_subset", rc.sa.eval_subset));
    rc.sa.delta_max = cfg.get_double("sa.delta_max", rc.sa.delta_max);
    rc.sa.calibration_moves =
        static_cast<int>(cfg.get_int("sa.calibration_moves", rc.sa.calibration_moves));
    rc.sa.sigma_fixed = cfg.get_double("sa.sigma_fixed", rc.sa.sigma_fixed);

    rc.admm.rho0 = cfg.get_double("admm.rho0", rc.admm.rho0);
    rc.admm.rho_growth = cfg.get_double("admm.rho_growth", rc.admm.rho_growth);
    rc.admm.rho_period = static_cast<int>(cfg.get_int("admm.rho_period", rc.admm.rho_period));
    rc.admm.iterations = static_cast<int>(cfg.get_int("admm.iterations", rc.admm.iterations));
    rc.admm.epochs_per_iter =
        static_cast<int>(cfg.get_int("admm.epochs_per_iter", rc.admm.epochs_per_iter));
    rc.admm.retrain_epochs =
        static_cast<int>(cfg.get_int("admm.retrain_epochs", rc.admm.retrain_epochs));
    rc.admm.lr = cfg.get_double("admm.lr", rc.admm.lr);
    rc.admm.batch = static_cast<int>(cfg.get_int("admm.batch", rc.admm.batch));

    rc.purify.accuracy_epsilon =
        cfg.get_double("purify.accuracy_epsilon", rc.purify.accuracy_epsilon);
    rc.purify.eval_subset =
        static_cast<int>(cfg.get_int("purify.eval_subset", rc.purify.eval_subset));
    rc.purify.eta = cfg.get_double("purify.eta", rc.purify.eta);
    rc.purify.boltzmann_k = cfg.get_double("purify.boltzmann_k", rc.purify.boltzmann_k);
    rc.purify.iters_per_temp =
        static_cast<int>(cfg.get_int("purify.iters_per_temp", rc.purify.iters_per_temp));
    rc.purify.cooling_levels =
        static_cast<int>(cfg.get_int("purify.cooling_levels", rc.purify.cooling_levels));
    return rc;
}

std::string render_csv(const RunReport& report) {
    std::ostringstream out;
    out << "round,phase,objective,params_rate,flops_rate,accuracy,wall_seconds,action_digest\n";
    for (const auto& r : report.rows) out << row_to_csv(r) << "\n";
    return out.str();
}

double train_from_scratch(const Network& structure, const DatasetHandle& train_data,
                          const DatasetHandle& heldout, int epochs, double lr, int batch,
                          std::uint64_t seed, const MaskSet* extra) {
    auto [net, masks] = dense_template(structure);
    if (extra)
        for (const auto& [li, m] : extra->layers) {
            LayerMask& dst = masks.layers.at(li);
            for (size_t i = 0; i < m.filter.size(); ++i) dst.filter[i] &= m.filter[i];
            for (size_t j = 0; j < m.column.size(); ++j) dst.column[j] &= m.column[j];
        }
    he_reinit(net, derive_seed(seed, 0x5c));
    apply_mask(net, masks);
    const auto dense = to_dense_masks(net, masks);
    TrainOptions opt;
    opt.epochs = epochs;
    opt.lr = lr;
    opt.batch = batch;
    opt.seed = derive_seed(seed, 0x5d);
    opt.masks = &dense;
    train(net, train_data, opt);
    return evaluate_accuracy(net, heldout);
}

RunResult run_autocompress(const RunConfig& cfg) {
    if (cfg.target <= 1.0) throw config_error("target reduction factor must exceed 1");
    if (cfg.max_rounds < 1) throw config_error("max_rounds must be at least 1");
    auto [train_data, heldout] = load_splits(cfg);

    RunState st;
    const MaskSet dense_base = [&] {
        Network probe = build_network(cfg.arch, derive_seed(cfg.seed, 0x10),
                                      {train_data.images.dim(1), train_data.images.dim(2),
                                       train_data.images.dim(3)},
                                      train_data.num_classes);
        return MaskSet::all_ones(probe);
    }();

    if (!cfg.resume_path.empty()) {
        st = load_state(cfg.resume_path);
    } else {
        st.net = build_network(cfg.arch, derive_seed(cfg.seed, 0x10),
                               {train_data.images.dim(1), train_data.images.dim(2),
                                train_data.images.dim(3)},
                               train_data.num_classes);
        st.masks = MaskSet::all_ones(st.net);
        const double t0 = now_seconds();
        TrainOptions opt;
        opt.epochs = cfg.baseline_epochs;
        opt.lr = cfg.lr;
        opt.batch = cfg.batch;
        opt.seed = derive_seed(cfg.seed, 0x20);
        train(st.net, train_data, opt);
        st.report.baseline_accuracy = evaluate_accuracy(st.net, heldout);
        st.report.final_accuracy = st.report.baseline_accuracy;
        append_row(st.report, {0, "baseline", objective_name(cfg.objective), 1.0, 1.0,
                               st.report.baseline_accuracy, now_seconds() - t0, 0});
        save_state(st, cfg, cfg.out_dir + "/round_0.ckpt");
    }

    const double floor =
        cfg.acc_floor >= 0.0 ? cfg.acc_floor : st.report.baseline_accuracy - 0.01;

    Network prev_net = st.net;
    MaskSet prev_masks = st.masks;
    bool aborted_round1 = false;

    auto purify_phase = [&](int round) -> std::pair<Network, bool> {
        const double t0 = now_seconds();
        zero_masked_filter_biases(st.net, st.masks);
        PurifySearchConfig pcfg = cfg.purify;
        pcfg.seed = derive_seed(cfg.seed, 0x300 + static_cast<std::uint64_t>(round));
        const PurifyOutcome outcome = search_thresholds(st.net, st.masks, heldout, pcfg);
        st.masks = outcome.masks;
        zero_masked_filter_biases(st.net, st.masks);
        apply_mask(st.net, st.masks);
        const RemovalSets rs = removals_from_masks(st.net, st.masks);
        Network compact = shrink_network(st.net, rs);
        const double acc = evaluate_accuracy(compact, heldout);
        st.report.final_accuracy = acc;
        append_row(st.report,
                   {round, "purify", objective_name(cfg.objective),
                    reduction_rate(st.net, dense_base, st.masks, Objective::Params),
                    reduction_rate(st.net, dense_base, st.masks, Objective::Flops), acc,
                    now_seconds() - t0, 0});
        return {std::move(compact), true};
    };

    for (int round = st.next_round; round <= cfg.max_rounds; ++round) {
        const double t0 = now_seconds();
        const std::uint64_t round_seed = derive_seed(cfg.seed, 0x100 + static_cast<std::uint64_t>(round));

        SaConfig sa_cfg = cfg.sa;
        sa_cfg.objective = cfg.objective;
        sa_cfg.seed = derive_seed(round_seed, 1);
        SaResult sa;
        double target = cfg.target;
        try {
            sa = sa_run(st.net, st.masks, heldout, target, sa_cfg);
        } catch (const infeasibility_error&) {
            target /= 2.0;
            if (target <= 1.0)
                throw infeasibility_error(
                    "round " + std::to_string(round) +
                    ": target factor infeasible and cannot be halved further");
            sa = sa_run(st.net, st.masks, heldout, target, sa_cfg);
        }

        AdmmConfig admm_cfg = cfg.admm;
        admm_cfg.seed = derive_seed(round_seed, 2);
        AdmmState admm_state;
        admm_regularize(st.net, sa.best, st.masks, train_data, admm_cfg, admm_state);
        const PruneOutcome pruned =
            hard_prune_retrain(st.net, admm_state, st.masks, train_data, heldout, admm_cfg);

        if (pruned.accuracy < floor && round > 1) {
            // drop the failed round so the report matches the last checkpoint
            st.net = prev_net;
            st.masks = prev_masks;
            st.report.stop_reason = "round " + std::to_string(round) + " accuracy " +
                                    fmt_double(pruned.accuracy) + " fell below floor " +
                                    fmt_double(floor) + "; kept round " +
                                    std::to_string(round - 1);
            break;
        }

        prev_net = st.net;
        prev_masks = st.masks;
        st.masks = pruned.masks;
        st.report.final_accuracy = pruned.accuracy;
        append_row(st.report,
                   {round, "prune", objective_name(cfg.objective),
                    reduction_rate(st.net, dense_base, st.masks, Objective::Params),
                    reduction_rate(st.net, dense_base, st.masks, Objective::Flops),
                    pruned.accuracy, now_seconds() - t0, action_digest(sa.best)});

        if (pruned.accuracy < floor) {  // round == 1
            st.report.stop_reason = "round 1 accuracy " + fmt_double(pruned.accuracy) +
                                    " below floor " + fmt_double(floor) + "; aborting";
            aborted_round1 = true;
            st.next_round = round + 1;
            save_state(st, cfg, cfg.out_dir + "/round_" + std::to_string(round) + ".ckpt");
            break;
        }

        if (cfg.run_purify && cfg.purify_per_round) purify_phase(round);

        st.next_round = round + 1;
        save_state(st, cfg, cfg.out_dir + "/round_" + std::to_string(round) + ".ckpt");
    }

    RunResult result;
    result.has_compact = false;
    if (!aborted_round1) {
        const int last_round = st.next_round - 1;
        if (cfg.run_purify && !cfg.purify_per_round) {
            auto [compact, ok] = purify_phase(std::max(last_round, 1));
            result.compact = std::move(compact);
            result.has_compact = ok;
        } else if (cfg.run_purify && cfg.purify_per_round) {
            const RemovalSets rs = removals_from_masks(st.net, st.masks);
            result.compact = shrink_network(st.net, rs);
            result.has_compact = true;
        }

        if (cfg.run_scratch) {
            const double t0 = now_seconds();
            const Network& structure = result.has_compact ? result.compact : st.net;
            const MaskSet* extra = result.has_compact ? nullptr : &st.masks;
            const int epochs = cfg.scratch_epochs > 0 ? cfg.scratch_epochs : cfg.baseline_epochs;
            st.report.scratch_accuracy =
                train_from_scratch(structure, train_data, heldout, epochs, cfg.lr, cfg.batch,
                                   derive_seed(cfg.seed, 0x400), extra);
            const auto& last = st.report.rows.back();
            append_row(st.report, {std::max(last_round, 1), "scratch",
                                   objective_name(cfg.objective), last.params_rate,
                                   last.flops_rate, st.report.scratch_accuracy,
                                   now_seconds() - t0, 0});
        }
    }

    save_state(st, cfg, cfg.out_dir + "/final.ckpt");
    result.report = std::move(st.report);
    result.net = std::move(st.net);
    result.masks = std::move(st.masks);
    return result;
}

}  // namespace prunekit
