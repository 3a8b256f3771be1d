#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "prunekit/admm.hpp"
#include "prunekit/config.hpp"
#include "prunekit/purify.hpp"
#include "prunekit/sa.hpp"

namespace prunekit {

// Full pipeline configuration. All fields map 1:1 onto config-file keys,
// see run_config_keys() / run_config_from().
struct RunConfig {
    std::string arch = "convnet-s";

    // dataset; an empty data_path selects the synthetic set
    std::string data_path;
    std::string data_format = "idx";
    int synth_n = 2000;
    int synth_classes = 4;
    int synth_channels = 1;
    int synth_h = 16;
    int synth_w = 16;
    double synth_noise = 0.08;
    double holdout_frac = 0.2;

    std::uint64_t seed = 0;
    int baseline_epochs = 6;
    double lr = 1e-3;
    int batch = 32;

    int max_rounds = 1;
    double target = 2.0;  // per-round reduction factor C_t
    Objective objective = Objective::Params;
    double acc_floor = -1.0;  // < 0: baseline accuracy - 0.01

    bool run_purify = true;
    bool purify_per_round = false;
    bool run_scratch = false;
    int scratch_epochs = -1;  // < 0: baseline_epochs

    SaConfig sa;
    AdmmConfig admm;
    PurifySearchConfig purify;

    std::string out_dir = ".";
    std::string resume_path;  // non-empty: continue from this checkpoint
};

struct ReportRow {
    int round = 0;
    std::string phase;  // baseline | prune | purify | scratch
    std::string objective;
    double params_rate = 1.0;
    double flops_rate = 1.0;
    double accuracy = 0.0;
    double wall_seconds = 0.0;
    std::uint64_t action_digest = 0;
};

struct RunReport {
    std::vector<ReportRow> rows;
    double baseline_accuracy = 0.0;
    double final_accuracy = 0.0;
    double scratch_accuracy = -1.0;
    std::string stop_reason;
};

struct RunResult {
    RunReport report;
    Network net;      // masked dense network after the last completed round
    MaskSet masks;
    Network compact;  // physically shrunk network (only when purify ran)
    bool has_compact = false;
};

const std::set<std::string>& run_config_keys();
RunConfig run_config_from(const Config& cfg);

// round,phase,objective,params_rate,flops_rate,accuracy,wall_seconds,action_digest
std::string render_csv(const RunReport& report);

// Progressive rounds of {rate search -> ADMM regularization -> hard prune +
// retrain}, gated by the accuracy floor, then one purification pass and the
// physical shrink. A checkpoint is written after every round; pass its path
// via resume_path to continue an interrupted run with identical results.
RunResult run_autocompress(const RunConfig& cfg);

// Trains a fresh randomly initialized copy of `structure` (weight values
// discarded, sparsity pattern kept) and returns held-out accuracy. The
// pattern comes from compacted columns plus `masks` when given.
double train_from_scratch(const Network& structure, const DatasetHandle& train_data,
                          const DatasetHandle& heldout, int epochs, double lr, int batch,
                          std::uint64_t seed, const MaskSet* masks = nullptr);

}  // namespace prunekit
