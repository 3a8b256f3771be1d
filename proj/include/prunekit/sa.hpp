#pragma once

#include <cstdint>
#include <vector>

#include "prunekit/rng.hpp"
#include "prunekit/schemes.hpp"

namespace prunekit {

struct infeasibility_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct SaConfig {
    double t0 = -1.0;      // <= 0: auto-calibrate from warm-up perturbations
    double t_stop = -1.0;  // <= 0: t0 * eta^12
    double eta = 0.7;      // cooling factor
    double boltzmann_k = 1e-3;
    int iters_per_temp = 10;
    std::uint64_t seed = 0;
    Objective objective = Objective::Params;
    int eval_subset = 1000;    // fast-evaluation sample budget
    double delta_max = 0.3;    // perturbation magnitude at T = T0
    int calibration_moves = 20;
    double sigma_fixed = -1.0;  // in [0,1]: pin every layer's scheme split
                                // (1 = filter-only, 0 = column-only)
};

struct EvalResult {
    double accuracy = 0.0;
    double params_rate = 1.0;  // realized, relative to the base masks
    double flops_rate = 1.0;
};

struct TraceRow {
    double temperature = 0.0;
    std::uint64_t action_digest = 0;
    double accuracy = 0.0;
    double best_accuracy = 0.0;
    bool accepted = false;
    Action action;  // kept for invariant checking on the full trace
};

struct SaResult {
    Action best;
    double best_accuracy = 0.0;
    EvalResult best_eval;
    std::vector<TraceRow> trace;
    std::vector<double> temperatures;  // one per cooling level
    double t0 = 0.0;
};

std::uint64_t action_digest(const Action& a);

// exp(-dE / (k T)), clamped to [0, 1]; dE <= 0 accepts with probability 1
double acceptance_probability(double d_e, double boltzmann_k, double temperature);

// Randomized initial action: rates non-decreasing in layer size, sigma
// uniform, log-rates scaled so the realized reduction relative to `base`
// lands within +/-10% of target. Throws infeasibility_error when the target
// is unreachable under keep >= 1 clamps.
Action init_action(const Network& net, const MaskSet& base, double target,
                   Objective objective, Rng& rng, double sigma_fixed = -1.0);

// Jitters log-rates and sigmas of a random subset of layers by a magnitude
// proportional to T / T0, restores the size ordering, and renormalizes to
// the target band.
Action perturb(const Network& net, const MaskSet& base, const Action& action, double target,
               Objective objective, double temperature, double t0, double delta_max, Rng& rng,
               double sigma_fixed = -1.0);

// Magnitude pruning only (no retraining) + accuracy on the first
// `limit` samples of eval_data. The input network is untouched.
EvalResult fast_evaluate(const Network& net, const Action& action, const MaskSet& base,
                         const DatasetHandle& eval_data, int limit);

// Full annealing loop; returns the best-seen action plus the trace.
SaResult sa_run(const Network& net, const MaskSet& base, const DatasetHandle& eval_data,
                double target, const SaConfig& cfg);

// action invariant checks, used by tests and the acceptance suite
bool satisfies_ordering(const Network& net, const MaskSet& base, const Action& a);
double realized_rate(const Network& net, const MaskSet& base, const Action& a,
                     Objective objective);

}  // namespace prunekit
