#pragma once

#include <map>

#include "prunekit/schemes.hpp"

namespace prunekit {

struct AdmmConfig {
    double rho0 = 1e-4;
    double rho_growth = 1.5;  // gamma
    int rho_period = 3;       // grow every this many iterations
    int iterations = 9;       // K
    int epochs_per_iter = 4;  // subproblem-1 budget
    int retrain_epochs = 8;   // masked fine-tune after hard prune
    double lr = 1e-3;
    int batch = 32;
    std::uint64_t seed = 0;
};

struct AdmmLayerState {
    Tensor Z;
    Tensor U;
    double rho = 1e-4;
    StructureConstraint constraint;
    LayerMask support;  // structures kept by the latest projection
};

struct AdmmState {
    std::map<int, AdmmLayerState> layers;
    int iteration = 0;
};

struct AdmmHistory {
    std::vector<double> loss;                        // training loss per iteration
    std::vector<std::map<int, double>> residuals;    // ||W - Z||_F per layer per iteration
    std::vector<double> mean_rel_residual;           // mean ||W-Z||_F / ||W||_F per iteration
};

// Projection of W onto the combined structure constraint: keep the top
// keep_filters filters by L2 norm, then the top keep_columns columns of the
// result (ties toward lower index). Exact for a single scheme; the combined
// constraint composes filter-first. Selection is restricted to structures
// still alive in `alive` when given.
Tensor euclidean_project(const Tensor& w, const StructureConstraint& c,
                         const LayerMask* alive = nullptr, LayerMask* chosen = nullptr);

// U' = U + W - Z
Tensor dual_update(const Tensor& u, const Tensor& w, const Tensor& z);

// rho escalation: rho * gamma when k is a period boundary, else rho
double multi_rho_update(double rho, int k, const AdmmConfig& cfg);

// ADMM regularization: alternates subproblem-1 training of
// f + sum_i rho_i/2 ||W_i - Z_i + U_i||_F^2 with the Euclidean projection
// and the dual update, escalating rho on schedule. `base` masks stay
// enforced throughout.
AdmmHistory admm_regularize(Network& net, const Action& action, const MaskSet& base,
                            const DatasetHandle& data, const AdmmConfig& cfg,
                            AdmmState& state);

// Masks from the support of Z, masked retraining, held-out accuracy.
struct PruneOutcome {
    MaskSet masks;
    double accuracy = 0.0;
};
PruneOutcome hard_prune_retrain(Network& net, const AdmmState& state, const MaskSet& base,
                                const DatasetHandle& train_data,
                                const DatasetHandle& heldout, const AdmmConfig& cfg);

}  // namespace prunekit
