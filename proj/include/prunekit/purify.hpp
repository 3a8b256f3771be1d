#pragma once

#include <map>
#include <utility>

#include "prunekit/sa.hpp"
#include "prunekit/schemes.hpp"

namespace prunekit {

// Layer-specific purification thresholds on structure L2 norms.
struct PurifyConfig {
    std::map<int, std::pair<double, double>> thresholds;  // layer -> (tau_col, tau_filt)
};

struct RemovalSets {
    std::map<int, std::vector<int>> filters;  // layer -> removed filter indices
    std::map<int, std::vector<int>> columns;  // layer -> removed GEMM column indices
};

// Structures with L2 norm strictly below the threshold are removed; the
// last surviving filter/column is never removed.
std::pair<std::vector<int>, std::vector<int>> purify_layer(const Tensor& w, double tau_col,
                                                           double tau_filt);

// Filter removals in layer i map to dead inputs of the next parameterized
// layer: kh*kw columns of the next conv per removed filter, or a block of
// H*W fc columns across the flatten boundary. Removed filters must carry
// zero bias (the removed feature maps are then identically zero).
int consumer_layer(const Network& net, int layer);
std::vector<int> propagate_removal(const Network& net, int layer,
                                   const std::vector<int>& removed_filters);

// Physically drops removed filters/channels/columns, leaving compacted
// GEMM-view layers. Forward outputs equal the masked original exactly.
Network shrink_network(const Network& net, const RemovalSets& removals);

// removal sets implied by the current masks (fully-zeroed structures),
// with filter removals propagated to consumers
RemovalSets removals_from_masks(const Network& net, const MaskSet& masks);

struct PurifySearchConfig {
    double accuracy_epsilon = 0.002;  // tolerated drop vs pre-purification
    int eval_subset = 1000;
    std::uint64_t seed = 0;
    double eta = 0.7;
    double boltzmann_k = 1e-3;
    int iters_per_temp = 10;
    int cooling_levels = 8;
};

// SA over per-layer norm-quantile thresholds {0, 10%, ..., 50%}; maximizes
// extra weight removal subject to the accuracy constraint. Returns the
// config plus the masks with the extra removals folded in. Biases of
// filters scheduled for removal are zeroed as part of candidate evaluation.
struct PurifyOutcome {
    PurifyConfig config;
    MaskSet masks;
    double accuracy = 0.0;
};
PurifyOutcome search_thresholds(const Network& net, const MaskSet& masks,
                                const DatasetHandle& eval_data,
                                const PurifySearchConfig& cfg);

// zero biases of structures slated for removal, then mask the structures
void apply_purification(Network& net, MaskSet& masks, const PurifyConfig& config);

}  // namespace prunekit
