#pragma once

#include <map>
#include <vector>

#include "prunekit/model.hpp"

namespace prunekit {

enum class Scheme { Filter, Channel, Column };

// Per-layer structure masks over the GEMM view of a weight matrix.
// Cell (i, j) of the dense mask is filter[i] AND column[j]; a structure is
// kept or zeroed whole, never partially.
struct LayerMask {
    std::vector<std::uint8_t> filter;  // length = GEMM rows (Cout / out_dim)
    std::vector<std::uint8_t> column;  // length = GEMM cols (Cin*kh*kw / in_dim)

    int kept_filters() const;
    int kept_columns() const;
    bool dense_cell(int i, int j) const { return filter[static_cast<size_t>(i)] && column[static_cast<size_t>(j)]; }
};

struct MaskSet {
    std::map<int, LayerMask> layers;  // keyed by layer index in the Network

    static MaskSet all_ones(const Network& net);
    const LayerMask& at(int layer) const { return layers.at(layer); }
};

struct StructureConstraint {
    int keep_filters = 1;
    int keep_columns = 1;
};

// One SA search point: per-layer pruning rate (dense/kept, >= 1) and scheme
// split sigma in [0,1] — the fraction of the layer's log-rate assigned to
// filter pruning, remainder to column pruning.
struct LayerAction {
    double rate = 1.0;
    double sigma = 0.5;
};

struct Action {
    std::map<int, LayerAction> layers;
};

// L2 norm per structure. W is a conv weight (Cout x Cin x kh x kw) or an fc
// weight (out x in, treated as out x in x 1 x 1).
std::vector<double> group_norms(const Tensor& w, Scheme scheme);

// keep-counts realizing rate with split sigma: keep_f = avail_f / rate^sigma,
// keep_c = avail_c / rate^(1-sigma), round half up, clamped to [1, avail].
StructureConstraint realize_keep(int avail_filters, int avail_columns, double rate,
                                 double sigma);

// indices of the top-k entries by value, ties broken toward lower index;
// selection restricted to eligible indices when given
std::vector<int> top_k_indices(const std::vector<double>& values, int k,
                               const std::vector<std::uint8_t>* eligible = nullptr);

// Zeroes masked weights in place. Masks stay authoritative: training code is
// handed the dense keep pattern so masked entries are re-zeroed every step.
void apply_mask(Network& net, const MaskSet& masks);
std::vector<DenseMask> to_dense_masks(const Network& net, const MaskSet& masks);

struct ParamCounts {
    long conv = 0;
    long total = 0;
};

// Unmasked weight-entry counts (conv-only and total over all param layers).
ParamCounts count_params(const Network& net, const MaskSet* masks = nullptr);

// FLOPs of one forward pass, 2 per multiply-accumulate:
// conv = 2 * keptFilters * keptColumns * Hout * Wout, fc analogous.
long count_flops(const Network& net, const MaskSet* masks = nullptr);

enum class Objective { Params, Flops };

// dense/kept reduction rate of `now` relative to `base` (conv layers only)
double reduction_rate(const Network& net, const MaskSet& base, const MaskSet& now,
                      Objective objective);

// Magnitude pruning realizing an action: per prunable layer keep the
// top-keep filters and columns by L2 norm among structures still alive in
// `base`. Returns the cumulative mask set.
MaskSet magnitude_prune(const Network& net, const Action& action, const MaskSet& base);
MaskSet magnitude_prune(const Network& net, const Action& action);

}  // namespace prunekit
