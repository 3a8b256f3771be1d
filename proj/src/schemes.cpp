#include "prunekit/schemes.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace prunekit {

int LayerMask::kept_filters() const {
    return static_cast<int>(std::count(filter.begin(), filter.end(), std::uint8_t{1}));
}

int LayerMask::kept_columns() const {
    return static_cast<int>(std::count(column.begin(), column.end(), std::uint8_t{1}));
}

MaskSet MaskSet::all_ones(const Network& net) {
    MaskSet ms;
    for (int li : prunable_layers(net)) {
        const auto& l = net.layers[static_cast<size_t>(li)];
        LayerMask m;
        m.filter.assign(static_cast<size_t>(l.gemm_rows()), 1);
        m.column.assign(static_cast<size_t>(l.gemm_cols()), 1);
        ms.layers[li] = std::move(m);
    }
    return ms;
}

std::vector<double> group_norms(const Tensor& w, Scheme scheme) {
    int rows, cin, kh, kw;
    if (w.rank() == 4) {
        rows = w.dim(0);
        cin = w.dim(1);
        kh = w.dim(2);
        kw = w.dim(3);
    } else if (w.rank() == 2) {
        rows = w.dim(0);
        cin = w.dim(1);
        kh = kw = 1;
    } else {
        throw contract_error("group_norms: weight must be rank 2 or 4");
    }
    const int cols = cin * kh * kw;
    const int per_channel = kh * kw;
    std::vector<double> acc;
    if (scheme == Scheme::Filter)
        acc.assign(static_cast<size_t>(rows), 0.0);
    else if (scheme == Scheme::Column)
        acc.assign(static_cast<size_t>(cols), 0.0);
    else
        acc.assign(static_cast<size_t>(cin), 0.0);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) {
            const double v = w[static_cast<size_t>(i) * cols + j];
            if (scheme == Scheme::Filter)
                acc[static_cast<size_t>(i)] += v * v;
            else if (scheme == Scheme::Column)
                acc[static_cast<size_t>(j)] += v * v;
            else
                acc[static_cast<size_t>(j / per_channel)] += v * v;
        }
    for (auto& a : acc) a = std::sqrt(a);
    return acc;
}

StructureConstraint realize_keep(int avail_filters, int avail_columns, double rate,
                                 double sigma) {
    if (rate < 1.0 || sigma < 0.0 || sigma > 1.0)
        throw contract_error("realize_keep: rate must be >= 1 and sigma in [0,1]");
    const double rf = std::pow(rate, sigma);
    const double rc = std::pow(rate, 1.0 - sigma);
    StructureConstraint c;
    c.keep_filters = std::clamp(static_cast<int>(std::floor(avail_filters / rf + 0.5)), 1,
                                avail_filters);
    c.keep_columns = std::clamp(static_cast<int>(std::floor(avail_columns / rc + 0.5)), 1,
                                avail_columns);
    return c;
}

std::vector<int> top_k_indices(const std::vector<double>& values, int k,
                               const std::vector<std::uint8_t>* eligible) {
    std::vector<int> idx;
    for (size_t i = 0; i < values.size(); ++i)
        if (!eligible || (*eligible)[i]) idx.push_back(static_cast<int>(i));
    if (k > static_cast<int>(idx.size()))
        throw contract_error("top_k_indices: k exceeds eligible structure count");
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
        if (values[static_cast<size_t>(a)] != values[static_cast<size_t>(b)])
            return values[static_cast<size_t>(a)] > values[static_cast<size_t>(b)];
        return a < b;
    });
    idx.resize(static_cast<size_t>(k));
    std::sort(idx.begin(), idx.end());
    return idx;
}

void apply_mask(Network& net, const MaskSet& masks) {
    for (const auto& [li, m] : masks.layers) {
        auto& l = net.layers[static_cast<size_t>(li)];
        const int rows = l.gemm_rows(), cols = l.gemm_cols();
        if (static_cast<int>(m.filter.size()) != rows ||
            static_cast<int>(m.column.size()) != cols)
            throw contract_error("apply_mask: mask shape mismatch at layer " + std::to_string(li));
        for (int i = 0; i < rows; ++i)
            for (int j = 0; j < cols; ++j)
                if (!m.dense_cell(i, j)) l.W[static_cast<size_t>(i) * cols + j] = 0.0;
    }
}

std::vector<DenseMask> to_dense_masks(const Network& net, const MaskSet& masks) {
    std::vector<DenseMask> out;
    for (const auto& [li, m] : masks.layers) {
        const auto& l = net.layers[static_cast<size_t>(li)];
        const int rows = l.gemm_rows(), cols = l.gemm_cols();
        DenseMask d;
        d.layer = li;
        d.keep.resize(static_cast<size_t>(rows) * cols);
        for (int i = 0; i < rows; ++i)
            for (int j = 0; j < cols; ++j)
                d.keep[static_cast<size_t>(i) * cols + j] = m.dense_cell(i, j) ? 1 : 0;
        d.keep_bias = m.filter;  // a masked filter's bias is pinned with it
        out.push_back(std::move(d));
    }
    return out;
}

ParamCounts count_params(const Network& net, const MaskSet* masks) {
    ParamCounts c;
    for (size_t li = 0; li < net.layers.size(); ++li) {
        const auto& l = net.layers[li];
        if (!l.has_params()) continue;
        long kept = static_cast<long>(l.gemm_rows()) * l.gemm_cols();
        if (masks) {
            const auto it = masks->layers.find(static_cast<int>(li));
            if (it != masks->layers.end())
                kept = static_cast<long>(it->second.kept_filters()) * it->second.kept_columns();
        }
        c.total += kept;
        if (l.kind == LayerKind::Conv) c.conv += kept;
    }
    return c;
}

long count_flops(const Network& net, const MaskSet* masks) {
    const auto shapes = activation_shapes(net);
    long flops = 0;
    for (size_t li = 0; li < net.layers.size(); ++li) {
        const auto& l = net.layers[li];
        if (!l.has_params()) continue;
        long rows = l.gemm_rows(), cols = l.gemm_cols();
        if (masks) {
            const auto it = masks->layers.find(static_cast<int>(li));
            if (it != masks->layers.end()) {
                rows = it->second.kept_filters();
                cols = it->second.kept_columns();
            }
        }
        long spatial = 1;
        if (l.kind == LayerKind::Conv) spatial = static_cast<long>(shapes[li][1]) * shapes[li][2];
        flops += 2L * rows * cols * spatial;
    }
    return flops;
}

namespace {

long conv_cost(const Network& net, int li, long rows, long cols, Objective objective,
               const std::vector<std::vector<int>>& shapes) {
    long cost = rows * cols;
    if (objective == Objective::Flops && net.layers[static_cast<size_t>(li)].kind == LayerKind::Conv)
        cost *= static_cast<long>(shapes[static_cast<size_t>(li)][1]) *
                shapes[static_cast<size_t>(li)][2];
    return cost;
}

}  // namespace

double reduction_rate(const Network& net, const MaskSet& base, const MaskSet& now,
                      Objective objective) {
    const auto shapes = activation_shapes(net);
    long before = 0, after = 0;
    for (size_t li = 0; li < net.layers.size(); ++li) {
        const auto& l = net.layers[li];
        if (l.kind != LayerKind::Conv) continue;
        const int i = static_cast<int>(li);
        auto count_of = [&](const MaskSet& ms) {
            const auto it = ms.layers.find(i);
            long rows = l.gemm_rows(), cols = l.gemm_cols();
            if (it != ms.layers.end()) {
                rows = it->second.kept_filters();
                cols = it->second.kept_columns();
            }
            return conv_cost(net, i, rows, cols, objective, shapes);
        };
        before += count_of(base);
        after += count_of(now);
    }
    return static_cast<double>(before) / static_cast<double>(after);
}

MaskSet magnitude_prune(const Network& net, const Action& action, const MaskSet& base) {
    MaskSet out = base;
    for (const auto& [li, la] : action.layers) {
        const auto& l = net.layers[static_cast<size_t>(li)];
        const auto bit = base.layers.find(li);
        if (bit == base.layers.end())
            throw contract_error("magnitude_prune: action targets unmasked layer " +
                                 std::to_string(li));
        const LayerMask& bm = bit->second;
        const StructureConstraint c =
            realize_keep(bm.kept_filters(), bm.kept_columns(), la.rate, la.sigma);
        const auto fnorms = group_norms(l.W, Scheme::Filter);
        const auto cnorms = group_norms(l.W, Scheme::Column);
        LayerMask nm;
        nm.filter.assign(bm.filter.size(), 0);
        nm.column.assign(bm.column.size(), 0);
        for (int i : top_k_indices(fnorms, c.keep_filters, &bm.filter))
            nm.filter[static_cast<size_t>(i)] = 1;
        for (int j : top_k_indices(cnorms, c.keep_columns, &bm.column))
            nm.column[static_cast<size_t>(j)] = 1;
        out.layers[li] = std::move(nm);
    }
    return out;
}

MaskSet magnitude_prune(const Network& net, const Action& action) {
    return magnitude_prune(net, action, MaskSet::all_ones(net));
}

}  // namespace prunekit
