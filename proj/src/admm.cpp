#include "prunekit/admm.hpp"

#include <algorithm>
#include <cmath>

#include "prunekit/rng.hpp"

namespace prunekit {

Tensor euclidean_project(const Tensor& w, const StructureConstraint& c,
                         const LayerMask* alive, LayerMask* chosen) {
    const int rows = w.dim(0);
    const int cols = static_cast<int>(w.numel()) / rows;
    const auto fnorms = group_norms(w, Scheme::Filter);
    const std::vector<std::uint8_t>* ef = alive ? &alive->filter : nullptr;
    const std::vector<std::uint8_t>* ec = alive ? &alive->column : nullptr;
    const int avail_f = ef ? static_cast<int>(std::count(ef->begin(), ef->end(), 1)) : rows;
    const int avail_c = ec ? static_cast<int>(std::count(ec->begin(), ec->end(), 1)) : cols;
    if (c.keep_filters > avail_f || c.keep_columns > avail_c)
        throw contract_error("euclidean_project: keep-count exceeds structure total");
    LayerMask sel;
    sel.filter.assign(static_cast<size_t>(rows), 0);
    sel.column.assign(static_cast<size_t>(cols), 0);
    for (int i : top_k_indices(fnorms, c.keep_filters, ef)) sel.filter[static_cast<size_t>(i)] = 1;
    Tensor z = w;
    for (int i = 0; i < rows; ++i)
        if (!sel.filter[static_cast<size_t>(i)])
            for (int j = 0; j < cols; ++j) z[static_cast<size_t>(i) * cols + j] = 0.0;
    const auto cnorms = group_norms(z.rank() == 4 ? z : z.reshaped({rows, cols}), Scheme::Column);
    for (int j : top_k_indices(cnorms, c.keep_columns, ec)) sel.column[static_cast<size_t>(j)] = 1;
    for (int j = 0; j < cols; ++j)
        if (!sel.column[static_cast<size_t>(j)])
            for (int i = 0; i < rows; ++i) z[static_cast<size_t>(i) * cols + j] = 0.0;
    if (chosen) *chosen = std::move(sel);
    return z;
}

Tensor dual_update(const Tensor& u, const Tensor& w, const Tensor& z) {
    return add(u, sub(w, z));
}

double multi_rho_update(double rho, int k, const AdmmConfig& cfg) {
    if (k >= 1 && cfg.rho_period > 0 && k % cfg.rho_period == 0) return rho * cfg.rho_growth;
    return rho;
}

AdmmHistory admm_regularize(Network& net, const Action& action, const MaskSet& base,
                            const DatasetHandle& data, const AdmmConfig& cfg,
                            AdmmState& state) {
    state.layers.clear();
    state.iteration = 0;
    for (const auto& [li, la] : action.layers) {
        const auto& l = net.layers[static_cast<size_t>(li)];
        const LayerMask& alive = base.at(li);
        AdmmLayerState ls;
        ls.rho = cfg.rho0;
        ls.constraint =
            realize_keep(alive.kept_filters(), alive.kept_columns(), la.rate, la.sigma);
        ls.U = Tensor::zeros(l.W.shape());
        ls.Z = euclidean_project(l.W, ls.constraint, &alive, &ls.support);
        state.layers[li] = std::move(ls);
    }
    const auto masks = to_dense_masks(net, base);
    AdmmHistory hist;
    for (int k = 1; k <= cfg.iterations; ++k) {
        std::vector<QuadPenalty> penalties;
        for (const auto& [li, ls] : state.layers)
            penalties.push_back({li, sub(ls.Z, ls.U), ls.rho / 2.0});
        TrainOptions opt;
        opt.epochs = cfg.epochs_per_iter;
        opt.lr = cfg.lr;
        opt.batch = cfg.batch;
        opt.seed = derive_seed(cfg.seed, 0x1000 + static_cast<std::uint64_t>(k));
        opt.masks = &masks;
        opt.penalties = &penalties;
        std::vector<double> losses;
        try {
            losses = train(net, data, opt);
        } catch (const training_error& e) {
            throw training_error(std::string(e.what()) + " (ADMM iteration " +
                                 std::to_string(k) + ")");
        }
        double rel_sum = 0.0;
        std::map<int, double> res;
        for (auto& [li, ls] : state.layers) {
            const Tensor& w = net.layers[static_cast<size_t>(li)].W;
            const LayerMask& alive = base.at(li);
            ls.Z = euclidean_project(add(w, ls.U), ls.constraint, &alive, &ls.support);
            ls.U = dual_update(ls.U, w, ls.Z);
            ls.rho = multi_rho_update(ls.rho, k, cfg);
            const double r = sub(w, ls.Z).frob_norm();
            res[li] = r;
            const double wn = w.frob_norm();
            rel_sum += wn > 0.0 ? r / wn : 0.0;
        }
        hist.loss.push_back(losses.empty() ? 0.0 : losses.back());
        hist.residuals.push_back(std::move(res));
        hist.mean_rel_residual.push_back(rel_sum / static_cast<double>(state.layers.size()));
        state.iteration = k;
    }
    return hist;
}

PruneOutcome hard_prune_retrain(Network& net, const AdmmState& state, const MaskSet& base,
                                const DatasetHandle& train_data,
                                const DatasetHandle& heldout, const AdmmConfig& cfg) {
    PruneOutcome out;
    out.masks = base;
    for (const auto& [li, ls] : state.layers) out.masks.layers[li] = ls.support;
    apply_mask(net, out.masks);
    const auto masks = to_dense_masks(net, out.masks);
    apply_dense_masks(net, masks);  // also zeroes the pruned filters' biases
    TrainOptions opt;
    opt.epochs = cfg.retrain_epochs;
    opt.lr = cfg.lr;
    opt.batch = cfg.batch;
    opt.seed = derive_seed(cfg.seed, 0x2000);
    opt.masks = &masks;
    if (cfg.retrain_epochs > 0) train(net, train_data, opt);
    apply_mask(net, out.masks);
    out.accuracy = evaluate_accuracy(net, heldout);
    return out;
}

}  // namespace prunekit
