#include "prunekit/purify.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace prunekit {

std::pair<std::vector<int>, std::vector<int>> purify_layer(const Tensor& w, double tau_col,
                                                           double tau_filt) {
    if (!std::isfinite(tau_col) || !std::isfinite(tau_filt) || tau_col < 0 || tau_filt < 0)
        throw contract_error("purify_layer: thresholds must be finite and non-negative");
    auto below = [](const std::vector<double>& norms, double tau) {
        std::vector<int> removed;
        for (size_t i = 0; i < norms.size(); ++i)
            if (norms[i] < tau) removed.push_back(static_cast<int>(i));
        if (removed.size() == norms.size() && !removed.empty()) {
            // keep the strongest structure; never remove the last one
            size_t best = 0;
            for (size_t i = 1; i < norms.size(); ++i)
                if (norms[i] > norms[best]) best = i;
            removed.erase(removed.begin() + static_cast<std::ptrdiff_t>(best));
        }
        return removed;
    };
    return {below(group_norms(w, Scheme::Column), tau_col),
            below(group_norms(w, Scheme::Filter), tau_filt)};
}

int consumer_layer(const Network& net, int layer) {
    for (size_t j = static_cast<size_t>(layer) + 1; j < net.layers.size(); ++j)
        if (net.layers[j].has_params()) return static_cast<int>(j);
    return -1;
}

std::vector<int> propagate_removal(const Network& net, int layer,
                                   const std::vector<int>& removed_filters) {
    if (removed_filters.empty()) return {};
    const auto& l = net.layers[static_cast<size_t>(layer)];
    for (int f : removed_filters)
        if (l.b[static_cast<size_t>(f)] != 0.0)
            throw contract_error("propagate_removal: removed filter " + std::to_string(f) +
                                 " in layer " + std::to_string(layer) + " has nonzero bias");
    const int j = consumer_layer(net, layer);
    if (j < 0) return {};
    const auto shapes = activation_shapes(net);
    // block of consumer columns fed by one channel
    int block = 1;
    bool flattened = false;
    for (int k = layer + 1; k < j; ++k)
        if (net.layers[static_cast<size_t>(k)].kind == LayerKind::Flatten) {
            const auto& before = shapes[static_cast<size_t>(k - 1)];
            block = before[1] * before[2];
            flattened = true;
        }
    const auto& consumer = net.layers[static_cast<size_t>(j)];
    if (consumer.kind == LayerKind::Conv && !flattened) block = consumer.kh * consumer.kw;
    std::vector<int> cols;
    for (int f : removed_filters)
        for (int s = 0; s < block; ++s) cols.push_back(f * block + s);
    std::sort(cols.begin(), cols.end());
    return cols;
}

RemovalSets removals_from_masks(const Network& net, const MaskSet& masks) {
    RemovalSets rs;
    for (const auto& [li, m] : masks.layers) {
        std::vector<int> rf, rc;
        for (size_t i = 0; i < m.filter.size(); ++i)
            if (!m.filter[i]) rf.push_back(static_cast<int>(i));
        for (size_t j = 0; j < m.column.size(); ++j)
            if (!m.column[j]) rc.push_back(static_cast<int>(j));
        if (!rf.empty()) {
            const int consumer = consumer_layer(net, li);
            if (consumer >= 0) {
                std::vector<int> prop = propagate_removal(net, li, rf);
                auto& dest = rs.columns[consumer];
                dest.insert(dest.end(), prop.begin(), prop.end());
            }
        }
        if (!rf.empty()) rs.filters[li] = std::move(rf);
        if (!rc.empty()) {
            auto& dest = rs.columns[li];
            dest.insert(dest.end(), rc.begin(), rc.end());
        }
    }
    for (auto& [li, cols] : rs.columns) {
        std::sort(cols.begin(), cols.end());
        cols.erase(std::unique(cols.begin(), cols.end()), cols.end());
    }
    return rs;
}

Network shrink_network(const Network& net, const RemovalSets& removals) {
    for (const auto& l : net.layers)
        if (l.compacted()) throw contract_error("shrink_network: network already compacted");
    const auto shapes = activation_shapes(net);
    Network out;
    out.input_shape = net.input_shape;
    out.num_classes = net.num_classes;
    // old indices of surviving features at the current point (channels for
    // image stages, flat features after flatten)
    std::vector<int> live;
    for (int c = 0; c < net.input_shape[0]; ++c) live.push_back(c);
    auto removed_of = [](const std::map<int, std::vector<int>>& m, int li) {
        static const std::vector<int> none;
        const auto it = m.find(li);
        return it == m.end() ? none : it->second;
    };
    for (size_t li = 0; li < net.layers.size(); ++li) {
        const auto& l = net.layers[li];
        if (l.kind == LayerKind::Relu || l.kind == LayerKind::Maxpool) {
            out.layers.push_back(l);
            continue;
        }
        if (l.kind == LayerKind::Flatten) {
            const auto& before = shapes[li - 1];
            const int spatial = before[1] * before[2];
            std::vector<int> flat;
            for (int c : live)
                for (int s = 0; s < spatial; ++s) flat.push_back(c * spatial + s);
            live = std::move(flat);
            out.layers.push_back(l);
            continue;
        }
        // parameterized layer
        const auto& rfs = removed_of(removals.filters, static_cast<int>(li));
        const auto& rcs = removed_of(removals.columns, static_cast<int>(li));
        const std::set<int> rf(rfs.begin(), rfs.end());
        const std::set<int> rc(rcs.begin(), rcs.end());
        const int rows = l.gemm_rows(), cols = l.gemm_cols();
        std::vector<int> kept_rows;
        for (int i = 0; i < rows; ++i)
            if (!rf.count(i)) kept_rows.push_back(i);
        if (kept_rows.empty()) throw contract_error("shrink_network: layer loses all filters");
        // map old input feature -> position in the shrunk input
        const int block = l.kind == LayerKind::Conv ? l.kh * l.kw : 1;
        std::vector<int> feature_pos(
            static_cast<size_t>(l.kind == LayerKind::Conv ? l.cin : l.in_dim), -1);
        for (size_t p = 0; p < live.size(); ++p)
            feature_pos[static_cast<size_t>(live[p])] = static_cast<int>(p);
        std::vector<int> kept_old_cols, kept_new_cols;
        for (int j = 0; j < cols; ++j) {
            const int feature = j / block;
            const int within = j % block;
            const bool feature_alive = feature_pos[static_cast<size_t>(feature)] >= 0;
            if (rc.count(j)) continue;
            if (!feature_alive)
                throw contract_error(
                    "shrink_network: column " + std::to_string(j) + " of layer " +
                    std::to_string(li) + " reads a removed input; removal sets inconsistent");
            kept_old_cols.push_back(j);
            kept_new_cols.push_back(feature_pos[static_cast<size_t>(feature)] * block + within);
        }
        if (kept_old_cols.empty()) throw contract_error("shrink_network: layer loses all columns");
        LayerSpec nl = l;
        nl.b = Tensor::zeros({static_cast<int>(kept_rows.size())});
        for (size_t i = 0; i < kept_rows.size(); ++i)
            nl.b[i] = l.b[static_cast<size_t>(kept_rows[i])];
        Tensor wmat({static_cast<int>(kept_rows.size()), static_cast<int>(kept_old_cols.size())});
        for (size_t i = 0; i < kept_rows.size(); ++i)
            for (size_t j = 0; j < kept_old_cols.size(); ++j)
                wmat.at(static_cast<int>(i), static_cast<int>(j)) =
                    l.W[static_cast<size_t>(kept_rows[i]) * cols + kept_old_cols[j]];
        const int new_features = static_cast<int>(live.size());
        if (l.kind == LayerKind::Conv) {
            nl.cout = static_cast<int>(kept_rows.size());
            nl.cin = new_features;
            if (static_cast<int>(kept_new_cols.size()) == new_features * block) {
                nl.W = wmat.reshaped({nl.cout, nl.cin, l.kh, l.kw});
                nl.kept_cols.clear();
            } else {
                nl.W = std::move(wmat);
                nl.kept_cols = kept_new_cols;
            }
        } else {
            nl.out_dim = static_cast<int>(kept_rows.size());
            nl.in_dim = new_features;
            if (static_cast<int>(kept_new_cols.size()) == new_features) {
                nl.W = std::move(wmat);
                nl.kept_cols.clear();
            } else {
                nl.W = std::move(wmat);
                nl.kept_cols = kept_new_cols;
            }
        }
        out.layers.push_back(std::move(nl));
        live = kept_rows;
    }
    return out;
}

namespace {

double quantile_threshold(std::vector<double> norms, int qidx) {
    // qidx 0..5 -> quantile 0%, 10%, ..., 50% of the alive-structure norms
    if (qidx <= 0) return 0.0;
    std::vector<double> alive;
    for (double v : norms)
        if (v > 0.0) alive.push_back(v);
    if (alive.empty()) return 0.0;
    std::sort(alive.begin(), alive.end());
    const double q = 0.1 * qidx;
    size_t k = static_cast<size_t>(std::floor(q * static_cast<double>(alive.size())));
    if (k >= alive.size()) k = alive.size() - 1;
    return alive[k];
}

struct ThresholdCand {
    std::map<int, std::pair<int, int>> q;  // layer -> (q_col, q_filt) indices
};

}  // namespace

void apply_purification(Network& net, MaskSet& masks, const PurifyConfig& config) {
    for (const auto& [li, taus] : config.thresholds) {
        auto& l = net.layers[static_cast<size_t>(li)];
        const auto [rc, rf] = purify_layer(l.W, taus.first, taus.second);
        LayerMask& m = masks.layers.at(li);
        for (int j : rc) m.column[static_cast<size_t>(j)] = 0;
        for (int f : rf) {
            m.filter[static_cast<size_t>(f)] = 0;
            l.b[static_cast<size_t>(f)] = 0.0;
        }
    }
    apply_mask(net, masks);
}

PurifyOutcome search_thresholds(const Network& net, const MaskSet& masks,
                                const DatasetHandle& eval_data,
                                const PurifySearchConfig& cfg) {
    Rng rng(derive_seed(cfg.seed, 0x9f));
    const double acc_pre = evaluate_accuracy(net, eval_data, cfg.eval_subset);
    const long params_pre = count_params(net, &masks).total;

    std::vector<int> layers;
    for (const auto& [li, m] : masks.layers) layers.push_back(li);

    auto evaluate_cand = [&](const ThresholdCand& cand) {
        Network trial = net;
        MaskSet trial_masks = masks;
        PurifyConfig pc;
        for (const auto& [li, qq] : cand.q) {
            const auto& w = net.layers[static_cast<size_t>(li)].W;
            pc.thresholds[li] = {quantile_threshold(group_norms(w, Scheme::Column), qq.first),
                                 quantile_threshold(group_norms(w, Scheme::Filter), qq.second)};
        }
        apply_purification(trial, trial_masks, pc);
        const double acc = evaluate_accuracy(trial, eval_data, cfg.eval_subset);
        const long params = count_params(trial, &trial_masks).total;
        const double removed_frac =
            static_cast<double>(params_pre - params) / std::max(1L, params_pre);
        const bool feasible = acc_pre - acc <= cfg.accuracy_epsilon + 1e-12;
        const double energy = feasible ? -removed_frac : (acc_pre - acc);
        return std::tuple<double, bool, PurifyConfig, MaskSet, double>(energy, feasible, pc,
                                                                       trial_masks, acc);
    };

    ThresholdCand current;
    for (int li : layers) current.q[li] = {0, 0};
    auto [cur_energy, cur_feasible, cur_pc, cur_masks, cur_acc] = evaluate_cand(current);

    PurifyOutcome best;
    best.config = cur_pc;
    best.masks = cur_masks;
    best.accuracy = cur_acc;
    double best_energy = cur_energy;

    auto neighbor = [&](const ThresholdCand& c) {
        ThresholdCand n = c;
        const int li = layers[static_cast<size_t>(rng.uniform_int(0, static_cast<int>(layers.size()) - 1))];
        auto& qq = n.q.at(li);
        int& target = rng.bernoulli(0.5) ? qq.first : qq.second;
        target = std::clamp(target + (rng.bernoulli(0.5) ? 1 : -1), 0, 5);
        return n;
    };

    // warm-up to size T0 (same annealing rules as the pruning-rate search)
    std::vector<double> degradations;
    for (int i = 0; i < 10; ++i) {
        const auto [e, f, p, m, a] = evaluate_cand(neighbor(current));
        const double d = e - cur_energy;
        if (d > 0) degradations.push_back(d);
    }
    double med = 0.01;
    if (!degradations.empty()) {
        std::sort(degradations.begin(), degradations.end());
        med = degradations[degradations.size() / 2];
    }
    double temperature = med / (cfg.boltzmann_k * std::log(1.0 / 0.9));
    const double t_stop = temperature * std::pow(cfg.eta, cfg.cooling_levels);

    while (temperature > t_stop) {
        for (int it = 0; it < cfg.iters_per_temp; ++it) {
            ThresholdCand cand = neighbor(current);
            auto [energy, feasible, pc, cand_masks, acc] = evaluate_cand(cand);
            const double d_e = energy - cur_energy;
            if (d_e <= 0.0 ||
                rng.bernoulli(acceptance_probability(d_e, cfg.boltzmann_k, temperature))) {
                current = cand;
                cur_energy = energy;
            }
            if (feasible && energy < best_energy) {
                best_energy = energy;
                best.config = pc;
                best.masks = cand_masks;
                best.accuracy = acc;
            }
        }
        temperature *= cfg.eta;
    }
    return best;
}

}  // namespace prunekit
