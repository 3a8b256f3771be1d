#include "prunekit/sa.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace prunekit {

namespace {

struct LayerInfo {
    int layer;
    long remaining;  // alive weight entries under the base masks
};

std::vector<LayerInfo> layer_sizes(const Network& net, const MaskSet& base) {
    std::vector<LayerInfo> out;
    for (int li : prunable_layers(net)) {
        const LayerMask& m = base.at(li);
        out.push_back({li, static_cast<long>(m.kept_filters()) * m.kept_columns()});
    }
    // largest first; equal sizes keep layer order
    std::stable_sort(out.begin(), out.end(),
                     [](const LayerInfo& a, const LayerInfo& b) { return a.remaining > b.remaining; });
    return out;
}

Action with_scaled_logrates(const Action& a, double s) {
    Action out = a;
    for (auto& [li, la] : out.layers)
        la.rate = std::exp(std::log(a.layers.at(li).rate) * s);
    return out;
}

// scale log-rates so the realized reduction lands in [0.9, 1.1] * target;
// realized is a non-decreasing step function of the scale
Action normalize_to_target(const Network& net, const MaskSet& base, Action a, double target,
                           Objective objective) {
    const double lo_band = 0.9 * target, hi_band = 1.1 * target;
    double r = realized_rate(net, base, a, objective);
    if (r >= lo_band && r <= hi_band) return a;
    double lo = 0.0, hi = 1.0;
    while (realized_rate(net, base, with_scaled_logrates(a, hi), objective) < target) {
        hi *= 2.0;
        if (hi > 1e4) break;
    }
    if (realized_rate(net, base, with_scaled_logrates(a, hi), objective) < lo_band)
        throw infeasibility_error("target reduction " + std::to_string(target) +
                                  " unreachable under keep >= 1 clamps");
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        const double rm = realized_rate(net, base, with_scaled_logrates(a, mid), objective);
        if (rm >= lo_band && rm <= hi_band) return with_scaled_logrates(a, mid);
        if (rm < target)
            lo = mid;
        else
            hi = mid;
    }
    // keep-count rounding can step over the band; take the closer edge
    const Action alo = with_scaled_logrates(a, lo), ahi = with_scaled_logrates(a, hi);
    const double rlo = realized_rate(net, base, alo, objective);
    const double rhi = realized_rate(net, base, ahi, objective);
    if (std::abs(rlo - target) <= std::abs(rhi - target) && rlo >= lo_band && rlo <= hi_band)
        return alo;
    if (rhi >= lo_band && rhi <= hi_band) return ahi;
    throw infeasibility_error("cannot realize reduction within +/-10% of target " +
                              std::to_string(target));
}

void restore_ordering(Action& a, const std::vector<LayerInfo>& order) {
    std::vector<double> rates;
    for (const auto& info : order) rates.push_back(a.layers.at(info.layer).rate);
    std::sort(rates.begin(), rates.end(), std::greater<double>());
    for (size_t i = 0; i < order.size(); ++i) a.layers.at(order[i].layer).rate = rates[i];
}

}  // namespace

std::uint64_t action_digest(const Action& a) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](double v) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, sizeof bits);
        for (int i = 0; i < 8; ++i) {
            h ^= (bits >> (8 * i)) & 0xff;
            h *= 0x100000001b3ULL;
        }
    };
    for (const auto& [li, la] : a.layers) {
        mix(static_cast<double>(li));
        mix(la.rate);
        mix(la.sigma);
    }
    return h;
}

double acceptance_probability(double d_e, double boltzmann_k, double temperature) {
    if (d_e <= 0.0) return 1.0;
    return std::exp(-d_e / (boltzmann_k * temperature));
}

bool satisfies_ordering(const Network& net, const MaskSet& base, const Action& a) {
    const auto order = layer_sizes(net, base);
    for (size_t i = 0; i < order.size(); ++i)
        for (size_t j = i + 1; j < order.size(); ++j)
            if (order[i].remaining > order[j].remaining &&
                a.layers.at(order[i].layer).rate < a.layers.at(order[j].layer).rate - 1e-12)
                return false;
    return true;
}

double realized_rate(const Network& net, const MaskSet& base, const Action& a,
                     Objective objective) {
    const MaskSet masks = magnitude_prune(net, a, base);
    return reduction_rate(net, base, masks, objective);
}

Action init_action(const Network& net, const MaskSet& base, double target,
                   Objective objective, Rng& rng, double sigma_fixed) {
    if (target <= 1.0) throw contract_error("init_action: target must exceed 1");
    const auto order = layer_sizes(net, base);
    if (order.empty()) throw contract_error("init_action: no prunable layers");
    std::vector<double> logrates;
    for (size_t i = 0; i < order.size(); ++i) logrates.push_back(rng.uniform(0.1, 1.0));
    std::sort(logrates.begin(), logrates.end(), std::greater<double>());
    Action a;
    for (size_t i = 0; i < order.size(); ++i) {
        LayerAction la;
        la.rate = std::exp(logrates[i]);
        la.sigma = sigma_fixed >= 0.0 ? sigma_fixed : rng.uniform();
        a.layers[order[i].layer] = la;
    }
    return normalize_to_target(net, base, std::move(a), target, objective);
}

Action perturb(const Network& net, const MaskSet& base, const Action& action, double target,
               Objective objective, double temperature, double t0, double delta_max, Rng& rng,
               double sigma_fixed) {
    const double delta = delta_max * std::clamp(temperature / t0, 0.0, 1.0);
    const auto order = layer_sizes(net, base);
    Action a = action;
    const int subset = static_cast<int>(
        std::ceil(static_cast<double>(order.size()) / 3.0));
    std::vector<int> idx(order.size());
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
    std::shuffle(idx.begin(), idx.end(), rng.engine());
    for (int s = 0; s < subset; ++s) {
        LayerAction& la = a.layers.at(order[static_cast<size_t>(idx[static_cast<size_t>(s)])].layer);
        const double factor = 1.0 + rng.uniform(-delta, delta);
        la.rate = std::exp(std::max(0.0, std::log(la.rate) * factor));
        la.sigma = sigma_fixed >= 0.0
                       ? sigma_fixed
                       : std::clamp(la.sigma + rng.uniform(-delta, delta), 0.0, 1.0);
    }
    restore_ordering(a, order);
    return normalize_to_target(net, base, std::move(a), target, objective);
}

EvalResult fast_evaluate(const Network& net, const Action& action, const MaskSet& base,
                         const DatasetHandle& eval_data, int limit) {
    if (eval_data.size() == 0) throw contract_error("fast_evaluate: empty eval set");
    Network pruned = net;
    const MaskSet masks = magnitude_prune(pruned, action, base);
    apply_mask(pruned, masks);
    EvalResult r;
    r.accuracy = evaluate_accuracy(pruned, eval_data, limit);
    r.params_rate = reduction_rate(net, base, masks, Objective::Params);
    r.flops_rate = reduction_rate(net, base, masks, Objective::Flops);
    return r;
}

SaResult sa_run(const Network& net, const MaskSet& base, const DatasetHandle& eval_data,
                double target, const SaConfig& cfg) {
    Rng rng(derive_seed(cfg.seed, 0x5a));
    Action current = init_action(net, base, target, cfg.objective, rng, cfg.sigma_fixed);
    EvalResult cur_eval = fast_evaluate(net, current, base, eval_data, cfg.eval_subset);

    double t0 = cfg.t0;
    if (t0 <= 0.0) {
        // warm-up: size T0 so the median bad move is accepted with p ~ 0.9
        std::vector<double> degradations;
        for (int i = 0; i < cfg.calibration_moves; ++i) {
            Action cand = perturb(net, base, current, target, cfg.objective, 1.0, 1.0,
                                  cfg.delta_max, rng, cfg.sigma_fixed);
            const EvalResult ev = fast_evaluate(net, cand, base, eval_data, cfg.eval_subset);
            const double d = cur_eval.accuracy - ev.accuracy;
            if (d > 0.0) degradations.push_back(d);
        }
        double med = 0.01;
        if (!degradations.empty()) {
            std::sort(degradations.begin(), degradations.end());
            med = degradations[degradations.size() / 2];
        }
        t0 = med / (cfg.boltzmann_k * std::log(1.0 / 0.9));
    }
    const double t_stop = cfg.t_stop > 0.0 ? cfg.t_stop : t0 * std::pow(cfg.eta, 12.0);

    SaResult result;
    result.t0 = t0;
    result.best = current;
    result.best_accuracy = cur_eval.accuracy;
    result.best_eval = cur_eval;
    double temperature = t0;
    while (temperature > t_stop) {
        result.temperatures.push_back(temperature);
        for (int it = 0; it < cfg.iters_per_temp; ++it) {
            Action cand = perturb(net, base, current, target, cfg.objective, temperature, t0,
                                  cfg.delta_max, rng, cfg.sigma_fixed);
            const EvalResult ev = fast_evaluate(net, cand, base, eval_data, cfg.eval_subset);
            const double d_e = cur_eval.accuracy - ev.accuracy;
            const double p = acceptance_probability(d_e, cfg.boltzmann_k, temperature);
            const bool accepted = d_e <= 0.0 || rng.bernoulli(p);
            if (accepted) {
                current = cand;
                cur_eval = ev;
            }
            if (ev.accuracy > result.best_accuracy) {
                result.best = cand;
                result.best_accuracy = ev.accuracy;
                result.best_eval = ev;
            }
            result.trace.push_back(
                {temperature, action_digest(cand), ev.accuracy, result.best_accuracy, accepted,
                 cand});
        }
        temperature *= cfg.eta;
    }
    return result;
}

}  // namespace prunekit
