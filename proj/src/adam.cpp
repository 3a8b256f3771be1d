#include "prunekit/adam.hpp"

#include <cmath>

namespace prunekit {

AdamState AdamState::init(const std::vector<Tensor>& params, double lr) {
    AdamState s;
    s.lr = lr;
    for (const auto& p : params) {
        s.m.emplace_back(Tensor::zeros(p.shape()));
        s.v.emplace_back(Tensor::zeros(p.shape()));
    }
    return s;
}

void adam_step(std::vector<Tensor>& params, const std::vector<Tensor>& grads,
               AdamState& state) {
    if (params.size() != grads.size() || params.size() != state.m.size())
        throw contract_error("adam_step: parameter group size mismatch");
    state.t += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
    for (size_t i = 0; i < params.size(); ++i) {
        Tensor& p = params[i];
        const Tensor& g = grads[i];
        if (!p.same_shape(g)) throw contract_error("adam_step: shape mismatch");
        Tensor& m = state.m[i];
        Tensor& v = state.v[i];
        for (size_t j = 0; j < p.numel(); ++j) {
            m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g[j];
            v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g[j] * g[j];
            const double mhat = m[j] / bc1;
            const double vhat = v[j] / bc2;
            p[j] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
        }
    }
}

}  // namespace prunekit
