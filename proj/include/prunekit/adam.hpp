#pragma once

#include <vector>

#include "prunekit/tensor.hpp"

namespace prunekit {

// Adam with bias correction over a parameter group.
struct AdamState {
    std::vector<Tensor> m;
    std::vector<Tensor> v;
    long t = 0;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    static AdamState init(const std::vector<Tensor>& params, double lr = 1e-3);
};

// One update in place; t increments by exactly 1.
void adam_step(std::vector<Tensor>& params, const std::vector<Tensor>& grads,
               AdamState& state);

}  // namespace prunekit
