#pragma once

#include <functional>
#include <vector>

#include "prunekit/tensor.hpp"

namespace prunekit {

// Reverse-mode tape over a feed-forward graph. Values are immutable once
// recorded; node ids are indices into the recording order, so every node's
// inputs precede it. A tape is single-threaded.
class Tape {
public:
    int leaf(Tensor v);

    // y = a * b for matrices
    int gemm_op(int a, int b);
    // x: (N, D), w: (Out, D), b: (Out) -> (N, Out)
    int linear(int x, int w, int b);
    // x: (N, C, H, W), w: (Cout, Cin, kh, kw), b: (Cout)
    int conv2d_op(int x, int w, int b, int stride, int pad);
    int relu(int x);
    // 2x2 / stride 2 max pooling on (N, C, H, W)
    int maxpool2(int x);
    int reshape(int x, std::vector<int> shape);
    // mean softmax cross-entropy over the batch; labels in [0, K)
    int softmax_cross_entropy(int logits, std::vector<int> labels);
    // scalar coef * ||x - target||^2
    int sq_diff_sum(int x, Tensor target, double coef);
    int add_scalars(int a, int b);
    int sum_all(int x);

    // Seeds d(loss)/d(loss) = 1 and walks the tape once in reverse.
    void backward(int loss);

    const Tensor& value(int id) const { return vals_[static_cast<size_t>(id)]; }
    const Tensor& grad(int id) const { return grads_[static_cast<size_t>(id)]; }
    int size() const { return static_cast<int>(vals_.size()); }

private:
    int push(Tensor v, std::vector<int> inputs,
             std::function<void(Tape&, int)> back);
    Tensor& grad_ref(int id) { return grads_[static_cast<size_t>(id)]; }

    struct Node {
        std::vector<int> inputs;
        std::function<void(Tape&, int)> back;  // empty for leaves
    };

    std::vector<Tensor> vals_;
    std::vector<Tensor> grads_;
    std::vector<Node> nodes_;
};

// A * B^T and A^T * B, used by the backward kernels.
Tensor gemm_nt(const Tensor& a, const Tensor& b);
Tensor gemm_tn(const Tensor& a, const Tensor& b);

}  // namespace prunekit
