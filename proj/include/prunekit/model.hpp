#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "prunekit/tensor.hpp"

namespace prunekit {

struct config_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct format_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct training_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class LayerKind { Conv, Fc, Relu, Maxpool, Flatten };

// One layer of a plain feed-forward CNN. Conv weights are Cout x Cin x kh x kw;
// fc weights are out_dim x in_dim. A non-empty kept_cols turns the layer into
// its compacted GEMM view: W is then (rows x kept_cols.size()) and kept_cols
// lists which im2col rows (conv) or input features (fc) the matrix columns
// correspond to.
struct LayerSpec {
    LayerKind kind = LayerKind::Relu;
    int cout = 0, cin = 0, kh = 0, kw = 0, stride = 1, pad = 0;
    int out_dim = 0, in_dim = 0;
    Tensor W, b;
    std::vector<int> kept_cols;

    bool has_params() const { return kind == LayerKind::Conv || kind == LayerKind::Fc; }
    bool compacted() const { return !kept_cols.empty(); }
    // GEMM row / column counts of the weight matrix view
    int gemm_rows() const { return kind == LayerKind::Conv ? cout : out_dim; }
    int gemm_cols() const {
        if (compacted()) return static_cast<int>(kept_cols.size());
        return kind == LayerKind::Conv ? cin * kh * kw : in_dim;
    }
};

struct Network {
    std::vector<LayerSpec> layers;
    std::vector<int> input_shape;  // C, H, W
    int num_classes = 0;
};

struct DatasetHandle {
    Tensor images;  // N x C x H x W, values in [0, 1]
    std::vector<int> labels;
    std::string split;
    int num_classes = 0;

    int size() const { return images.rank() == 4 ? images.dim(0) : 0; }
    Tensor image(int i) const;
};

// Known archs: "convnet-s", "vgg-mini". He-init, deterministic under seed.
Network build_network(const std::string& arch_name, std::uint64_t seed,
                      const std::vector<int>& input_shape, int num_classes);

// Per-layer output shapes (activation shapes), index-aligned with layers;
// entry i is the shape after layer i.
std::vector<std::vector<int>> activation_shapes(const Network& net);
void validate_network(const Network& net);

// indices of prunable layers: conv layers plus non-final fc layers
std::vector<int> prunable_layers(const Network& net);

// Forward pass without recording; input is N x C x H x W, returns N x K logits.
Tensor forward(const Network& net, const Tensor& batch);

DatasetHandle load_idx(const std::string& images_path, const std::string& labels_path);
DatasetHandle load_cifar10(const std::string& path);
// format: "idx" (path = images file; labels file derived by the standard
// images-idx3 -> labels-idx1 substitution) or "cifar10" (single batch file)
DatasetHandle load_dataset(const std::string& path, const std::string& format);

// Gaussian class-blob images, linearly separable by construction.
DatasetHandle synth_dataset(std::uint64_t seed, int n, int classes, int channels = 1,
                            int h = 16, int w = 16, double noise = 0.08);

// per-layer quadratic pull toward a fixed target: coef * ||W - target||^2
struct QuadPenalty {
    int layer = 0;
    Tensor target;
    double coef = 0.0;
};

// dense keep pattern over one layer's weights; 1 = trainable, 0 = pinned to 0.
// keep_bias covers the bias vector; empty keeps every bias trainable.
struct DenseMask {
    int layer = 0;
    std::vector<std::uint8_t> keep;
    std::vector<std::uint8_t> keep_bias;
};

struct TrainOptions {
    int epochs = 1;
    double lr = 1e-3;
    int batch = 32;
    std::uint64_t seed = 0;
    const std::vector<DenseMask>* masks = nullptr;
    const std::vector<QuadPenalty>* penalties = nullptr;
};

// Adam training; returns per-epoch mean loss. Masked entries are re-zeroed
// after every optimizer step. Throws training_error on NaN loss.
std::vector<double> train(Network& net, const DatasetHandle& data, const TrainOptions& opt);

// argmax accuracy; ties break to the lowest class index
double evaluate_accuracy(const Network& net, const DatasetHandle& data);
double evaluate_accuracy(const Network& net, const DatasetHandle& data, int limit);

void apply_dense_masks(Network& net, const std::vector<DenseMask>& masks);

}  // namespace prunekit
