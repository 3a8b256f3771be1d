#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace prunekit {

struct shape_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct contract_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Dense n-d array of doubles, row-major.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<int> shape);
    Tensor(std::vector<int> shape, std::vector<double> data);

    static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }
    static Tensor full(std::vector<int> shape, double v);

    const std::vector<int>& shape() const { return shape_; }
    int dim(int i) const { return shape_.at(static_cast<size_t>(i)); }
    int rank() const { return static_cast<int>(shape_.size()); }
    std::size_t numel() const { return data_.size(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    // 2-d accessors (matrices)
    double& at(int r, int c) { return data_[static_cast<size_t>(r) * shape_[1] + c]; }
    double at(int r, int c) const { return data_[static_cast<size_t>(r) * shape_[1] + c]; }

    Tensor reshaped(std::vector<int> shape) const;
    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
    bool all_finite() const;

    double frob_norm() const;

private:
    std::vector<int> shape_;
    std::vector<double> data_;
};

std::size_t shape_numel(const std::vector<int>& shape);
std::string shape_str(const std::vector<int>& shape);

// C = A * B for A (m x k), B (k x n).
Tensor gemm(const Tensor& a, const Tensor& b);

// Lowers one image (C x H x W) to a (C*kh*kw) x (Hout*Wout) matrix.
// Row index is c*kh*kw + ki*kw + kj (channel-major, then row-major within
// the kernel window); column j is output position oy*Wout + ox. Padded
// cells contribute zeros.
Tensor im2col(const Tensor& input, int kh, int kw, int stride, int pad);

// Adjoint of im2col: scatters a (C*kh*kw) x (Hout*Wout) matrix back onto
// a C x H x W image, accumulating overlaps.
Tensor col2im(const Tensor& cols, int channels, int h, int w, int kh, int kw,
              int stride, int pad);

int conv_out_extent(int in, int k, int stride, int pad);

// GEMM-path convolution of a single image. weights: Cout x Cin x kh x kw.
Tensor conv2d(const Tensor& input, const Tensor& weights, const Tensor& bias,
              int stride, int pad);

// Element-wise helpers.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
double dot(const Tensor& a, const Tensor& b);

}  // namespace prunekit
