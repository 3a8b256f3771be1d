#include "prunekit/tensor.hpp"

#include <cmath>
#include <sstream>

namespace prunekit {

std::size_t shape_numel(const std::vector<int>& shape) {
    std::size_t n = 1;
    for (int e : shape) {
        if (e <= 0) throw shape_error("non-positive extent in shape " + shape_str(shape));
        n *= static_cast<std::size_t>(e);
    }
    return n;
}

std::string shape_str(const std::vector<int>& shape) {
    std::ostringstream os;
    os << "(";
    for (size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << ")";
    return os.str();
}

Tensor::Tensor(std::vector<int> shape)
    : shape_(std::move(shape)), data_(shape_numel(shape_), 0.0) {}

Tensor::Tensor(std::vector<int> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != shape_numel(shape_))
        throw shape_error("data length " + std::to_string(data_.size()) +
                          " does not match shape " + shape_str(shape_));
}

Tensor Tensor::full(std::vector<int> shape, double v) {
    Tensor t(std::move(shape));
    for (auto& x : t.data_) x = v;
    return t;
}

Tensor Tensor::reshaped(std::vector<int> shape) const {
    if (shape_numel(shape) != numel())
        throw shape_error("reshape " + shape_str(shape_) + " -> " + shape_str(shape) +
                          " changes element count");
    return Tensor(std::move(shape), data_);
}

bool Tensor::all_finite() const {
    for (double v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

double Tensor::frob_norm() const {
    double s = 0.0;
    for (double v : data_) s += v * v;
    return std::sqrt(s);
}

Tensor gemm(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2)
        throw shape_error("gemm expects matrices, got " + shape_str(a.shape()) + " and " +
                          shape_str(b.shape()));
    const int m = a.dim(0), k = a.dim(1), k2 = b.dim(0), n = b.dim(1);
    if (k != k2)
        throw shape_error("gemm inner dimensions disagree: " + shape_str(a.shape()) + " * " +
                          shape_str(b.shape()));
    Tensor c({m, n});
    const double* ap = a.data();
    const double* bp = b.data();
    double* cp = c.data();
    for (int i = 0; i < m; ++i) {
        for (int p = 0; p < k; ++p) {
            const double aip = ap[static_cast<size_t>(i) * k + p];
            if (aip == 0.0) continue;
            const double* brow = bp + static_cast<size_t>(p) * n;
            double* crow = cp + static_cast<size_t>(i) * n;
            for (int j = 0; j < n; ++j) crow[j] += aip * brow[j];
        }
    }
    return c;
}

int conv_out_extent(int in, int k, int stride, int pad) {
    const int num = in + 2 * pad - k;
    if (num < 0 || num % stride != 0)
        throw shape_error("convolution output extent is not a positive integer: in=" +
                          std::to_string(in) + " k=" + std::to_string(k) +
                          " stride=" + std::to_string(stride) + " pad=" + std::to_string(pad));
    return num / stride + 1;
}

Tensor im2col(const Tensor& input, int kh, int kw, int stride, int pad) {
    if (input.rank() != 3)
        throw shape_error("im2col expects C x H x W, got " + shape_str(input.shape()));
    const int c = input.dim(0), h = input.dim(1), w = input.dim(2);
    const int hout = conv_out_extent(h, kh, stride, pad);
    const int wout = conv_out_extent(w, kw, stride, pad);
    Tensor out({c * kh * kw, hout * wout});
    const double* in = input.data();
    double* op = out.data();
    const int ncols = hout * wout;
    for (int ch = 0; ch < c; ++ch) {
        for (int ki = 0; ki < kh; ++ki) {
            for (int kj = 0; kj < kw; ++kj) {
                const int row = (ch * kh + ki) * kw + kj;
                double* orow = op + static_cast<size_t>(row) * ncols;
                for (int oy = 0; oy < hout; ++oy) {
                    const int iy = oy * stride + ki - pad;
                    for (int ox = 0; ox < wout; ++ox) {
                        const int ix = ox * stride + kj - pad;
                        double v = 0.0;
                        if (iy >= 0 && iy < h && ix >= 0 && ix < w)
                            v = in[(static_cast<size_t>(ch) * h + iy) * w + ix];
                        orow[oy * wout + ox] = v;
                    }
                }
            }
        }
    }
    return out;
}

Tensor col2im(const Tensor& cols, int channels, int h, int w, int kh, int kw,
              int stride, int pad) {
    const int hout = conv_out_extent(h, kh, stride, pad);
    const int wout = conv_out_extent(w, kw, stride, pad);
    if (cols.rank() != 2 || cols.dim(0) != channels * kh * kw || cols.dim(1) != hout * wout)
        throw shape_error("col2im shape mismatch: " + shape_str(cols.shape()));
    Tensor img({channels, h, w});
    double* ip = img.data();
    const double* cp = cols.data();
    const int ncols = hout * wout;
    for (int ch = 0; ch < channels; ++ch) {
        for (int ki = 0; ki < kh; ++ki) {
            for (int kj = 0; kj < kw; ++kj) {
                const int row = (ch * kh + ki) * kw + kj;
                const double* crow = cp + static_cast<size_t>(row) * ncols;
                for (int oy = 0; oy < hout; ++oy) {
                    const int iy = oy * stride + ki - pad;
                    if (iy < 0 || iy >= h) continue;
                    for (int ox = 0; ox < wout; ++ox) {
                        const int ix = ox * stride + kj - pad;
                        if (ix < 0 || ix >= w) continue;
                        ip[(static_cast<size_t>(ch) * h + iy) * w + ix] += crow[oy * wout + ox];
                    }
                }
            }
        }
    }
    return img;
}

Tensor conv2d(const Tensor& input, const Tensor& weights, const Tensor& bias,
              int stride, int pad) {
    if (weights.rank() != 4)
        throw shape_error("conv2d weights must be Cout x Cin x kh x kw");
    const int cout = weights.dim(0), cin = weights.dim(1);
    const int kh = weights.dim(2), kw = weights.dim(3);
    if (input.rank() != 3 || input.dim(0) != cin)
        throw shape_error("conv2d input channels " + shape_str(input.shape()) +
                          " do not match weights " + shape_str(weights.shape()));
    const int hout = conv_out_extent(input.dim(1), kh, stride, pad);
    const int wout = conv_out_extent(input.dim(2), kw, stride, pad);
    Tensor cols = im2col(input, kh, kw, stride, pad);
    Tensor wmat = weights.reshaped({cout, cin * kh * kw});
    Tensor prod = gemm(wmat, cols);
    Tensor out({cout, hout, wout});
    const int s = hout * wout;
    for (int f = 0; f < cout; ++f) {
        const double bf = bias[static_cast<size_t>(f)];
        for (int j = 0; j < s; ++j)
            out[static_cast<size_t>(f) * s + j] = prod[static_cast<size_t>(f) * s + j] + bf;
    }
    return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) throw shape_error("add shape mismatch");
    Tensor c = a;
    for (size_t i = 0; i < c.numel(); ++i) c[i] += b[i];
    return c;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) throw shape_error("sub shape mismatch");
    Tensor c = a;
    for (size_t i = 0; i < c.numel(); ++i) c[i] -= b[i];
    return c;
}

Tensor scale(const Tensor& a, double s) {
    Tensor c = a;
    for (size_t i = 0; i < c.numel(); ++i) c[i] *= s;
    return c;
}

double dot(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) throw shape_error("dot shape mismatch");
    double s = 0.0;
    for (size_t i = 0; i < a.numel(); ++i) s += a[i] * b[i];
    return s;
}

}  // namespace prunekit
