#include "prunekit/tape.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

namespace prunekit {

Tensor gemm_nt(const Tensor& a, const Tensor& b) {
    // (m x k) * (n x k)^T -> (m x n)
    const int m = a.dim(0), k = a.dim(1), n = b.dim(0);
    if (b.dim(1) != k) throw shape_error("gemm_nt inner dimensions disagree");
    Tensor c({m, n});
    for (int i = 0; i < m; ++i) {
        const double* arow = a.data() + static_cast<size_t>(i) * k;
        double* crow = c.data() + static_cast<size_t>(i) * n;
        for (int j = 0; j < n; ++j) {
            const double* brow = b.data() + static_cast<size_t>(j) * k;
            double s = 0.0;
            for (int p = 0; p < k; ++p) s += arow[p] * brow[p];
            crow[j] = s;
        }
    }
    return c;
}

Tensor gemm_tn(const Tensor& a, const Tensor& b) {
    // (k x m)^T * (k x n) -> (m x n)
    const int k = a.dim(0), m = a.dim(1), n = b.dim(1);
    if (b.dim(0) != k) throw shape_error("gemm_tn inner dimensions disagree");
    Tensor c({m, n});
    for (int p = 0; p < k; ++p) {
        const double* arow = a.data() + static_cast<size_t>(p) * m;
        const double* brow = b.data() + static_cast<size_t>(p) * n;
        for (int i = 0; i < m; ++i) {
            const double aip = arow[i];
            if (aip == 0.0) continue;
            double* crow = c.data() + static_cast<size_t>(i) * n;
            for (int j = 0; j < n; ++j) crow[j] += aip * brow[j];
        }
    }
    return c;
}

int Tape::push(Tensor v, std::vector<int> inputs,
               std::function<void(Tape&, int)> back) {
    const int id = static_cast<int>(vals_.size());
    grads_.emplace_back(Tensor::zeros(v.shape()));
    vals_.push_back(std::move(v));
    nodes_.push_back(Node{std::move(inputs), std::move(back)});
    return id;
}

int Tape::leaf(Tensor v) { return push(std::move(v), {}, nullptr); }

int Tape::gemm_op(int a, int b) {
    Tensor y = gemm(value(a), value(b));
    return push(std::move(y), {a, b}, [](Tape& t, int id) {
        const int a = t.nodes_[static_cast<size_t>(id)].inputs[0];
        const int b = t.nodes_[static_cast<size_t>(id)].inputs[1];
        const Tensor& dy = t.grad(id);
        Tensor da = gemm_nt(dy, t.value(b));
        Tensor db = gemm_tn(t.value(a), dy);
        t.grad_ref(a) = add(t.grad(a), da);
        t.grad_ref(b) = add(t.grad(b), db);
    });
}

int Tape::linear(int x, int w, int b) {
    const Tensor& xv = value(x);
    const Tensor& wv = value(w);
    const Tensor& bv = value(b);
    if (xv.rank() != 2 || wv.rank() != 2 || xv.dim(1) != wv.dim(1))
        throw shape_error("linear: x " + shape_str(xv.shape()) + " vs w " +
                          shape_str(wv.shape()));
    const int n = xv.dim(0), out = wv.dim(0);
    Tensor y = gemm_nt(xv, wv);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < out; ++j) y.at(i, j) += bv[static_cast<size_t>(j)];
    return push(std::move(y), {x, w, b}, [](Tape& t, int id) {
        const auto& in = t.nodes_[static_cast<size_t>(id)].inputs;
        const Tensor& dy = t.grad(id);
        Tensor dx = gemm(dy, t.value(in[1]));
        Tensor dw = gemm_tn(dy, t.value(in[0]));
        Tensor db = Tensor::zeros(t.value(in[2]).shape());
        const int n = dy.dim(0), out = dy.dim(1);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < out; ++j) db[static_cast<size_t>(j)] += dy.at(i, j);
        t.grad_ref(in[0]) = add(t.grad(in[0]), dx);
        t.grad_ref(in[1]) = add(t.grad(in[1]), dw);
        t.grad_ref(in[2]) = add(t.grad(in[2]), db);
    });
}

int Tape::conv2d_op(int x, int w, int b, int stride, int pad) {
    const Tensor& xv = value(x);
    const Tensor& wv = value(w);
    const Tensor& bv = value(b);
    if (xv.rank() != 4 || wv.rank() != 4)
        throw shape_error("conv2d: x rank 4 and w rank 4 required");
    const int n = xv.dim(0), cin = xv.dim(1), h = xv.dim(2), wd = xv.dim(3);
    const int cout = wv.dim(0), kh = wv.dim(2), kw = wv.dim(3);
    if (wv.dim(1) != cin) throw shape_error("conv2d channel mismatch");
    const int hout = conv_out_extent(h, kh, stride, pad);
    const int wout = conv_out_extent(wd, kw, stride, pad);
    const int s = hout * wout;
    Tensor wmat = wv.reshaped({cout, cin * kh * kw});
    Tensor y({n, cout, hout, wout});
    auto cols = std::make_shared<std::vector<Tensor>>();
    cols->reserve(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        Tensor img({cin, h, wd},
                   std::vector<double>(xv.data() + static_cast<size_t>(i) * cin * h * wd,
                                       xv.data() + static_cast<size_t>(i + 1) * cin * h * wd));
        cols->push_back(im2col(img, kh, kw, stride, pad));
        Tensor prod = gemm(wmat, cols->back());
        double* yp = y.data() + static_cast<size_t>(i) * cout * s;
        for (int f = 0; f < cout; ++f) {
            const double bf = bv[static_cast<size_t>(f)];
            for (int j = 0; j < s; ++j)
                yp[static_cast<size_t>(f) * s + j] = prod[static_cast<size_t>(f) * s + j] + bf;
        }
    }
    return push(std::move(y), {x, w, b},
                [cols, stride, pad](Tape& t, int id) {
        const auto& in = t.nodes_[static_cast<size_t>(id)].inputs;
        const Tensor& dy = t.grad(id);
        const Tensor& xv = t.value(in[0]);
        const Tensor& wv = t.value(in[1]);
        const int n = xv.dim(0), cin = xv.dim(1), h = xv.dim(2), wd = xv.dim(3);
        const int cout = wv.dim(0), kh = wv.dim(2), kw = wv.dim(3);
        const int s = dy.dim(2) * dy.dim(3);
        Tensor wmat = wv.reshaped({cout, cin * kh * kw});
        Tensor dwmat = Tensor::zeros({cout, cin * kh * kw});
        Tensor db = Tensor::zeros({cout});
        Tensor dx = Tensor::zeros(xv.shape());
        for (int i = 0; i < n; ++i) {
            Tensor dymat({cout, s},
                         std::vector<double>(dy.data() + static_cast<size_t>(i) * cout * s,
                                             dy.data() + static_cast<size_t>(i + 1) * cout * s));
            dwmat = add(dwmat, gemm_nt(dymat, (*cols)[static_cast<size_t>(i)]));
            for (int f = 0; f < cout; ++f)
                for (int j = 0; j < s; ++j) db[static_cast<size_t>(f)] += dymat.at(f, j);
            Tensor dcols = gemm_tn(wmat, dymat);
            Tensor dimg = col2im(dcols, cin, h, wd, kh, kw, stride, pad);
            double* dxp = dx.data() + static_cast<size_t>(i) * cin * h * wd;
            for (size_t j = 0; j < dimg.numel(); ++j) dxp[j] += dimg[j];
        }
        t.grad_ref(in[0]) = add(t.grad(in[0]), dx);
        t.grad_ref(in[1]) = add(t.grad(in[1]), dwmat.reshaped(wv.shape()));
        t.grad_ref(in[2]) = add(t.grad(in[2]), db);
    });
}

int Tape::relu(int x) {
    Tensor y = value(x);
    for (size_t i = 0; i < y.numel(); ++i)
        if (y[i] < 0.0) y[i] = 0.0;
    return push(std::move(y), {x}, [](Tape& t, int id) {
        const int x = t.nodes_[static_cast<size_t>(id)].inputs[0];
        const Tensor& xv = t.value(x);
        const Tensor& dy = t.grad(id);
        Tensor dx = t.grad(x);
        for (size_t i = 0; i < dx.numel(); ++i)
            if (xv[i] > 0.0) dx[i] += dy[i];
        t.grad_ref(x) = std::move(dx);
    });
}

int Tape::maxpool2(int x) {
    const Tensor& xv = value(x);
    if (xv.rank() != 4) throw shape_error("maxpool2 expects (N, C, H, W)");
    const int n = xv.dim(0), c = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
    const int ho = h / 2, wo = w / 2;
    Tensor y({n, c, ho, wo});
    auto argmax = std::make_shared<std::vector<std::size_t>>(y.numel());
    std::size_t oi = 0;
    for (int i = 0; i < n; ++i)
        for (int ch = 0; ch < c; ++ch)
            for (int oy = 0; oy < ho; ++oy)
                for (int ox = 0; ox < wo; ++ox, ++oi) {
                    double best = -1e300;
                    std::size_t besti = 0;
                    for (int dy = 0; dy < 2; ++dy)
                        for (int dx = 0; dx < 2; ++dx) {
                            const std::size_t idx =
                                ((static_cast<size_t>(i) * c + ch) * h + oy * 2 + dy) * w +
                                ox * 2 + dx;
                            if (xv[idx] > best) {
                                best = xv[idx];
                                besti = idx;
                            }
                        }
                    y[oi] = best;
                    (*argmax)[oi] = besti;
                }
    return push(std::move(y), {x}, [argmax](Tape& t, int id) {
        const int x = t.nodes_[static_cast<size_t>(id)].inputs[0];
        const Tensor& dy = t.grad(id);
        Tensor dx = t.grad(x);
        for (size_t i = 0; i < dy.numel(); ++i) dx[(*argmax)[i]] += dy[i];
        t.grad_ref(x) = std::move(dx);
    });
}

int Tape::reshape(int x, std::vector<int> shape) {
    Tensor y = value(x).reshaped(shape);
    return push(std::move(y), {x}, [](Tape& t, int id) {
        const int x = t.nodes_[static_cast<size_t>(id)].inputs[0];
        Tensor dy = t.grad(id).reshaped(t.value(x).shape());
        t.grad_ref(x) = add(t.grad(x), dy);
    });
}

int Tape::softmax_cross_entropy(int logits, std::vector<int> labels) {
    const Tensor& lv = value(logits);
    if (lv.rank() != 2) throw contract_error("softmax_cross_entropy expects (N, K) logits");
    const int n = lv.dim(0), k = lv.dim(1);
    if (static_cast<int>(labels.size()) != n)
        throw contract_error("label count does not match batch");
    for (int lab : labels)
        if (lab < 0 || lab >= k) throw contract_error("label out of range");
    auto probs = std::make_shared<Tensor>(Tensor::zeros({n, k}));
    double loss = 0.0;
    for (int i = 0; i < n; ++i) {
        double mx = lv.at(i, 0);
        for (int j = 1; j < k; ++j) mx = std::max(mx, lv.at(i, j));
        double denom = 0.0;
        for (int j = 0; j < k; ++j) denom += std::exp(lv.at(i, j) - mx);
        const double logz = mx + std::log(denom);
        for (int j = 0; j < k; ++j) probs->at(i, j) = std::exp(lv.at(i, j) - logz);
        loss += logz - lv.at(i, labels[static_cast<size_t>(i)]);
    }
    Tensor y({1}, {loss / n});
    auto labs = std::make_shared<std::vector<int>>(std::move(labels));
    return push(std::move(y), {logits}, [probs, labs](Tape& t, int id) {
        const int logits = t.nodes_[static_cast<size_t>(id)].inputs[0];
        const double dl = t.grad(id)[0];
        const int n = probs->dim(0), k = probs->dim(1);
        Tensor dx = t.grad(logits);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < k; ++j) {
                double g = probs->at(i, j);
                if (j == (*labs)[static_cast<size_t>(i)]) g -= 1.0;
                dx.at(i, j) += dl * g / n;
            }
        t.grad_ref(logits) = std::move(dx);
    });
}

int Tape::sq_diff_sum(int x, Tensor target, double coef) {
    const Tensor& xv = value(x);
    if (!xv.same_shape(target)) throw shape_error("sq_diff_sum shape mismatch");
    double s = 0.0;
    for (size_t i = 0; i < xv.numel(); ++i) {
        const double d = xv[i] - target[i];
        s += d * d;
    }
    Tensor y({1}, {coef * s});
    auto tgt = std::make_shared<Tensor>(std::move(target));
    return push(std::move(y), {x}, [tgt, coef](Tape& t, int id) {
        const int x = t.nodes_[static_cast<size_t>(id)].inputs[0];
        const double dl = t.grad(id)[0];
        const Tensor& xv = t.value(x);
        Tensor dx = t.grad(x);
        for (size_t i = 0; i < dx.numel(); ++i)
            dx[i] += dl * 2.0 * coef * (xv[i] - (*tgt)[i]);
        t.grad_ref(x) = std::move(dx);
    });
}

int Tape::add_scalars(int a, int b) {
    Tensor y({1}, {value(a)[0] + value(b)[0]});
    return push(std::move(y), {a, b}, [](Tape& t, int id) {
        const auto& in = t.nodes_[static_cast<size_t>(id)].inputs;
        const double dl = t.grad(id)[0];
        t.grad_ref(in[0])[0] += dl;
        t.grad_ref(in[1])[0] += dl;
    });
}

int Tape::sum_all(int x) {
    double s = 0.0;
    const Tensor& xv = value(x);
    for (size_t i = 0; i < xv.numel(); ++i) s += xv[i];
    Tensor y({1}, {s});
    return push(std::move(y), {x}, [](Tape& t, int id) {
        const int x = t.nodes_[static_cast<size_t>(id)].inputs[0];
        const double dl = t.grad(id)[0];
        Tensor dx = t.grad(x);
        for (size_t i = 0; i < dx.numel(); ++i) dx[i] += dl;
        t.grad_ref(x) = std::move(dx);
    });
}

void Tape::backward(int loss) {
    if (loss < 0 || loss >= size()) throw contract_error("backward: bad node id");
    if (value(loss).numel() != 1) throw contract_error("backward: loss must be scalar");
    for (auto& g : grads_) g = Tensor::zeros(g.shape());
    grads_[static_cast<size_t>(loss)][0] = 1.0;
    for (int id = loss; id >= 0; --id) {
        auto& node = nodes_[static_cast<size_t>(id)];
        if (node.back) node.back(*this, id);
    }
}

}  // namespace prunekit
