#include "prunekit/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "prunekit/adam.hpp"
#include "prunekit/rng.hpp"
#include "prunekit/tape.hpp"

namespace prunekit {

Tensor DatasetHandle::image(int i) const {
    const int c = images.dim(1), h = images.dim(2), w = images.dim(3);
    const std::size_t n = static_cast<std::size_t>(c) * h * w;
    return Tensor({c, h, w},
                  std::vector<double>(images.data() + static_cast<std::size_t>(i) * n,
                                      images.data() + static_cast<std::size_t>(i + 1) * n));
}

namespace {

LayerSpec conv_layer(int cout, int cin, int k, int pad) {
    LayerSpec l;
    l.kind = LayerKind::Conv;
    l.cout = cout;
    l.cin = cin;
    l.kh = l.kw = k;
    l.stride = 1;
    l.pad = pad;
    l.W = Tensor::zeros({cout, cin, k, k});
    l.b = Tensor::zeros({cout});
    return l;
}

LayerSpec fc_layer(int out_dim, int in_dim) {
    LayerSpec l;
    l.kind = LayerKind::Fc;
    l.out_dim = out_dim;
    l.in_dim = in_dim;
    l.W = Tensor::zeros({out_dim, in_dim});
    l.b = Tensor::zeros({out_dim});
    return l;
}

LayerSpec plain_layer(LayerKind kind) {
    LayerSpec l;
    l.kind = kind;
    return l;
}

void he_init(Network& net, std::uint64_t seed) {
    Rng rng(derive_seed(seed, 0x11));
    for (auto& l : net.layers) {
        if (!l.has_params()) continue;
        const int fan_in = l.kind == LayerKind::Conv ? l.cin * l.kh * l.kw : l.in_dim;
        const double sd = std::sqrt(2.0 / fan_in);
        for (std::size_t i = 0; i < l.W.numel(); ++i) l.W[i] = sd * rng.normal();
        for (std::size_t i = 0; i < l.b.numel(); ++i) l.b[i] = 0.0;
    }
}

}  // namespace

std::vector<std::vector<int>> activation_shapes(const Network& net) {
    std::vector<std::vector<int>> shapes;
    std::vector<int> cur = net.input_shape;  // C,H,W or flattened {D}
    for (const auto& l : net.layers) {
        switch (l.kind) {
            case LayerKind::Conv: {
                if (cur.size() != 3 || cur[0] != (l.compacted() ? cur[0] : l.cin))
                    ;  // checked in validate_network
                const int ho = conv_out_extent(cur[1], l.kh, l.stride, l.pad);
                const int wo = conv_out_extent(cur[2], l.kw, l.stride, l.pad);
                cur = {l.gemm_rows(), ho, wo};
                break;
            }
            case LayerKind::Fc:
                cur = {l.gemm_rows()};
                break;
            case LayerKind::Maxpool:
                cur = {cur[0], cur[1] / 2, cur[2] / 2};
                break;
            case LayerKind::Flatten: {
                int d = 1;
                for (int e : cur) d *= e;
                cur = {d};
                break;
            }
            case LayerKind::Relu:
                break;
        }
        shapes.push_back(cur);
    }
    return shapes;
}

void validate_network(const Network& net) {
    if (net.layers.empty()) throw config_error("empty network");
    std::vector<int> cur = net.input_shape;
    bool has_conv = false;
    for (size_t i = 0; i < net.layers.size(); ++i) {
        const auto& l = net.layers[i];
        if (l.kind == LayerKind::Conv) {
            has_conv = true;
            if (cur.size() != 3)
                throw config_error("layer " + std::to_string(i) + ": conv on non-image input");
            if (!l.compacted() && cur[0] != l.cin)
                throw config_error("layer " + std::to_string(i) + ": channel mismatch");
            const int ho = conv_out_extent(cur[1], l.kh, l.stride, l.pad);
            const int wo = conv_out_extent(cur[2], l.kw, l.stride, l.pad);
            cur = {l.gemm_rows(), ho, wo};
        } else if (l.kind == LayerKind::Fc) {
            if (cur.size() != 1)
                throw config_error("layer " + std::to_string(i) + ": fc needs flattened input");
            if (!l.compacted() && cur[0] != l.in_dim)
                throw config_error("layer " + std::to_string(i) + ": fc in_dim mismatch");
            cur = {l.gemm_rows()};
        } else if (l.kind == LayerKind::Maxpool) {
            cur = {cur[0], cur[1] / 2, cur[2] / 2};
        } else if (l.kind == LayerKind::Flatten) {
            int d = 1;
            for (int e : cur) d *= e;
            cur = {d};
        }
    }
    if (!has_conv) throw config_error("network has no conv layer");
    const auto& last = net.layers.back();
    if (last.kind != LayerKind::Fc || last.gemm_rows() != net.num_classes)
        throw config_error("last layer must be fc with out_dim = class count");
}

std::vector<int> prunable_layers(const Network& net) {
    std::vector<int> out;
    int last_fc = -1;
    for (size_t i = 0; i < net.layers.size(); ++i)
        if (net.layers[i].kind == LayerKind::Fc) last_fc = static_cast<int>(i);
    for (size_t i = 0; i < net.layers.size(); ++i) {
        const auto& l = net.layers[i];
        if (l.kind == LayerKind::Conv) out.push_back(static_cast<int>(i));
        if (l.kind == LayerKind::Fc && static_cast<int>(i) != last_fc)
            out.push_back(static_cast<int>(i));
    }
    return out;
}

Network build_network(const std::string& arch_name, std::uint64_t seed,
                      const std::vector<int>& input_shape, int num_classes) {
    if (input_shape.size() != 3) throw config_error("input shape must be C,H,W");
    Network net;
    net.input_shape = input_shape;
    net.num_classes = num_classes;
    const int c = input_shape[0];
    int h = input_shape[1], w = input_shape[2];
    if (arch_name == "convnet-s") {
        net.layers.push_back(conv_layer(16, c, 3, 1));
        net.layers.push_back(plain_layer(LayerKind::Relu));
        net.layers.push_back(plain_layer(LayerKind::Maxpool));
        net.layers.push_back(conv_layer(32, 16, 3, 1));
        net.layers.push_back(plain_layer(LayerKind::Relu));
        net.layers.push_back(plain_layer(LayerKind::Maxpool));
        net.layers.push_back(conv_layer(32, 32, 3, 1));
        net.layers.push_back(plain_layer(LayerKind::Relu));
        net.layers.push_back(plain_layer(LayerKind::Flatten));
        h /= 4;
        w /= 4;
        net.layers.push_back(fc_layer(64, 32 * h * w));
        net.layers.push_back(plain_layer(LayerKind::Relu));
        net.layers.push_back(fc_layer(num_classes, 64));
    } else if (arch_name == "vgg-mini") {
        const int cs[6] = {16, 16, 32, 32, 64, 64};
        int cin = c;
        for (int i = 0; i < 6; ++i) {
            net.layers.push_back(conv_layer(cs[i], cin, 3, 1));
            net.layers.push_back(plain_layer(LayerKind::Relu));
            cin = cs[i];
            if (i % 2 == 1) {
                net.layers.push_back(plain_layer(LayerKind::Maxpool));
                h /= 2;
                w /= 2;
            }
        }
        net.layers.push_back(plain_layer(LayerKind::Flatten));
        net.layers.push_back(fc_layer(64, 64 * h * w));
        net.layers.push_back(plain_layer(LayerKind::Relu));
        net.layers.push_back(fc_layer(num_classes, 64));
    } else {
        throw config_error("unknown arch: " + arch_name);
    }
    he_init(net, seed);
    validate_network(net);
    return net;
}

namespace {

// conv forward for one layer over a batch, honoring the compacted GEMM view
Tensor conv_forward(const LayerSpec& l, const Tensor& x) {
    const int n = x.dim(0), cin = x.dim(1), h = x.dim(2), w = x.dim(3);
    const int ho = conv_out_extent(h, l.kh, l.stride, l.pad);
    const int wo = conv_out_extent(w, l.kw, l.stride, l.pad);
    const int rows = l.gemm_rows();
    const int s = ho * wo;
    Tensor y({n, rows, ho, wo});
    Tensor wmat = l.compacted() ? l.W : l.W.reshaped({rows, cin * l.kh * l.kw});
    for (int i = 0; i < n; ++i) {
        Tensor img({cin, h, w},
                   std::vector<double>(x.data() + static_cast<std::size_t>(i) * cin * h * w,
                                       x.data() + static_cast<std::size_t>(i + 1) * cin * h * w));
        Tensor cols = im2col(img, l.kh, l.kw, l.stride, l.pad);
        Tensor used = cols;
        if (l.compacted()) {
            Tensor gathered({static_cast<int>(l.kept_cols.size()), s});
            for (size_t r = 0; r < l.kept_cols.size(); ++r)
                for (int j = 0; j < s; ++j)
                    gathered.at(static_cast<int>(r), j) = cols.at(l.kept_cols[r], j);
            used = std::move(gathered);
        }
        Tensor prod = gemm(wmat, used);
        double* yp = y.data() + static_cast<std::size_t>(i) * rows * s;
        for (int f = 0; f < rows; ++f)
            for (int j = 0; j < s; ++j)
                yp[static_cast<std::size_t>(f) * s + j] =
                    prod[static_cast<std::size_t>(f) * s + j] + l.b[static_cast<std::size_t>(f)];
    }
    return y;
}

Tensor fc_forward(const LayerSpec& l, const Tensor& x) {
    const int n = x.dim(0);
    const int out = l.gemm_rows();
    Tensor in = x;
    if (l.compacted()) {
        Tensor gathered({n, static_cast<int>(l.kept_cols.size())});
        for (int i = 0; i < n; ++i)
            for (size_t j = 0; j < l.kept_cols.size(); ++j)
                gathered.at(i, static_cast<int>(j)) = x.at(i, l.kept_cols[j]);
        in = std::move(gathered);
    }
    Tensor y = gemm_nt(in, l.W);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < out; ++j) y.at(i, j) += l.b[static_cast<std::size_t>(j)];
    return y;
}

}  // namespace

Tensor forward(const Network& net, const Tensor& batch) {
    Tensor cur = batch;
    for (const auto& l : net.layers) {
        switch (l.kind) {
            case LayerKind::Conv:
                cur = conv_forward(l, cur);
                break;
            case LayerKind::Fc:
                cur = fc_forward(l, cur);
                break;
            case LayerKind::Relu:
                for (std::size_t i = 0; i < cur.numel(); ++i)
                    if (cur[i] < 0.0) cur[i] = 0.0;
                break;
            case LayerKind::Maxpool: {
                const int n = cur.dim(0), c = cur.dim(1), h = cur.dim(2), w = cur.dim(3);
                const int ho = h / 2, wo = w / 2;
                Tensor y({n, c, ho, wo});
                std::size_t oi = 0;
                for (int i = 0; i < n; ++i)
                    for (int ch = 0; ch < c; ++ch)
                        for (int oy = 0; oy < ho; ++oy)
                            for (int ox = 0; ox < wo; ++ox, ++oi) {
                                double best = -1e300;
                                for (int dy = 0; dy < 2; ++dy)
                                    for (int dx = 0; dx < 2; ++dx)
                                        best = std::max(
                                            best,
                                            cur[((static_cast<std::size_t>(i) * c + ch) * h +
                                                 oy * 2 + dy) *
                                                    w +
                                                ox * 2 + dx]);
                                y[oi] = best;
                            }
                cur = std::move(y);
                break;
            }
            case LayerKind::Flatten: {
                int d = 1;
                for (int k = 1; k < cur.rank(); ++k) d *= cur.dim(k);
                cur = cur.reshaped({cur.dim(0), d});
                break;
            }
        }
    }
    return cur;
}

namespace {

std::uint32_t read_be_u32(std::ifstream& f, const std::string& path, std::size_t offset) {
    unsigned char buf[4];
    if (!f.read(reinterpret_cast<char*>(buf), 4))
        throw format_error(path + ": truncated at byte " + std::to_string(offset));
    return (static_cast<std::uint32_t>(buf[0]) << 24) | (static_cast<std::uint32_t>(buf[1]) << 16) |
           (static_cast<std::uint32_t>(buf[2]) << 8) | static_cast<std::uint32_t>(buf[3]);
}

}  // namespace

DatasetHandle load_idx(const std::string& images_path, const std::string& labels_path) {
    std::ifstream fi(images_path, std::ios::binary);
    if (!fi) throw format_error("cannot open " + images_path);
    const std::uint32_t magic = read_be_u32(fi, images_path, 0);
    if (magic != 0x00000803)
        throw format_error(images_path + ": bad magic at byte 0, expected 0x00000803, got 0x" +
                           [&] { char b[16]; std::snprintf(b, sizeof b, "%08x", magic); return std::string(b); }());
    const int n = static_cast<int>(read_be_u32(fi, images_path, 4));
    const int h = static_cast<int>(read_be_u32(fi, images_path, 8));
    const int w = static_cast<int>(read_be_u32(fi, images_path, 12));
    std::vector<unsigned char> raw(static_cast<std::size_t>(n) * h * w);
    if (!fi.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size())))
        throw format_error(images_path + ": truncated pixel data after byte 16");
    DatasetHandle d;
    d.images = Tensor({n, 1, h, w});
    for (std::size_t i = 0; i < raw.size(); ++i) d.images[i] = raw[i] / 255.0;

    std::ifstream fl(labels_path, std::ios::binary);
    if (!fl) throw format_error("cannot open " + labels_path);
    const std::uint32_t lmagic = read_be_u32(fl, labels_path, 0);
    if (lmagic != 0x00000801)
        throw format_error(labels_path + ": bad magic at byte 0, expected 0x00000801");
    const int ln = static_cast<int>(read_be_u32(fl, labels_path, 4));
    if (ln != n) throw format_error(labels_path + ": label count does not match image count");
    std::vector<unsigned char> lab(static_cast<std::size_t>(n));
    if (!fl.read(reinterpret_cast<char*>(lab.data()), n))
        throw format_error(labels_path + ": truncated label data after byte 8");
    d.labels.assign(lab.begin(), lab.end());
    d.num_classes = d.labels.empty() ? 0 : *std::max_element(d.labels.begin(), d.labels.end()) + 1;
    d.split = "train";
    return d;
}

DatasetHandle load_cifar10(const std::string& path) {
    std::ifstream f(path, std::ios::binary | std::ios::ate);
    if (!f) throw format_error("cannot open " + path);
    const std::streamoff sz = f.tellg();
    if (sz <= 0 || sz % 3073 != 0)
        throw format_error(path + ": size " + std::to_string(sz) +
                           " is not a multiple of the 3073-byte record at byte " +
                           std::to_string(sz - sz % 3073));
    const int n = static_cast<int>(sz / 3073);
    f.seekg(0);
    DatasetHandle d;
    d.images = Tensor({n, 3, 32, 32});
    d.labels.resize(static_cast<std::size_t>(n));
    std::vector<unsigned char> rec(3073);
    for (int i = 0; i < n; ++i) {
        if (!f.read(reinterpret_cast<char*>(rec.data()), 3073))
            throw format_error(path + ": truncated record at byte " + std::to_string(i * 3073));
        if (rec[0] > 9)
            throw format_error(path + ": label " + std::to_string(rec[0]) + " out of range at byte " +
                               std::to_string(i * 3073));
        d.labels[static_cast<std::size_t>(i)] = rec[0];
        for (int j = 0; j < 3072; ++j)
            d.images[static_cast<std::size_t>(i) * 3072 + j] = rec[1 + j] / 255.0;
    }
    d.num_classes = 10;
    d.split = "train";
    return d;
}

DatasetHandle load_dataset(const std::string& path, const std::string& format) {
    if (format == "cifar10") return load_cifar10(path);
    if (format == "idx") {
        std::string labels = path;
        const auto pos = labels.find("images-idx3");
        if (pos == std::string::npos)
            throw format_error("idx: cannot derive labels path from " + path);
        labels.replace(pos, std::string("images-idx3").size(), "labels-idx1");
        return load_idx(path, labels);
    }
    throw format_error("unknown dataset format: " + format);
}

DatasetHandle synth_dataset(std::uint64_t seed, int n, int classes, int channels, int h, int w,
                            double noise) {
    if (n < classes) throw config_error("synth_dataset: n must be >= classes");
    Rng rng(derive_seed(seed, 0x22));
    // coarse 4x4 random field per class, bilinearly upsampled -> smooth blobs
    std::vector<Tensor> protos;
    const int g = 4;
    for (int c = 0; c < classes; ++c) {
        Tensor coarse({channels, g, g});
        for (std::size_t i = 0; i < coarse.numel(); ++i) coarse[i] = rng.uniform(0.15, 0.85);
        Tensor proto({channels, h, w});
        for (int ch = 0; ch < channels; ++ch)
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) {
                    const double gy = static_cast<double>(y) / (h - 1) * (g - 1);
                    const double gx = static_cast<double>(x) / (w - 1) * (g - 1);
                    const int y0 = std::min(static_cast<int>(gy), g - 2);
                    const int x0 = std::min(static_cast<int>(gx), g - 2);
                    const double fy = gy - y0, fx = gx - x0;
                    auto at = [&](int yy, int xx) {
                        return coarse[(static_cast<std::size_t>(ch) * g + yy) * g + xx];
                    };
                    proto[(static_cast<std::size_t>(ch) * h + y) * w + x] =
                        at(y0, x0) * (1 - fy) * (1 - fx) + at(y0, x0 + 1) * (1 - fy) * fx +
                        at(y0 + 1, x0) * fy * (1 - fx) + at(y0 + 1, x0 + 1) * fy * fx;
                }
        protos.push_back(std::move(proto));
    }
    DatasetHandle d;
    d.images = Tensor({n, channels, h, w});
    d.labels.resize(static_cast<std::size_t>(n));
    d.num_classes = classes;
    d.split = "train";
    const std::size_t pix = static_cast<std::size_t>(channels) * h * w;
    for (int i = 0; i < n; ++i) {
        const int c = rng.uniform_int(0, classes - 1);
        d.labels[static_cast<std::size_t>(i)] = c;
        for (std::size_t j = 0; j < pix; ++j) {
            double v = protos[static_cast<std::size_t>(c)][j] + noise * rng.normal();
            d.images[static_cast<std::size_t>(i) * pix + j] = std::clamp(v, 0.0, 1.0);
        }
    }
    return d;
}

void apply_dense_masks(Network& net, const std::vector<DenseMask>& masks) {
    for (const auto& m : masks) {
        auto& l = net.layers[static_cast<std::size_t>(m.layer)];
        if (m.keep.size() != l.W.numel()) throw contract_error("dense mask size mismatch");
        for (std::size_t i = 0; i < l.W.numel(); ++i)
            if (!m.keep[i]) l.W[i] = 0.0;
        if (m.keep_bias.empty()) continue;
        if (m.keep_bias.size() != l.b.numel()) throw contract_error("dense mask size mismatch");
        for (std::size_t i = 0; i < l.b.numel(); ++i)
            if (!m.keep_bias[i]) l.b[i] = 0.0;
    }
}

std::vector<double> train(Network& net, const DatasetHandle& data, const TrainOptions& opt) {
    if (opt.epochs < 1) throw contract_error("train: epochs must be >= 1");
    for (const auto& l : net.layers)
        if (l.compacted())
            throw contract_error("train: compacted layers are not trainable; expand to masks");
    std::vector<int> param_layers;
    std::vector<Tensor> params;
    for (size_t i = 0; i < net.layers.size(); ++i)
        if (net.layers[i].has_params()) {
            param_layers.push_back(static_cast<int>(i));
            params.push_back(net.layers[i].W);
            params.push_back(net.layers[i].b);
        }
    AdamState adam = AdamState::init(params, opt.lr);
    Rng rng(derive_seed(opt.seed, 0x33));
    const int n = data.size();
    const int c = data.images.dim(1), h = data.images.dim(2), w = data.images.dim(3);
    const std::size_t pix = static_cast<std::size_t>(c) * h * w;
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::vector<double> history;
    for (int epoch = 0; epoch < opt.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng.engine());
        double epoch_loss = 0.0;
        int batches = 0;
        for (int start = 0; start < n; start += opt.batch) {
            const int bs = std::min(opt.batch, n - start);
            Tensor batch({bs, c, h, w});
            std::vector<int> labels(static_cast<std::size_t>(bs));
            for (int i = 0; i < bs; ++i) {
                const int src = order[static_cast<std::size_t>(start + i)];
                std::copy(data.images.data() + static_cast<std::size_t>(src) * pix,
                          data.images.data() + static_cast<std::size_t>(src + 1) * pix,
                          batch.data() + static_cast<std::size_t>(i) * pix);
                labels[static_cast<std::size_t>(i)] = data.labels[static_cast<std::size_t>(src)];
            }
            Tape tape;
            const int x0 = tape.leaf(std::move(batch));
            std::vector<int> wids, bids;
            for (size_t i = 0; i < param_layers.size(); ++i) {
                wids.push_back(tape.leaf(params[2 * i]));
                bids.push_back(tape.leaf(params[2 * i + 1]));
            }
            int cur = x0;
            size_t pi = 0;
            for (const auto& l : net.layers) {
                switch (l.kind) {
                    case LayerKind::Conv:
                        cur = tape.conv2d_op(cur, wids[pi], bids[pi], l.stride, l.pad);
                        ++pi;
                        break;
                    case LayerKind::Fc:
                        cur = tape.linear(cur, wids[pi], bids[pi]);
                        ++pi;
                        break;
                    case LayerKind::Relu:
                        cur = tape.relu(cur);
                        break;
                    case LayerKind::Maxpool:
                        cur = tape.maxpool2(cur);
                        break;
                    case LayerKind::Flatten: {
                        const auto& sh = tape.value(cur).shape();
                        int d = 1;
                        for (size_t k = 1; k < sh.size(); ++k) d *= sh[k];
                        cur = tape.reshape(cur, {sh[0], d});
                        break;
                    }
                }
            }
            int loss = tape.softmax_cross_entropy(cur, labels);
            if (opt.penalties)
                for (const auto& pen : *opt.penalties) {
                    const auto it = std::find(param_layers.begin(), param_layers.end(), pen.layer);
                    if (it == param_layers.end())
                        throw contract_error("penalty on non-parameter layer");
                    const size_t idx = static_cast<size_t>(it - param_layers.begin());
                    const int term = tape.sq_diff_sum(wids[idx], pen.target, pen.coef);
                    loss = tape.add_scalars(loss, term);
                }
            const double loss_val = tape.value(loss)[0];
            if (!std::isfinite(loss_val))
                throw training_error("training diverged (loss not finite) at epoch " +
                                     std::to_string(epoch));
            epoch_loss += loss_val;
            ++batches;
            tape.backward(loss);
            std::vector<Tensor> grads;
            for (size_t i = 0; i < param_layers.size(); ++i) {
                grads.push_back(tape.grad(wids[i]));
                grads.push_back(tape.grad(bids[i]));
            }
            adam_step(params, grads, adam);
            if (opt.masks)
                for (const auto& m : *opt.masks) {
                    const auto it = std::find(param_layers.begin(), param_layers.end(), m.layer);
                    if (it == param_layers.end()) continue;
                    const size_t idx = static_cast<size_t>(it - param_layers.begin());
                    Tensor& pw = params[2 * idx];
                    for (std::size_t j = 0; j < pw.numel(); ++j)
                        if (!m.keep[j]) pw[j] = 0.0;
                    if (m.keep_bias.empty()) continue;
                    Tensor& pb = params[2 * idx + 1];
                    for (std::size_t j = 0; j < pb.numel(); ++j)
                        if (!m.keep_bias[j]) pb[j] = 0.0;
                }
        }
        history.push_back(epoch_loss / std::max(batches, 1));
    }
    for (size_t i = 0; i < param_layers.size(); ++i) {
        net.layers[static_cast<std::size_t>(param_layers[i])].W = params[2 * i];
        net.layers[static_cast<std::size_t>(param_layers[i])].b = params[2 * i + 1];
    }
    return history;
}

double evaluate_accuracy(const Network& net, const DatasetHandle& data, int limit) {
    const int n = std::min(limit, data.size());
    if (n <= 0) throw contract_error("evaluate_accuracy: empty dataset");
    const int c = data.images.dim(1), h = data.images.dim(2), w = data.images.dim(3);
    const std::size_t pix = static_cast<std::size_t>(c) * h * w;
    const int bs = 64;
    int correct = 0;
    for (int start = 0; start < n; start += bs) {
        const int m = std::min(bs, n - start);
        Tensor batch({m, c, h, w},
                     std::vector<double>(data.images.data() + static_cast<std::size_t>(start) * pix,
                                         data.images.data() +
                                             static_cast<std::size_t>(start + m) * pix));
        Tensor logits = forward(net, batch);
        const int k = logits.dim(1);
        for (int i = 0; i < m; ++i) {
            int best = 0;
            for (int j = 1; j < k; ++j)
                if (logits.at(i, j) > logits.at(i, best)) best = j;
            if (best == data.labels[static_cast<std::size_t>(start + i)]) ++correct;
        }
    }
    return static_cast<double>(correct) / n;
}

double evaluate_accuracy(const Network& net, const DatasetHandle& data) {
    return evaluate_accuracy(net, data, data.size());
}

}  // namespace prunekit
