#include "prunekit/checkpoint.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

namespace prunekit {

namespace {

constexpr char kMagic[4] = {'A', 'C', 'M', 'P'};
constexpr std::uint32_t kVersion = 1;

class Writer {
  public:
    explicit Writer(const std::string& path) : out_(path, std::ios::binary) {
        if (!out_) throw format_error("cannot open for writing: " + path);
    }
    void bytes(const void* p, size_t n) { out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n)); }
    void u8(std::uint8_t v) { bytes(&v, 1); }
    void u16(std::uint16_t v) { le(v); }
    void u32(std::uint32_t v) { le(v); }
    void u64(std::uint64_t v) { le(v); }
    void f64(double v) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, 8);
        le(bits);
    }
    void str(const std::string& s) { bytes(s.data(), s.size()); }
    void close() {
        out_.close();
        if (!out_) throw format_error("write failed");
    }

  private:
    template <typename T>
    void le(T v) {
        unsigned char buf[sizeof(T)];
        for (size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
        bytes(buf, sizeof(T));
    }
    std::ofstream out_;
};

class Reader {
  public:
    explicit Reader(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw format_error("cannot open: " + path);
        std::ostringstream buf;
        buf << in.rdbuf();
        data_ = buf.str();
    }
    size_t offset() const { return pos_; }
    void bytes(void* p, size_t n) {
        if (pos_ + n > data_.size())
            throw format_error("truncated file at offset " + std::to_string(pos_) + " (need " +
                               std::to_string(n) + " bytes, have " +
                               std::to_string(data_.size() - pos_) + ")");
        std::memcpy(p, data_.data() + pos_, n);
        pos_ += n;
    }
    std::uint8_t u8() {
        std::uint8_t v;
        bytes(&v, 1);
        return v;
    }
    std::uint16_t u16() { return le<std::uint16_t>(); }
    std::uint32_t u32() { return le<std::uint32_t>(); }
    std::uint64_t u64() { return le<std::uint64_t>(); }
    double f64() {
        const std::uint64_t bits = le<std::uint64_t>();
        double v;
        std::memcpy(&v, &bits, 8);
        return v;
    }
    std::string str(size_t n) {
        std::string s(n, '\0');
        bytes(s.data(), n);
        return s;
    }
    bool at_end() const { return pos_ == data_.size(); }

  private:
    template <typename T>
    T le() {
        unsigned char buf[sizeof(T)];
        bytes(buf, sizeof(T));
        T v = 0;
        for (size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(buf[i]) << (8 * i);
        return v;
    }
    std::string data_;
    size_t pos_ = 0;
};

void write_tensor_header(Writer& w, const std::string& name, const std::vector<int>& dims) {
    if (name.size() > 0xffff) throw format_error("tensor name too long: " + name);
    w.u16(static_cast<std::uint16_t>(name.size()));
    w.str(name);
    w.u8(static_cast<std::uint8_t>(dims.size()));
    for (int d : dims) w.u64(static_cast<std::uint64_t>(d));
}

std::string kind_name(LayerKind k) {
    switch (k) {
        case LayerKind::Conv: return "conv";
        case LayerKind::Fc: return "fc";
        case LayerKind::Relu: return "relu";
        case LayerKind::Maxpool: return "maxpool";
        case LayerKind::Flatten: return "flatten";
    }
    throw format_error("unknown layer kind");
}

LayerKind kind_from(const std::string& s) {
    if (s == "conv") return LayerKind::Conv;
    if (s == "fc") return LayerKind::Fc;
    if (s == "relu") return LayerKind::Relu;
    if (s == "maxpool") return LayerKind::Maxpool;
    if (s == "flatten") return LayerKind::Flatten;
    throw format_error("unknown layer kind: " + s);
}

std::vector<std::string> split_ws(const std::string& s) {
    std::istringstream in(s);
    std::vector<std::string> out;
    std::string tok;
    while (in >> tok) out.push_back(tok);
    return out;
}

}  // namespace

void save_checkpoint(const Network& net, const MaskSet& masks,
                     const std::map<std::string, std::string>& metadata,
                     const std::string& path) {
    validate_network(net);
    Writer w(path);
    w.bytes(kMagic, 4);
    w.u32(kVersion);

    // tensors: weights and biases of every parameterized layer, plus the
    // kept-column index lists of compacted layers
    std::uint32_t count = 0;
    for (const auto& l : net.layers)
        if (l.has_params()) count += l.compacted() ? 3 : 2;
    w.u32(count);
    for (size_t li = 0; li < net.layers.size(); ++li) {
        const auto& l = net.layers[li];
        if (!l.has_params()) continue;
        const std::string base = "layer" + std::to_string(li);
        write_tensor_header(w, base + ".W", l.W.shape());
        for (size_t i = 0; i < l.W.numel(); ++i) w.f64(l.W[i]);
        write_tensor_header(w, base + ".b", l.b.shape());
        for (size_t i = 0; i < l.b.numel(); ++i) w.f64(l.b[i]);
        if (l.compacted()) {
            write_tensor_header(w, base + ".kept_cols",
                                {static_cast<int>(l.kept_cols.size())});
            for (int c : l.kept_cols) w.f64(static_cast<double>(c));
        }
    }

    // mask section, same layout but one byte per element
    w.u32(static_cast<std::uint32_t>(masks.layers.size() * 2));
    for (const auto& [li, m] : masks.layers) {
        const std::string base = "layer" + std::to_string(li);
        write_tensor_header(w, base + ".filter", {static_cast<int>(m.filter.size())});
        w.bytes(m.filter.data(), m.filter.size());
        write_tensor_header(w, base + ".column", {static_cast<int>(m.column.size())});
        w.bytes(m.column.data(), m.column.size());
    }

    // metadata: caller entries plus reserved structure keys
    std::map<std::string, std::string> meta = metadata;
    {
        std::ostringstream shape;
        shape << net.input_shape[0] << " " << net.input_shape[1] << " " << net.input_shape[2];
        meta["net.input_shape"] = shape.str();
        meta["net.num_classes"] = std::to_string(net.num_classes);
        meta["net.layers"] = std::to_string(net.layers.size());
        for (size_t li = 0; li < net.layers.size(); ++li) {
            const auto& l = net.layers[li];
            std::ostringstream spec;
            spec << kind_name(l.kind);
            if (l.kind == LayerKind::Conv)
                spec << " " << l.cout << " " << l.cin << " " << l.kh << " " << l.kw << " "
                     << l.stride << " " << l.pad;
            else if (l.kind == LayerKind::Fc)
                spec << " " << l.out_dim << " " << l.in_dim;
            meta["net.layer" + std::to_string(li)] = spec.str();
        }
    }
    std::ostringstream lines;
    for (const auto& [k, v] : meta) {
        if (k.find('\n') != std::string::npos || v.find('\n') != std::string::npos)
            throw format_error("metadata entries must be single-line: " + k);
        lines << k << "=" << v << "\n";
    }
    const std::string meta_str = lines.str();
    w.u32(static_cast<std::uint32_t>(meta_str.size()));
    w.str(meta_str);
    w.close();
}

CheckpointData load_checkpoint(const std::string& path) {
    Reader r(path);
    char magic[4];
    r.bytes(magic, 4);
    if (std::memcmp(magic, kMagic, 4) != 0)
        throw format_error("bad magic at offset 0: not a checkpoint file");
    const std::uint32_t version = r.u32();
    if (version != kVersion)
        throw format_error("unsupported version " + std::to_string(version) + " at offset 4");

    struct Rec {
        std::string name;
        std::vector<int> dims;
    };
    auto read_header = [&](Rec& rec) {
        const size_t at = r.offset();
        const std::uint16_t name_len = r.u16();
        rec.name = r.str(name_len);
        const std::uint8_t rank = r.u8();
        rec.dims.clear();
        for (int i = 0; i < rank; ++i) {
            const std::uint64_t d = r.u64();
            if (d == 0 || d > (1ull << 32))
                throw format_error("bad dimension at offset " + std::to_string(at));
            rec.dims.push_back(static_cast<int>(d));
        }
    };

    std::map<std::string, Tensor> tensors;
    const std::uint32_t tensor_count = r.u32();
    for (std::uint32_t t = 0; t < tensor_count; ++t) {
        Rec rec;
        read_header(rec);
        Tensor ten(rec.dims);
        for (size_t i = 0; i < ten.numel(); ++i) ten[i] = r.f64();
        tensors.emplace(rec.name, std::move(ten));
    }

    std::map<std::string, std::vector<std::uint8_t>> mask_recs;
    const std::uint32_t mask_count = r.u32();
    for (std::uint32_t t = 0; t < mask_count; ++t) {
        Rec rec;
        read_header(rec);
        size_t numel = 1;
        for (int d : rec.dims) numel *= static_cast<size_t>(d);
        std::vector<std::uint8_t> bytes(numel);
        r.bytes(bytes.data(), numel);
        mask_recs.emplace(rec.name, std::move(bytes));
    }

    const std::uint32_t meta_len = r.u32();
    const std::string meta_str = r.str(meta_len);
    if (!r.at_end())
        throw format_error("trailing bytes at offset " + std::to_string(r.offset()));

    CheckpointData data;
    std::istringstream lines(meta_str);
    std::string line;
    while (std::getline(lines, line)) {
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw format_error("malformed metadata line: " + line);
        data.metadata[line.substr(0, eq)] = line.substr(eq + 1);
    }

    auto meta_get = [&](const std::string& key) {
        const auto it = data.metadata.find(key);
        if (it == data.metadata.end()) throw format_error("missing metadata key: " + key);
        return it->second;
    };

    // rebuild the network from the reserved structure keys
    {
        const auto shape = split_ws(meta_get("net.input_shape"));
        if (shape.size() != 3) throw format_error("bad net.input_shape");
        for (const auto& s : shape) data.net.input_shape.push_back(std::stoi(s));
        data.net.num_classes = std::stoi(meta_get("net.num_classes"));
        const int n_layers = std::stoi(meta_get("net.layers"));
        for (int li = 0; li < n_layers; ++li) {
            const auto toks = split_ws(meta_get("net.layer" + std::to_string(li)));
            if (toks.empty()) throw format_error("empty layer spec");
            LayerSpec l;
            l.kind = kind_from(toks[0]);
            if (l.kind == LayerKind::Conv) {
                if (toks.size() != 7) throw format_error("bad conv spec for layer " + std::to_string(li));
                l.cout = std::stoi(toks[1]);
                l.cin = std::stoi(toks[2]);
                l.kh = std::stoi(toks[3]);
                l.kw = std::stoi(toks[4]);
                l.stride = std::stoi(toks[5]);
                l.pad = std::stoi(toks[6]);
            } else if (l.kind == LayerKind::Fc) {
                if (toks.size() != 3) throw format_error("bad fc spec for layer " + std::to_string(li));
                l.out_dim = std::stoi(toks[1]);
                l.in_dim = std::stoi(toks[2]);
            }
            if (l.has_params()) {
                const std::string base = "layer" + std::to_string(li);
                const auto wit = tensors.find(base + ".W");
                const auto bit = tensors.find(base + ".b");
                if (wit == tensors.end() || bit == tensors.end())
                    throw format_error("missing tensors for layer " + std::to_string(li));
                l.W = wit->second;
                l.b = bit->second;
                const auto kit = tensors.find(base + ".kept_cols");
                if (kit != tensors.end())
                    for (size_t i = 0; i < kit->second.numel(); ++i)
                        l.kept_cols.push_back(static_cast<int>(kit->second[i]));
            }
            data.net.layers.push_back(std::move(l));
        }
    }
    validate_network(data.net);

    for (const auto& [name, bytes] : mask_recs) {
        const auto dot = name.find('.');
        if (dot == std::string::npos || name.rfind("layer", 0) != 0)
            throw format_error("bad mask record name: " + name);
        const int li = std::stoi(name.substr(5, dot - 5));
        const std::string field = name.substr(dot + 1);
        LayerMask& m = data.masks.layers[li];
        if (field == "filter")
            m.filter = bytes;
        else if (field == "column")
            m.column = bytes;
        else
            throw format_error("bad mask record name: " + name);
    }
    for (const auto& [li, m] : data.masks.layers) {
        if (li < 0 || li >= static_cast<int>(data.net.layers.size()) ||
            !data.net.layers[static_cast<size_t>(li)].has_params())
            throw format_error("mask for non-parameterized layer " + std::to_string(li));
        const auto& l = data.net.layers[static_cast<size_t>(li)];
        if (static_cast<int>(m.filter.size()) != l.gemm_rows() ||
            static_cast<int>(m.column.size()) != l.gemm_cols())
            throw format_error("mask size mismatch for layer " + std::to_string(li));
    }

    // strip reserved keys so metadata roundtrips what the caller stored
    for (auto it = data.metadata.begin(); it != data.metadata.end();)
        it = it->first.rfind("net.", 0) == 0 ? data.metadata.erase(it) : std::next(it);
    return data;
}

}  // namespace prunekit
