#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "prunekit/checkpoint.hpp"
#include "prunekit/driver.hpp"

namespace py = pybind11;
using namespace prunekit;

namespace {

Tensor tensor_from(const py::array_t<double, py::array::c_style | py::array::forcecast>& arr) {
    std::vector<int> shape;
    for (py::ssize_t i = 0; i < arr.ndim(); ++i)
        shape.push_back(static_cast<int>(arr.shape(i)));
    std::vector<double> data(arr.data(), arr.data() + arr.size());
    return Tensor(std::move(shape), std::move(data));
}

py::array_t<double> array_from(const Tensor& t) {
    std::vector<py::ssize_t> shape;
    for (int i = 0; i < t.rank(); ++i) shape.push_back(t.dim(i));
    py::array_t<double> arr(shape);
    std::copy_n(t.data(), t.numel(), arr.mutable_data());
    return arr;
}

Action action_from(const std::map<int, std::pair<double, double>>& layers) {
    Action a;
    for (const auto& [li, rs] : layers) a.layers[li] = {rs.first, rs.second};
    return a;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "structured pruning core";

    py::class_<Network>(m, "Network")
        .def_property_readonly("num_classes", [](const Network& n) { return n.num_classes; })
        .def_property_readonly("input_shape", [](const Network& n) { return n.input_shape; })
        .def("__len__", [](const Network& n) { return n.layers.size(); })
        .def("prunable_layers", [](const Network& n) { return prunable_layers(n); })
        .def("weight", [](const Network& n, int li) { return array_from(n.layers.at(static_cast<size_t>(li)).W); })
        .def("bias", [](const Network& n, int li) { return array_from(n.layers.at(static_cast<size_t>(li)).b); });

    py::class_<DatasetHandle>(m, "Dataset")
        .def_property_readonly("images", [](const DatasetHandle& d) { return array_from(d.images); })
        .def_property_readonly("labels", [](const DatasetHandle& d) { return d.labels; })
        .def_property_readonly("num_classes", [](const DatasetHandle& d) { return d.num_classes; })
        .def("__len__", [](const DatasetHandle& d) { return d.size(); });

    py::class_<MaskSet>(m, "MaskSet")
        .def("filter_mask", [](const MaskSet& m_, int li) { return m_.at(li).filter; })
        .def("column_mask", [](const MaskSet& m_, int li) { return m_.at(li).column; });

    m.def("gemm", [](const py::array_t<double>& a, const py::array_t<double>& b) {
        return array_from(gemm(tensor_from(a), tensor_from(b)));
    });
    m.def(
        "im2col",
        [](const py::array_t<double>& img, int kh, int kw, int stride, int pad) {
            return array_from(im2col(tensor_from(img), kh, kw, stride, pad));
        },
        py::arg("img"), py::arg("kh"), py::arg("kw"), py::arg("stride") = 1, py::arg("pad") = 0);
    m.def(
        "conv2d",
        [](const py::array_t<double>& x, const py::array_t<double>& w,
           const py::array_t<double>& b, int stride, int pad) {
            return array_from(conv2d(tensor_from(x), tensor_from(w), tensor_from(b), stride, pad));
        },
        py::arg("x"), py::arg("w"), py::arg("b"), py::arg("stride") = 1, py::arg("pad") = 0);

    m.def(
        "build_network",
        [](const std::string& arch, std::uint64_t seed, const std::vector<int>& input_shape,
           int num_classes) { return build_network(arch, seed, input_shape, num_classes); },
        py::arg("arch"), py::arg("seed"), py::arg("input_shape"), py::arg("num_classes"));
    m.def(
        "synth_dataset",
        [](std::uint64_t seed, int n, int classes, int channels, int h, int w, double noise) {
            return synth_dataset(seed, n, classes, channels, h, w, noise);
        },
        py::arg("seed"), py::arg("n"), py::arg("classes"), py::arg("channels") = 1,
        py::arg("h") = 16, py::arg("w") = 16, py::arg("noise") = 0.08);
    m.def("forward", [](const Network& net, const py::array_t<double>& batch) {
        return array_from(forward(net, tensor_from(batch)));
    });
    m.def(
        "train",
        [](Network& net, const DatasetHandle& data, int epochs, double lr, int batch,
           std::uint64_t seed) {
            TrainOptions opt;
            opt.epochs = epochs;
            opt.lr = lr;
            opt.batch = batch;
            opt.seed = seed;
            return train(net, data, opt);
        },
        py::arg("net"), py::arg("data"), py::arg("epochs") = 1, py::arg("lr") = 1e-3,
        py::arg("batch") = 32, py::arg("seed") = 0);
    m.def("evaluate_accuracy",
          [](const Network& net, const DatasetHandle& data) { return evaluate_accuracy(net, data); });

    m.def("all_ones_masks", [](const Network& net) { return MaskSet::all_ones(net); });
    m.def(
        "magnitude_prune",
        [](const Network& net, const std::map<int, std::pair<double, double>>& action) {
            return magnitude_prune(net, action_from(action));
        },
        py::arg("net"), py::arg("action"),
        "action maps layer index to (pruning rate, scheme split sigma)");
    m.def("apply_mask", [](Network& net, const MaskSet& masks) { apply_mask(net, masks); });
    m.def("count_params", [](const Network& net, const MaskSet* masks) {
        const ParamCounts c = count_params(net, masks);
        return py::make_tuple(c.conv, c.total);
    }, py::arg("net"), py::arg("masks") = nullptr);
    m.def("count_flops", [](const Network& net, const MaskSet* masks) {
        return count_flops(net, masks);
    }, py::arg("net"), py::arg("masks") = nullptr);

    m.def(
        "compress",
        [](const std::string& config_text) {
            const RunConfig rc =
                run_config_from(Config::parse_text(config_text, run_config_keys()));
            const RunResult result = run_autocompress(rc);
            return py::make_tuple(render_csv(result.report), result.report.final_accuracy);
        },
        py::arg("config_text"), "run the full pipeline; returns (csv_report, final_accuracy)");

    m.def("save_checkpoint",
          [](const Network& net, const MaskSet& masks,
             const std::map<std::string, std::string>& metadata, const std::string& path) {
              save_checkpoint(net, masks, metadata, path);
          });
    m.def("load_checkpoint", [](const std::string& path) {
        CheckpointData d = load_checkpoint(path);
        return py::make_tuple(d.net, d.masks, d.metadata);
    });
}
