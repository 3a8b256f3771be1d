#include "doctest.h"

#include <algorithm>
#include <cmath>

#include "prunekit/purify.hpp"
#include "prunekit/rng.hpp"

using namespace prunekit;

namespace {

Tensor random_batch(const Network& net, int n, std::uint64_t seed) {
    Tensor x({n, net.input_shape[0], net.input_shape[1], net.input_shape[2]});
    Rng rng(seed);
    for (size_t i = 0; i < x.numel(); ++i) x[i] = rng.uniform();
    return x;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    REQUIRE(a.numel() == b.numel());
    double m = 0.0;
    for (size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

Network trained_convnet(std::uint64_t seed, int classes = 3) {
    Network net = build_network("convnet-s", seed, {1, 16, 16}, classes);
    TrainOptions opt;
    opt.epochs = 1;
    opt.seed = seed;
    train(net, synth_dataset(seed, 200, classes), opt);
    return net;
}

}  // namespace

TEST_CASE("zero thresholds remove nothing") {
    Tensor w({3, 2, 2, 2});
    Rng rng(3);
    for (size_t i = 0; i < w.numel(); ++i) w[i] = rng.normal();
    const auto [cols, filts] = purify_layer(w, 0.0, 0.0);
    CHECK(cols.empty());
    CHECK(filts.empty());
}

TEST_CASE("strict threshold comparison on planted norms") {
    // three filters with norms 0.001, 2.0, 0.003; tau_filt = 0.01 removes 0 and 2
    Tensor w({3, 1, 1, 1});
    w[0] = 0.001;
    w[1] = 2.0;
    w[2] = 0.003;
    auto [cols, filts] = purify_layer(w, 0.0, 0.01);
    CHECK(filts == std::vector<int>{0, 2});
    CHECK(cols.empty());

    // a norm exactly at the threshold survives (strictly-below rule)
    auto [cols2, filts2] = purify_layer(w, 0.0, 0.003);
    CHECK(filts2 == std::vector<int>{0});
    CHECK(cols2.empty());
}

TEST_CASE("the strongest structure survives any threshold") {
    Tensor w({3, 1, 2, 2});
    Rng rng(5);
    for (size_t i = 0; i < w.numel(); ++i) w[i] = 0.01 * rng.normal();
    const auto [cols, filts] = purify_layer(w, 1e9, 1e9);
    CHECK(filts.size() == 2);   // one of three filters survives
    CHECK(cols.size() == 3);    // one of four columns survives
    const auto fn = group_norms(w, Scheme::Filter);
    const int best = static_cast<int>(std::max_element(fn.begin(), fn.end()) - fn.begin());
    CHECK(std::count(filts.begin(), filts.end(), best) == 0);
}

TEST_CASE("consumer layer skips activations and stops at params") {
    const Network net = build_network("convnet-s", 1, {1, 16, 16}, 3);
    const auto prunable = prunable_layers(net);
    for (size_t i = 0; i + 1 < prunable.size(); ++i) {
        const int consumer = consumer_layer(net, prunable[i]);
        CHECK(consumer == prunable[i + 1]);
    }
}

TEST_CASE("removing a zero filter is exactly compensated by consumer column removal") {
    Network net = trained_convnet(7);
    const auto prunable = prunable_layers(net);
    const int li = prunable[0];
    auto& l = net.layers[static_cast<size_t>(li)];

    // zero filter 2 (weights and bias) by hand
    const int cols = l.gemm_cols();
    for (int j = 0; j < cols; ++j) l.W[static_cast<size_t>(2 * cols + j)] = 0.0;
    l.b[2] = 0.0;

    const Tensor x = random_batch(net, 6, 70);
    const Tensor before = forward(net, x);

    // now delete the consumer columns that read that feature map
    const auto dead = propagate_removal(net, li, {2});
    const int ci = consumer_layer(net, li);
    auto& c = net.layers[static_cast<size_t>(ci)];
    const int ccols = c.gemm_cols();
    CHECK(static_cast<int>(dead.size()) == c.kh * c.kw);
    for (int f = 0; f < c.gemm_rows(); ++f)
        for (int j : dead) c.W[static_cast<size_t>(f * ccols + j)] = 0.0;
    const Tensor after = forward(net, x);
    CHECK(max_abs_diff(before, after) <= 1e-9);
}

TEST_CASE("propagation across the flatten boundary covers a spatial block") {
    const Network net = build_network("convnet-s", 9, {1, 16, 16}, 3);
    const auto prunable = prunable_layers(net);
    const int li = prunable[prunable.size() - 2];  // last conv before the fc head
    const int ci = consumer_layer(net, li);
    CHECK(net.layers[static_cast<size_t>(ci)].kind == LayerKind::Fc);
    const auto shapes = activation_shapes(net);
    // feature-map size feeding the fc layer
    const auto& fc_in = shapes[static_cast<size_t>(ci) - 1];
    const int block = fc_in.size() == 3 ? fc_in[1] * fc_in[2]
                                        : fc_in[0] / net.layers[static_cast<size_t>(li)].cout;
    const auto dead = propagate_removal(net, li, {0, 1});
    CHECK(static_cast<int>(dead.size()) == 2 * block);
}

TEST_CASE("propagation demands zero bias on removed filters") {
    Network net = trained_convnet(11);
    const int li = prunable_layers(net)[0];
    net.layers[static_cast<size_t>(li)].b[1] = 0.25;
    CHECK_THROWS_AS(propagate_removal(net, li, {1}), contract_error);
}

TEST_CASE("shrink drops filters and consumer channels with exact equivalence") {
    Network net = trained_convnet(13);
    const int li = prunable_layers(net)[0];
    auto& l = net.layers[static_cast<size_t>(li)];
    const int cols = l.gemm_cols();
    for (int j = 0; j < cols; ++j) l.W[static_cast<size_t>(1 * cols + j)] = 0.0;
    l.b[1] = 0.0;

    RemovalSets removals;
    removals.filters[li] = {1};
    removals.columns[consumer_layer(net, li)] = propagate_removal(net, li, {1});
    const Network compact = shrink_network(net, removals);

    CHECK(compact.layers[static_cast<size_t>(li)].cout == l.cout - 1);
    const int ci = consumer_layer(net, li);
    const auto& cc = compact.layers[static_cast<size_t>(ci)];
    // whole input channel removed -> consumer stays a dense conv with cin - 1
    CHECK_FALSE(cc.compacted());
    CHECK(cc.cin == net.layers[static_cast<size_t>(ci)].cin - 1);

    for (int trial = 0; trial < 50; ++trial) {
        const Tensor x = random_batch(net, 2, 130 + static_cast<std::uint64_t>(trial));
        CHECK(max_abs_diff(forward(net, x), forward(compact, x)) <= 1e-9);
    }

    CHECK(count_params(compact).total < count_params(net).total);
    CHECK(count_flops(compact) < count_flops(net));
}

TEST_CASE("shrink keeps a sparse column pattern as a compacted GEMM view") {
    Network net = trained_convnet(17);
    const auto prunable = prunable_layers(net);
    const int li = prunable[1];  // second conv: columns do not align with channels
    auto& l = net.layers[static_cast<size_t>(li)];
    const int cols = l.gemm_cols();
    // zero two scattered columns (not a whole kh*kw block)
    for (int f = 0; f < l.gemm_rows(); ++f) {
        l.W[static_cast<size_t>(f * cols + 3)] = 0.0;
        l.W[static_cast<size_t>(f * cols + 10)] = 0.0;
    }
    RemovalSets removals;
    removals.columns[li] = {3, 10};
    const Network compact = shrink_network(net, removals);
    const auto& cl = compact.layers[static_cast<size_t>(li)];
    CHECK(cl.compacted());
    CHECK(cl.gemm_cols() == cols - 2);
    for (int trial = 0; trial < 10; ++trial) {
        const Tensor x = random_batch(net, 2, 170 + static_cast<std::uint64_t>(trial));
        CHECK(max_abs_diff(forward(net, x), forward(compact, x)) <= 1e-9);
    }
}

TEST_CASE("mask-implied removals reproduce the masked forward after shrinking") {
    Network net = trained_convnet(19);
    MaskSet masks = MaskSet::all_ones(net);
    const auto prunable = prunable_layers(net);
    auto& lm = masks.layers[prunable[0]];
    lm.filter[0] = 0;
    lm.filter[3] = 0;
    net.layers[static_cast<size_t>(prunable[0])].b[0] = 0.0;
    net.layers[static_cast<size_t>(prunable[0])].b[3] = 0.0;
    auto& lm2 = masks.layers[prunable[1]];
    lm2.column[5] = 0;
    apply_mask(net, masks);

    const RemovalSets removals = removals_from_masks(net, masks);
    CHECK(removals.filters.at(prunable[0]) == std::vector<int>{0, 3});
    // propagated consumer columns include the direct mask removal, deduped
    const auto& c1 = removals.columns.at(prunable[1]);
    CHECK(std::count(c1.begin(), c1.end(), 5) == 1);
    CHECK(std::is_sorted(c1.begin(), c1.end()));

    const Network compact = shrink_network(net, removals);
    for (int trial = 0; trial < 20; ++trial) {
        const Tensor x = random_batch(net, 2, 190 + static_cast<std::uint64_t>(trial));
        CHECK(max_abs_diff(forward(net, x), forward(compact, x)) <= 1e-9);
    }
}

TEST_CASE("purification application zeroes biases and clears mask bits") {
    Network net = trained_convnet(23);
    MaskSet masks = MaskSet::all_ones(net);
    const int li = prunable_layers(net)[0];

    // plant a weak filter so a small threshold catches exactly it
    auto& l = net.layers[static_cast<size_t>(li)];
    const int cols = l.gemm_cols();
    for (int j = 0; j < cols; ++j) l.W[static_cast<size_t>(2 * cols + j)] = 1e-8;

    PurifyConfig cfg;
    cfg.thresholds[li] = {0.0, 1e-4};
    apply_purification(net, masks, cfg);
    CHECK(masks.at(li).filter[2] == 0);
    CHECK(net.layers[static_cast<size_t>(li)].b[2] == 0.0);
    for (int j = 0; j < cols; ++j)
        CHECK(net.layers[static_cast<size_t>(li)].W[static_cast<size_t>(2 * cols + j)] == 0.0);
}

TEST_CASE("threshold search removes a planted near-zero filter without accuracy loss") {
    const DatasetHandle data = synth_dataset(29, 400, 3);
    Network net = build_network("convnet-s", 29, {1, 16, 16}, 3);
    TrainOptions opt;
    opt.epochs = 3;
    opt.seed = 29;
    train(net, data, opt);
    MaskSet masks = MaskSet::all_ones(net);

    // plant vanishing filters with distinct norms in the first conv layer
    const int li = prunable_layers(net)[0];
    auto& l = net.layers[static_cast<size_t>(li)];
    const int cols = l.gemm_cols();
    double tiny = 1e-7;
    for (int f : {1, 4, 7}) {
        for (int j = 0; j < cols; ++j) l.W[static_cast<size_t>(f * cols + j)] = tiny;
        l.b[f] = 0.0;
        tiny *= 2.0;
    }

    const double acc_pre = evaluate_accuracy(net, data);
    PurifySearchConfig cfg;
    cfg.accuracy_epsilon = 0.002;
    cfg.seed = 29;
    cfg.iters_per_temp = 20;
    const PurifyOutcome out = search_thresholds(net, masks, data, cfg);

    CHECK(out.masks.at(li).filter[1] == 0);
    CHECK(out.masks.at(li).filter[4] == 0);
    CHECK(out.accuracy >= acc_pre - cfg.accuracy_epsilon - 1e-12);
    // removal only ever shrinks the kept set
    for (const auto& [k, lm] : out.masks.layers) {
        CHECK(lm.kept_filters() <= masks.at(k).kept_filters());
        CHECK(lm.kept_columns() <= masks.at(k).kept_columns());
        CHECK(lm.kept_filters() >= 1);
        CHECK(lm.kept_columns() >= 1);
    }
}

TEST_CASE("epsilon zero never beats the all-zero-threshold floor on accuracy") {
    const DatasetHandle data = synth_dataset(43, 300, 3);
    Network net = build_network("convnet-s", 43, {1, 16, 16}, 3);
    TrainOptions opt;
    opt.epochs = 2;
    opt.seed = 43;
    train(net, data, opt);
    MaskSet masks = MaskSet::all_ones(net);

    Network pre = net;
    MaskSet pre_masks = masks;  // all-zero thresholds leave masks untouched
    PurifySearchConfig cfg;
    cfg.accuracy_epsilon = 0.0;
    cfg.seed = 43;
    const PurifyOutcome out = search_thresholds(net, masks, data, cfg);

    // measured after mandatory bias zeroing; feasibility is against that floor
    Network floor_net = pre;
    for (int li : prunable_layers(floor_net)) {
        auto& lm = pre_masks.layers[li];
        for (size_t f = 0; f < lm.filter.size(); ++f)
            if (!lm.filter[f]) floor_net.layers[static_cast<size_t>(li)].b[f] = 0.0;
    }
    const double floor_acc = evaluate_accuracy(floor_net, data);
    CHECK(out.accuracy >= floor_acc - 1e-12);
}
