#include <cmath>
#include <functional>
#include <vector>

#include "doctest.h"
#include "prunekit/adam.hpp"
#include "prunekit/rng.hpp"
#include "prunekit/tape.hpp"

using namespace prunekit;

namespace {

Tensor random_tensor(std::vector<int> shape, Rng& rng) {
    Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.normal();
    return t;
}

// central finite differences over every entry of `param`
double max_rel_grad_error(Tensor param,
                          const std::function<double(const Tensor&)>& f,
                          const Tensor& analytic, double h = 1e-6) {
    double worst = 0.0;
    for (std::size_t i = 0; i < param.numel(); ++i) {
        Tensor hi = param, lo = param;
        hi[i] += h;
        lo[i] -= h;
        const double fd = (f(hi) - f(lo)) / (2 * h);
        const double denom = std::max({std::abs(fd), std::abs(analytic[i]), 1e-6});
        worst = std::max(worst, std::abs(fd - analytic[i]) / denom);
    }
    return worst;
}

}  // namespace

TEST_CASE("backward: loss = sum(W) gives all-ones gradient") {
    Rng rng(1);
    Tape tape;
    const int w = tape.leaf(random_tensor({3, 4}, rng));
    const int loss = tape.sum_all(w);
    tape.backward(loss);
    for (std::size_t i = 0; i < tape.grad(w).numel(); ++i) CHECK(tape.grad(w)[i] == 1.0);
}

TEST_CASE("backward: loss = ||W||^2 / 2 gives gradient W") {
    Rng rng(2);
    Tape tape;
    Tensor wv = random_tensor({4, 4}, rng);
    const int w = tape.leaf(wv);
    const int loss = tape.sq_diff_sum(w, Tensor::zeros({4, 4}), 0.5);
    tape.backward(loss);
    for (std::size_t i = 0; i < wv.numel(); ++i)
        CHECK(tape.grad(w)[i] == doctest::Approx(wv[i]).epsilon(1e-12));
}

TEST_CASE("backward: unused parameter has zero gradient") {
    Rng rng(3);
    Tape tape;
    const int w = tape.leaf(random_tensor({2, 2}, rng));
    const int unused = tape.leaf(random_tensor({2, 2}, rng));
    const int loss = tape.sum_all(w);
    tape.backward(loss);
    for (std::size_t i = 0; i < tape.grad(unused).numel(); ++i) CHECK(tape.grad(unused)[i] == 0.0);
}

TEST_CASE("backward rejects non-scalar loss") {
    Tape tape;
    const int w = tape.leaf(Tensor::zeros({2, 2}));
    const int y = tape.relu(w);
    CHECK_THROWS_AS(tape.backward(y), contract_error);
}

TEST_CASE("two-layer conv net gradient vs finite differences") {
    Rng rng(4);
    const int n = 2;
    Tensor x = random_tensor({n, 2, 6, 6}, rng);
    Tensor w1 = random_tensor({3, 2, 3, 3}, rng);
    Tensor b1 = random_tensor({3}, rng);
    Tensor w2 = random_tensor({4, 3 * 3 * 3}, rng);  // fc after pool(6->3)
    Tensor b2 = random_tensor({4}, rng);
    std::vector<int> labels = {1, 3};

    auto loss_of = [&](const Tensor& w1v, const Tensor& b1v, const Tensor& w2v,
                       const Tensor& b2v) {
        Tape t;
        const int xi = t.leaf(x);
        const int a = t.conv2d_op(xi, t.leaf(w1v), t.leaf(b1v), 1, 1);
        const int r = t.relu(a);
        const int p = t.maxpool2(r);
        const int fl = t.reshape(p, {n, 27});
        const int y = t.linear(fl, t.leaf(w2v), t.leaf(b2v));
        return t.value(t.softmax_cross_entropy(y, labels))[0];
    };

    Tape t;
    const int xi = t.leaf(x);
    const int w1i = t.leaf(w1), b1i = t.leaf(b1), w2i = t.leaf(w2), b2i = t.leaf(b2);
    const int a = t.conv2d_op(xi, w1i, b1i, 1, 1);
    const int p = t.maxpool2(t.relu(a));
    const int y = t.linear(t.reshape(p, {n, 27}), w2i, b2i);
    const int loss = t.softmax_cross_entropy(y, labels);
    t.backward(loss);

    CHECK(max_rel_grad_error(w1, [&](const Tensor& v) { return loss_of(v, b1, w2, b2); },
                             t.grad(w1i)) < 1e-4);
    CHECK(max_rel_grad_error(b1, [&](const Tensor& v) { return loss_of(w1, v, w2, b2); },
                             t.grad(b1i)) < 1e-4);
    CHECK(max_rel_grad_error(w2, [&](const Tensor& v) { return loss_of(w1, b1, v, b2); },
                             t.grad(w2i)) < 1e-4);
    CHECK(max_rel_grad_error(b2, [&](const Tensor& v) { return loss_of(w1, b1, w2, v); },
                             t.grad(b2i)) < 1e-4);
}

TEST_CASE("softmax cross-entropy values") {
    SUBCASE("uniform logits give ln K") {
        Tape t;
        const int x = t.leaf(Tensor::zeros({3, 4}));
        const int loss = t.softmax_cross_entropy(x, {0, 1, 2});
        CHECK(t.value(loss)[0] == doctest::Approx(std::log(4.0)).epsilon(1e-12));
    }
    SUBCASE("growing margin drives loss to zero monotonically") {
        double prev = 1e9;
        for (double m : {1.0, 3.0, 6.0, 12.0}) {
            Tape t;
            Tensor logits({1, 2}, {m, 0.0});
            const int loss = t.softmax_cross_entropy(t.leaf(logits), {0});
            CHECK(t.value(loss)[0] < prev);
            prev = t.value(loss)[0];
        }
        CHECK(prev < 1e-5);
    }
    SUBCASE("random 3x5 case matches direct formula") {
        Rng rng(9);
        Tensor logits = random_tensor({3, 5}, rng);
        std::vector<int> labels = {4, 0, 2};
        double expect = 0.0;
        for (int i = 0; i < 3; ++i) {
            double denom = 0.0;
            for (int j = 0; j < 5; ++j) denom += std::exp(logits.at(i, j));
            expect += std::log(denom) - logits.at(i, labels[static_cast<std::size_t>(i)]);
        }
        expect /= 3.0;
        Tape t;
        const int loss = t.softmax_cross_entropy(t.leaf(logits), labels);
        CHECK(t.value(loss)[0] == doctest::Approx(expect).epsilon(1e-12));
    }
    SUBCASE("label out of range throws") {
        Tape t;
        const int x = t.leaf(Tensor::zeros({1, 3}));
        CHECK_THROWS_AS(t.softmax_cross_entropy(x, {3}), contract_error);
    }
}

TEST_CASE("adam: zero gradient is a fixed point") {
    std::vector<Tensor> params = {Tensor({2}, {1.5, -2.5})};
    std::vector<Tensor> grads = {Tensor::zeros({2})};
    AdamState s = AdamState::init(params);
    adam_step(params, grads, s);
    CHECK(params[0][0] == 1.5);
    CHECK(params[0][1] == -2.5);
    CHECK(s.t == 1);
}

TEST_CASE("adam: closed-form first step on a scalar") {
    std::vector<Tensor> params = {Tensor({1}, {0.0})};
    std::vector<Tensor> grads = {Tensor({1}, {1.0})};
    AdamState s = AdamState::init(params, 1e-3);
    adam_step(params, grads, s);
    // mhat = 1, vhat = 1 -> delta = -lr / (1 + eps)
    CHECK(params[0][0] == doctest::Approx(-9.99999995e-4).epsilon(1e-8));
}

TEST_CASE("adam: first moment decays by beta1 under zero gradients") {
    std::vector<Tensor> params = {Tensor({1}, {0.0})};
    AdamState s = AdamState::init(params, 1e-3);
    std::vector<Tensor> g1 = {Tensor({1}, {2.0})};
    std::vector<Tensor> g0 = {Tensor::zeros({1})};
    adam_step(params, g1, s);
    const double m1 = s.m[0][0];
    adam_step(params, g0, s);
    CHECK(s.m[0][0] == doctest::Approx(0.9 * m1).epsilon(1e-12));
    adam_step(params, g0, s);
    CHECK(s.m[0][0] == doctest::Approx(0.81 * m1).epsilon(1e-12));
    CHECK(s.t == 3);
}

TEST_CASE("adam shape mismatch throws") {
    std::vector<Tensor> params = {Tensor::zeros({2})};
    std::vector<Tensor> grads = {Tensor::zeros({3})};
    AdamState s = AdamState::init(params);
    CHECK_THROWS_AS(adam_step(params, grads, s), contract_error);
}

TEST_CASE("per-op finite-difference sweep") {
    Rng rng(21);
    int cases = 0;
    while (cases < 100) {
        const int pick = cases % 5;
        if (pick == 0) {  // gemm
            Tensor a = random_tensor({rng.uniform_int(1, 4), rng.uniform_int(1, 4)}, rng);
            Tensor b = random_tensor({a.dim(1), rng.uniform_int(1, 4)}, rng);
            Tape t;
            const int ai = t.leaf(a), bi = t.leaf(b);
            const int loss = t.sq_diff_sum(t.gemm_op(ai, bi),
                                           Tensor::zeros({a.dim(0), b.dim(1)}), 0.5);
            t.backward(loss);
            auto f = [&](const Tensor& v) {
                Tape q;
                return q.value(q.sq_diff_sum(q.gemm_op(q.leaf(v), q.leaf(b)),
                                             Tensor::zeros({a.dim(0), b.dim(1)}), 0.5))[0];
            };
            CHECK(max_rel_grad_error(a, f, t.grad(ai)) < 1e-4);
        } else if (pick == 1) {  // relu
            Tensor x = random_tensor({3, 3}, rng);
            Tape t;
            const int xi = t.leaf(x);
            const int loss = t.sq_diff_sum(t.relu(xi), Tensor::full({3, 3}, 0.3), 1.0);
            t.backward(loss);
            auto f = [&](const Tensor& v) {
                Tape q;
                return q.value(q.sq_diff_sum(q.relu(q.leaf(v)), Tensor::full({3, 3}, 0.3), 1.0))[0];
            };
            CHECK(max_rel_grad_error(x, f, t.grad(xi)) < 1e-4);
        } else if (pick == 2) {  // maxpool
            Tensor x = random_tensor({1, 2, 4, 4}, rng);
            Tape t;
            const int xi = t.leaf(x);
            const int loss = t.sq_diff_sum(t.maxpool2(xi), Tensor::full({1, 2, 2, 2}, 0.1), 1.0);
            t.backward(loss);
            auto f = [&](const Tensor& v) {
                Tape q;
                return q.value(
                    q.sq_diff_sum(q.maxpool2(q.leaf(v)), Tensor::full({1, 2, 2, 2}, 0.1), 1.0))[0];
            };
            CHECK(max_rel_grad_error(x, f, t.grad(xi)) < 1e-4);
        } else if (pick == 3) {  // conv
            Tensor x = random_tensor({1, 2, 4, 4}, rng);
            Tensor w = random_tensor({2, 2, 3, 3}, rng);
            Tensor b = random_tensor({2}, rng);
            Tape t;
            const int xi = t.leaf(x), wi = t.leaf(w), bi = t.leaf(b);
            const int loss =
                t.sq_diff_sum(t.conv2d_op(xi, wi, bi, 1, 1), Tensor::zeros({1, 2, 4, 4}), 0.5);
            t.backward(loss);
            auto f = [&](const Tensor& v) {
                Tape q;
                return q.value(q.sq_diff_sum(q.conv2d_op(q.leaf(x), q.leaf(v), q.leaf(b), 1, 1),
                                             Tensor::zeros({1, 2, 4, 4}), 0.5))[0];
            };
            CHECK(max_rel_grad_error(w, f, t.grad(wi)) < 1e-4);
        } else {  // linear + softmax
            Tensor x = random_tensor({2, 3}, rng);
            Tensor w = random_tensor({4, 3}, rng);
            Tensor b = random_tensor({4}, rng);
            std::vector<int> labels = {rng.uniform_int(0, 3), rng.uniform_int(0, 3)};
            Tape t;
            const int wi = t.leaf(w);
            const int loss =
                t.softmax_cross_entropy(t.linear(t.leaf(x), wi, t.leaf(b)), labels);
            t.backward(loss);
            auto f = [&](const Tensor& v) {
                Tape q;
                return q.value(q.softmax_cross_entropy(
                    q.linear(q.leaf(x), q.leaf(v), q.leaf(b)), labels))[0];
            };
            CHECK(max_rel_grad_error(w, f, t.grad(wi)) < 1e-4);
        }
        ++cases;
    }
}
