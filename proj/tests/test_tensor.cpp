#include <cmath>

#include "doctest.h"
#include "prunekit/rng.hpp"
#include "prunekit/tensor.hpp"

using namespace prunekit;

namespace {

// independent naive triple-loop oracle
Tensor gemm_oracle(const Tensor& a, const Tensor& b) {
    const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
    Tensor c({m, n});
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
            double s = 0.0;
            for (int p = 0; p < k; ++p) s += a.at(i, p) * b.at(p, j);
            c.at(i, j) = s;
        }
    return c;
}

Tensor random_tensor(std::vector<int> shape, Rng& rng) {
    Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.normal();
    return t;
}

// direct 4-loop convolution oracle
Tensor conv_oracle(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad) {
    const int cout = w.dim(0), cin = w.dim(1), kh = w.dim(2), kw = w.dim(3);
    const int ho = conv_out_extent(x.dim(1), kh, stride, pad);
    const int wo = conv_out_extent(x.dim(2), kw, stride, pad);
    Tensor y({cout, ho, wo});
    for (int f = 0; f < cout; ++f)
        for (int oy = 0; oy < ho; ++oy)
            for (int ox = 0; ox < wo; ++ox) {
                double s = b[static_cast<std::size_t>(f)];
                for (int c = 0; c < cin; ++c)
                    for (int ki = 0; ki < kh; ++ki)
                        for (int kj = 0; kj < kw; ++kj) {
                            const int iy = oy * stride + ki - pad;
                            const int ix = ox * stride + kj - pad;
                            if (iy < 0 || iy >= x.dim(1) || ix < 0 || ix >= x.dim(2)) continue;
                            s += w[((static_cast<std::size_t>(f) * cin + c) * kh + ki) * kw + kj] *
                                 x[(static_cast<std::size_t>(c) * x.dim(1) + iy) * x.dim(2) + ix];
                        }
                y[(static_cast<std::size_t>(f) * ho + oy) * wo + ox] = s;
            }
    return y;
}

}  // namespace

TEST_CASE("gemm identity") {
    Tensor eye({2, 2}, {1, 0, 0, 1});
    Tensor b({2, 2}, {5, 6, 7, 8});
    Tensor c = gemm(eye, b);
    for (std::size_t i = 0; i < 4; ++i) CHECK(c[i] == b[i]);
}

TEST_CASE("gemm 2x2 oracle value") {
    Tensor a({2, 2}, {1, 2, 3, 4});
    Tensor b({2, 2}, {5, 6, 7, 8});
    Tensor c = gemm(a, b);
    CHECK(c.at(0, 0) == 19);
    CHECK(c.at(0, 1) == 22);
    CHECK(c.at(1, 0) == 43);
    CHECK(c.at(1, 1) == 50);
}

TEST_CASE("gemm zero annihilation") {
    Rng rng(7);
    Tensor z = Tensor::zeros({3, 4});
    Tensor b = random_tensor({4, 2}, rng);
    Tensor c = gemm(z, b);
    for (std::size_t i = 0; i < c.numel(); ++i) CHECK(c[i] == 0.0);
}

TEST_CASE("gemm matches naive oracle on random shapes") {
    Rng rng(11);
    for (int t = 0; t < 30; ++t) {
        const int m = rng.uniform_int(1, 8), k = rng.uniform_int(1, 8), n = rng.uniform_int(1, 8);
        Tensor a = random_tensor({m, k}, rng);
        Tensor b = random_tensor({k, n}, rng);
        Tensor c = gemm(a, b), o = gemm_oracle(a, b);
        for (std::size_t i = 0; i < c.numel(); ++i) CHECK(c[i] == doctest::Approx(o[i]).epsilon(1e-12));
    }
}

TEST_CASE("gemm bilinearity") {
    Rng rng(13);
    Tensor a = random_tensor({5, 4}, rng);
    Tensor b = random_tensor({4, 6}, rng);
    Tensor lhs = gemm(scale(a, 3.5), b);
    Tensor rhs = scale(gemm(a, b), 3.5);
    for (std::size_t i = 0; i < lhs.numel(); ++i)
        CHECK(std::abs(lhs[i] - rhs[i]) <= 1e-12 * std::max(1.0, std::abs(rhs[i])));
}

TEST_CASE("gemm dimension mismatch throws") {
    CHECK_THROWS_AS(gemm(Tensor::zeros({2, 3}), Tensor::zeros({4, 2})), shape_error);
}

TEST_CASE("im2col hand-enumerated 3x3 input") {
    Tensor x({1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
    Tensor cols = im2col(x, 2, 2, 1, 0);
    REQUIRE(cols.dim(0) == 4);
    REQUIRE(cols.dim(1) == 4);
    const double expected[4][4] = {
        {1, 2, 4, 5}, {2, 3, 5, 6}, {4, 5, 7, 8}, {5, 6, 8, 9}};  // columns, transposed below
    for (int j = 0; j < 4; ++j)
        for (int r = 0; r < 4; ++r) CHECK(cols.at(r, j) == expected[j][r]);
}

TEST_CASE("im2col degenerate full-size window flattens input") {
    Rng rng(3);
    Tensor x = random_tensor({2, 3, 4}, rng);
    Tensor cols = im2col(x, 3, 4, 1, 0);
    REQUIRE(cols.dim(0) == 24);
    REQUIRE(cols.dim(1) == 1);
    for (int r = 0; r < 24; ++r) CHECK(cols.at(r, 0) == x[static_cast<std::size_t>(r)]);
}

TEST_CASE("im2col of zeros is zero") {
    Tensor cols = im2col(Tensor::zeros({2, 5, 5}), 3, 3, 1, 1);
    for (std::size_t i = 0; i < cols.numel(); ++i) CHECK(cols[i] == 0.0);
}

TEST_CASE("im2col rejects non-integral output extent") {
    CHECK_THROWS_AS(im2col(Tensor::zeros({1, 5, 5}), 2, 2, 2, 0), shape_error);
}

TEST_CASE("conv2d 1x1 identity kernel") {
    Rng rng(5);
    Tensor x = random_tensor({1, 4, 4}, rng);
    Tensor w({1, 1, 1, 1}, {1.0});
    Tensor y = conv2d(x, w, Tensor::zeros({1}), 1, 0);
    for (std::size_t i = 0; i < x.numel(); ++i) CHECK(y[i] == x[i]);
}

TEST_CASE("conv2d GEMM path matches direct convolution") {
    Rng rng(17);
    Tensor x = random_tensor({2, 5, 5}, rng);
    Tensor w = random_tensor({3, 2, 2, 2}, rng);
    Tensor b = random_tensor({3}, rng);
    Tensor y = conv2d(x, w, b, 1, 0);
    Tensor o = conv_oracle(x, w, b, 1, 0);
    for (std::size_t i = 0; i < y.numel(); ++i)
        CHECK(std::abs(y[i] - o[i]) <= 1e-12 * std::max(1.0, std::abs(o[i])));
}

TEST_CASE("conv2d zeroed filter yields constant bias channel") {
    Rng rng(19);
    Tensor x = random_tensor({1, 4, 4}, rng);
    Tensor w = random_tensor({2, 1, 3, 3}, rng);
    for (int i = 0; i < 9; ++i) w[static_cast<std::size_t>(i)] = 0.0;  // filter 0
    Tensor b({2}, {1.25, -0.5});
    Tensor y = conv2d(x, w, b, 1, 1);
    for (int j = 0; j < 16; ++j) CHECK(y[static_cast<std::size_t>(j)] == 1.25);
}

TEST_CASE("conv2d channel mismatch throws") {
    CHECK_THROWS_AS(conv2d(Tensor::zeros({2, 4, 4}), Tensor::zeros({1, 3, 3, 3}),
                           Tensor::zeros({1}), 1, 1),
                    shape_error);
}

TEST_CASE("random conv configs: GEMM path vs direct, 100 cases") {
    Rng rng(23);
    for (int t = 0; t < 100; ++t) {
        const int cin = rng.uniform_int(1, 3), cout = rng.uniform_int(1, 4);
        const int k = rng.uniform_int(1, 3);
        const int pad = rng.uniform_int(0, 1);
        const int h = rng.uniform_int(k + 1, 7), w = rng.uniform_int(k + 1, 7);
        Tensor x = random_tensor({cin, h, w}, rng);
        Tensor wt = random_tensor({cout, cin, k, k}, rng);
        Tensor b = random_tensor({cout}, rng);
        Tensor y = conv2d(x, wt, b, 1, pad);
        Tensor o = conv_oracle(x, wt, b, 1, pad);
        for (std::size_t i = 0; i < y.numel(); ++i)
            CHECK(std::abs(y[i] - o[i]) <= 1e-12 * std::max(1.0, std::abs(o[i])));
    }
}

TEST_CASE("tensor invariants") {
    CHECK_THROWS_AS(Tensor({2, 3}, {1.0, 2.0}), shape_error);
    Tensor t({2, 2}, {1, 2, 3, 4});
    CHECK(t.all_finite());
    CHECK(t.frob_norm() == doctest::Approx(std::sqrt(30.0)));
    CHECK_THROWS_AS(t.reshaped({3, 3}), shape_error);
}
