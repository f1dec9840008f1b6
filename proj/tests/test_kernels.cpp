#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dadet/errors.hpp"
#include "dadet/kernels.hpp"
#include "dadet/tensor.hpp"
#include "test_util.hpp"

using namespace dadet;
using dadet::testing::max_abs_diff;
using dadet::testing::random_tensor;

namespace {

struct ConvCase {
    Shape input;
    int out_channels;
    ConvGeometry g;
};

std::vector<ConvCase> conv_cases() {
    std::vector<ConvCase> cases;
    Rng rng = make_rng(11, 0);
    std::uniform_int_distribution<int> n(1, 3), c(1, 6), side(2, 9), geom(0, 2);
    for (int i = 0; i < 40; ++i) {
        const ConvGeometry g = std::array<ConvGeometry, 3>{ConvGeometry{3, 1, 1}, ConvGeometry{3, 2, 1},
                                                           ConvGeometry{1, 1, 0}}[geom(rng)];
        const int s = side(rng);
        cases.push_back({Shape{n(rng), c(rng), s, s}, c(rng), g});
    }
    return cases;
}

}  // namespace

TEST_CASE("fast convolution forward matches the direct loop") {
    Rng rng = make_rng(1, 0);
    for (const ConvCase& cc : conv_cases()) {
        const Tensor x = random_tensor(cc.input, rng);
        const Tensor w = random_tensor({cc.out_channels, cc.input.c, cc.g.kernel, cc.g.kernel}, rng);
        const Tensor b = random_tensor({1, cc.out_channels, 1, 1}, rng);
        const Tensor fast = kernels::conv2d_forward(x, w, b, cc.g);
        const Tensor ref = reference::conv2d_forward(x, w, b, cc.g);
        REQUIRE(fast.shape() == ref.shape());
        CHECK(max_abs_diff(fast, ref) < 1e-12);
    }
}

TEST_CASE("fast convolution backward matches the direct loop") {
    Rng rng = make_rng(2, 0);
    for (const ConvCase& cc : conv_cases()) {
        const Tensor x = random_tensor(cc.input, rng);
        const Tensor w = random_tensor({cc.out_channels, cc.input.c, cc.g.kernel, cc.g.kernel}, rng);
        const Shape os{cc.input.n, cc.out_channels, cc.g.out_extent(cc.input.h), cc.g.out_extent(cc.input.w)};
        const Tensor gy = random_tensor(os, rng);
        Tensor wg_fast(w.shape()), bg_fast(Shape{1, cc.out_channels, 1, 1});
        Tensor wg_ref(w.shape()), bg_ref(Shape{1, cc.out_channels, 1, 1});
        const Tensor gx_fast = kernels::conv2d_backward(x, w, gy, cc.g, wg_fast, bg_fast);
        const Tensor gx_ref = reference::conv2d_backward(x, w, gy, cc.g, wg_ref, bg_ref);
        CHECK(max_abs_diff(gx_fast, gx_ref) < 1e-12);
        CHECK(max_abs_diff(wg_fast, wg_ref) < 1e-11);
        CHECK(max_abs_diff(bg_fast, bg_ref) < 1e-11);
    }
}

TEST_CASE("reference convolution backward agrees with finite differences") {
    Rng rng = make_rng(3, 0);
    const ConvGeometry g{3, 2, 1};
    Tensor x = random_tensor({2, 2, 5, 5}, rng);
    Tensor w = random_tensor({3, 2, 3, 3}, rng);
    const Tensor b = random_tensor({1, 3, 1, 1}, rng);
    const Tensor y0 = reference::conv2d_forward(x, w, b, g);
    const Tensor gy = random_tensor(y0.shape(), rng);
    auto loss = [&] {
        const Tensor y = reference::conv2d_forward(x, w, b, g);
        double s = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * gy[i];
        return s;
    };
    Tensor wg(w.shape()), bg(b.shape());
    const Tensor gx = reference::conv2d_backward(x, w, gy, g, wg, bg);
    for (std::size_t i = 0; i < x.size(); i += 7) {
        CHECK(dadet::testing::rel_err(dadet::testing::central_difference(x[i], loss), gx[i]) < 1e-7);
    }
    for (std::size_t i = 0; i < w.size(); i += 5) {
        CHECK(dadet::testing::rel_err(dadet::testing::central_difference(w[i], loss), wg[i]) < 1e-7);
    }
}

TEST_CASE("backward skips images with an all-zero output gradient") {
    Rng rng = make_rng(4, 0);
    const ConvGeometry g{3, 1, 1};
    const Tensor x = random_tensor({3, 2, 4, 4}, rng);
    const Tensor w = random_tensor({2, 2, 3, 3}, rng);
    Tensor gy = random_tensor({3, 2, 4, 4}, rng);
    for (double& v : gy.image(1)) v = 0.0;

    Tensor wg_all(w.shape()), bg_all(Shape{1, 2, 1, 1});
    const Tensor gx = kernels::conv2d_backward(x, w, gy, g, wg_all, bg_all);
    for (double v : gx.image(1)) CHECK(v == 0.0);

    // Same accumulation as a batch that never contained image 1.
    Tensor x2(Shape{2, 2, 4, 4}), gy2(Shape{2, 2, 4, 4});
    x2.assign_batch(0, x.slice_batch(0, 1));
    x2.assign_batch(1, x.slice_batch(2, 3));
    gy2.assign_batch(0, gy.slice_batch(0, 1));
    gy2.assign_batch(1, gy.slice_batch(2, 3));
    Tensor wg_two(w.shape()), bg_two(Shape{1, 2, 1, 1});
    kernels::conv2d_backward(x2, w, gy2, g, wg_two, bg_two);
    CHECK(bitwise_equal(wg_all, wg_two));
    CHECK(bitwise_equal(bg_all, bg_two));
}

TEST_CASE("leaky relu and its gradient") {
    Tensor x(Shape{1, 1, 1, 4});
    x[0] = -2.0;
    x[1] = -0.0;
    x[2] = 0.5;
    x[3] = 3.0;
    kernels::leaky_relu_inplace(x);
    CHECK(x[0] == doctest::Approx(-0.2));
    CHECK(x[2] == 0.5);
    CHECK(x[3] == 3.0);
    Tensor g(Shape{1, 1, 1, 4}, 1.0);
    kernels::leaky_relu_backward_inplace(x, g);
    CHECK(g[0] == doctest::Approx(kLeakySlope));
    CHECK(g[2] == 1.0);
    CHECK(g[3] == 1.0);
}

TEST_CASE("nearest upsampling and its adjoint") {
    Rng rng = make_rng(5, 0);
    const Tensor x = random_tensor({2, 3, 3, 3}, rng);
    const Tensor y = kernels::upsample2x(x);
    REQUIRE(y.shape() == Shape{2, 3, 6, 6});
    CHECK(y.at(1, 2, 5, 4) == x.at(1, 2, 2, 2));
    const Tensor gy = random_tensor(y.shape(), rng);
    const Tensor gx = kernels::upsample2x_backward(gy);
    // <up(x), gy> == <x, up^T(gy)>
    double lhs = 0.0, rhs = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) lhs += y[i] * gy[i];
    for (std::size_t i = 0; i < x.size(); ++i) rhs += x[i] * gx[i];
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
}

TEST_CASE("channel concat and split are inverse") {
    Rng rng = make_rng(6, 0);
    const Tensor a = random_tensor({2, 3, 4, 4}, rng);
    const Tensor b = random_tensor({2, 5, 4, 4}, rng);
    const Tensor* parts[] = {&a, &b};
    const Tensor cat = concat_channels(parts);
    REQUIRE(cat.shape() == Shape{2, 8, 4, 4});
    const int counts[] = {3, 5};
    const auto split = split_channels(cat, counts);
    CHECK(bitwise_equal(split[0], a));
    CHECK(bitwise_equal(split[1], b));
}

TEST_CASE("tensor batch slicing round-trips") {
    Rng rng = make_rng(7, 0);
    const Tensor t = random_tensor({4, 2, 3, 3}, rng);
    Tensor u(t.shape());
    u.assign_batch(0, t.slice_batch(0, 2));
    u.assign_batch(2, t.slice_batch(2, 4));
    CHECK(bitwise_equal(t, u));
    CHECK_THROWS_AS(t.slice_batch(3, 5), DimensionError);
}
