#include <random>

#include "doctest.h"
#include "iterseg/kernels.hpp"
#include "iterseg/ops.hpp"
#include "iterseg/optim.hpp"
#include "support.hpp"

using namespace iterseg;
using testing::check_gradients;
using testing::random_tensor;
using namespace iterseg::kernels;

TEST_CASE("tensor rejects zero dims and size mismatch") {
    CHECK_THROWS_AS(Tensor<float>({1, 0, 2}), ShapeError);
    CHECK_THROWS_AS(Tensor<float>({2, 2}, std::vector<float>{1, 2, 3}), ShapeError);
    Tensor<float> t({1, 2, 2, 3}, 0.5f);
    CHECK(t.size() == 12);
    t.at(0, 1, 1, 2) = 7;
    CHECK(t[11] == 7);
}

TEST_CASE("sum of squares backward gives 2x") {
    Graph<double> g;
    const Var x = g.input(Tensor<double>({3}, std::vector<double>{1, -2, 3}), true);
    const Var loss = ops::sum(g, ops::square(g, x));
    CHECK(g.value(loss)[0] == doctest::Approx(14));
    g.backward(loss);
    CHECK(g.grad(x)[0] == 2);
    CHECK(g.grad(x)[1] == -4);
    CHECK(g.grad(x)[2] == 6);
}

TEST_CASE("backward twice without zero_grad is an error") {
    Graph<double> g;
    const Var x = g.input(Tensor<double>({2}, 1.0), true);
    const Var loss = ops::sum(g, x);
    g.backward(loss);
    CHECK_THROWS_AS(g.backward(loss), Error);
    g.zero_grad();
    g.backward(loss);
    CHECK(g.grad(x)[0] == 1);
}

TEST_CASE("unreached leaf gets a zero gradient, constants none") {
    Graph<double> g;
    const Var x = g.input(Tensor<double>({2}, 1.0), true);
    const Var unused = g.input(Tensor<double>({3}, 1.0), true);
    const Var constant = g.input(Tensor<double>({2}, 1.0), false);
    g.backward(ops::sum(g, ops::square(g, x)));
    REQUIRE(g.has_grad(unused));
    CHECK(g.grad(unused)[2] == 0);
    CHECK_FALSE(g.has_grad(constant));
    CHECK_THROWS(g.grad(constant));
}

TEST_CASE("conv2d same-padding matches hand computation") {
    // 3x3 all-ones kernel on a 3x3 ramp: centre sees all nine values.
    const Tensor<float> x({1, 1, 3, 3}, std::vector<float>{1, 2, 3, 4, 5, 6, 7, 8, 9});
    const Tensor<float> k({1, 1, 3, 3}, 1.0f);
    const Tensor<float> b({1}, 0.5f);
    const auto out = conv2d_same(x, k, b);
    CHECK(out.at(0, 0, 1, 1) == doctest::Approx(45.5));
    CHECK(out.at(0, 0, 0, 0) == doctest::Approx(1 + 2 + 4 + 5 + 0.5));
    CHECK(out.at(0, 0, 2, 2) == doctest::Approx(5 + 6 + 8 + 9 + 0.5));
}

TEST_CASE("conv2d special kernels") {
    std::mt19937_64 rng(9);
    const auto x = random_tensor<float>({1, 2, 5, 4}, rng);
    SUBCASE("identity kernel reproduces the input") {
        Tensor<float> k({2, 2, 3, 3});
        k.at(0, 0, 1, 1) = k.at(1, 1, 1, 1) = 1;
        CHECK(conv2d_same(x, k, Tensor<float>({2})) == x);
    }
    SUBCASE("all-ones kernel on a constant image gives 9c inside") {
        const Tensor<float> c({1, 1, 5, 5}, 0.25f);
        const auto out = conv2d_same(c, Tensor<float>({1, 1, 3, 3}, 1.0f), Tensor<float>({1}));
        for (std::size_t y = 1; y < 4; ++y)
            for (std::size_t xx = 1; xx < 4; ++xx) CHECK(out.at(0, 0, y, xx) == doctest::Approx(2.25));
    }
    SUBCASE("1x1 channel identity and channel sum") {
        Tensor<float> eye({2, 2, 1, 1});
        eye.at(0, 0, 0, 0) = eye.at(1, 1, 0, 0) = 1;
        CHECK(conv2d_same(x, eye, Tensor<float>({2})) == x);
        const auto s = conv2d_same(x, Tensor<float>({1, 2, 1, 1}, 1.0f), Tensor<float>({1}));
        for (std::size_t i = 0; i < 20; ++i) CHECK(s[i] == doctest::Approx(x[i] + x[20 + i]));
    }
}

TEST_CASE("maxpool examples") {
    CHECK(maxpool2x2(Tensor<float>({1, 1, 2, 2}, std::vector<float>{1, 2, 3, 4})).output[0] == 4);
    const auto c = maxpool2x2(Tensor<float>({1, 1, 4, 6}, 0.3f)).output;
    CHECK(c == Tensor<float>({1, 1, 2, 3}, 0.3f));
}

TEST_CASE("transposed conv scatters a single pixel") {
    // Input pixel (0, 0) lands at output (2*0 - 1 + ky, 2*0 - 1 + kx): taps with
    // ky, kx >= 1 survive the crop, giving a 2x2 block scaled by v.
    const Tensor<float> x({1, 1, 1, 1}, 3.0f);
    const auto out = conv_transpose2d(x, Tensor<float>({1, 1, 3, 3}, 1.0f), Tensor<float>({1}));
    CHECK(out == Tensor<float>({1, 1, 2, 2}, 3.0f));
    const auto zero = conv_transpose2d(Tensor<float>({1, 2, 3, 3}), Tensor<float>({2, 4, 3, 3}, 1.0f), Tensor<float>({4}));
    CHECK(zero == Tensor<float>({1, 4, 6, 6}));
}

TEST_CASE("elementwise examples") {
    const auto r = relu(Tensor<float>({2}, std::vector<float>{-3, 3}));
    CHECK(r[0] == 0);
    CHECK(r[1] == 3);
    Graph<double> g;
    const Var x = g.input(Tensor<double>({1}, 0.0), true);
    const Var s = ops::sigmoid(g, x);
    CHECK(g.value(s)[0] == 0.5);
    g.backward(ops::sum(g, s));
    CHECK(g.grad(x)[0] == 0.25);
    const double h = 1e-5;
    const double numeric = (1 / (1 + std::exp(-h)) - 1 / (1 + std::exp(h))) / (2 * h);
    CHECK(std::abs(g.grad(x)[0] - numeric) < 1e-6);
}

TEST_CASE("sum and concat gradients are all ones") {
    Graph<double> g;
    const Var a = g.input(Tensor<double>({1, 2, 2, 2}, 0.3), true);
    const Var b = g.input(Tensor<double>({1, 3, 2, 2}, -0.1), true);
    g.backward(ops::sum(g, ops::concat_channels(g, a, b)));
    CHECK(g.grad(a) == Tensor<double>({1, 2, 2, 2}, 1.0));
    CHECK(g.grad(b) == Tensor<double>({1, 3, 2, 2}, 1.0));
}

TEST_CASE("conv shape errors name the mismatch") {
    const Tensor<float> x({1, 2, 4, 4});
    const Tensor<float> k({3, 1, 3, 3});
    CHECK_THROWS_AS(conv2d_same(x, k, Tensor<float>({3})), ShapeError);
    CHECK_THROWS_AS(maxpool2x2(Tensor<float>({1, 1, 3, 4})), ShapeError);
}

TEST_CASE("maxpool picks the first maximum on ties") {
    const Tensor<float> x({1, 1, 2, 2}, 1.0f);
    const auto r = maxpool2x2(x);
    CHECK(r.output[0] == 1);
    CHECK(r.argmax[0] == 0);
    Tensor<float> gx({1, 1, 2, 2});
    maxpool2x2_backward(Tensor<float>({1, 1, 1, 1}, 3.0f), r.argmax, gx);
    CHECK(gx[0] == 3);
    CHECK(gx[1] == 0);
}

TEST_CASE("kernels agree with loop oracles on random shapes") {
    std::mt19937_64 rng(17);
    std::uniform_int_distribution<std::size_t> dim(1, 4), half(1, 5);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t n = dim(rng), ci = dim(rng), co = dim(rng), h = 2 * half(rng), w = 2 * half(rng);
        const auto x = random_tensor<float>({n, ci, h, w}, rng);
        const auto k = random_tensor<float>({co, ci, 3, 3}, rng);
        const auto b = random_tensor<float>({co}, rng);
        CHECK(testing::max_abs_diff(conv2d_same(x, k, b), testing::naive_conv2d_same(x, k, b)) < 1e-5);
        const auto kt = random_tensor<float>({ci, co, 3, 3}, rng);
        CHECK(testing::max_abs_diff(conv_transpose2d(x, kt, b), testing::naive_conv_transpose2d(x, kt, b)) < 1e-5);
        CHECK(testing::max_abs_diff(maxpool2x2(x).output, testing::naive_maxpool2x2(x)) == 0);
    }
}

TEST_CASE("transposed conv is the adjoint of the stride-2 conv") {
    std::mt19937_64 rng(5);
    const auto x = random_tensor<double>({2, 3, 4, 5}, rng);
    const auto y = random_tensor<double>({2, 4, 8, 10}, rng);
    const auto k = random_tensor<double>({3, 4, 3, 3}, rng);
    const Tensor<double> zero_bias({4});
    // <T x, y> = <x, T* y> with T* the stride-2 conv using the same kernel
    // read as C_out x C_in = 3 x 4.
    const double lhs = testing::dot(conv_transpose2d(x, k, zero_bias), y);
    const double rhs = testing::dot(x, conv2d_stride2(y, k));
    CHECK(std::abs(lhs - rhs) < 1e-9 * std::max(1.0, std::abs(lhs)));
}

TEST_CASE("concat and slice are inverse") {
    std::mt19937_64 rng(1);
    const auto a = random_tensor<float>({1, 2, 2, 2}, rng);
    const auto b = random_tensor<float>({1, 3, 2, 2}, rng);
    const auto c = concat_channels(a, b);
    CHECK(c.dim(1) == 5);
    CHECK(slice_channels(c, 0, 2) == a);
    CHECK(slice_channels(c, 2, 3) == b);
}

TEST_CASE("standardize gives zero mean and unit variance per sample") {
    Graph<double> g;
    const Var x = g.input(Tensor<double>({2, 1, 1, 4}, std::vector<double>{1, 2, 3, 4, 5, 5, 5, 5}));
    const auto& z = g.value(ops::standardize(g, x, 0.0));
    // Sample 0: mean 2.5, variance 1.25.
    CHECK(z[0] == doctest::Approx(-1.5 / std::sqrt(1.25)));
    CHECK(z[3] == doctest::Approx(1.5 / std::sqrt(1.25)));
    const auto& flat = g.value(ops::standardize(g, x, 1e-6));
    CHECK(flat[4] == 0.0);  // constant sample maps to zero
}

TEST_CASE("sigmoid stays finite for large inputs") {
    const Tensor<float> x({3}, std::vector<float>{-1000, 0, 1000});
    const auto s = sigmoid(x);
    CHECK(s[0] == 0);
    CHECK(s[1] == 0.5f);
    CHECK(s[2] == 1);
}

namespace {

// Values kept away from zero so that relu/maxpool kinks are not straddled by
// the finite-difference step.
Tensor<double> off_kink(Shape shape, std::mt19937_64& rng) {
    auto t = random_tensor<double>(std::move(shape), rng, 0.1, 1.0);
    std::bernoulli_distribution sign(0.5);
    for (auto& v : t.data()) v = sign(rng) ? v : -v;
    return t;
}

}  // namespace

TEST_CASE("op gradients match central differences") {
    std::mt19937_64 rng(3);
    auto sq = [](Graph<double>& g, Var v) { return ops::sum(g, ops::square(g, v)); };

    SUBCASE("conv2d") {
        auto r = check_gradients({off_kink({2, 2, 4, 5}, rng), off_kink({3, 2, 3, 3}, rng), off_kink({3}, rng)},
                                 [&](Graph<double>& g, std::span<const Var> v) {
                                     return sq(g, ops::conv2d(g, v[0], v[1], v[2]));
                                 });
        CHECK(r.worst_relative_error < 1e-4);
    }
    SUBCASE("conv2d_1x1") {
        auto r = check_gradients({off_kink({1, 3, 3, 4}, rng), off_kink({2, 3, 1, 1}, rng), off_kink({2}, rng)},
                                 [&](Graph<double>& g, std::span<const Var> v) {
                                     return sq(g, ops::conv2d_1x1(g, v[0], v[1], v[2]));
                                 });
        CHECK(r.worst_relative_error < 1e-4);
    }
    SUBCASE("conv_transpose2d") {
        auto r = check_gradients({off_kink({2, 3, 2, 3}, rng), off_kink({3, 2, 3, 3}, rng), off_kink({2}, rng)},
                                 [&](Graph<double>& g, std::span<const Var> v) {
                                     return sq(g, ops::conv_transpose2d(g, v[0], v[1], v[2]));
                                 });
        CHECK(r.worst_relative_error < 1e-4);
    }
    SUBCASE("maxpool2x2") {
        auto r = check_gradients({off_kink({1, 2, 4, 6}, rng)}, [&](Graph<double>& g, std::span<const Var> v) {
            return sq(g, ops::maxpool2x2(g, v[0]));
        });
        CHECK(r.worst_relative_error < 1e-4);
    }
    SUBCASE("concat, relu, sigmoid, scale") {
        auto r = check_gradients({off_kink({1, 2, 3, 3}, rng), off_kink({1, 1, 3, 3}, rng)},
                                 [&](Graph<double>& g, std::span<const Var> v) {
                                     Var c = ops::concat_channels(g, v[0], v[1]);
                                     Var a = ops::relu(g, c);
                                     Var s = ops::sigmoid(g, ops::scale(g, c, 1.7));
                                     return ops::sum(g, ops::concat_channels(g, ops::square(g, a), s));
                                 });
        CHECK(r.worst_relative_error < 1e-4);
    }
    SUBCASE("standardize") {
        auto r = check_gradients({random_tensor<double>({2, 2, 3, 3}, rng)}, [&](Graph<double>& g, std::span<const Var> v) {
            Var z = ops::standardize(g, v[0], 1e-6);
            return ops::sum(g, ops::square(g, ops::sigmoid(g, z)));
        });
        CHECK(r.worst_relative_error < 1e-4);
    }
    SUBCASE("soft dice and ratio loss") {
        const auto target = random_tensor<double>({1, 1, 4, 4}, rng, 0, 1);
        Tensor<double> mask = target;
        for (auto& v : mask.data()) v = v > 0.5 ? 1 : 0;
        auto r = check_gradients({random_tensor<double>({1, 1, 4, 4}, rng, 0.05, 0.95)},
                                 [&](Graph<double>& g, std::span<const Var> v) {
                                     return ops::ratio_loss(g, ops::soft_dice(g, v[0], mask), 0.37, 1e-6);
                                 });
        CHECK(r.worst_relative_error < 1e-4);
    }
}

TEST_CASE("sgd step matches hand computation") {
    SUBCASE("single step without momentum") {
        std::vector<Parameter<double>> p{{"p", Tensor<double>({1}, 1.0), {}}};
        const std::vector<Tensor<double>> g{Tensor<double>({1}, 2.0)};
        sgd_step<double>(p, g, {0.1, 0.0});
        CHECK(p[0].value[0] == doctest::Approx(0.8));
    }
    SUBCASE("two steps with momentum 0.9") {
        // v1 = 2, p1 = 1 - 0.1 * 2 = 0.8; v2 = 0.9 * 2 + 1 = 2.8, p2 = 0.8 - 0.28 = 0.52.
        std::vector<Parameter<double>> p{{"p", Tensor<double>({1}, 1.0), {}}};
        sgd_step<double>(p, std::vector<Tensor<double>>{Tensor<double>({1}, 2.0)}, {0.1, 0.9});
        sgd_step<double>(p, std::vector<Tensor<double>>{Tensor<double>({1}, 1.0)}, {0.1, 0.9});
        CHECK(p[0].value[0] == doctest::Approx(0.52));
    }
    SUBCASE("zero gradient and zero velocity leave parameters untouched") {
        std::vector<Parameter<double>> p{{"p", Tensor<double>({2}, 1.5), Tensor<double>({2})}};
        sgd_step<double>(p, std::vector<Tensor<double>>{Tensor<double>({2})}, {0.1, 0.9});
        CHECK(p[0].value == Tensor<double>({2}, 1.5));
    }
    SUBCASE("zero learning rate leaves parameters untouched") {
        std::vector<Parameter<double>> p{{"p", Tensor<double>({1}, 1.0), {}}};
        sgd_step<double>(p, std::vector<Tensor<double>>{Tensor<double>({1}, 5.0)}, {0.0, 0.9});
        CHECK(p[0].value[0] == 1.0);
    }
    CHECK_THROWS_AS(SgdConfig({0.1, 1.0}).validate(), ConfigError);
    CHECK_THROWS_AS(SgdConfig({-0.1, 0.5}).validate(), ConfigError);
}
