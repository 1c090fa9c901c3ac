#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "errors.hpp"
#include "gradcheck.hpp"
#include "oracle_ref.hpp"
#include "rng.hpp"
#include "tape.hpp"

using namespace smac;

namespace {

Tensor rand_tensor(std::vector<int> shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t(std::move(shape));
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

double max_abs_diff(const Tensor& a, const std::vector<double>& b) {
    REQUIRE(a.numel() == static_cast<int64_t>(b.size()));
    double m = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i)
        m = std::max(m, std::fabs(a[i] - b[static_cast<size_t>(i)]));
    return m;
}

} // namespace

TEST_CASE("tensor invariants") {
    Tensor t({2, 3});
    CHECK(t.numel() == 6);
    CHECK(t.all_finite());
    CHECK_THROWS_AS(Tensor({0, 3}), ShapeError);
    CHECK_THROWS_AS(Tensor({2, 2}, {1.0, 2.0}), ShapeError);
}

TEST_CASE("matmul examples") {
    Tape t;
    SUBCASE("identity") {
        Rng rng(7);
        Var i3 = t.leaf(Tensor({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1}));
        Tensor a = rand_tensor({3, 3}, rng);
        Var av = t.leaf(a);
        Var out = t.matmul(i3, av);
        for (int64_t i = 0; i < a.numel(); ++i) CHECK(t.val(out)[i] == doctest::Approx(a[i]));
    }
    SUBCASE("hand case") {
        Var a = t.leaf(Tensor({2, 2}, {1, 2, 3, 4}));
        Var b = t.leaf(Tensor({2, 2}, {0, 1, 1, 0}));
        const Tensor& c = t.val(t.matmul(a, b));
        CHECK(c.at2(0, 0) == 2);
        CHECK(c.at2(0, 1) == 1);
        CHECK(c.at2(1, 0) == 4);
        CHECK(c.at2(1, 1) == 3);
    }
    SUBCASE("zero case") {
        Rng rng(3);
        Var z = t.leaf(Tensor::zeros({2, 3}));
        Var b = t.leaf(rand_tensor({3, 4}, rng));
        const Tensor& c = t.val(t.matmul(z, b));
        for (int64_t i = 0; i < c.numel(); ++i) CHECK(c[i] == 0.0);
    }
    SUBCASE("shape mismatch names both shapes") {
        Var a = t.leaf(Tensor::zeros({2, 3}));
        Var b = t.leaf(Tensor::zeros({2, 3}));
        CHECK_THROWS_WITH_AS(t.matmul(a, b), doctest::Contains("[2x3]"), ShapeError);
    }
}

TEST_CASE("matmul matches triple-loop oracle on random shapes") {
    Rng rng(11);
    for (int trial = 0; trial < 60; ++trial) {
        const int m = 1 + rng.uniform_int(8), k = 1 + rng.uniform_int(8), n = 1 + rng.uniform_int(8);
        Tensor a = rand_tensor({m, k}, rng), b = rand_tensor({k, n}, rng);
        Tape t;
        const Tensor& c = t.val(t.matmul(t.leaf(a), t.leaf(b)));
        oracle::Vec ref = oracle::matmul({a.data(), a.data() + a.numel()}, m, k,
                                         {b.data(), b.data() + b.numel()}, n);
        CHECK(max_abs_diff(c, ref) < 1e-10);
    }
}

TEST_CASE("softmax_rows examples and properties") {
    Tape t;
    SUBCASE("constant row") {
        const Tensor& y = t.val(t.softmax_rows(t.leaf(Tensor({1, 3}, {5, 5, 5}))));
        for (int j = 0; j < 3; ++j) CHECK(y[j] == doctest::Approx(1.0 / 3).epsilon(1e-12));
    }
    SUBCASE("row [0, ln 2]") {
        const Tensor& y = t.val(t.softmax_rows(t.leaf(Tensor({1, 2}, {0.0, std::log(2.0)}))));
        CHECK(y[0] == doctest::Approx(1.0 / 3).epsilon(1e-12));
        CHECK(y[1] == doctest::Approx(2.0 / 3).epsilon(1e-12));
    }
    SUBCASE("single column") {
        const Tensor& y = t.val(t.softmax_rows(t.leaf(Tensor({3, 1}, {-4, 0, 9}))));
        for (int i = 0; i < 3; ++i) CHECK(y[i] == 1.0);
    }
    SUBCASE("rows sum to one and shift invariance") {
        Rng rng(5);
        Tensor x = rand_tensor({6, 7}, rng, -30, 30);
        Tensor shifted = x;
        for (int i = 0; i < 6; ++i)
            for (int j = 0; j < 7; ++j) shifted.at2(i, j) += 13.5; // constant per row
        Tape t2;
        const Tensor& y = t2.val(t2.softmax_rows(t2.leaf(x)));
        const Tensor& ys = t2.val(t2.softmax_rows(t2.leaf(shifted)));
        for (int i = 0; i < 6; ++i) {
            double s = 0.0;
            for (int j = 0; j < 7; ++j) {
                CHECK(y.at2(i, j) >= 0.0);
                s += y.at2(i, j);
                CHECK(std::fabs(y.at2(i, j) - ys.at2(i, j)) < 1e-12);
            }
            CHECK(std::fabs(s - 1.0) < 1e-12);
        }
    }
}

TEST_CASE("conv2d examples") {
    Tape t;
    SUBCASE("1x1 identity kernel") {
        Rng rng(2);
        Tensor x = rand_tensor({1, 4, 4}, rng);
        Var out = t.conv2d(t.leaf(x), t.leaf(Tensor({1, 1, 1, 1}, {1.0})), Var{}, 1, 1);
        CHECK(max_abs_diff(t.val(out), {x.data(), x.data() + x.numel()}) == 0.0);
    }
    SUBCASE("3x3 all-ones on all-ones 3x3 input") {
        Tensor x = Tensor::full({1, 3, 3}, 1.0);
        Tensor w = Tensor::full({1, 1, 3, 3}, 1.0);
        const Tensor& y = t.val(t.conv2d(t.leaf(x), t.leaf(w), Var{}, 1, 1));
        CHECK(y.at3(0, 1, 1) == 9);
        CHECK(y.at3(0, 0, 0) == 4);
        CHECK(y.at3(0, 2, 2) == 4);
        CHECK(y.at3(0, 0, 1) == 6);
        CHECK(y.at3(0, 1, 0) == 6);
    }
    SUBCASE("zero kernel") {
        Rng rng(9);
        const Tensor& y = t.val(t.conv2d(t.leaf(rand_tensor({2, 3, 3}, rng)),
                                         t.leaf(Tensor::zeros({4, 2, 3, 3})), Var{}, 1, 1));
        for (int64_t i = 0; i < y.numel(); ++i) CHECK(y[i] == 0.0);
    }
    SUBCASE("channel mismatch") {
        CHECK_THROWS_AS(t.conv2d(t.leaf(Tensor::zeros({2, 3, 3})),
                                 t.leaf(Tensor::zeros({1, 3, 3, 3})), Var{}, 1, 1),
                        ShapeError);
    }
}

TEST_CASE("conv2d matches nested-loop oracle on random instances") {
    Rng rng(21);
    for (int trial = 0; trial < 60; ++trial) {
        const int c_in = 1 + rng.uniform_int(4);
        const int c_out = 1 + rng.uniform_int(4);
        const int h = 2 + rng.uniform_int(7), w = 2 + rng.uniform_int(7);
        const int k = rng.bernoulli(0.5) ? 3 : 1;
        const int stride = rng.bernoulli(0.5) ? 2 : 1;
        const int dil = k == 3 && rng.bernoulli(0.3) ? 2 : 1;
        Tensor x = rand_tensor({c_in, h, w}, rng);
        Tensor wt = rand_tensor({c_out, c_in, k, k}, rng);
        Tensor b = rand_tensor({c_out}, rng);
        Tape t;
        const Tensor& y = t.val(t.conv2d(t.leaf(x), t.leaf(wt), t.leaf(b), stride, dil));
        oracle::Vec ref = oracle::conv2d({x.data(), x.data() + x.numel()}, c_in, h, w,
                                         {wt.data(), wt.data() + wt.numel()}, c_out, k,
                                         {b.data(), b.data() + b.numel()}, stride, dil);
        CHECK(max_abs_diff(y, ref) < 1e-10);
    }
}

TEST_CASE("pool examples") {
    Tape t;
    SUBCASE("maxpool single window") {
        const Tensor& y = t.val(t.maxpool(t.leaf(Tensor({1, 2, 2}, {1, 2, 3, 4})), 2, 2));
        CHECK(y.numel() == 1);
        CHECK(y[0] == 4);
    }
    SUBCASE("global average") {
        const Tensor& y = t.val(t.global_avgpool(t.leaf(Tensor({1, 2, 2}, {1, 2, 3, 4}))));
        CHECK(y[0] == doctest::Approx(2.5));
    }
    SUBCASE("avgpool on 4x4 ramp") {
        Tensor x({1, 4, 4});
        for (int i = 0; i < 16; ++i) x[i] = i;
        const Tensor& y = t.val(t.avgpool(t.leaf(x), 2, 2));
        CHECK(y.at3(0, 0, 0) == doctest::Approx(2.5));
        CHECK(y.at3(0, 0, 1) == doctest::Approx(4.5));
        CHECK(y.at3(0, 1, 0) == doctest::Approx(10.5));
        CHECK(y.at3(0, 1, 1) == doctest::Approx(12.5));
    }
    SUBCASE("kernel larger than input") {
        CHECK_THROWS_AS(t.maxpool(t.leaf(Tensor::zeros({1, 2, 2})), 3, 1), ShapeError);
    }
    SUBCASE("random instances match loop oracle") {
        Rng rng(31);
        for (int trial = 0; trial < 60; ++trial) {
            const int c = 1 + rng.uniform_int(3);
            const int k = 2 + rng.uniform_int(2);
            const int h = k + rng.uniform_int(6), w = k + rng.uniform_int(6);
            const int stride = 1 + rng.uniform_int(2);
            Tensor x = rand_tensor({c, h, w}, rng);
            Tape t2;
            const Tensor& mx = t2.val(t2.maxpool(t2.leaf(x), k, stride));
            const Tensor& av = t2.val(t2.avgpool(t2.leaf(x), k, stride));
            oracle::Vec mref = oracle::maxpool({x.data(), x.data() + x.numel()}, c, h, w, k, stride);
            oracle::Vec aref = oracle::avgpool({x.data(), x.data() + x.numel()}, c, h, w, k, stride);
            CHECK(max_abs_diff(mx, mref) < 1e-10);
            CHECK(max_abs_diff(av, aref) < 1e-10);
        }
    }
}

TEST_CASE("upsample_bilinear examples") {
    Tape t;
    SUBCASE("identity size") {
        Rng rng(4);
        Tensor x = rand_tensor({2, 3, 5}, rng);
        const Tensor& y = t.val(t.upsample_bilinear(t.leaf(x), 3, 5));
        CHECK(max_abs_diff(y, {x.data(), x.data() + x.numel()}) == 0.0);
    }
    SUBCASE("constant stays constant") {
        const Tensor& y = t.val(t.upsample_bilinear(t.leaf(Tensor::full({1, 2, 2}, 3.25)), 7, 5));
        for (int64_t i = 0; i < y.numel(); ++i) CHECK(y[i] == doctest::Approx(3.25).epsilon(1e-14));
    }
    SUBCASE("1x2 to 1x4 closed form") {
        const Tensor& y = t.val(t.upsample_bilinear(t.leaf(Tensor({1, 1, 2}, {0.0, 1.0})), 1, 4));
        CHECK(y[0] == doctest::Approx(0.0));
        CHECK(y[1] == doctest::Approx(0.25));
        CHECK(y[2] == doctest::Approx(0.75));
        CHECK(y[3] == doctest::Approx(1.0));
    }
}

TEST_CASE("batchnorm examples") {
    SUBCASE("constant channel goes to beta") {
        Tape t;
        Tensor rm = Tensor::zeros({1}), rv = Tensor::full({1}, 1.0);
        Parameter gamma("g", Tensor::full({1}, 1.0)), beta("b", Tensor::full({1}, 0.7));
        Var y = t.batchnorm(t.leaf(Tensor::full({1, 2, 2}, 5.0)), t.param(gamma), t.param(beta),
                            rm, rv, true);
        for (int64_t i = 0; i < 4; ++i) CHECK(t.val(y)[i] == doctest::Approx(0.7).epsilon(1e-10));
    }
    SUBCASE("identity stats in eval mode") {
        Tape t;
        Rng rng(8);
        Tensor x = rand_tensor({2, 3, 3}, rng);
        Tensor rm = Tensor::zeros({2}), rv = Tensor::full({2}, 1.0);
        Parameter gamma("g", Tensor::full({2}, 1.0)), beta("b", Tensor::zeros({2}));
        Var y = t.batchnorm(t.leaf(x), t.param(gamma), t.param(beta), rm, rv, false);
        for (int64_t i = 0; i < x.numel(); ++i)
            CHECK(t.val(y)[i] == doctest::Approx(x[i]).epsilon(1e-4)); // eps shrinks slightly
    }
    SUBCASE("values {1,3} normalize to -1,+1") {
        Tape t;
        Tensor rm = Tensor::zeros({1}), rv = Tensor::full({1}, 1.0);
        Parameter gamma("g", Tensor::full({1}, 1.0)), beta("b", Tensor::zeros({1}));
        Var y = t.batchnorm(t.leaf(Tensor({1, 1, 2}, {1.0, 3.0})), t.param(gamma), t.param(beta),
                            rm, rv, true);
        CHECK(t.val(y)[0] == doctest::Approx(-1.0).epsilon(1e-4));
        CHECK(t.val(y)[1] == doctest::Approx(1.0).epsilon(1e-4));
        // running stats moved toward the batch stats with momentum 0.1
        CHECK(rm[0] == doctest::Approx(0.2));
        CHECK(rv[0] == doctest::Approx(0.9 + 0.1 * 1.0));
    }
}

TEST_CASE("elementwise examples") {
    Tape t;
    CHECK(t.val(t.sigmoid(t.leaf(Tensor::scalar(0.0))))[0] == 0.5);
    CHECK(t.val(t.relu(t.leaf(Tensor::scalar(-2.0))))[0] == 0.0);
    CHECK(t.val(t.relu(t.leaf(Tensor::scalar(3.0))))[0] == 3.0);
    const Tensor& s = t.val(t.add(t.leaf(Tensor({2}, {1, 2})), t.leaf(Tensor({2}, {3, 4}))));
    CHECK(s[0] == 4);
    CHECK(s[1] == 6);
    CHECK_THROWS_AS(t.add(t.leaf(Tensor::zeros({2})), t.leaf(Tensor::zeros({3}))), ShapeError);
}

TEST_CASE("backward contracts") {
    SUBCASE("loss = sum(X) gives all-ones gradient") {
        Tape t;
        Rng rng(13);
        Parameter x("x", rand_tensor({3, 4}, rng));
        t.backward(t.sum(t.param(x)));
        for (int64_t i = 0; i < x.grad.numel(); ++i) CHECK(x.grad[i] == 1.0);
    }
    SUBCASE("loss = sum(A*B) gives dA = ones * B^T") {
        Tape t;
        Rng rng(14);
        Parameter a("a", rand_tensor({2, 2}, rng)), b("b", rand_tensor({2, 2}, rng));
        t.backward(t.sum(t.matmul(t.param(a), t.param(b))));
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j)
                CHECK(a.grad.at2(i, j) ==
                      doctest::Approx(b.value.at2(j, 0) + b.value.at2(j, 1)).epsilon(1e-12));
    }
    SUBCASE("two backward calls double the grads") {
        Tape t;
        Rng rng(15);
        Parameter x("x", rand_tensor({5}, rng));
        Var loss = t.sum(t.mul(t.param(x), t.param(x)));
        t.backward(loss);
        Tensor once = x.grad;
        t.backward(loss);
        for (int64_t i = 0; i < once.numel(); ++i) CHECK(x.grad[i] == doctest::Approx(2 * once[i]));
    }
    SUBCASE("backward on non-scalar") {
        Tape t;
        Var v = t.leaf(Tensor::zeros({2, 2}));
        CHECK_THROWS_AS(t.backward(v), NumericError);
    }
    SUBCASE("deterministic grads across identical runs") {
        auto run = [](std::vector<double>& out) {
            Tape t;
            Rng rng(99);
            Parameter x("x", rand_tensor({4, 4}, rng));
            Parameter w("w", rand_tensor({4, 4}, rng));
            Var y = t.softmax_rows(t.matmul(t.param(x), t.param(w)));
            t.backward(t.sum(t.mul(y, y)));
            out.assign(x.grad.data(), x.grad.data() + x.grad.numel());
        };
        std::vector<double> g1, g2;
        run(g1);
        run(g2);
        CHECK(g1 == g2); // bitwise
    }
}

TEST_CASE("gradcheck examples") {
    SUBCASE("linear op is exact") {
        Rng rng(16);
        Parameter x("x", rand_tensor({6}, rng));
        auto run = [&](bool with_grad) {
            Tape t;
            Var loss = t.sum(t.scale(t.param(x), 3.0));
            if (with_grad) t.backward(loss);
            return t.val(loss)[0];
        };
        GradCheckReport rep = gradcheck(run, {&x});
        CHECK(rep.pass);
        CHECK(rep.max_rel_err < 1e-8);
    }
    SUBCASE("softmax then sum of squares passes at 1e-4") {
        Rng rng(17);
        Parameter x("x", rand_tensor({3, 5}, rng));
        auto run = [&](bool with_grad) {
            Tape t;
            Var y = t.softmax_rows(t.param(x));
            Var loss = t.sum(t.mul(y, y));
            if (with_grad) t.backward(loss);
            return t.val(loss)[0];
        };
        CHECK(gradcheck(run, {&x}, 1e-6, 1e-4).pass);
    }
    SUBCASE("sign-flipped gradient fails") {
        Rng rng(18);
        Parameter x("x", rand_tensor({4}, rng));
        auto run = [&](bool with_grad) {
            Tape t;
            Var loss = t.sum(t.mul(t.param(x), t.param(x)));
            if (with_grad) {
                t.backward(loss);
                for (int64_t i = 0; i < x.grad.numel(); ++i) x.grad[i] = -x.grad[i];
            }
            return t.val(loss)[0];
        };
        CHECK_FALSE(gradcheck(run, {&x}).pass);
    }
}

TEST_CASE("every core op passes gradcheck on random inputs, 5 seeds") {
    for (uint64_t seed = 1; seed <= 5; ++seed) {
        Rng rng(seed);
        Parameter x("x", rand_tensor({2, 4, 4}, rng));
        Parameter w("w", rand_tensor({3, 2, 3, 3}, rng));
        Parameter b("b", rand_tensor({3}, rng));
        Parameter g("g", rand_tensor({3}, rng));
        Parameter be("be", rand_tensor({3}, rng));
        Tensor rm = Tensor::zeros({3}), rv = Tensor::full({3}, 1.0);
        auto run = [&](bool with_grad) {
            Tape t;
            Tensor m = rm, v = rv;
            Var conv = t.conv2d(t.param(x), t.param(w), t.param(b), 1, 1);
            Var bn = t.batchnorm(conv, t.param(g), t.param(be), m, v, true);
            Var act = t.relu(bn);
            Var pooled = t.maxpool(act, 2, 2);
            Var up = t.upsample_bilinear(pooled, 4, 4);
            Var mat = t.reshape(up, {3, 16});
            Var att = t.softmax_rows(t.matmul(mat, t.transpose2d(mat)));
            Var loss = t.sum(t.mul(att, att));
            if (with_grad) t.backward(loss);
            return t.val(loss)[0];
        };
        GradCheckReport rep = gradcheck(run, {&x, &w, &b, &g, &be}, 1e-6, 1e-4);
        CAPTURE(seed);
        CAPTURE(rep.max_rel_err);
        CAPTURE(rep.worst);
        CHECK(rep.pass);
    }
}
