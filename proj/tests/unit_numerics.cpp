#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "ttarl/errors.hpp"
#include "ttarl/graph.hpp"
#include "ttarl/rng.hpp"
#include "ttarl/tensor.hpp"

using namespace ttarl;

namespace {

Tensor random_tensor(std::vector<int> shape, Rng& rng, double sigma = 1.0) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (double& v : t.data) v = rng.normal(0.0, sigma);
    return t;
}

// Independent oracle: naive i-j-k triple loop.
Tensor matmul_oracle(const Tensor& a, const Tensor& b) {
    Tensor out = Tensor::zeros({a.rows(), b.cols()});
    for (int i = 0; i < a.rows(); ++i)
        for (int j = 0; j < b.cols(); ++j) {
            double s = 0.0;
            for (int k = 0; k < a.cols(); ++k) s += a.at(i, k) * b.at(k, j);
            out.at(i, j) = s;
        }
    return out;
}

// Extended-precision softmax reference.
std::vector<double> softmax_oracle(const std::vector<double>& x) {
    long double mx = x[0];
    for (double v : x) mx = std::max<long double>(mx, v);
    long double sum = 0.0L;
    std::vector<long double> e(x.size());
    for (size_t i = 0; i < x.size(); ++i) {
        e[i] = expl(static_cast<long double>(x[i]) - mx);
        sum += e[i];
    }
    std::vector<double> out(x.size());
    for (size_t i = 0; i < x.size(); ++i) out[i] = static_cast<double>(e[i] / sum);
    return out;
}

} // namespace

TEST_CASE("matmul identity and orthogonal cases") {
    Tensor m({2, 2}, {1, 2, 3, 4});
    Tensor r = kern::matmul(Tensor::identity(2), m);
    for (size_t i = 0; i < 4; ++i) CHECK(r.data[i] == m.data[i]);

    Tensor a({1, 2}, {1, 0});
    Tensor b({2, 1}, {0, 1});
    CHECK(kern::matmul(a, b).data[0] == 0.0);
}

TEST_CASE("matmul equals triple-loop oracle exactly") {
    Rng rng(101);
    const Tensor a = random_tensor({3, 4}, rng);
    const Tensor b = random_tensor({4, 2}, rng);
    const Tensor got = kern::matmul(a, b);
    const Tensor want = matmul_oracle(a, b);
    for (size_t i = 0; i < got.data.size(); ++i) CHECK(got.data[i] == want.data[i]);
}

TEST_CASE("matmul shape mismatch names both shapes") {
    Tensor a = Tensor::zeros({2, 3});
    Tensor b = Tensor::zeros({2, 2});
    try {
        kern::matmul(a, b);
        FAIL("expected DimError");
    } catch (const DimError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("[2x3]") != std::string::npos);
        CHECK(msg.find("[2x2]") != std::string::npos);
    }
}

TEST_CASE("softmax symmetry, stability, and big-float oracle") {
    Tensor s = kern::softmax_rows(Tensor::vec({0, 0}));
    CHECK(s.data[0] == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(s.data[1] == doctest::Approx(0.5).epsilon(1e-15));

    Tensor big = kern::softmax_rows(Tensor::vec({1000, 0}));
    CHECK(std::isfinite(big.data[0]));
    CHECK(big.data[0] == doctest::Approx(1.0));
    CHECK(big.data[1] == doctest::Approx(0.0));

    // Frozen values computed with the extended-precision oracle below.
    const std::vector<double> frozen = {0.09003057317038046, 0.24472847105479764,
                                        0.6652409557748218};
    const std::vector<double> oracle = softmax_oracle({1, 2, 3});
    Tensor got = kern::softmax_rows(Tensor::vec({1, 2, 3}));
    for (size_t i = 0; i < 3; ++i) {
        CHECK(std::abs(oracle[i] - frozen[i]) < 1e-12);
        CHECK(std::abs(got.data[i] - frozen[i]) < 1e-12);
    }

    CHECK_THROWS_AS(kern::softmax_rows(Tensor{}), DimError);
}

TEST_CASE("softmax outputs sum to one and stay positive") {
    Rng rng(77);
    for (int it = 0; it < 50; ++it) {
        const int n = 1 + rng.range(0, 12);
        Tensor x = random_tensor({n}, rng, 5.0);
        Tensor y = kern::softmax_rows(x);
        double sum = 0.0;
        for (double v : y.data) {
            CHECK(v > 0.0);
            sum += v;
        }
        CHECK(std::abs(sum - 1.0) <= 1e-12);
    }
}

TEST_CASE("layer_norm normalization, zero-gamma, and formula oracle") {
    Tensor x = Tensor::vec({1, 2, 3});
    Tensor ones = Tensor::ones({3});
    Tensor zeros = Tensor::zeros({3});

    Tensor y = kern::layer_norm(x, ones, zeros, 0.0);
    double mean = (y.data[0] + y.data[1] + y.data[2]) / 3.0;
    double var = 0.0;
    for (double v : y.data) var += (v - mean) * (v - mean);
    var /= 3.0;
    CHECK(std::abs(mean) <= 1e-10);
    CHECK(std::abs(var - 1.0) <= 1e-8);

    Tensor beta = Tensor::vec({0.5, -1.0, 2.0});
    Tensor z = kern::layer_norm(x, zeros, beta, 1e-5);
    for (size_t i = 0; i < 3; ++i) CHECK(z.data[i] == beta.data[i]);

    // Direct per-element formula evaluated independently.
    const double eps = 1e-5;
    const double m = 2.0, v2 = 2.0 / 3.0;
    Tensor w = kern::layer_norm(x, ones, zeros, eps);
    for (size_t i = 0; i < 3; ++i) {
        const double want = (x.data[i] - m) / std::sqrt(v2 + eps);
        CHECK(std::abs(w.data[i] - want) < 1e-12);
    }

    CHECK_THROWS_AS(kern::layer_norm(x, Tensor::ones({4}), zeros, 1e-5), DimError);
}

TEST_CASE("cross_attention single key, uniform average, two-step oracle") {
    Graph g;
    SUBCASE("single key returns the value row") {
        NodeId q = g.constant(Tensor({1, 3}, {0.3, -2.0, 5.0}));
        NodeId k = g.constant(Tensor({1, 3}, {1.0, 1.0, 1.0}));
        NodeId v = g.constant(Tensor({1, 3}, {7.0, 8.0, 9.0}));
        const Tensor& out = g.value(g.cross_attention(q, k, v));
        CHECK(out.data[0] == 7.0);
        CHECK(out.data[1] == 8.0);
        CHECK(out.data[2] == 9.0);
    }
    SUBCASE("keys orthogonal to the query give the uniform average") {
        NodeId q = g.constant(Tensor({1, 2}, {1.0, 0.0}));
        NodeId k = g.constant(Tensor({3, 2}, {0, 1, 0, 2, 0, -1}));
        NodeId v = g.constant(Tensor({3, 2}, {3, 0, 0, 3, 6, 3}));
        const Tensor& out = g.value(g.cross_attention(q, k, v));
        CHECK(out.data[0] == doctest::Approx(3.0).epsilon(1e-12));
        CHECK(out.data[1] == doctest::Approx(2.0).epsilon(1e-12));
    }
    SUBCASE("random query matches explicit softmax-then-weighted-sum") {
        Rng rng(5);
        Tensor tq = random_tensor({1, 8}, rng);
        Tensor tk = random_tensor({4, 8}, rng);
        Tensor tv = random_tensor({4, 8}, rng);
        const Tensor& out =
            g.value(g.cross_attention(g.constant(tq), g.constant(tk), g.constant(tv)));

        std::vector<double> scores(4);
        for (int i = 0; i < 4; ++i) {
            double s = 0.0;
            for (int j = 0; j < 8; ++j) s += tq.at(0, j) * tk.at(i, j);
            scores[i] = s / std::sqrt(8.0);
        }
        const std::vector<double> w = softmax_oracle(scores);
        for (int j = 0; j < 8; ++j) {
            double want = 0.0;
            for (int i = 0; i < 4; ++i) want += w[i] * tv.at(i, j);
            CHECK(std::abs(out.at(0, j) - want) < 1e-12);
        }
    }
    SUBCASE("dimension mismatch") {
        NodeId q = g.constant(Tensor::zeros({1, 3}));
        NodeId k = g.constant(Tensor::zeros({2, 4}));
        NodeId v = g.constant(Tensor::zeros({2, 4}));
        CHECK_THROWS_AS(g.cross_attention(q, k, v), DimError);
    }
}

TEST_CASE("backward linear case and constant case") {
    Graph g;
    Tensor x({4}, {1.5, -2.0, 0.25, 3.0});
    NodeId gamma = g.leaf(Tensor::ones({4}), true);
    NodeId other = g.leaf(Tensor::ones({4}), true);
    NodeId xs = g.constant(x);
    NodeId loss = g.sum(g.mul(gamma, xs));

    auto grads = g.backward(loss, {gamma, other});
    REQUIRE(grads.size() == 2);
    for (size_t i = 0; i < 4; ++i) CHECK(grads.at(gamma).data[i] == x.data[i]);
    // Loss is constant in `other`: exact zero gradient.
    for (double v : grads.at(other).data) CHECK(v == 0.0);
    // No adjoint storage was allocated for the untouched parameter.
    CHECK(g.backward_touched(gamma));
    CHECK_FALSE(g.backward_touched(other));
}

TEST_CASE("backward contract and lookup errors") {
    Graph g;
    NodeId p = g.leaf(Tensor::ones({2}), true);
    NodeId fixed = g.constant(Tensor::ones({2}));
    NodeId vecloss = g.mul(p, p);
    CHECK_THROWS_AS(g.backward(vecloss, {p}), ContractError);   // non-scalar loss
    CHECK_THROWS_AS(g.backward(g.sum(vecloss), {999}), LookupError);
    CHECK_THROWS_AS(g.backward(g.sum(vecloss), {fixed}), ContractError); // not trainable
}

TEST_CASE("backward excludes parameters outside the requested set") {
    Graph g;
    NodeId a = g.leaf(Tensor::ones({3}), true);
    NodeId b = g.leaf(Tensor::full({3}, 2.0), true);
    NodeId loss = g.sum(g.mul(a, b));
    auto grads = g.backward(loss, {a});
    CHECK(grads.size() == 1);
    CHECK(grads.count(a) == 1);
    CHECK_FALSE(g.backward_touched(b));
}

TEST_CASE("finite_diff_grad quadratic, constant, and layer_norm self-consistency") {
    // f(p) = p^2 at p = 3.
    auto square = [](const Tensor& p) { return p.data[0] * p.data[0]; };
    Tensor p3({1}, {3.0});
    Tensor fd = finite_diff_grad(square, p3, 1e-5);
    CHECK(std::abs(fd.data[0] - 6.0) < 1e-8);

    auto constant = [](const Tensor&) { return 4.25; };
    Tensor zeros = finite_diff_grad(constant, Tensor::ones({5}), 1e-5);
    for (double v : zeros.data) CHECK(v == 0.0);

    // sum(layer_norm(x, gamma, 0)) gradient w.r.t. gamma, both routes.
    Rng rng(9);
    Tensor x = random_tensor({6}, rng);
    Tensor gamma0 = random_tensor({6}, rng);
    auto f = [&](const Tensor& gm) {
        Tensor out = kern::layer_norm(x, gm, Tensor::zeros({6}), 1e-5);
        double s = 0.0;
        for (double v : out.data) s += v;
        return s;
    };
    Graph g;
    NodeId gamma = g.leaf(gamma0, true);
    NodeId loss =
        g.sum(g.layer_norm(g.constant(x), gamma, g.constant(Tensor::zeros({6})), 1e-5));
    auto grads = g.backward(loss, {gamma});
    CHECK(max_rel_error(grads.at(gamma), finite_diff_grad(f, gamma0, 1e-5)) < 1e-6);

    CHECK_THROWS_AS(finite_diff_grad(square, p3, 0.0), ContractError);
}

TEST_CASE("every differentiable op agrees with finite differences at random points") {
    Rng rng(2024);
    for (int trial = 0; trial < 10; ++trial) {
        // A composite touching matmul, layer_norm, softmax/log_softmax,
        // attention, tanh/sigmoid/softplus, normalization, pick, and the
        // scalar tail ops.
        Tensor p0 = random_tensor({3, 4}, rng, 0.7);
        Tensor w0 = random_tensor({4, 4}, rng, 0.7);
        Tensor g0 = random_tensor({4}, rng, 0.5);
        auto build = [&](const Tensor& p, const Tensor& w, const Tensor& gm, Graph& g,
                         NodeId& pid, NodeId& wid, NodeId& gid) {
            pid = g.leaf(p, true);
            wid = g.leaf(w, true);
            gid = g.leaf(gm, true);
            NodeId h = g.matmul(pid, wid);
            h = g.layer_norm(h, gid, g.constant(Tensor::zeros({4})), 1e-5);
            NodeId attn = g.cross_attention(g.slice_rows(h, 0, 1), h, h);
            NodeId act = g.tanh(attn);
            NodeId sm = g.log_softmax_rows(g.concat_rows({act, g.slice_rows(h, 1, 2)}));
            NodeId picked = g.pick(sm, {1, 2});
            NodeId sig = g.sigmoid(g.sum(picked));
            NodeId sp = g.softplus(g.mean(h));
            NodeId norm = g.l2_normalize_rows(g.slice_rows(h, 2, 3));
            return g.add(g.add(sig, sp), g.sum(g.mul(norm, norm)));
        };
        Graph g;
        NodeId pid, wid, gid;
        NodeId loss = build(p0, w0, g0, g, pid, wid, gid);
        auto grads = g.backward(loss, {pid, wid, gid});

        auto eval_p = [&](const Tensor& p) {
            Graph gg;
            NodeId a, b, c;
            return gg.value(build(p, w0, g0, gg, a, b, c)).data[0];
        };
        auto eval_w = [&](const Tensor& w) {
            Graph gg;
            NodeId a, b, c;
            return gg.value(build(p0, w, g0, gg, a, b, c)).data[0];
        };
        auto eval_g = [&](const Tensor& gm) {
            Graph gg;
            NodeId a, b, c;
            return gg.value(build(p0, w0, gm, gg, a, b, c)).data[0];
        };
        CHECK(max_rel_error(grads.at(pid), finite_diff_grad(eval_p, p0, 1e-5)) <= 1e-4);
        CHECK(max_rel_error(grads.at(wid), finite_diff_grad(eval_w, w0, 1e-5)) <= 1e-4);
        CHECK(max_rel_error(grads.at(gid), finite_diff_grad(eval_g, g0, 1e-5)) <= 1e-4);
    }
}

TEST_CASE("tensor invariants") {
    CHECK_THROWS_AS(Tensor({2, 2}, {1.0, 2.0}), DimError);
    Tensor bad({2}, {1.0, 2.0});
    bad.data[1] = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(bad.ensure_finite("test"), ContractError);

    Graph g;
    Tensor nan_in({1}, {0.0});
    nan_in.data[0] = std::nan("");
    CHECK_THROWS_AS(g.constant(nan_in), ContractError);
}
