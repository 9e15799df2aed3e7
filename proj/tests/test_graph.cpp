#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "helpers.hpp"
#include "mse/graph.hpp"
#include "mse/radam.hpp"

using mse::Graph;
using mse::Shape;
using testutil::check_gradient;
using testutil::random_vec;

namespace {

template <typename T>
std::vector<T> values(const Graph<T>& g, int id) {
    auto v = g.value(id);
    return {v.begin(), v.end()};
}

}  // namespace

TEST_CASE("linear: identity, hand arithmetic, zero input") {
    Graph<float> g;
    {
        std::vector<float> x{1, 2}, w{1, 0, 0, 1}, b{0, 0};
        int y = g.linear(g.leaf({1, 2}, x.data(), false), g.leaf({2, 2}, w.data(), false),
                         g.leaf({2}, b.data(), false));
        CHECK(values(g, y) == std::vector<float>{1, 2});
    }
    {
        // out_j = sum_i x_i w_ij + b_j
        std::vector<float> x{1, 0}, w{2, 3, 5, 7}, b{1, 1};
        int y = g.linear(g.leaf({1, 2}, x.data(), false), g.leaf({2, 2}, w.data(), false),
                         g.leaf({2}, b.data(), false));
        CHECK(values(g, y) == std::vector<float>{3, 4});
    }
    {
        // all-zero input broadcasts the bias
        std::vector<float> x(6, 0.0f), w{2, 3, 5, 7, 11, 13}, b{-1, 4};
        int y = g.linear(g.leaf({2, 3}, x.data(), false), g.leaf({3, 2}, w.data(), false),
                         g.leaf({2}, b.data(), false));
        CHECK(values(g, y) == std::vector<float>{-1, 4, -1, 4});
    }
}

TEST_CASE("linear: shape mismatch rejected with dimension report") {
    Graph<float> g;
    std::vector<float> x{1, 2, 3}, w{1, 0, 0, 1};
    int xi = g.leaf({1, 3}, x.data(), false);
    int wi = g.leaf({2, 2}, w.data(), false);
    CHECK_THROWS_WITH_AS(g.linear(xi, wi, -1),
                         doctest::Contains("trailing extent 3"), mse::ShapeError);
}

TEST_CASE("gelu: exact-erf values and asymptotics") {
    Graph<float> g;
    std::vector<float> x{0.0f, 1.0f, 10.0f, -10.0f};
    int y = g.gelu(g.leaf({4}, x.data(), false));
    auto v = values(g, y);
    CHECK(v[0] == 0.0f);
    CHECK(v[1] == doctest::Approx(0.8413447460685429).epsilon(1e-6));
    CHECK(v[2] == doctest::Approx(10.0).epsilon(1e-6));
    CHECK(std::abs(v[3]) < 1e-6);
}

TEST_CASE("rmsnorm: unit rows, scale invariance, hand value") {
    Graph<float> g;
    {
        std::vector<float> x{1, 1, 1, 1}, gain{1, 1, 1, 1};
        int y = g.rmsnorm(g.leaf({1, 4}, x.data(), false), g.leaf({4}, gain.data(), false));
        for (float v : values(g, y)) CHECK(v == doctest::Approx(1.0f).epsilon(1e-5));
    }
    {
        std::vector<float> x{2, 2}, gain{1, 1};
        int y = g.rmsnorm(g.leaf({1, 2}, x.data(), false), g.leaf({2}, gain.data(), false));
        for (float v : values(g, y)) CHECK(v == doctest::Approx(1.0f).epsilon(1e-5));
    }
    {
        // RMS of [3,4] is sqrt(12.5)
        std::vector<float> x{3, 4}, gain{1, 1};
        int y = g.rmsnorm(g.leaf({1, 2}, x.data(), false), g.leaf({2}, gain.data(), false));
        auto v = values(g, y);
        CHECK(v[0] == doctest::Approx(0.848528137).epsilon(1e-4));
        CHECK(v[1] == doctest::Approx(1.131370850).epsilon(1e-4));
    }
}

TEST_CASE("rmsnorm: output RMS is 1 within 1e-4 for non-degenerate rows") {
    std::mt19937_64 rng(11);
    Graph<float> g;
    const int rows = 16, d = 24;
    auto x = testutil::random_vec_f(rows * d, rng, 0.25f, 2.0f);
    std::vector<float> gain(d, 1.0f);
    int y = g.rmsnorm(g.leaf({rows, d}, x.data(), false), g.leaf({d}, gain.data(), false));
    auto v = values(g, y);
    for (int r = 0; r < rows; ++r) {
        double ss = 0;
        for (int j = 0; j < d; ++j) ss += (double)v[r * d + j] * v[r * d + j];
        CHECK(std::sqrt(ss / d) == doctest::Approx(1.0).epsilon(1e-4));
    }
}

TEST_CASE("sigmoid: midpoint, inverse of 0.9, symmetry") {
    Graph<float> g;
    const float inv09 = std::log(9.0f);
    std::vector<float> x{0.0f, inv09, 1.7f, -1.7f};
    int y = g.sigmoid(g.leaf({4}, x.data(), false));
    auto v = values(g, y);
    CHECK(v[0] == 0.5f);
    CHECK(v[1] == doctest::Approx(0.9f).epsilon(1e-6));
    CHECK(v[2] + v[3] == doctest::Approx(1.0f).epsilon(1e-6));
}

TEST_CASE("gather_rows: identity, swap, inverse composition, range check") {
    Graph<float> g;
    std::vector<float> x{1, 2, 3, 4, 5, 6};
    int xi = g.leaf({3, 2}, x.data(), false);
    {
        std::vector<int> id{0, 1, 2};
        CHECK(values(g, g.gather_rows(xi, id)) == x);
    }
    {
        std::vector<int> swap{1, 0};
        std::vector<float> ab{10, 20};
        int y = g.gather_rows(g.leaf({2, 1}, ab.data(), false), swap);
        CHECK(values(g, y) == std::vector<float>{20, 10});
    }
    {
        // random bijection composed with its inverse restores the input
        std::mt19937_64 rng(3);
        const int n = 64;
        std::vector<int> table(n), inverse(n);
        std::iota(table.begin(), table.end(), 0);
        std::shuffle(table.begin(), table.end(), rng);
        for (int j = 0; j < n; ++j) inverse[table[j]] = j;
        auto data = testutil::random_vec_f(n * 3, rng);
        int src = g.leaf({n, 3}, data.data(), false);
        int once = g.gather_rows(src, table);
        int back = g.gather_rows(once, inverse);
        CHECK(values(g, back) == data);
    }
    {
        std::vector<int> bad{0, 3};
        CHECK_THROWS_AS((void)g.gather_rows(xi, bad), mse::ShapeError);
    }
}

TEST_CASE("gather_rows: bijection round trips up to length 4096") {
    std::mt19937_64 rng(17);
    for (int n : {1, 2, 3, 7, 16, 61, 256, 1024, 4096}) {
        Graph<float> g;
        std::vector<int> table(n), inverse(n);
        std::iota(table.begin(), table.end(), 0);
        std::shuffle(table.begin(), table.end(), rng);
        for (int j = 0; j < n; ++j) inverse[table[j]] = j;
        auto data = testutil::random_vec_f((size_t)n, rng);
        int src = g.leaf({n, 1}, data.data(), false);
        int back = g.gather_rows(g.gather_rows(src, table), inverse);
        CAPTURE(n);
        REQUIRE(values(g, back) == data);
    }
}

TEST_CASE("softmax_xent: uniform logits, confident logits, mask behaviour") {
    {
        Graph<float> g;
        const int n = 5, c = 7;
        std::vector<float> logits(n * c, 0.42f);
        std::vector<int> labels{0, 1, 2, 3, 4};
        std::vector<uint8_t> mask(n, 1);
        int loss = g.softmax_xent(g.leaf({n, c}, logits.data(), false), labels, mask);
        CHECK(g.value(loss)[0] == doctest::Approx(std::log(7.0)).epsilon(1e-6));
    }
    {
        // one-hot-correct logits with growing margin drive the loss to zero
        Graph<float> g;
        double prev = 1e9;
        for (float margin : {2.0f, 6.0f, 12.0f}) {
            std::vector<float> logits(3, 0.0f);
            logits[1] = margin;
            std::vector<int> labels{1};
            std::vector<uint8_t> mask{1};
            int loss = g.softmax_xent(g.leaf({1, 3}, logits.data(), false), labels, mask);
            double v = g.value(loss)[0];
            CHECK(v < prev);
            prev = v;
        }
        CHECK(prev < 1e-4);
    }
    {
        // flipping the label at a masked-out position does not change the loss
        std::mt19937_64 rng(5);
        auto logits = testutil::random_vec_f(4 * 3, rng);
        std::vector<uint8_t> mask{1, 0, 1, 1};
        std::vector<int> labels_a{0, 1, 2, 0}, labels_b{0, 2, 2, 0};
        Graph<float> g;
        int la = g.softmax_xent(g.leaf({4, 3}, logits.data(), false), labels_a, mask);
        int lb = g.softmax_xent(g.leaf({4, 3}, logits.data(), false), labels_b, mask);
        CHECK(g.value(la)[0] == g.value(lb)[0]);
    }
}

TEST_CASE("softmax_xent: invariant to constant shifts per position") {
    std::mt19937_64 rng(9);
    auto logits = testutil::random_vec_f(6 * 5, rng);
    std::vector<int> labels{0, 4, 2, 1, 3, 2};
    std::vector<uint8_t> mask(6, 1);
    Graph<float> g;
    int base = g.softmax_xent(g.leaf({6, 5}, logits.data(), false), labels, mask);
    auto shifted = logits;
    std::uniform_real_distribution<float> d(-3.0f, 3.0f);
    for (int r = 0; r < 6; ++r) {
        float c = d(rng);
        for (int j = 0; j < 5; ++j) shifted[r * 5 + j] += c;
    }
    int moved = g.softmax_xent(g.leaf({6, 5}, shifted.data(), false), labels, mask);
    CHECK(g.value(moved)[0] == doctest::Approx(g.value(base)[0]).epsilon(1e-5));
}

TEST_CASE("softmax_xent: all-zero mask and bad labels rejected") {
    Graph<float> g;
    std::vector<float> logits{0, 0, 0, 0};
    std::vector<int> labels{0, 1};
    std::vector<uint8_t> zero_mask{0, 0}, mask{1, 1};
    int li = g.leaf({2, 2}, logits.data(), false);
    CHECK_THROWS_AS((void)g.softmax_xent(li, labels, zero_mask), mse::ShapeError);
    std::vector<int> bad{0, 2};
    CHECK_THROWS_AS((void)g.softmax_xent(li, bad, mask), mse::ShapeError);
}

TEST_CASE("backward: sum and half-sum-of-squares gradients") {
    {
        Graph<float> g;
        std::vector<float> x{1, -2, 3, 0.5f};
        int xi = g.leaf({4}, x.data(), true);
        g.backward(g.reduce_sum(xi));
        auto dx = g.grad(xi);
        for (float v : dx) CHECK(v == 1.0f);
    }
    {
        Graph<float> g;
        std::vector<float> x{1, -2, 3, 0.5f};
        int xi = g.leaf({4}, x.data(), true);
        int loss = g.scale_const(g.reduce_sum(g.hadamard(xi, xi)), 0.5f);
        g.backward(loss);
        auto dx = g.grad(xi);
        for (int i = 0; i < 4; ++i) CHECK(dx[i] == doctest::Approx(x[i]).epsilon(1e-6));
    }
    {
        Graph<float> g;
        std::vector<float> x{1, 2};
        int xi = g.leaf({2}, x.data(), true);
        CHECK_THROWS_AS(g.backward(xi), mse::ShapeError);
    }
}

// ---- finite-difference verification of every operation (64-bit mode) -----------

namespace {

// Reduces a node to a scalar through a fixed random projection, so gradient
// structure is exercised beyond the all-ones direction.
int project(Graph<double>& g, int node, uint64_t seed) {
    std::mt19937_64 rng(seed);
    auto w = random_vec(mse::numel(g.shape(node)), rng, -1.0, 1.0);
    int wi = g.leaf(g.shape(node), w.data(), false);
    return g.reduce_sum(g.hadamard(node, wi));
}

}  // namespace

TEST_CASE("finite differences: linear wrt input, weight and bias") {
    std::mt19937_64 rng(21);
    const int rows = 3, din = 4, dout = 5;
    auto x0 = random_vec(rows * din, rng);
    auto w0 = random_vec(din * dout, rng);
    auto b0 = random_vec(dout, rng);

    auto run = [&](const std::vector<double>& x, const std::vector<double>& w,
                   const std::vector<double>& b, Graph<double>* keep = nullptr,
                   std::array<int, 3>* ids = nullptr) {
        Graph<double> local;
        Graph<double>& g = keep ? *keep : local;
        int xi = g.leaf({rows, din}, x.data(), true);
        int wi = g.leaf({din, dout}, w.data(), true);
        int bi = g.leaf({dout}, b.data(), true);
        int loss = project(g, g.linear(xi, wi, bi), 99);
        if (ids) *ids = {xi, wi, bi};
        if (keep) g.backward(loss);
        return g.value(loss)[0];
    };

    Graph<double> g;
    std::array<int, 3> ids{};
    run(x0, w0, b0, &g, &ids);
    check_gradient([&](const std::vector<double>& v) { return run(v, w0, b0); }, x0,
                   g.grad(ids[0]));
    check_gradient([&](const std::vector<double>& v) { return run(x0, v, b0); }, w0,
                   g.grad(ids[1]));
    check_gradient([&](const std::vector<double>& v) { return run(x0, w0, v); }, b0,
                   g.grad(ids[2]));
}

TEST_CASE("finite differences: elementwise ops") {
    std::mt19937_64 rng(22);
    auto x0 = random_vec(12, rng);

    struct OpCase {
        const char* name;
        std::function<int(Graph<double>&, int)> apply;
    };
    std::vector<OpCase> cases{
        {"gelu", [](Graph<double>& g, int x) { return g.gelu(x); }},
        {"sigmoid", [](Graph<double>& g, int x) { return g.sigmoid(x); }},
        {"scale_const", [](Graph<double>& g, int x) { return g.scale_const(x, 1.7); }},
        {"view", [](Graph<double>& g, int x) { return g.gelu(g.view(x, {3, 4})); }},
    };
    for (auto& c : cases) {
        CAPTURE(c.name);
        auto run = [&](const std::vector<double>& x, Graph<double>* keep = nullptr,
                       int* id = nullptr) {
            Graph<double> local;
            Graph<double>& g = keep ? *keep : local;
            int xi = g.leaf({12}, x.data(), true);
            int loss = project(g, c.apply(g, xi), 101);
            if (id) *id = xi;
            if (keep) g.backward(loss);
            return g.value(loss)[0];
        };
        Graph<double> g;
        int xi = -1;
        run(x0, &g, &xi);
        check_gradient([&](const std::vector<double>& v) { return run(v); }, x0,
                       g.grad(xi));
    }
}

TEST_CASE("finite differences: rmsnorm, row_scale, scalar_scale, add, hadamard") {
    std::mt19937_64 rng(23);
    const int rows = 4, d = 6;
    auto x0 = random_vec(rows * d, rng, 0.2, 1.5);
    auto y0 = random_vec(rows * d, rng);
    auto v0 = random_vec(d, rng, 0.5, 1.5);
    auto h0 = random_vec(1, rng, 0.3, 1.2);

    auto run = [&](const std::vector<double>& x, const std::vector<double>& y,
                   const std::vector<double>& v, const std::vector<double>& h,
                   Graph<double>* keep = nullptr, std::array<int, 4>* ids = nullptr) {
        Graph<double> local;
        Graph<double>& g = keep ? *keep : local;
        int xi = g.leaf({rows, d}, x.data(), true);
        int yi = g.leaf({rows, d}, y.data(), true);
        int vi = g.leaf({d}, v.data(), true);
        int hi = g.leaf({1}, h.data(), true);
        int t = g.rmsnorm(xi, vi);
        t = g.row_scale(t, vi);
        t = g.add(t, g.hadamard(xi, yi));
        t = g.scalar_scale(t, hi);
        int loss = project(g, t, 103);
        if (ids) *ids = {xi, yi, vi, hi};
        if (keep) g.backward(loss);
        return g.value(loss)[0];
    };

    Graph<double> g;
    std::array<int, 4> ids{};
    run(x0, y0, v0, h0, &g, &ids);
    check_gradient([&](const std::vector<double>& a) { return run(a, y0, v0, h0); }, x0,
                   g.grad(ids[0]));
    check_gradient([&](const std::vector<double>& a) { return run(x0, a, v0, h0); }, y0,
                   g.grad(ids[1]));
    check_gradient([&](const std::vector<double>& a) { return run(x0, y0, a, h0); }, v0,
                   g.grad(ids[2]));
    check_gradient([&](const std::vector<double>& a) { return run(x0, y0, v0, a); }, h0,
                   g.grad(ids[3]));
}

TEST_CASE("finite differences: gather_rows and softmax_xent") {
    std::mt19937_64 rng(24);
    const int n = 6, d = 3;
    auto x0 = random_vec(n * d, rng);
    std::vector<int> table{3, 1, 4, 1, 5, 0};  // duplicates exercise scatter-add
    std::vector<int> labels{0, 2, 1, 1, 0, 2};
    std::vector<uint8_t> mask{1, 1, 0, 1, 1, 1};

    auto run = [&](const std::vector<double>& x, Graph<double>* keep = nullptr,
                   int* id = nullptr) {
        Graph<double> local;
        Graph<double>& g = keep ? *keep : local;
        int xi = g.leaf({n, d}, x.data(), true);
        int gathered = g.gather_rows(xi, table);
        int loss = g.softmax_xent(gathered, labels, mask);
        if (id) *id = xi;
        if (keep) g.backward(loss);
        return g.value(loss)[0];
    };

    Graph<double> g;
    int xi = -1;
    run(x0, &g, &xi);
    check_gradient([&](const std::vector<double>& v) { return run(v); }, x0, g.grad(xi));
}

TEST_CASE("finite differences: fused switch unit wrt every input") {
    std::mt19937_64 rng(25);
    const int m = 2, rows = 3;
    const int d = 4 * m, dh = 8 * m;
    auto x0 = random_vec(rows * d, rng);
    auto z0 = random_vec(d * dh, rng, -0.5, 0.5);
    auto gain0 = random_vec(dh, rng, 0.5, 1.5);
    auto w0 = random_vec(dh * d, rng, -0.5, 0.5);
    auto b0 = random_vec(d, rng);
    auto s0 = random_vec(d, rng, 1.5, 2.5);
    auto h0 = random_vec(1, rng, 0.05, 0.3);

    using V = std::vector<double>;
    auto run = [&](const V& x, const V& z, const V& gain, const V& w, const V& b,
                   const V& s, const V& h, Graph<double>* keep = nullptr,
                   std::array<int, 7>* ids = nullptr) {
        Graph<double> local;
        Graph<double>& g = keep ? *keep : local;
        std::array<int, 7> a{
            g.leaf({rows, d}, x.data(), true), g.leaf({d, dh}, z.data(), true),
            g.leaf({dh}, gain.data(), true),   g.leaf({dh, d}, w.data(), true),
            g.leaf({d}, b.data(), true),       g.leaf({d}, s.data(), true),
            g.leaf({1}, h.data(), true)};
        int out = g.switch_unit(a[0], a[1], a[2], a[3], a[4], a[5], a[6]);
        int loss = project(g, out, 105);
        if (ids) *ids = a;
        if (keep) g.backward(loss);
        return g.value(loss)[0];
    };

    Graph<double> g;
    std::array<int, 7> ids{};
    run(x0, z0, gain0, w0, b0, s0, h0, &g, &ids);
    check_gradient([&](const V& v) { return run(v, z0, gain0, w0, b0, s0, h0); }, x0,
                   g.grad(ids[0]));
    check_gradient([&](const V& v) { return run(x0, v, gain0, w0, b0, s0, h0); }, z0,
                   g.grad(ids[1]), 24);
    check_gradient([&](const V& v) { return run(x0, z0, v, w0, b0, s0, h0); }, gain0,
                   g.grad(ids[2]));
    check_gradient([&](const V& v) { return run(x0, z0, gain0, v, b0, s0, h0); }, w0,
                   g.grad(ids[3]), 24);
    check_gradient([&](const V& v) { return run(x0, z0, gain0, w0, v, s0, h0); }, b0,
                   g.grad(ids[4]));
    check_gradient([&](const V& v) { return run(x0, z0, gain0, w0, b0, v, h0); }, s0,
                   g.grad(ids[5]));
    check_gradient([&](const V& v) { return run(x0, z0, gain0, w0, b0, s0, v); }, h0,
                   g.grad(ids[6]));
}

// ---- RAdam ---------------------------------------------------------------------

namespace {

// Direct transcription of the rectified Adam update, kept independent of the
// library implementation.
struct RAdamReference {
    double lr, b1, b2, eps;
    std::vector<double> m, v;
    int64_t t = 0;

    explicit RAdamReference(size_t n, double lr_) : lr(lr_), b1(0.9), b2(0.999), eps(1e-8) {
        m.assign(n, 0.0);
        v.assign(n, 0.0);
    }

    void step(std::vector<double>& w, const std::vector<double>& g) {
        ++t;
        const double rho_inf = 2.0 / (1.0 - b2) - 1.0;
        const double b1t = std::pow(b1, (double)t), b2t = std::pow(b2, (double)t);
        const double rho_t = rho_inf - 2.0 * t * b2t / (1.0 - b2t);
        for (size_t i = 0; i < w.size(); ++i) {
            m[i] = b1 * m[i] + (1 - b1) * g[i];
            v[i] = b2 * v[i] + (1 - b2) * g[i] * g[i];
            double m_hat = m[i] / (1 - b1t);
            if (rho_t > 4.0) {
                double r = std::sqrt((rho_t - 4) * (rho_t - 2) * rho_inf /
                                     ((rho_inf - 4) * (rho_inf - 2) * rho_t));
                w[i] -= lr * r * m_hat / (std::sqrt(v[i] / (1 - b2t)) + eps);
            } else {
                w[i] -= lr * m_hat;  // momentum-SGD form during warmup
            }
        }
    }
};

}  // namespace

TEST_CASE("radam: zero gradient leaves parameters, increments step") {
    mse::RAdam<double> opt(1e-3);
    opt.bind({4});
    std::vector<double> w{1, 2, 3, 4}, g(4, 0.0);
    auto w0 = w;
    std::vector<std::vector<double>*> ws{&w};
    std::vector<const std::vector<double>*> gs{&g};
    CHECK(opt.step(ws, gs));
    CHECK(w == w0);
    CHECK(opt.step_count() == 1);
}

TEST_CASE("radam: matches direct transcription through warmup and beyond") {
    std::mt19937_64 rng(31);
    const size_t n = 6;
    std::vector<double> w = random_vec(n, rng), w_ref = w;
    mse::RAdam<double> opt(1e-3);
    opt.bind({(int64_t)n});
    RAdamReference ref(n, 1e-3);
    std::vector<std::vector<double>*> ws{&w};
    for (int step = 0; step < 40; ++step) {
        auto g = random_vec(n, rng);
        std::vector<const std::vector<double>*> gs{&g};
        CHECK(opt.step(ws, gs));
        ref.step(w_ref, g);
        for (size_t i = 0; i < n; ++i)
            CHECK(w[i] == doctest::Approx(w_ref[i]).epsilon(1e-12));
    }
}

TEST_CASE("radam: warmup phase is exactly the momentum form") {
    // With beta2 = 0.999, rho_t stays <= 4 for the first four steps.
    mse::RAdam<double> opt(1e-2);
    opt.bind({1});
    std::vector<double> w{0.0};
    std::vector<double> g{2.0};
    std::vector<std::vector<double>*> ws{&w};
    std::vector<const std::vector<double>*> gs{&g};
    double expect = 0.0, m = 0.0;
    for (int t = 1; t <= 4; ++t) {
        opt.step(ws, gs);
        m = 0.9 * m + 0.1 * 2.0;
        expect -= 1e-2 * m / (1 - std::pow(0.9, t));
        CHECK(w[0] == doctest::Approx(expect).epsilon(1e-12));
    }
}

TEST_CASE("radam: constant gradient drives update magnitude to lr") {
    mse::RAdam<double> opt(1e-3);
    opt.bind({1});
    std::vector<double> w{5.0};
    std::vector<double> g{-0.7};
    std::vector<std::vector<double>*> ws{&w};
    std::vector<const std::vector<double>*> gs{&g};
    double prev = w[0];
    double delta = 0;
    for (int t = 0; t < 4000; ++t) {
        opt.step(ws, gs);
        delta = w[0] - prev;
        prev = w[0];
    }
    CHECK(delta == doctest::Approx(1e-3).epsilon(0.02));  // sign of g is negative
}

TEST_CASE("radam: non-finite gradient skips the step untouched") {
    mse::RAdam<double> opt(1e-3);
    opt.bind({2});
    std::vector<double> w{1.0, -1.0};
    std::vector<double> good{0.5, 0.5};
    std::vector<std::vector<double>*> ws{&w};
    std::vector<const std::vector<double>*> gs{&good};
    opt.step(ws, gs);
    auto w_after = w;
    auto m_after = opt.first_moment(0);
    std::vector<double> bad{0.5, std::numeric_limits<double>::quiet_NaN()};
    std::vector<const std::vector<double>*> gbad{&bad};
    CHECK_FALSE(opt.step(ws, gbad));
    CHECK(w == w_after);
    CHECK(opt.first_moment(0) == m_after);
    CHECK(opt.step_count() == 1);
}
