#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "ad/ops.hpp"
#include "ad/tape.hpp"
#include "util/rng.hpp"

using namespace optlab;
using namespace optlab::ad;

namespace {

Tensor random_tensor(Rng& rng, Shape shape, double lo = -2.0, double hi = 2.0) {
    std::vector<double> v(shape_numel(shape));
    for (double& x : v) x = rng.uniform(lo, hi);
    return Tensor::constant(std::move(shape), std::move(v));
}

// one-hidden-layer MLP with softmax cross-entropy, parameters packed into w
Tensor tiny_mlp_loss(const Tensor& w, const Tensor& x, const Tensor& y, std::size_t in_dim,
                     std::size_t hidden, std::size_t classes) {
    Tensor wm = reshape(w, {1, w.numel()});
    std::size_t off = 0;
    Tensor w1 = reshape(slice_cols(wm, off, in_dim * hidden), {in_dim, hidden});
    off += in_dim * hidden;
    Tensor b1 = reshape(slice_cols(wm, off, hidden), {hidden});
    off += hidden;
    Tensor w2 = reshape(slice_cols(wm, off, hidden * classes), {hidden, classes});
    off += hidden * classes;
    Tensor b2 = reshape(slice_cols(wm, off, classes), {classes});
    Tensor h = sigmoid(add_rowvec(matmul(x, w1), b1));
    Tensor logits = add_rowvec(matmul(h, w2), b2);
    return softmax_xent(logits, y);
}

}  // namespace

TEST_CASE("matmul identity through tensors") {
    Tensor a = Tensor::constant({2, 2}, {1, 2, 3, 4});
    Tensor eye = Tensor::constant({2, 2}, {1, 0, 0, 1});
    Tensor c = matmul(a, eye);
    CHECK(c.values() == a.values());
}

TEST_CASE("elu definition, alpha = 1") {
    Tensor x = Tensor::constant({2}, {-1.0, 3.0});
    Tensor y = elu(x);
    CHECK(y.data()[0] == doctest::Approx(std::exp(-1.0) - 1.0).epsilon(1e-12));
    CHECK(y.data()[1] == 3.0);
}

TEST_CASE("uniform softmax cross-entropy is ln 2") {
    Tensor logits = Tensor::constant({1, 2}, {0.0, 0.0});
    Tensor label = Tensor::constant({1, 2}, {1.0, 0.0});
    CHECK(softmax_xent(logits, label).item() == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("softmax cross-entropy is stable for extreme logits") {
    Tensor logits = Tensor::constant({1, 2}, {500.0, -500.0});
    Tensor label = Tensor::constant({1, 2}, {1.0, 0.0});
    const double loss = softmax_xent(logits, label).item();
    CHECK(std::isfinite(loss));
    CHECK(loss == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("d/dx x^2 at 3 is 6") {
    Tape tape;
    Tensor x = tape.leaf({1}, {3.0});
    Tensor loss = square(x);
    Tensor g = tape.backward(loss).grad_of(x);
    CHECK(g.item() == doctest::Approx(6.0).epsilon(1e-15));
}

TEST_CASE("gradient of sum(sigmoid(x)) at zero is 1/4 per coordinate") {
    Tape tape;
    Tensor x = tape.leaf({5}, std::vector<double>(5, 0.0));
    Tensor g = tape.backward(reduce_sum(sigmoid(x))).grad_of(x);
    for (double v : g.values()) CHECK(v == doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("stop_gradient freezes one factor of a product") {
    Tape tape;
    Tensor x = tape.leaf({1}, {3.0});
    Tensor frozen = stop_gradient(x);
    CHECK(frozen.values() == x.values());
    CHECK_FALSE(frozen.on_tape());
    Tensor loss = mul(x, frozen);
    CHECK(tape.backward(loss).grad_of(x).item() == doctest::Approx(3.0).epsilon(1e-15));
}

TEST_CASE("backward through a stop_gradient-only path yields zero gradients") {
    Tape tape;
    Tensor x = tape.leaf({1}, {2.0});
    Tensor loss = square(stop_gradient(x));  // constant w.r.t. the tape
    GradientMap g = tape.backward(loss);
    CHECK(g.grad_of(x).item() == 0.0);
}

TEST_CASE("grad_check on the squared norm is tiny") {
    Rng rng(3);
    Tensor x = random_tensor(rng, {7});
    const double err = grad_check([](const Tensor& t) { return reduce_sum(square(t)); }, x, 1e-5);
    CHECK(err < 1e-8);
}

TEST_CASE("grad_check on a constant function is about zero") {
    Tensor x = Tensor::constant({3}, {1.0, -1.0, 0.5});
    const double err =
        grad_check([](const Tensor& t) { return mul(reduce_sum(mul(t, 0.0)), 1.0); }, x, 1e-5);
    CHECK(err < 1e-12);
}

TEST_CASE("MLP cross-entropy gradient matches central differences") {
    Rng rng(17);
    const std::size_t in_dim = 6, hidden = 5, classes = 3, batch = 4;
    const std::size_t p = in_dim * hidden + hidden + hidden * classes + classes;
    Tensor w = random_tensor(rng, {p}, -0.5, 0.5);
    Tensor x = random_tensor(rng, {batch, in_dim}, 0.0, 1.0);
    std::vector<double> yv(batch * classes, 0.0);
    for (std::size_t i = 0; i < batch; ++i) yv[i * classes + i % classes] = 1.0;
    Tensor y = Tensor::constant({batch, classes}, yv);
    const double err = grad_check(
        [&](const Tensor& t) { return tiny_mlp_loss(t, x, y, in_dim, hidden, classes); }, w, 1e-5);
    CHECK(err < 1e-4);
}

TEST_CASE("chain rule over composed primitives, random inputs in [-2,2]") {
    Rng rng(23);
    for (int trial = 0; trial < 5; ++trial) {
        Tensor a = random_tensor(rng, {3, 4});
        Tensor m = random_tensor(rng, {4, 3});
        auto f = [&](const Tensor& t) {
            Tensor u = tanh(matmul(t, m));                      // 3x3
            Tensor v = elu(add(u, mul(t.on_tape() ? slice_cols(t, 0, 3) : slice_cols(t, 0, 3), 0.5)));
            Tensor s = normalize_l2(v);
            Tensor q = concat_cols(std::vector<Tensor>{s, square(v)});
            return reduce_mean(mul(q, q));
        };
        CHECK(grad_check(f, a, 1e-5) < 1e-4);
    }
}

TEST_CASE("exp log sqrt reciprocal division gradients") {
    Rng rng(29);
    Tensor x = random_tensor(rng, {6}, 0.3, 2.0);
    auto f = [](const Tensor& t) {
        Tensor e = exp(mul(t, 0.3));
        Tensor l = log(add(square(t), 1.0));
        Tensor s = sqrt(add(t, 2.0));
        Tensor r = reciprocal(add(t, 3.0));
        return reduce_sum(add(add(div(e, s), mul(l, r)), row_sum(tile_cols(t, 3))));
    };
    CHECK(grad_check(f, x, 1e-6) < 1e-7);
}

TEST_CASE("determinism: identical tape and inputs give bit-identical results") {
    auto run = [] {
        Rng rng(5);
        Tape tape;
        Tensor x = tape.leaf({64}, [&] {
            std::vector<double> v(64);
            for (double& e : v) e = rng.uniform(-1, 1);
            return v;
        }());
        Tensor loss = reduce_mean(square(sigmoid(x)));
        Tensor g = tape.backward(loss).grad_of(x);
        return std::make_pair(loss.item(), g.values());
    };
    auto [l1, g1] = run();
    auto [l2, g2] = run();
    CHECK(l1 == l2);
    CHECK(g1 == g2);
}

TEST_CASE("backward twice over the same tape is identical") {
    Rng rng(31);
    Tape tape;
    Tensor x = tape.leaf(random_tensor(rng, {10}));
    Tensor loss = reduce_sum(mul(exp(mul(x, 0.1)), tanh(x)));
    Tensor g1 = tape.backward(loss).grad_of(x);
    Tensor g2 = tape.backward(loss).grad_of(x);
    CHECK(g1.values() == g2.values());
}

TEST_CASE("shape and domain errors") {
    Tensor a = Tensor::constant({2, 3}, std::vector<double>(6, 1.0));
    Tensor b = Tensor::constant({3, 2}, std::vector<double>(6, 1.0));
    CHECK_THROWS_WITH_AS(add(a, b), doctest::Contains("add: shape mismatch [2,3] vs [3,2]"),
                         std::invalid_argument);
    CHECK_THROWS_AS(matmul(a, a), std::invalid_argument);
    CHECK_THROWS_AS(sqrt(Tensor::constant({1}, {-1.0})), std::domain_error);
    CHECK_THROWS_AS(log(Tensor::constant({1}, {-0.5})), std::domain_error);

    Tape tape;
    Tensor x = tape.leaf({2}, {1.0, 2.0});
    CHECK_THROWS_AS(tape.backward(x), std::invalid_argument);  // non-scalar loss
    Tape other;
    Tensor y = other.leaf({1}, {1.0});
    CHECK_THROWS_AS(tape.backward(y), std::invalid_argument);  // not on this tape
    CHECK_THROWS_AS(mul(x, y), std::invalid_argument);         // two tapes
}

TEST_CASE("taped gradients are differentiable (double backward)") {
    // f(x) = sum(sigmoid(x)); g = df/dx recorded on the tape; then
    // d(sum(g))/dx must match finite differences of sum(sigmoid'(x)).
    Rng rng(37);
    Tensor x0 = random_tensor(rng, {5}, -1.0, 1.0);
    auto f = [](const Tensor& x) {
        Tape& tape = *x.tape();
        Tensor inner = reduce_sum(sigmoid(x));
        const Tensor wrt[] = {x};
        std::vector<Tensor> gs = tape.grad_taped(inner, wrt);
        return reduce_sum(square(gs[0]));
    };
    // reference: d/dx sum over i of sigmoid'(x_i)^2
    Tape tape;
    Tensor x = tape.leaf(x0);
    Tensor val = f(x);
    Tensor analytic = tape.backward(val).grad_of(x);
    for (std::size_t i = 0; i < 5; ++i) {
        const double h = 1e-6;
        auto eval = [&](double delta) {
            std::vector<double> v = x0.values();
            v[i] += delta;
            Tape t2;
            Tensor xi = t2.leaf({5}, v);
            return f(xi).item();
        };
        const double numeric = (eval(h) - eval(-h)) / (2 * h);
        CHECK(analytic.data()[i] == doctest::Approx(numeric).epsilon(1e-5));
    }
}
