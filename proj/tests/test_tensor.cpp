#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "fd_check.hpp"
#include "flextsf/diag.hpp"
#include "flextsf/optim.hpp"
#include "flextsf/rng.hpp"
#include "flextsf/tensor.hpp"

using namespace flextsf;

namespace {

Tensor random_tensor(Shape shape, RngState& rng, bool rg = true) {
    std::vector<double> v(shape_numel(shape));
    for (double& x : v) x = rng.uniform(-1.0, 1.0);
    return Tensor::from_values(shape, std::move(v), rg);
}

}  // namespace

TEST_CASE("matmul identity and hand product") {
    Tensor eye = Tensor::from_values({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
    Tensor m = Tensor::from_values({3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
    Tensor r = matmul(eye, m);
    for (std::size_t i = 0; i < 9; ++i) CHECK(r.values()[i] == m.values()[i]);

    // [[1,2],[3,4]] x [[1],[1]] = [[3],[7]], checked by hand
    Tensor a = Tensor::from_values({2, 2}, {1, 2, 3, 4});
    Tensor b = Tensor::from_values({2, 1}, {1, 1});
    Tensor c = matmul(a, b);
    CHECK(c.values()[0] == doctest::Approx(3.0));
    CHECK(c.values()[1] == doctest::Approx(7.0));
}

TEST_CASE("matmul shape mismatch raises") {
    Tensor a = Tensor::zeros({2, 3});
    Tensor b = Tensor::zeros({2, 3});
    CHECK_THROWS_AS(matmul(a, b), ShapeError);
}

TEST_CASE("grad of sum(A*B) wrt A matches row sums of B and finite differences") {
    RngState rng(11);
    Tensor a = random_tensor({3, 4}, rng);
    a.set_name("a");
    Tensor b = random_tensor({4, 2}, rng);
    b.set_name("b");

    auto loss_fn = [&] { return sum(matmul(a, b)); };
    Tensor loss = loss_fn();
    backward(loss);

    // dA[i,k] = sum_j B[k,j]
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t k = 0; k < 4; ++k) {
            double rowsum = b.values()[k * 2] + b.values()[k * 2 + 1];
            CHECK(a.grad()[i * 4 + k] == doctest::Approx(rowsum).epsilon(1e-12));
        }

    auto res = fdcheck::check_params({a, b}, loss_fn);
    CHECK(res.max_rel_err < 1e-6);
}

TEST_CASE("elementwise basics") {
    Tensor z = Tensor::scalar(0.0);
    CHECK(exp(z).item() == doctest::Approx(1.0));

    Tensor x = Tensor::from_values({1}, {0.0}, true);
    Tensor y = tanh(x);
    backward(y);
    CHECK(x.grad()[0] == doctest::Approx(1.0));  // 1 - tanh(0)^2

    // log(exp(x)) round-trips on a grid
    for (double v = -5.0; v <= 5.0; v += 0.5) {
        Tensor t = Tensor::scalar(v);
        CHECK(std::fabs(log(exp(t)).item() - v) < 1e-12);
    }
}

TEST_CASE("division and log poles propagate quietly and count") {
    diag::reset();
    Tensor a = Tensor::from_values({2}, {1.0, -1.0});
    Tensor b = Tensor::from_values({2}, {0.0, 0.0});
    Tensor q = div(a, b);
    CHECK(std::isinf(q.values()[0]));
    CHECK(std::isinf(q.values()[1]));
    Tensor lg = log(Tensor::from_values({1}, {0.0}));
    CHECK(std::isinf(lg.values()[0]));
    CHECK(diag::counters().elementwise_pole_hits == 3);
}

TEST_CASE("broadcasting add: (2,3) + (3,) and gradient reduction") {
    RngState rng(5);
    Tensor a = random_tensor({2, 3}, rng);
    a.set_name("a");
    Tensor b = random_tensor({3}, rng);
    b.set_name("b");
    Tensor c = a + b;
    REQUIRE(c.shape() == Shape{2, 3});
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t j = 0; j < 3; ++j)
            CHECK(c.values()[i * 3 + j] ==
                  doctest::Approx(a.values()[i * 3 + j] + b.values()[j]));

    auto res = fdcheck::check_params({a, b}, [&] { return sum(square(a + b)); });
    CHECK(res.max_rel_err < 1e-6);
}

TEST_CASE("softmax rows sum to one, handles large logits, gradient ok") {
    Tensor u = Tensor::from_values({3}, {0, 0, 0});
    Tensor s = softmax_lastdim(u);
    for (double v : s.values()) CHECK(v == doctest::Approx(1.0 / 3.0));

    Tensor big = Tensor::from_values({3}, {1000, 0, 0});
    Tensor sb = softmax_lastdim(big);
    CHECK(sb.values()[0] == doctest::Approx(1.0));
    CHECK(std::isfinite(sb.values()[0]));
    CHECK(sb.values()[1] == doctest::Approx(0.0));

    RngState rng(7);
    Tensor x = random_tensor({4, 5}, rng);
    x.set_name("x");
    Tensor w = random_tensor({4, 5}, rng, false);
    auto res = fdcheck::check_params(
        {x}, [&] { return sum(mul(w, softmax_lastdim(x))); });
    CHECK(res.max_rel_err < 1e-6);
}

TEST_CASE("gradient check across op zoo on randomized shapes") {
    RngState rng(23);
    for (int trial = 0; trial < 5; ++trial) {
        std::size_t n = 1 + rng.next_below(4);
        std::size_t d = 1 + rng.next_below(5);
        Tensor a = random_tensor({n, d}, rng);
        a.set_name("a");
        Tensor b = random_tensor({n, d}, rng);
        b.set_name("b");
        auto loss_fn = [&] {
            Tensor t = tanh(a) + softplus(b) * square(a);
            t = t - div(a, add_scalar(square(b), 1.5));
            t = t + sqrt(add_scalar(square(a + b), 1.0));
            t = t * exp(mul_scalar(b, 0.3));
            return mean(mul(t, t));
        };
        auto res = fdcheck::check_params({a, b}, loss_fn);
        CHECK(res.max_rel_err < 1e-4);
    }
}

TEST_CASE("structural ops: transpose, slices, concat round out gradients") {
    RngState rng(31);
    Tensor a = random_tensor({3, 4}, rng);
    a.set_name("a");
    Tensor b = random_tensor({2, 4}, rng);
    b.set_name("b");
    auto loss_fn = [&] {
        Tensor cat = concat_rows({a, b});              // (5,4)
        Tensor left = slice_cols(cat, 0, 2);           // (5,2)
        Tensor right = slice_cols(cat, 2, 2);          // (5,2)
        Tensor mixed = matmul(transpose(left), right); // (2,2)
        Tensor rows = slice_rows(mixed, 0, 1);
        return sum(square(rows)) + mean(concat_cols({left, right}));
    };
    auto res = fdcheck::check_params({a, b}, loss_fn);
    CHECK(res.max_rel_err < 1e-6);
}

TEST_CASE("backward requires scalar loss") {
    Tensor a = Tensor::zeros({2, 2}, true);
    CHECK_THROWS_AS(backward(add_scalar(a, 1.0)), ShapeError);
}

TEST_CASE("backward fills simple analytic gradients") {
    Tensor w = Tensor::from_values({3}, {1, 2, 3}, true);
    backward(sum(w));
    for (double g : w.grad()) CHECK(g == doctest::Approx(1.0));

    Tensor w2 = Tensor::from_values({2}, {1, 2}, true);
    backward(mul_scalar(sum(square(w2)), 0.5));
    CHECK(w2.grad()[0] == doctest::Approx(1.0));
    CHECK(w2.grad()[1] == doctest::Approx(2.0));
}

TEST_CASE("repeated backward without zero_grad accumulates on leaves") {
    Tensor w = Tensor::from_values({2}, {1.0, 2.0}, true);
    Tensor loss = sum(square(w));
    backward(loss);
    backward(loss);
    CHECK(w.grad()[0] == doctest::Approx(4.0));
    CHECK(w.grad()[1] == doctest::Approx(8.0));
}

TEST_CASE("zero_grad then backward reproduces a fresh graph's grads") {
    RngState rng(3);
    Tensor w = random_tensor({4}, rng);
    auto build = [&] { return mean(square(tanh(w))); };
    backward(build());
    std::vector<double> first = w.grad();
    backward(build());  // accumulated
    w.zero_grad();
    backward(build());
    for (std::size_t i = 0; i < first.size(); ++i)
        CHECK(w.grad()[i] == doctest::Approx(first[i]).epsilon(1e-15));
}

TEST_CASE("forward evaluation is deterministic") {
    RngState r1(99), r2(99);
    Tensor a1 = random_tensor({8, 8}, r1, false);
    Tensor a2 = random_tensor({8, 8}, r2, false);
    Tensor y1 = softmax_lastdim(matmul(a1, transpose(a1)));
    Tensor y2 = softmax_lastdim(matmul(a2, transpose(a2)));
    for (std::size_t i = 0; i < y1.size(); ++i)
        CHECK(y1.values()[i] == y2.values()[i]);
}

TEST_CASE("rng streams are reproducible and forkable") {
    RngState a(42), b(42);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
    RngState f1 = a.fork(7), f2 = b.fork(7);
    CHECK(f1.next_u64() == f2.next_u64());
    RngState g = a.fork(8);
    CHECK(f1.next_u64() != g.next_u64());
}

TEST_CASE("adam: zero gradient leaves parameters unchanged") {
    ParamStore ps;
    auto& w = ps.add("w", Tensor::from_values({2}, {0.5, -0.5}, true));
    ps.zero_grad();
    AdamOptimizer opt(AdamConfig{.lr = 0.1});
    opt.step(ps);
    CHECK(w.values()[0] == 0.5);
    CHECK(w.values()[1] == -0.5);
}

TEST_CASE("adam: one step on f(w)=w^2/2 moves toward zero") {
    ParamStore ps;
    auto& w = ps.add("w", Tensor::from_values({1}, {1.0}, true));
    ps.zero_grad();
    backward(mul_scalar(square(w), 0.5));
    AdamOptimizer opt(AdamConfig{.lr = 0.05});
    opt.step(ps);
    CHECK(w.values()[0] < 1.0);
    CHECK(w.values()[0] > 0.0);
}

TEST_CASE("adam: 200 steps on a 2-d quadratic reach the minimizer") {
    // f(w) = 0.5*(w0-1.5)^2 + 2*(w1+0.25)^2, minimizer (1.5, -0.25)
    ParamStore ps;
    auto& w = ps.add("w", Tensor::from_values({2}, {0.0, 0.0}, true));
    Tensor target = Tensor::from_values({2}, {1.5, -0.25});
    Tensor coeff = Tensor::from_values({2}, {0.5, 2.0});
    AdamOptimizer opt(AdamConfig{.lr = 0.05});
    for (int it = 0; it < 200; ++it) {
        ps.zero_grad();
        backward(sum(mul(coeff, square(w - target))));
        opt.step(ps);
    }
    CHECK(std::fabs(w.values()[0] - 1.5) < 1e-3);
    CHECK(std::fabs(w.values()[1] + 0.25) < 1e-3);
}

TEST_CASE("adam skips non-finite gradients and counts them") {
    diag::reset();
    ParamStore ps;
    auto& w = ps.add("w", Tensor::from_values({1}, {1.0}, true));
    w.mutable_grad()[0] = std::nan("");
    AdamOptimizer opt(AdamConfig{.lr = 0.1});
    opt.step(ps);
    CHECK(w.values()[0] == 1.0);
    CHECK(diag::counters().skipped_adam_updates == 1);
}
