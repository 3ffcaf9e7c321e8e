#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "fd_check.hpp"
#include "flextsf/led_attention.hpp"
#include "flextsf/rng.hpp"

using namespace flextsf;

namespace {

struct StackFixture {
    ParamStore params;
    std::unique_ptr<CausalAttentionStack> stack;

    explicit StackFixture(AttentionConfig cfg, std::uint64_t seed = 1) {
        RngState init(seed);
        stack = std::make_unique<CausalAttentionStack>(cfg, params, init);
    }
};

AttentionConfig small_cfg() {
    AttentionConfig cfg;
    cfg.heads = 2;
    cfg.head_dim = 4;
    cfg.layers = 2;
    return cfg;
}

Tensor random_rows(std::size_t n, std::size_t d, RngState& rng,
                   bool rg = false) {
    std::vector<double> v(n * d);
    for (double& x : v) x = rng.uniform(-1.0, 1.0);
    return Tensor::from_values({n, d}, std::move(v), rg);
}

}  // namespace

TEST_CASE("rotary: tau = 0 is the identity") {
    RotaryConfig cfg;
    std::vector<double> x = {0.3, -0.7, 1.1, 0.2};
    auto out = rotary_modulate(x, 0.0, 4, cfg);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(out[i] == x[i]);
}

TEST_CASE("rotary: quarter rotation on a 2-d head") {
    RotaryConfig cfg;  // theta_0 = base^0 = 1
    auto out = rotary_modulate({1.0, 0.0}, 1.5707963267948966, 2, cfg);
    CHECK(out[0] == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(out[1] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("rotary preserves vector norms within 1e-12") {
    RngState rng(5);
    RotaryConfig cfg;
    for (int trial = 0; trial < 50; ++trial) {
        std::size_t dh = 2 * (1 + rng.next_below(8));
        std::vector<double> x(dh);
        for (double& v : x) v = rng.uniform(-2.0, 2.0);
        double tau = rng.uniform(-50.0, 50.0);
        auto out = rotary_modulate(x, tau, dh, cfg);
        double n1 = 0, n2 = 0;
        for (std::size_t i = 0; i < dh; ++i) {
            n1 += x[i] * x[i];
            n2 += out[i] * out[i];
        }
        CHECK(std::fabs(std::sqrt(n1) - std::sqrt(n2)) <= 1e-12);
    }
}

TEST_CASE("theta spectrum follows base^(-2j/d)") {
    auto th = rotary_thetas(8, 10000.0);
    REQUIRE(th.size() == 4);
    CHECK(th[0] == 1.0);
    CHECK(th[1] == doctest::Approx(std::pow(10000.0, -0.25)));
    CHECK(th[3] == doctest::Approx(std::pow(10000.0, -0.75)));
}

TEST_CASE("single node: attention weight over one logit is 1, output finite") {
    StackFixture fx(small_cfg());
    RngState rng(7);
    Tensor a = random_rows(1, 8, rng);
    LogitSink sink;
    Tensor out = fx.stack->forward(a, {0.5}, &sink);
    CHECK(out.shape() == Shape{1, 8});
    for (double v : out.values()) CHECK(std::isfinite(v));
    REQUIRE(sink.size() == 4);  // 2 layers x 2 heads
    for (const auto& logits : sink) REQUIRE(logits.size() == 1);
}

TEST_CASE("global tau shift leaves every attention logit invariant") {
    StackFixture fx(small_cfg());
    RngState rng(11);
    Tensor a = random_rows(5, 8, rng);
    std::vector<double> taus = {0.0, 2.0, 5.5, 9.25, 14.0};

    LogitSink base_logits, shifted_logits;
    fx.stack->forward(a, taus, &base_logits);
    for (double c : {1.0, -3.5, 1000.0}) {
        std::vector<double> shifted(taus);
        for (double& t : shifted) t += c;
        shifted_logits.clear();
        fx.stack->forward(a, shifted, &shifted_logits);
        REQUIRE(base_logits.size() == shifted_logits.size());
        for (std::size_t m = 0; m < base_logits.size(); ++m)
            for (std::size_t i = 0; i < base_logits[m].size(); ++i) {
                // skip masked entries, they sit at the mask constant
                if (base_logits[m][i] < -1e29) continue;
                CHECK(std::fabs(base_logits[m][i] - shifted_logits[m][i]) <
                      1e-9);
            }
    }
}

TEST_CASE("causality: perturbing node j leaves outputs before j unchanged") {
    StackFixture fx(small_cfg());
    RngState rng(13);
    Tensor a = random_rows(6, 8, rng);
    std::vector<double> taus = {0, 1, 2, 3, 4, 5};
    Tensor base = fx.stack->forward(a, taus);

    for (std::size_t j : {2u, 4u}) {
        std::vector<double> pert(a.values());
        for (std::size_t c = 0; c < 8; ++c) pert[j * 8 + c] += 0.731 + double(c);
        Tensor out =
            fx.stack->forward(Tensor::from_values({6, 8}, pert), taus);
        for (std::size_t i = 0; i < j; ++i)
            for (std::size_t c = 0; c < 8; ++c)
                CHECK(std::fabs(out.values()[i * 8 + c] -
                                base.values()[i * 8 + c]) <= 1e-12);
        bool after_changed = false;
        for (std::size_t c = 0; c < 8; ++c)
            after_changed = after_changed ||
                            out.values()[j * 8 + c] != base.values()[j * 8 + c];
        CHECK(after_changed);
    }
}

TEST_CASE("zeroing all weights reduces the stack to the residual path") {
    StackFixture fx(small_cfg());
    for (auto& [name, t] : fx.params.items())
        std::fill(t.mutable_values().begin(), t.mutable_values().end(), 0.0);
    RngState rng(17);
    Tensor a = random_rows(4, 8, rng);
    Tensor out = fx.stack->forward(a, {0, 1, 2, 3});
    for (std::size_t i = 0; i < a.size(); ++i)
        CHECK(out.values()[i] == a.values()[i]);
}

TEST_CASE("assemble_sequence: K patches -> K+2 nodes, dummy tau set") {
    StackFixture fx(small_cfg());
    RngState rng(19);
    std::vector<Tensor> reps;
    for (int k = 0; k < 3; ++k) reps.push_back(random_rows(1, 8, rng));
    std::array<double, 6> feats = {0.1, 1.2, -0.3, 0.9, 2.0, 1.0};
    auto seq = fx.stack->assemble_sequence(feats, reps, {0.0, 4.0, 8.0}, 12.5);
    CHECK(seq.length() == 5);
    CHECK(seq.kinds.front() == NodeKind::leader);
    CHECK(seq.kinds.back() == NodeKind::dummy);
    CHECK(seq.taus.back() == 12.5);
    CHECK(seq.taus.front() == 0.0);
    CHECK(seq.embeddings.shape() == Shape{5, 8});
}

TEST_CASE("leader content responds to the static features") {
    StackFixture fx(small_cfg());
    std::array<double, 6> f1 = {0.1, 1.0, 0.0, 1.0, 0.5, 0.5};
    std::array<double, 6> f2 = f1;
    f2[1] = 3.0;  // sigma_g changes
    Tensor l1 = fx.stack->leader_node(f1);
    Tensor l2 = fx.stack->leader_node(f2);
    bool changed = false;
    for (std::size_t i = 0; i < l1.size(); ++i)
        changed = changed || l1.values()[i] != l2.values()[i];
    CHECK(changed);
}

TEST_CASE("perturbing the leader changes all later outputs") {
    StackFixture fx(small_cfg());
    RngState rng(23);
    std::vector<Tensor> reps;
    for (int k = 0; k < 3; ++k) reps.push_back(random_rows(1, 8, rng));
    std::vector<double> taus = {0.0, 3.0, 7.0};

    std::array<double, 6> f1 = {0.1, 1.0, 0.0, 1.0, 0.5, 0.5};
    std::array<double, 6> f2 = {2.1, -0.4, 0.7, 1.9, -0.5, 1.5};
    auto s1 = fx.stack->assemble_sequence(f1, reps, taus, 9.0);
    auto s2 = fx.stack->assemble_sequence(f2, reps, taus, 9.0);
    Tensor o1 = fx.stack->forward(s1.embeddings, s1.taus);
    Tensor o2 = fx.stack->forward(s2.embeddings, s2.taus);
    const std::size_t d = 8;
    for (std::size_t i = 1; i < s1.length(); ++i) {
        bool changed = false;
        for (std::size_t c = 0; c < d; ++c)
            changed = changed || o1.values()[i * d + c] != o2.values()[i * d + c];
        CHECK(changed);
    }
}

TEST_CASE("output shape is (K+2, d_model) regardless of K") {
    StackFixture fx(small_cfg());
    RngState rng(29);
    for (std::size_t k : {1u, 4u, 9u}) {
        std::vector<Tensor> reps;
        std::vector<double> taus;
        for (std::size_t i = 0; i < k; ++i) {
            reps.push_back(random_rows(1, 8, rng));
            taus.push_back(double(i));
        }
        std::array<double, 6> feats{};
        auto seq = fx.stack->assemble_sequence(feats, reps, taus, double(k));
        Tensor out = fx.stack->forward(seq.embeddings, seq.taus);
        CHECK(out.shape() == Shape{k + 2, 8});
    }
}

TEST_CASE("index-embedding variant replaces rotary and leader") {
    AttentionConfig cfg = small_cfg();
    cfg.use_rotary = false;
    cfg.use_leader = false;
    StackFixture fx(cfg);
    CHECK(fx.params.contains("attn.posembed"));
    CHECK_FALSE(fx.params.contains("attn.leader.w"));
    RngState rng(31);
    Tensor a = random_rows(3, 8, rng);
    Tensor out = fx.stack->forward(a, {0, 1, 2});
    CHECK(out.shape() == Shape{3, 8});
    CHECK_THROWS_AS(fx.stack->leader_node({0, 0, 0, 0, 0, 0}),
                    std::logic_error);
}

TEST_CASE("stack gradients match finite differences") {
    AttentionConfig cfg;
    cfg.heads = 2;
    cfg.head_dim = 2;
    cfg.layers = 1;
    StackFixture fx(cfg, 37);
    RngState rng(41);
    Tensor a = random_rows(3, 4, rng, true);
    a.set_name("input");
    std::vector<double> taus = {0.0, 1.5, 4.0};

    auto loss_fn = [&] { return mean(square(fx.stack->forward(a, taus))); };
    std::vector<Tensor> leaves = {a};
    for (auto& [name, t] : fx.params.items()) leaves.push_back(t);
    auto res = fdcheck::check_params(leaves, loss_fn);
    CHECK(res.max_rel_err < 1e-4);
}
