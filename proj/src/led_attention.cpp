#include "flextsf/led_attention.hpp"

#include <cmath>
#include <limits>

#include "flextsf/series.hpp"

namespace flextsf {

std::vector<double> rotary_thetas(std::size_t head_dim, double base) {
    if (head_dim % 2 != 0)
        throw ShapeError("rotary: head_dim must be even, got " +
                         std::to_string(head_dim));
    std::vector<double> thetas(head_dim / 2);
    for (std::size_t j = 0; j < thetas.size(); ++j)
        thetas[j] = std::pow(base, -2.0 * double(j) / double(head_dim));
    return thetas;
}

std::vector<double> rotary_modulate(const std::vector<double>& x, double tau,
                                    std::size_t head_dim,
                                    const RotaryConfig& cfg) {
    if (x.size() != head_dim)
        throw ShapeError("rotary_modulate: vector length != head_dim");
    Tensor row = Tensor::from_values({1, head_dim}, x);
    Tensor out = rotary_rows(row, {tau * cfg.tau_scale},
                             rotary_thetas(head_dim, cfg.base));
    return out.values();
}

void AttentionSequence::validate() const {
    if (taus.size() != kinds.size() || embeddings.shape().at(0) != taus.size())
        throw ShapeError("AttentionSequence: inconsistent lengths");
    std::size_t dummies = 0;
    for (std::size_t i = 0; i < kinds.size(); ++i) {
        if (kinds[i] == NodeKind::leader && i != 0)
            throw DataError("AttentionSequence: leader must be node 0");
        if (kinds[i] == NodeKind::dummy) ++dummies;
    }
    if (dummies != 1)
        throw DataError("AttentionSequence: exactly one dummy node required");
    double prev = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < kinds.size(); ++i)
        if (kinds[i] == NodeKind::patch) {
            if (taus[i] < prev)
                throw DataError("AttentionSequence: patch taus must be "
                                "non-decreasing");
            prev = taus[i];
        }
}

// ---------------------------------------------------------------------------

namespace {

Tensor init_w(Shape shape, double scale, ParamStore& ps, const std::string& n,
              RngState& rng) {
    std::vector<double> v(shape_numel(shape));
    for (double& x : v) x = rng.uniform(-scale, scale);
    return ps.add(n, Tensor::from_values(shape, std::move(v), true));
}

Tensor init_lin(std::size_t in, std::size_t out, ParamStore& ps,
                const std::string& n, RngState& rng) {
    return init_w({in, out}, 1.0 / std::sqrt(double(in)), ps, n, rng);
}

constexpr double kMaskedLogit = -1e30;

}  // namespace

CausalAttentionStack::CausalAttentionStack(AttentionConfig cfg,
                                           ParamStore& params, RngState& init)
    : cfg_(cfg), params_(&params) {
    const std::size_t d = cfg_.d_model();
    if (cfg_.head_dim % 2 != 0)
        throw ShapeError("attention: head_dim must be even for rotary pairs");
    thetas_ = rotary_thetas(cfg_.head_dim, cfg_.rotary.base);

    for (std::size_t l = 0; l < cfg_.layers; ++l) {
        const std::string p = "attn.l" + std::to_string(l);
        LayerParams lp;
        lp.ln1_g = params.add(p + ".ln1.g", Tensor::full({d}, 1.0, true));
        lp.ln1_b = params.add(p + ".ln1.b", Tensor::zeros({d}, true));
        lp.wq = init_lin(d, d, params, p + ".wq", init);
        lp.bq = params.add(p + ".bq", Tensor::zeros({d}, true));
        lp.wk = init_lin(d, d, params, p + ".wk", init);
        lp.bk = params.add(p + ".bk", Tensor::zeros({d}, true));
        lp.wv = init_lin(d, d, params, p + ".wv", init);
        lp.bv = params.add(p + ".bv", Tensor::zeros({d}, true));
        lp.wo = init_lin(d, d, params, p + ".wo", init);
        lp.bo = params.add(p + ".bo", Tensor::zeros({d}, true));
        lp.ln2_g = params.add(p + ".ln2.g", Tensor::full({d}, 1.0, true));
        lp.ln2_b = params.add(p + ".ln2.b", Tensor::zeros({d}, true));
        lp.ff1_w = init_lin(d, 4 * d, params, p + ".ff1.w", init);
        lp.ff1_b = params.add(p + ".ff1.b", Tensor::zeros({4 * d}, true));
        lp.ff2_w = init_lin(4 * d, d, params, p + ".ff2.w", init);
        lp.ff2_b = params.add(p + ".ff2.b", Tensor::zeros({d}, true));
        layers_.push_back(std::move(lp));
    }

    if (cfg_.use_leader) {
        leader_w_ = init_lin(6, d, params, "attn.leader.w", init);
        leader_b_ = params.add("attn.leader.b", Tensor::zeros({d}, true));
    }
    dummy_ = init_w({1, d}, 0.1, params, "attn.dummy", init);
    if (!cfg_.use_rotary)
        index_embed_ =
            init_w({cfg_.max_positions, d}, 0.1, params, "attn.posembed", init);
}

Tensor CausalAttentionStack::layer_norm(const Tensor& x, const Tensor& gamma,
                                        const Tensor& beta) const {
    Tensor centered = x - mean_lastdim(x);
    Tensor var = mean_lastdim(square(centered));
    Tensor xhat = centered / sqrt(add_scalar(var, 1e-6));
    return xhat * gamma + beta;
}

Tensor CausalAttentionStack::layer_forward(const Tensor& a, std::size_t layer,
                                           const std::vector<double>& taus,
                                           LogitSink* logit_sink) const {
    const LayerParams& lp = layers_[layer];
    const std::size_t n = a.shape()[0];
    const std::size_t dh = cfg_.head_dim;
    const double inv_scale = 1.0 / std::sqrt(double(dh));

    std::vector<double> scaled_taus(taus);
    for (double& t : scaled_taus) t *= cfg_.rotary.tau_scale;

    // causal mask: node i attends to j <= i
    std::vector<double> mask(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) mask[i * n + j] = kMaskedLogit;
    Tensor mask_t = Tensor::from_values({n, n}, std::move(mask));

    Tensor h = layer_norm(a, lp.ln1_g, lp.ln1_b);
    Tensor q = matmul(h, lp.wq) + lp.bq;
    Tensor k = matmul(h, lp.wk) + lp.bk;
    Tensor v = matmul(h, lp.wv) + lp.bv;

    std::vector<Tensor> head_outs;
    head_outs.reserve(cfg_.heads);
    for (std::size_t hd = 0; hd < cfg_.heads; ++hd) {
        Tensor qh = slice_cols(q, hd * dh, dh);
        Tensor kh = slice_cols(k, hd * dh, dh);
        Tensor vh = slice_cols(v, hd * dh, dh);
        if (cfg_.use_rotary) {
            qh = rotary_rows(qh, scaled_taus, thetas_);
            kh = rotary_rows(kh, scaled_taus, thetas_);
        }
        Tensor logits =
            mul_scalar(matmul(qh, transpose(kh)), inv_scale) + mask_t;
        if (logit_sink) logit_sink->push_back(logits.values());
        Tensor weights = softmax_lastdim(logits);
        head_outs.push_back(matmul(weights, vh));
    }
    Tensor attn_out = cfg_.heads == 1 ? head_outs[0] : concat_cols(head_outs);
    Tensor a1 = a + (matmul(attn_out, lp.wo) + lp.bo);

    Tensor f = layer_norm(a1, lp.ln2_g, lp.ln2_b);
    Tensor ff = matmul(tanh(matmul(f, lp.ff1_w) + lp.ff1_b), lp.ff2_w) + lp.ff2_b;
    return a1 + ff;
}

Tensor CausalAttentionStack::forward(const Tensor& a,
                                     const std::vector<double>& taus,
                                     LogitSink* logit_sink) const {
    if (a.shape().size() != 2 || a.shape()[1] != cfg_.d_model())
        throw ShapeError("attention forward: input must be (n, " +
                         std::to_string(cfg_.d_model()) + ")");
    if (taus.size() != a.shape()[0])
        throw ShapeError("attention forward: one tau per node required");

    Tensor x = a;
    if (!cfg_.use_rotary) {
        const std::size_t n = a.shape()[0];
        if (n > cfg_.max_positions)
            throw DataError("attention: sequence longer than the index "
                            "embedding table (" +
                            std::to_string(cfg_.max_positions) + ")");
        x = x + slice_rows(index_embed_, 0, n);
    }
    for (std::size_t l = 0; l < cfg_.layers; ++l)
        x = layer_forward(x, l, taus, logit_sink);
    return x;
}

Tensor CausalAttentionStack::leader_node(
    const std::array<double, 6>& features_std) const {
    if (!cfg_.use_leader)
        throw std::logic_error("leader_node: leader disabled by ablation");
    Tensor f = Tensor::from_values(
        {1, 6}, std::vector<double>(features_std.begin(), features_std.end()));
    return matmul(f, leader_w_) + leader_b_;
}

Tensor CausalAttentionStack::dummy_node() const { return dummy_; }

AttentionSequence CausalAttentionStack::assemble_sequence(
    const std::array<double, 6>& features_std,
    const std::vector<Tensor>& patch_reps, const std::vector<double>& patch_taus,
    double horizon_start_tau) const {
    if (patch_reps.empty())
        throw DataError("assemble_sequence: need at least one patch");
    if (patch_reps.size() != patch_taus.size())
        throw ShapeError("assemble_sequence: rep/tau count mismatch");

    AttentionSequence seq;
    std::vector<Tensor> rows;
    if (cfg_.use_leader) {
        rows.push_back(leader_node(features_std));
        seq.taus.push_back(0.0);
        seq.kinds.push_back(NodeKind::leader);
    }
    for (std::size_t k = 0; k < patch_reps.size(); ++k) {
        rows.push_back(patch_reps[k]);
        seq.taus.push_back(patch_taus[k]);
        seq.kinds.push_back(NodeKind::patch);
    }
    rows.push_back(dummy_node());
    seq.taus.push_back(horizon_start_tau);
    seq.kinds.push_back(NodeKind::dummy);
    seq.embeddings = concat_rows(rows);
    seq.validate();
    return seq;
}

}  // namespace flextsf
