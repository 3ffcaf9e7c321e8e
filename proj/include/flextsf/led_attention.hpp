#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "flextsf/optim.hpp"
#include "flextsf/rng.hpp"
#include "flextsf/tensor.hpp"

namespace flextsf {

struct RotaryConfig {
    double base = 10000.0;
    double tau_scale = 1.0;
};

// theta_j = base^(-2j / head_dim) for j in [0, head_dim/2)
std::vector<double> rotary_thetas(std::size_t head_dim, double base);

// single head vector rotated by tau; thin wrapper over rotary_rows
std::vector<double> rotary_modulate(const std::vector<double>& x, double tau,
                                    std::size_t head_dim,
                                    const RotaryConfig& cfg);

enum class NodeKind : std::uint8_t { leader, patch, dummy };

// [leader?, patches..., dummy] with per-node time indicators. During
// training the model may position the dummy after the last known patch so
// its attention view matches generation; assemble_sequence always builds
// the generation-time layout with the dummy last.
struct AttentionSequence {
    Tensor embeddings;            // (len, d_model)
    std::vector<double> taus;     // len
    std::vector<NodeKind> kinds;  // len

    std::size_t length() const { return taus.size(); }
    void validate() const;
};

struct AttentionConfig {
    std::size_t heads = 4;
    std::size_t head_dim = 16;
    std::size_t layers = 2;
    RotaryConfig rotary;
    bool use_rotary = true;   // cleared by the LED-extras ablation
    bool use_leader = true;   // cleared by the LED-extras ablation
    std::size_t max_positions = 512;  // index-embedding table rows (ablation)

    std::size_t d_model() const { return heads * head_dim; }
};

// Captured pre-softmax attention scores, one (len x len) matrix per
// (layer, head); written only when a sink is passed to forward.
using LogitSink = std::vector<std::vector<double>>;

// Decoder-only causal self-attention with pre-norm residual blocks and a
// 4x feed-forward. Rotary modulation of Q/K is re-applied in every layer
// from the same tau vector. With use_rotary off, a learned per-index
// embedding is added to the input instead.
class CausalAttentionStack {
public:
    CausalAttentionStack(AttentionConfig cfg, ParamStore& params,
                         RngState& init);

    // a (len, d_model); taus one indicator per node
    Tensor forward(const Tensor& a, const std::vector<double>& taus,
                   LogitSink* logit_sink = nullptr) const;

    // leader projection of the standardized static feature vector
    Tensor leader_node(const std::array<double, 6>& features_std) const;
    Tensor dummy_node() const;

    AttentionSequence assemble_sequence(
        const std::array<double, 6>& features_std,
        const std::vector<Tensor>& patch_reps,
        const std::vector<double>& patch_taus, double horizon_start_tau) const;

    const AttentionConfig& config() const { return cfg_; }

private:
    Tensor layer_forward(const Tensor& a, std::size_t layer,
                         const std::vector<double>& taus,
                         LogitSink* logit_sink) const;
    Tensor layer_norm(const Tensor& x, const Tensor& gamma,
                      const Tensor& beta) const;

    AttentionConfig cfg_;
    ParamStore* params_;
    std::vector<double> thetas_;

    struct LayerParams {
        Tensor ln1_g, ln1_b, wq, bq, wk, bk, wv, bv, wo, bo;
        Tensor ln2_g, ln2_b, ff1_w, ff1_b, ff2_w, ff2_b;
    };
    std::vector<LayerParams> layers_;
    Tensor leader_w_, leader_b_;  // io group
    Tensor dummy_;
    Tensor index_embed_;  // only when use_rotary is off
};

}  // namespace flextsf
