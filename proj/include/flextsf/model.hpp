#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "flextsf/ivp_patcher.hpp"
#include "flextsf/led_attention.hpp"
#include "flextsf/optim.hpp"
#include "flextsf/rng.hpp"
#include "flextsf/series.hpp"
#include "flextsf/tensor.hpp"
#include "flextsf/vt_norm.hpp"

namespace flextsf {

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Each flag swaps one component for a documented fallback: raw values and a
// zero leader vector, a flat linear patch map, or plain causal attention
// with learned index embeddings.
struct AblationFlags {
    bool disable_vt_norm = false;
    bool disable_ivp_patcher = false;
    bool disable_led_extras = false;

    bool any() const {
        return disable_vt_norm || disable_ivp_patcher || disable_led_extras;
    }
};

struct ModelConfig {
    std::size_t patch_len = 8;   // p
    std::size_t latent_dim = 64; // d_z, must equal heads * head_dim
    std::size_t heads = 4;
    std::size_t head_dim = 16;
    std::size_t layers = 2;
    IvpSolverKind solver_kind = IvpSolverKind::resnet_flow;
    std::size_t solver_hidden = 64;
    std::size_t rk4_steps_per_unit = 4;
    double rotary_base = 10000.0;
    double rotary_tau_scale = 1.0;
    double kl_weight = 1.0;  // beta
    bool sample_posterior = true;  // false: mean mode
    std::size_t horizon_patches_max = 4;  // pre-training draw cap (h_max)
    std::size_t max_positions = 512;
    AblationFlags ablation;

    std::size_t d_model() const { return heads * head_dim; }
    void validate() const;

    static ModelConfig classic();  // head_dim 16, 4 heads, 2 layers, d_z 64
    static ModelConfig large();    // head_dim 64, 12 heads, 6 layers, d_z 768

    std::map<std::string, std::string> to_kv() const;
    static ModelConfig from_kv(const std::map<std::string, std::string>& kv);
};

// Normalized input -> patches -> causal stack -> per-patch decodes, with the
// ELBO loss over horizon observations and masked-autoregressive generation.
class FlexTsfModel {
public:
    FlexTsfModel(ModelConfig cfg, std::uint64_t seed);

    const ModelConfig& config() const { return cfg_; }
    std::uint64_t init_seed() const { return seed_; }
    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }
    FeatureStandardizer& feature_standardizer() { return feat_std_; }
    const FeatureStandardizer& feature_standardizer() const { return feat_std_; }
    RngState& noise_rng() { return noise_; }
    const RngState& noise_rng() const { return noise_; }

    std::size_t count_parameters() const { return params_.scalar_count(); }

    // input/output value maps plus the static-feature projection
    std::vector<std::string> io_group() const;
    std::vector<std::string> core_group() const;

    // VT-Norm honoring the ablation flag; raw values and times pass through
    // with identity features when it is disabled
    NormalizedInstance prepare_instance(const IrregularSeries& s, double mu_g,
                                        double sigma_g, double omega_g) const;

    struct Prediction {
        Tensor values;           // (n, 1) at the target patch's observed times
        std::size_t target;      // index into `patches`
        bool from_dummy = false;
    };

    struct Forward {
        std::vector<Patch> patches;  // context patches then horizon patches
        std::size_t n_context_patches = 0;
        std::vector<PatchPosterior> posteriors;  // one per patch
        std::vector<Prediction> predictions;
    };

    // One causal pass over [leader, context patches, dummy, horizon patches]
    // with the dummy placed after the last context patch so its attention
    // view matches generation. Output at patch position k decodes to the
    // observed timestamps of patch k+1; the dummy output decodes the first
    // horizon patch.
    Forward forward_teacher_forced(const NormalizedInstance& inst,
                                   std::size_t horizon_start,
                                   RngState& noise) const;

    // Gaussian NLL (unit observation variance) per observed horizon point
    // plus beta * mean per-patch KL over all patches
    Tensor loss_elbo(const Forward& fwd, double beta) const;
    Tensor loss_elbo(const Forward& fwd) const {
        return loss_elbo(fwd, cfg_.kl_weight);
    }

    // Autoregressive generation: horizon timestamps are chunked into groups
    // of <= p; each stack pass decodes the dummy at the chunk's timestamps
    // and the produced values re-enter as an ordinary patch. Output is
    // denormalized, exactly one value per requested timestamp.
    std::vector<double> generate(const IrregularSeries& context,
                                 const std::vector<double>& horizon_times,
                                 double mu_g, double sigma_g,
                                 double omega_g) const;

    const CausalAttentionStack& stack() const { return *stack_; }
    const IvpPatcher& patcher() const { return *patcher_; }

    std::array<double, 6> leader_features(const StaticFeatures& f) const;

private:
    ModelConfig cfg_;
    std::uint64_t seed_;
    ParamStore params_;
    FeatureStandardizer feat_std_;
    RngState noise_;
    std::unique_ptr<IvpPatcher> patcher_;
    std::unique_ptr<CausalAttentionStack> stack_;
};

// construct the single-flag variant the ablation study trains
FlexTsfModel apply_ablation(const AblationFlags& flags,
                            const FlexTsfModel& base);

struct SubSequenceDraw {
    IrregularSeries context;
    IrregularSeries target;
};

// Pre-training sample: uniform random start, then uniform context length in
// [p, M - p]; the target is the following min(p * h_max, remaining) points.
// Series shorter than 2p are skipped (returns nullopt, counts the skip).
std::optional<SubSequenceDraw> pretrain_subsequence(const IrregularSeries& s,
                                                    std::size_t p,
                                                    std::size_t h_max,
                                                    RngState& rng);

}  // namespace flextsf
