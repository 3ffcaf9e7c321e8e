#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "flextsf/optim.hpp"
#include "flextsf/rng.hpp"
#include "flextsf/tensor.hpp"
#include "flextsf/vt_norm.hpp"

namespace flextsf {

// Contiguous group of <= p observations; tau is the first timestamp inside
// the patch and drives both the backward solves and rotary modulation.
struct Patch {
    std::vector<double> times;
    std::vector<double> values;
    std::vector<std::uint8_t> observed;
    double tau = 0.0;

    std::size_t count() const { return times.size(); }
    std::size_t observed_count() const;
};

// Count-based segmentation into non-overlapping patches; the final patch may
// be ragged. Patches with no observed point are dropped (their span stays
// with them, not merged into neighbours).
std::vector<Patch> segment(const std::vector<double>& times,
                           const std::vector<double>& values,
                           const std::vector<std::uint8_t>& observed,
                           std::size_t p);
std::vector<Patch> segment(const NormalizedInstance& inst, std::size_t p);

enum class IvpSolverKind { resnet_flow, rk4 };

std::optional<IvpSolverKind> solver_kind_from_string(const std::string& s);
const char* solver_kind_name(IvpSolverKind k);

struct IvpSolverConfig {
    IvpSolverKind kind = IvpSolverKind::resnet_flow;
    std::size_t latent_dim = 64;
    std::size_t hidden_dim = 64;
    std::size_t rk4_steps_per_unit = 4;
};

// A learned map advancing latent rows by per-row time offsets.
//
// resnet_flow evaluates z + tanh(w*dt) (.) g(z, dt) in closed form for
// dt >= 0 and inverts that map by fixed-point iteration for dt < 0, so
// solve(solve(z, a), -a) returns to z up to the iteration tolerance.
// rk4 integrates dz/dt = f(z) with fixed steps; negative dt runs the same
// scheme with a negative step.
class IvpSolver {
public:
    IvpSolver(IvpSolverConfig cfg, ParamStore& params, std::string prefix,
              RngState& init);

    // states (n, latent_dim), one signed dt per row
    Tensor solve(const Tensor& states, const std::vector<double>& dts) const;

    const IvpSolverConfig& config() const { return cfg_; }

    static constexpr double kInverseTol = 1e-13;
    static constexpr std::size_t kInverseMaxIter = 60;

private:
    Tensor flow_forward(const Tensor& states, const Tensor& dt_col) const;
    Tensor flow_inverse(const Tensor& states, const Tensor& dt_col) const;
    Tensor rk4_row(const Tensor& state_row, double dt) const;
    Tensor field(const Tensor& states) const;

    IvpSolverConfig cfg_;
    ParamStore* params_;
    std::string prefix_;
    Tensor w_gate_, w1_, u1_, b1_, w2_, b2_;  // flow nets
    Tensor f_skip_, f_w1_, f_b1_, f_w2_, f_b2_;  // rk4 vector field
};

// Moment-matched posterior of one patch; mixture components retained for
// diagnostics.
struct PatchPosterior {
    Tensor comp_mu;     // (n_obs, d_z)
    Tensor comp_sigma;  // (n_obs, d_z), softplus-positive
    Tensor agg_mu;      // (1, d_z)
    Tensor agg_sigma;   // (1, d_z), variance floored at 1e-6
};

struct EncodeResult {
    PatchPosterior posterior;
    Tensor representation;  // (1, d_z); sampled in training, mean otherwise
};

struct IvpPatcherConfig {
    std::size_t patch_len = 8;
    IvpSolverConfig solver;
    bool flat_fallback = false;  // ablation: linear map over zero-padded patch
};

// Encoder and decoder around two separately parameterized IVP solvers
// (Algorithm "backward to the patch start, forward to the targets").
class IvpPatcher {
public:
    IvpPatcher(IvpPatcherConfig cfg, ParamStore& params, RngState& init);

    // noise is consumed only when sample = true
    EncodeResult encode(const Patch& patch, bool sample, RngState& noise) const;

    // r_hat (1, d_z) -> predicted values (n, 1) at target_times
    Tensor decode(const Tensor& r_hat, const std::vector<double>& target_times,
                  double tau_start) const;

    const IvpPatcherConfig& config() const { return cfg_; }
    const IvpSolver& encoder_solver() const { return *enc_solver_; }
    const IvpSolver& decoder_solver() const { return *dec_solver_; }

private:
    EncodeResult encode_flat(const Patch& patch, bool sample,
                             RngState& noise) const;

    IvpPatcherConfig cfg_;
    ParamStore* params_;
    Tensor in_w_, in_b_, out_w_, out_b_;     // io group
    Tensor mu_w_, mu_b_, sig_w_, sig_b_;     // inference nets
    std::optional<IvpSolver> enc_solver_, dec_solver_;
};

// closed-form KL(N(mu, sigma^2) || N(0, I)) of the aggregated Gaussian
Tensor kl_to_prior(const PatchPosterior& q);

inline constexpr double kAggVarFloor = 1e-6;

}  // namespace flextsf
