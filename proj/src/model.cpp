#include "flextsf/model.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "flextsf/diag.hpp"

namespace flextsf {

void ModelConfig::validate() const {
    if (patch_len == 0) throw ConfigError("patch_len must be positive");
    if (head_dim % 2 != 0) throw ConfigError("head_dim must be even");
    if (heads == 0 || layers == 0 || latent_dim == 0)
        throw ConfigError("heads, layers and latent_dim must be positive");
    if (d_model() != latent_dim)
        throw ConfigError(
            "latent_dim must equal heads * head_dim (" +
            std::to_string(latent_dim) + " vs " + std::to_string(d_model()) +
            "): patch representations feed the attention stack directly");
    if (kl_weight < 0.0) throw ConfigError("kl_weight must be >= 0");
    if (horizon_patches_max == 0)
        throw ConfigError("horizon_patches_max must be positive");
}

ModelConfig ModelConfig::classic() {
    ModelConfig cfg;
    cfg.head_dim = 16;
    cfg.heads = 4;
    cfg.layers = 2;
    cfg.latent_dim = 64;
    cfg.solver_hidden = 64;
    return cfg;
}

ModelConfig ModelConfig::large() {
    ModelConfig cfg;
    cfg.head_dim = 64;
    cfg.heads = 12;
    cfg.layers = 6;
    cfg.latent_dim = 768;
    cfg.solver_hidden = 768;
    return cfg;
}

std::map<std::string, std::string> ModelConfig::to_kv() const {
    auto num = [](auto v) { return std::to_string(v); };
    auto flt = [](double v) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        return std::string(buf);
    };
    return {
        {"patch_len", num(patch_len)},
        {"latent_dim", num(latent_dim)},
        {"heads", num(heads)},
        {"head_dim", num(head_dim)},
        {"layers", num(layers)},
        {"solver", solver_kind_name(solver_kind)},
        {"solver_hidden", num(solver_hidden)},
        {"rk4_steps_per_unit", num(rk4_steps_per_unit)},
        {"rotary_base", flt(rotary_base)},
        {"rotary_tau_scale", flt(rotary_tau_scale)},
        {"kl_weight", flt(kl_weight)},
        {"sample_mode", sample_posterior ? "sample" : "mean"},
        {"horizon_patches_max", num(horizon_patches_max)},
        {"max_positions", num(max_positions)},
        {"disable_vt_norm", ablation.disable_vt_norm ? "1" : "0"},
        {"disable_ivp_patcher", ablation.disable_ivp_patcher ? "1" : "0"},
        {"disable_led_extras", ablation.disable_led_extras ? "1" : "0"},
    };
}

ModelConfig ModelConfig::from_kv(const std::map<std::string, std::string>& kv) {
    ModelConfig cfg;
    auto want = [&](const char* key) -> const std::string& {
        auto it = kv.find(key);
        if (it == kv.end())
            throw ConfigError(std::string("model config missing key '") + key +
                              "'");
        return it->second;
    };
    auto uns = [&](const char* key) {
        return static_cast<std::size_t>(std::stoull(want(key)));
    };
    auto flt = [&](const char* key) { return std::stod(want(key)); };
    cfg.patch_len = uns("patch_len");
    cfg.latent_dim = uns("latent_dim");
    cfg.heads = uns("heads");
    cfg.head_dim = uns("head_dim");
    cfg.layers = uns("layers");
    auto kind = solver_kind_from_string(want("solver"));
    if (!kind) throw ConfigError("unknown solver kind '" + want("solver") + "'");
    cfg.solver_kind = *kind;
    cfg.solver_hidden = uns("solver_hidden");
    cfg.rk4_steps_per_unit = uns("rk4_steps_per_unit");
    cfg.rotary_base = flt("rotary_base");
    cfg.rotary_tau_scale = flt("rotary_tau_scale");
    cfg.kl_weight = flt("kl_weight");
    cfg.sample_posterior = want("sample_mode") == std::string("sample");
    cfg.horizon_patches_max = uns("horizon_patches_max");
    cfg.max_positions = uns("max_positions");
    cfg.ablation.disable_vt_norm = want("disable_vt_norm") == "1";
    cfg.ablation.disable_ivp_patcher = want("disable_ivp_patcher") == "1";
    cfg.ablation.disable_led_extras = want("disable_led_extras") == "1";
    cfg.validate();
    return cfg;
}

// ---------------------------------------------------------------------------

FlexTsfModel::FlexTsfModel(ModelConfig cfg, std::uint64_t seed)
    : cfg_(cfg), seed_(seed), noise_(RngState(seed).fork(0x5a3f)) {
    cfg_.validate();
    RngState init(RngState(seed).fork(0x1417).next_u64());

    IvpPatcherConfig pcfg;
    pcfg.patch_len = cfg_.patch_len;
    pcfg.solver.kind = cfg_.solver_kind;
    pcfg.solver.latent_dim = cfg_.latent_dim;
    pcfg.solver.hidden_dim = cfg_.solver_hidden;
    pcfg.solver.rk4_steps_per_unit = cfg_.rk4_steps_per_unit;
    pcfg.flat_fallback = cfg_.ablation.disable_ivp_patcher;
    patcher_ = std::make_unique<IvpPatcher>(pcfg, params_, init);

    AttentionConfig acfg;
    acfg.heads = cfg_.heads;
    acfg.head_dim = cfg_.head_dim;
    acfg.layers = cfg_.layers;
    acfg.rotary.base = cfg_.rotary_base;
    acfg.rotary.tau_scale = cfg_.rotary_tau_scale;
    acfg.use_rotary = !cfg_.ablation.disable_led_extras;
    acfg.use_leader = !cfg_.ablation.disable_led_extras;
    acfg.max_positions = cfg_.max_positions;
    stack_ = std::make_unique<CausalAttentionStack>(acfg, params_, init);
}

std::vector<std::string> FlexTsfModel::io_group() const {
    std::vector<std::string> names = {"patcher.input.w", "patcher.input.b",
                                      "patcher.output.w", "patcher.output.b",
                                      "attn.leader.w", "attn.leader.b"};
    std::vector<std::string> present;
    for (const auto& n : names)
        if (params_.contains(n)) present.push_back(n);
    return present;
}

std::vector<std::string> FlexTsfModel::core_group() const {
    auto io = io_group();
    std::vector<std::string> rest;
    for (const auto& [name, t] : params_.items())
        if (std::find(io.begin(), io.end(), name) == io.end())
            rest.push_back(name);
    return rest;
}

NormalizedInstance FlexTsfModel::prepare_instance(const IrregularSeries& s,
                                                  double mu_g, double sigma_g,
                                                  double omega_g) const {
    if (cfg_.ablation.disable_vt_norm) {
        // raw values and raw times; identity features invert to a no-op
        NormalizedInstance inst;
        inst.values_prime = s.values;
        inst.times_prime = s.times;
        inst.observed = s.observed;
        inst.features = StaticFeatures{};
        return inst;
    }
    return normalize_instance(s, mu_g, sigma_g, omega_g);
}

std::array<double, 6> FlexTsfModel::leader_features(
    const StaticFeatures& f) const {
    if (cfg_.ablation.disable_vt_norm) return {0, 0, 0, 0, 0, 0};
    // unfitted standardizer (toy setups) falls back to the log transform
    if (!feat_std_.fitted()) return FeatureStandardizer::log_transform(f);
    return feat_std_.apply(f);
}

FlexTsfModel::Forward FlexTsfModel::forward_teacher_forced(
    const NormalizedInstance& inst, std::size_t horizon_start,
    RngState& noise) const {
    const std::size_t m = inst.length();
    if (horizon_start == 0 || horizon_start >= m)
        throw DataError("forward: horizon must be a non-empty suffix");

    auto slice = [&](std::size_t lo, std::size_t hi) {
        return std::make_tuple(
            std::vector<double>(inst.times_prime.begin() + lo,
                                inst.times_prime.begin() + hi),
            std::vector<double>(inst.values_prime.begin() + lo,
                                inst.values_prime.begin() + hi),
            std::vector<std::uint8_t>(inst.observed.begin() + lo,
                                      inst.observed.begin() + hi));
    };
    auto [ctx_t, ctx_v, ctx_o] = slice(0, horizon_start);
    auto [hor_t, hor_v, hor_o] = slice(horizon_start, m);

    Forward fwd;
    auto ctx_patches = segment(ctx_t, ctx_v, ctx_o, cfg_.patch_len);
    auto hor_patches = segment(hor_t, hor_v, hor_o, cfg_.patch_len);
    if (ctx_patches.empty())
        throw DataError("forward: context has no observed patch");
    if (hor_patches.empty())
        throw DataError("forward: horizon has no observed patch");
    fwd.n_context_patches = ctx_patches.size();
    for (auto& p : ctx_patches) fwd.patches.push_back(std::move(p));
    for (auto& p : hor_patches) fwd.patches.push_back(std::move(p));
    const std::size_t n_patches = fwd.patches.size();
    if (n_patches < 2) throw DataError("forward: need at least 2 patches");

    const bool sample = cfg_.sample_posterior;
    std::vector<Tensor> reps;
    reps.reserve(n_patches);
    for (const auto& patch : fwd.patches) {
        auto enc = patcher_->encode(patch, sample, noise);
        reps.push_back(enc.representation);
        fwd.posteriors.push_back(std::move(enc.posterior));
    }

    // sequence layout: [leader?, context patches, dummy, horizon patches];
    // causality gives the dummy the same view it has at generation time
    const bool leader = !cfg_.ablation.disable_led_extras;
    const double dummy_tau = fwd.patches[fwd.n_context_patches].tau;
    std::vector<Tensor> rows;
    std::vector<double> taus;
    if (leader) {
        rows.push_back(stack_->leader_node(leader_features(inst.features)));
        taus.push_back(0.0);
    }
    for (std::size_t k = 0; k < fwd.n_context_patches; ++k) {
        rows.push_back(reps[k]);
        taus.push_back(fwd.patches[k].tau);
    }
    const std::size_t dummy_row = rows.size();
    rows.push_back(stack_->dummy_node());
    taus.push_back(dummy_tau);
    for (std::size_t k = fwd.n_context_patches; k < n_patches; ++k) {
        rows.push_back(reps[k]);
        taus.push_back(fwd.patches[k].tau);
    }

    Tensor out = stack_->forward(concat_rows(rows), taus);
    auto row_of_patch = [&](std::size_t k) {
        const std::size_t base = leader ? 1 : 0;
        return k < fwd.n_context_patches ? base + k : base + 1 + k;
    };
    auto observed_times = [](const Patch& p) {
        std::vector<double> t;
        for (std::size_t i = 0; i < p.count(); ++i)
            if (p.observed[i]) t.push_back(p.times[i]);
        return t;
    };

    for (std::size_t k = 0; k + 1 < n_patches; ++k) {
        const Patch& target = fwd.patches[k + 1];
        Prediction pred;
        pred.values = patcher_->decode(slice_rows(out, row_of_patch(k), 1),
                                       observed_times(target), target.tau);
        pred.target = k + 1;
        fwd.predictions.push_back(std::move(pred));
    }
    {
        const Patch& target = fwd.patches[fwd.n_context_patches];
        Prediction pred;
        pred.values = patcher_->decode(slice_rows(out, dummy_row, 1),
                                       observed_times(target), target.tau);
        pred.target = fwd.n_context_patches;
        pred.from_dummy = true;
        fwd.predictions.push_back(std::move(pred));
    }
    return fwd;
}

Tensor FlexTsfModel::loss_elbo(const Forward& fwd, double beta) const {
    constexpr double kHalfLogTwoPi = 0.91893853320467274178;

    Tensor sq_sum = Tensor::scalar(0.0);
    std::size_t n_points = 0;
    for (const auto& pred : fwd.predictions) {
        if (pred.target < fwd.n_context_patches) continue;  // horizon only
        const Patch& target = fwd.patches[pred.target];
        std::vector<double> y;
        for (std::size_t i = 0; i < target.count(); ++i)
            if (target.observed[i]) y.push_back(target.values[i]);
        Tensor y_t = Tensor::from_values({y.size(), 1}, y);
        sq_sum = sq_sum + sum(square(pred.values - y_t));
        n_points += y.size();
    }
    if (n_points == 0)
        throw DataError("loss: no observed horizon points to score");
    Tensor nll =
        add_scalar(mul_scalar(sq_sum, 0.5 / double(n_points)), kHalfLogTwoPi);

    Tensor kl_sum = Tensor::scalar(0.0);
    for (const auto& post : fwd.posteriors)
        kl_sum = kl_sum + kl_to_prior(post);
    Tensor kl_mean = mul_scalar(kl_sum, 1.0 / double(fwd.posteriors.size()));

    return nll + mul_scalar(kl_mean, beta);
}

std::vector<double> FlexTsfModel::generate(
    const IrregularSeries& context, const std::vector<double>& horizon_times,
    double mu_g, double sigma_g, double omega_g) const {
    if (horizon_times.empty()) throw DataError("generate: empty horizon");
    for (std::size_t i = 1; i < horizon_times.size(); ++i)
        if (!(horizon_times[i] > horizon_times[i - 1]))
            throw DataError("generate: horizon timestamps must be ascending");
    if (!context.times.empty() &&
        horizon_times.front() <= context.times.back())
        throw DataError("generate: horizon must start after the context");

    NormalizedInstance inst = prepare_instance(context, mu_g, sigma_g, omega_g);

    // extend the cumulative time normalization into the horizon
    const double omega_i =
        cfg_.ablation.disable_vt_norm ? 1.0 : inst.features.omega_i;
    std::vector<double> hor_t(horizon_times.size());
    double prev_raw = context.times.back();
    double prev_norm = inst.times_prime.back();
    for (std::size_t i = 0; i < horizon_times.size(); ++i) {
        prev_norm += (horizon_times[i] - prev_raw) / omega_i;
        prev_raw = horizon_times[i];
        hor_t[i] = prev_norm;
    }

    auto patches = segment(inst, cfg_.patch_len);
    if (patches.empty())
        throw DataError("generate: context has no observed points");

    std::vector<Tensor> reps;
    std::vector<double> taus;
    RngState unused_noise(0);
    for (const auto& p : patches) {
        reps.push_back(patcher_->encode(p, false, unused_noise).representation);
        taus.push_back(p.tau);
    }

    std::vector<double> forecast_normalized;
    forecast_normalized.reserve(hor_t.size());
    std::size_t pos = 0;
    while (pos < hor_t.size()) {
        const std::size_t n =
            std::min(cfg_.patch_len, hor_t.size() - pos);
        std::vector<double> chunk(hor_t.begin() + pos, hor_t.begin() + pos + n);

        Tensor r_hat;
        if (!cfg_.ablation.disable_led_extras) {
            auto seq = stack_->assemble_sequence(leader_features(inst.features),
                                                 reps, taus, chunk.front());
            Tensor out = stack_->forward(seq.embeddings, seq.taus);
            r_hat = slice_rows(out, seq.length() - 1, 1);
        } else {
            std::vector<Tensor> rows = reps;
            rows.push_back(stack_->dummy_node());
            std::vector<double> t2 = taus;
            t2.push_back(chunk.front());
            Tensor out = stack_->forward(concat_rows(rows), t2);
            r_hat = slice_rows(out, rows.size() - 1, 1);
        }

        Tensor pred = patcher_->decode(r_hat, chunk, chunk.front());
        Patch fed;
        fed.times = chunk;
        fed.values = pred.values();
        fed.observed.assign(n, 1);
        fed.tau = chunk.front();
        for (double v : pred.values()) forecast_normalized.push_back(v);

        reps.push_back(patcher_->encode(fed, false, unused_noise).representation);
        taus.push_back(fed.tau);
        pos += n;
    }

    return denormalize(forecast_normalized, inst.features);
}

FlexTsfModel apply_ablation(const AblationFlags& flags,
                            const FlexTsfModel& base) {
    ModelConfig cfg = base.config();
    cfg.ablation = flags;
    FlexTsfModel variant(cfg, base.init_seed());
    variant.feature_standardizer() = base.feature_standardizer();
    return variant;
}

std::optional<SubSequenceDraw> pretrain_subsequence(const IrregularSeries& s,
                                                    std::size_t p,
                                                    std::size_t h_max,
                                                    RngState& rng) {
    const std::size_t m = s.length();
    if (m < 2 * p) {
        diag::counters().skipped_short_series += 1;
        return std::nullopt;
    }
    // start first, then the context length (both uniform)
    const std::size_t start = rng.next_below(m - p);  // in [0, m-p-1]
    const std::size_t max_len = std::min(m - p, m - 1 - start);
    const std::size_t ctx_len = p + rng.next_below(max_len - p + 1);
    const std::size_t tgt_len = std::min(p * h_max, m - start - ctx_len);

    auto take = [&](std::size_t lo, std::size_t n) {
        IrregularSeries part;
        part.series_id = s.series_id;
        part.channel = s.channel;
        part.times.assign(s.times.begin() + lo, s.times.begin() + lo + n);
        part.values.assign(s.values.begin() + lo, s.values.begin() + lo + n);
        part.observed.assign(s.observed.begin() + lo,
                             s.observed.begin() + lo + n);
        return part;
    };
    SubSequenceDraw draw;
    draw.context = take(start, ctx_len);
    draw.target = take(start + ctx_len, tgt_len);
    return draw;
}

}  // namespace flextsf
