#include "flextsf/train_eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "flextsf/diag.hpp"
#include "flextsf/optim.hpp"

namespace flextsf {

const char* regime_name(RegimeKind k) {
    switch (k) {
        case RegimeKind::classic: return "classic";
        case RegimeKind::pretrain: return "pretrain";
        case RegimeKind::finetune: return "finetune";
    }
    return "?";
}

std::optional<RegimeKind> regime_from_string(const std::string& s) {
    if (s == "classic") return RegimeKind::classic;
    if (s == "pretrain") return RegimeKind::pretrain;
    if (s == "finetune") return RegimeKind::finetune;
    return std::nullopt;
}

TrainRegime TrainRegime::classic_defaults() {
    TrainRegime r;
    r.kind = RegimeKind::classic;
    r.lr = 1e-4;
    r.weight_decay = 1e-4;
    r.beta1 = 0.9;
    r.beta2 = 0.999;
    r.decoupled_wd = false;
    r.lr_step_epochs = 20;
    r.lr_decay = 0.5;
    return r;
}

TrainRegime TrainRegime::pretrain_defaults() {
    TrainRegime r;
    r.kind = RegimeKind::pretrain;
    r.lr = 1e-3;  // peak; warmup then cosine
    r.weight_decay = 0.1;
    r.beta1 = 0.9;
    r.beta2 = 0.95;
    r.decoupled_wd = true;
    r.warmup_steps = 1000;
    return r;
}

TrainRegime TrainRegime::finetune_defaults() {
    TrainRegime r = classic_defaults();
    r.kind = RegimeKind::finetune;
    r.epochs = 20;
    return r;
}

// ---------------------------------------------------------------------------
// instance preparation

namespace {

IrregularSeries series_prefix(const IrregularSeries& s, std::size_t n) {
    IrregularSeries p;
    p.series_id = s.series_id;
    p.channel = s.channel;
    p.times.assign(s.times.begin(), s.times.begin() + n);
    p.values.assign(s.values.begin(), s.values.begin() + n);
    p.observed.assign(s.observed.begin(), s.observed.begin() + n);
    return p;
}

// Normalization for teacher forcing: instance statistics come from the
// context prefix only, exactly as generation sees them.
NormalizedInstance context_stat_instance(const FlexTsfModel& model,
                                         const IrregularSeries& s,
                                         std::size_t ctx_len, double mu_g,
                                         double sigma_g, double omega_g) {
    if (model.config().ablation.disable_vt_norm)
        return model.prepare_instance(s, mu_g, sigma_g, omega_g);

    IrregularSeries ctx = series_prefix(s, ctx_len);
    ValueNorm vn = normalize_values(ctx.values, ctx.observed, mu_g, sigma_g);
    TimeNorm tn = normalize_times(ctx.times, omega_g);

    NormalizedInstance inst;
    inst.observed = s.observed;
    inst.values_prime.resize(s.length());
    for (std::size_t i = 0; i < s.length(); ++i)
        inst.values_prime[i] =
            ((s.values[i] - mu_g) / sigma_g - vn.mu_i) / vn.sigma_i;
    inst.times_prime.resize(s.length());
    inst.times_prime[0] = 0.0;
    double acc = 0.0;
    for (std::size_t i = 1; i < s.length(); ++i) {
        acc += (s.times[i] - s.times[i - 1]) / tn.omega_i;
        inst.times_prime[i] = acc;
    }
    inst.features.mu_g = mu_g;
    inst.features.sigma_g = sigma_g;
    inst.features.mu_i = vn.mu_i;
    inst.features.sigma_i = vn.sigma_i;
    inst.features.omega_g = omega_g;
    inst.features.omega_i = tn.omega_i;
    return inst;
}

double channel_mean(const std::map<std::string, GlobalStats>& stats,
                    const std::string& ch) {
    auto it = stats.find(ch);
    if (it == stats.end())
        throw DataError("no global stats for channel '" + ch + "'");
    return it->second.mean;
}

double channel_std(const std::map<std::string, GlobalStats>& stats,
                   const std::string& ch) {
    return stats.at(ch).std;
}

}  // namespace

NormalizedInstance batch_row_instance(const TrainingBatch& batch,
                                      std::size_t row) {
    NormalizedInstance inst;
    const std::size_t len = batch.padded.lengths[row];
    inst.values_prime.resize(len);
    inst.times_prime.resize(len);
    inst.observed.resize(len);
    for (std::size_t c = 0; c < len; ++c) {
        inst.values_prime[c] = batch.padded.value_at(row, c);
        inst.times_prime[c] = batch.padded.time_at(row, c);
        inst.observed[c] = batch.padded.observed_at(row, c) ? 1 : 0;
    }
    inst.features = batch.features[row];
    return inst;
}

Tensor batch_loss(const FlexTsfModel& model, const TrainingBatch& batch,
                  RngState& noise, double beta) {
    Tensor acc = Tensor::scalar(0.0);
    for (std::size_t r = 0; r < batch.padded.rows; ++r) {
        NormalizedInstance inst = batch_row_instance(batch, r);
        auto fwd = model.forward_teacher_forced(inst, batch.horizon_start[r],
                                                noise);
        acc = acc + model.loss_elbo(fwd, beta);
    }
    return mul_scalar(acc, 1.0 / double(batch.padded.rows));
}

// ---------------------------------------------------------------------------
// baselines

std::vector<double> baseline_forecast(BaselineKind kind,
                                      const IrregularSeries& context,
                                      const std::vector<double>& horizon_times) {
    std::vector<double> xs, ts;
    for (std::size_t i = 0; i < context.length(); ++i)
        if (context.observed[i]) {
            xs.push_back(context.values[i]);
            ts.push_back(context.times[i]);
        }
    if (xs.empty())
        throw DataError("baseline_forecast: no observed context values");

    const std::size_t h = horizon_times.size();
    switch (kind) {
        case BaselineKind::mean: {
            double m = 0.0;
            for (double x : xs) m += x;
            m /= double(xs.size());
            return std::vector<double>(h, m);
        }
        case BaselineKind::last_value:
            return std::vector<double>(h, xs.back());
        case BaselineKind::linear_trend: {
            // centered least squares keeps the normal equations conditioned
            double tm = 0.0, xm = 0.0;
            for (std::size_t i = 0; i < xs.size(); ++i) {
                tm += ts[i];
                xm += xs[i];
            }
            tm /= double(ts.size());
            xm /= double(xs.size());
            double sxx = 0.0, sxy = 0.0;
            for (std::size_t i = 0; i < xs.size(); ++i) {
                sxx += (ts[i] - tm) * (ts[i] - tm);
                sxy += (ts[i] - tm) * (xs[i] - xm);
            }
            const double slope = sxx > 0.0 ? sxy / sxx : 0.0;
            std::vector<double> out(h);
            for (std::size_t i = 0; i < h; ++i)
                out[i] = xm + slope * (horizon_times[i] - tm);
            return out;
        }
    }
    throw std::logic_error("unknown baseline kind");
}

// ---------------------------------------------------------------------------
// evaluation

namespace {

struct SeriesEval {
    std::vector<double> sq_norm;  // per observed horizon point
    std::vector<double> sq_raw;
    std::map<std::string, std::vector<double>> baseline_sq;
};

const char* baseline_name(BaselineKind k) {
    switch (k) {
        case BaselineKind::mean: return "mean";
        case BaselineKind::last_value: return "last-value";
        case BaselineKind::linear_trend: return "linear-trend";
    }
    return "?";
}

std::optional<SeriesEval> eval_one_series(
    const FlexTsfModel& model, const IrregularSeries& s,
    const std::map<std::string, GlobalStats>& stats, double omega_g,
    const EvalOptions& opts) {
    if (s.length() < 5) return std::nullopt;
    auto [ctx, hor] = split_context_horizon(s, opts.split);
    if (ctx.observed_count() == 0 || hor.observed_count() == 0)
        return std::nullopt;

    const double mu_g = channel_mean(stats, s.channel);
    const double sigma_g = channel_std(stats, s.channel);

    // the metric's normalization: standard VT chain with context-fitted
    // instance stats, shared by the model and every baseline
    ValueNorm vn = normalize_values(ctx.values, ctx.observed, mu_g, sigma_g);
    auto to_norm = [&](double x) {
        return ((x - mu_g) / sigma_g - vn.mu_i) / vn.sigma_i;
    };

    std::vector<double> pred;
    try {
        pred = model.generate(ctx, hor.times, mu_g, sigma_g, omega_g);
    } catch (const DataError& e) {
        // a model with non-finite parameters cannot score this series
        if (std::string(e.what()).find("non-finite") == std::string::npos)
            throw;
        return std::nullopt;
    }

    SeriesEval ev;
    for (std::size_t i = 0; i < hor.length(); ++i) {
        if (!hor.observed[i]) continue;
        const double d = to_norm(pred[i]) - to_norm(hor.values[i]);
        ev.sq_norm.push_back(d * d);
        if (opts.raw_scale) {
            const double dr = pred[i] - hor.values[i];
            ev.sq_raw.push_back(dr * dr);
        }
    }
    if (opts.with_baselines)
        for (BaselineKind k : {BaselineKind::mean, BaselineKind::last_value,
                               BaselineKind::linear_trend}) {
            auto bpred = baseline_forecast(k, ctx, hor.times);
            auto& bucket = ev.baseline_sq[baseline_name(k)];
            for (std::size_t i = 0; i < hor.length(); ++i) {
                if (!hor.observed[i]) continue;
                const double d = to_norm(bpred[i]) - to_norm(hor.values[i]);
                bucket.push_back(d * d);
            }
        }
    return ev;
}

double mean_of(const std::vector<double>& xs) {
    if (xs.empty()) return 0.0;
    double s = 0.0;
    for (double x : xs) s += x;
    return s / double(xs.size());
}

}  // namespace

std::string config_hash(const ModelConfig& cfg) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& [k, v] : cfg.to_kv())
        for (char c : k + "=" + v + ";") {
            h ^= std::uint64_t(static_cast<unsigned char>(c));
            h *= 0x100000001b3ULL;
        }
    char buf[24];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

EvalReport evaluate_mse(const FlexTsfModel& model, const Dataset& dataset,
                        Split split, const EvalOptions& opts) {
    const auto t0 = std::chrono::steady_clock::now();
    auto train_split = dataset.in_split(Split::train);
    auto stats = fit_global(train_split);
    const double omega_g = dataset.manifest.time_unit_seconds;

    std::vector<double> sq_norm, sq_raw;
    std::map<std::string, std::vector<double>> baseline_sq;
    std::size_t n_series = 0;
    for (const auto* s : dataset.in_split(split)) {
        auto ev = eval_one_series(model, *s, stats, omega_g, opts);
        if (!ev) continue;
        ++n_series;
        sq_norm.insert(sq_norm.end(), ev->sq_norm.begin(), ev->sq_norm.end());
        sq_raw.insert(sq_raw.end(), ev->sq_raw.begin(), ev->sq_raw.end());
        for (auto& [name, bucket] : ev->baseline_sq)
            baseline_sq[name].insert(baseline_sq[name].end(), bucket.begin(),
                                     bucket.end());
    }

    EvalReport rep;
    rep.dataset = dataset.manifest.dataset_name;
    rep.mse = sq_norm.empty() ? std::numeric_limits<double>::infinity()
                              : mean_of(sq_norm);
    rep.mse_raw = mean_of(sq_raw);
    for (auto& [name, bucket] : baseline_sq)
        rep.baseline_mse[name] = mean_of(bucket);
    rep.config_hash = config_hash(model.config());
    rep.n_series = n_series;
    rep.n_points = sq_norm.size();
    rep.wall_clock_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    return rep;
}

std::string report_to_text(const EvalReport& r) {
    auto flt = [](double v) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        return std::string(buf);
    };
    std::ostringstream os;
    os << "dataset " << r.dataset << '\n';
    os << "variant " << r.variant << '\n';
    os << "seed " << r.seed << '\n';
    os << "k " << r.k << '\n';
    os << "zero_shot " << (r.zero_shot ? 1 : 0) << '\n';
    os << "n_series " << r.n_series << '\n';
    os << "n_points " << r.n_points << '\n';
    os << "mse " << flt(r.mse) << '\n';
    os << "mse_raw " << flt(r.mse_raw) << '\n';
    for (const auto& [name, v] : r.baseline_mse)
        os << "baseline_mse " << name << ' ' << flt(v) << '\n';
    os << "config_hash " << r.config_hash << '\n';
    return os.str();
}

void append_metrics_csv(const std::string& path, const EvalReport& r) {
    const bool exists = std::ifstream(path).good();
    std::ofstream out(path, std::ios::app);
    if (!out) throw DataError("cannot write metrics csv: " + path);
    if (!exists) out << "dataset,variant,seed,k,mse\n";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", r.mse);
    out << r.dataset << ',' << r.variant << ',' << r.seed << ',' << r.k << ','
        << buf << '\n';
    for (const auto& [name, v] : r.baseline_mse) {
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        out << r.dataset << ",baseline-" << name << ',' << r.seed << ',' << r.k
            << ',' << buf << '\n';
    }
}

// ---------------------------------------------------------------------------
// trainer

Trainer::Trainer(FlexTsfModel& model, const Dataset& dataset,
                 TrainRegime regime)
    : model_(model), dataset_(dataset), regime_(regime) {
    auto train_split = dataset_.in_split(Split::train);
    if (train_split.empty()) throw DataError("train: empty training split");
    if (dataset_.in_split(Split::val).empty())
        throw DataError("train: empty validation split");
    stats_ = fit_global(train_split);
}

double Trainer::epoch_lr(std::size_t epoch) const {
    return regime_.lr *
           std::pow(regime_.lr_decay, double(epoch / regime_.lr_step_epochs));
}

double Trainer::step_lr(std::size_t step) const {
    if (regime_.kind != RegimeKind::pretrain) return regime_.lr;
    if (regime_.warmup_steps > 0 && step < regime_.warmup_steps)
        return regime_.lr * double(step + 1) / double(regime_.warmup_steps);
    const double span =
        double(std::max<std::size_t>(1, total_steps_ - regime_.warmup_steps));
    const double progress =
        std::min(1.0, double(step - regime_.warmup_steps) / span);
    return regime_.lr * 0.5 * (1.0 + std::cos(3.14159265358979323846 * progress));
}

double Trainer::beta_at(std::size_t step) const {
    const double beta = model_.config().kl_weight;
    if (!regime_.kl_warmup) return beta;
    const double ramp = std::max(1.0, 0.1 * double(total_steps_));
    return beta * std::min(1.0, double(step + 1) / ramp);
}

double Trainer::validate() {
    EvalOptions opts;
    opts.with_baselines = false;
    return evaluate_mse(model_, dataset_, Split::val, opts).mse;
}

TrainResult Trainer::train() {
    const auto train_ptrs = dataset_.in_split(Split::train);
    const double omega_g = dataset_.manifest.time_unit_seconds;
    const bool finetune = regime_.kind == RegimeKind::finetune;
    const std::size_t p = model_.config().patch_len;

    // classic / finetune: fixed 80/20 teacher-forcing pairs
    struct Prepared {
        NormalizedInstance inst;
        std::size_t horizon_start;
    };
    auto prepare_classic = [&]() {
        std::vector<Prepared> out;
        for (const auto* s : train_ptrs) {
            if (s->length() < 5) continue;
            const std::size_t ctx_len =
                static_cast<std::size_t>(std::floor(0.8 * double(s->length())));
            IrregularSeries ctx = series_prefix(*s, ctx_len);
            if (ctx.observed_count() == 0 ||
                s->observed_count() == ctx.observed_count())
                continue;
            out.push_back({context_stat_instance(
                               model_, *s, ctx_len,
                               channel_mean(stats_, s->channel),
                               channel_std(stats_, s->channel), omega_g),
                           ctx_len});
        }
        return out;
    };
    auto prepare_pretrain = [&](RngState& rng) {
        std::vector<Prepared> out;
        for (const auto* s : train_ptrs) {
            auto draw = pretrain_subsequence(
                *s, p, model_.config().horizon_patches_max, rng);
            if (!draw) continue;
            IrregularSeries joined = draw->context;
            joined.times.insert(joined.times.end(), draw->target.times.begin(),
                                draw->target.times.end());
            joined.values.insert(joined.values.end(),
                                 draw->target.values.begin(),
                                 draw->target.values.end());
            joined.observed.insert(joined.observed.end(),
                                   draw->target.observed.begin(),
                                   draw->target.observed.end());
            if (draw->context.observed_count() == 0 ||
                draw->target.observed_count() == 0)
                continue;
            out.push_back({context_stat_instance(
                               model_, joined, draw->context.length(),
                               channel_mean(stats_, s->channel),
                               channel_std(stats_, s->channel), omega_g),
                           draw->context.length()});
        }
        return out;
    };

    // standardization constants are trained state: fitted here, kept frozen
    // through fine-tuning
    if (!finetune && !model_.config().ablation.disable_vt_norm) {
        std::vector<StaticFeatures> corpus;
        for (const auto& prep : prepare_classic())
            corpus.push_back(prep.inst.features);
        if (!corpus.empty())
            model_.feature_standardizer() = FeatureStandardizer::fit(corpus);
    }

    const std::size_t steps_per_epoch =
        (train_ptrs.size() + regime_.batch_size - 1) / regime_.batch_size;
    total_steps_ = std::max<std::size_t>(1, regime_.epochs * steps_per_epoch);

    AdamConfig acfg;
    acfg.lr = regime_.lr;
    acfg.beta1 = regime_.beta1;
    acfg.beta2 = regime_.beta2;
    acfg.weight_decay = regime_.weight_decay;
    acfg.decoupled = regime_.decoupled_wd;
    AdamOptimizer opt(acfg);
    const std::vector<std::string> trainable =
        finetune ? model_.io_group() : std::vector<std::string>{};

    TrainResult result;
    RngState order_rng = RngState(regime_.seed).fork(0x0e0c);
    std::size_t step = 0, bad_steps = 0, patience_left = regime_.patience;
    double best = std::numeric_limits<double>::infinity();
    std::map<std::string, std::vector<double>> best_params;

    std::vector<Prepared> classic_insts;
    if (regime_.kind != RegimeKind::pretrain) classic_insts = prepare_classic();

    for (std::size_t epoch = 0; epoch < regime_.epochs; ++epoch) {
        std::vector<Prepared>* insts = &classic_insts;
        std::vector<Prepared> drawn;
        if (regime_.kind == RegimeKind::pretrain) {
            RngState draw_rng = RngState(regime_.seed).fork(1000 + epoch);
            drawn = prepare_pretrain(draw_rng);
            insts = &drawn;
        }
        if (insts->empty()) throw DataError("train: no usable instances");

        std::vector<std::size_t> order(insts->size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        order_rng.shuffle(order);

        double epoch_loss = 0.0;
        std::size_t epoch_rows = 0;
        for (std::size_t lo = 0; lo < order.size(); lo += regime_.batch_size) {
            const std::size_t hi =
                std::min(order.size(), lo + regime_.batch_size);

            std::vector<SeriesView> views;
            TrainingBatch batch;
            for (std::size_t i = lo; i < hi; ++i) {
                const Prepared& pr = (*insts)[order[i]];
                views.emplace_back(pr.inst.times_prime, pr.inst.values_prime,
                                   pr.inst.observed);
                batch.horizon_start.push_back(pr.horizon_start);
                batch.features.push_back(pr.inst.features);
            }
            batch.padded = make_batch(views, regime_.batch_size);

            const double beta = beta_at(step);
            model_.params().zero_grad();
            double step_loss = 0.0;
            bool finite = true;
            for (std::size_t r = 0; r < batch.padded.rows; ++r) {
                NormalizedInstance inst = batch_row_instance(batch, r);
                try {
                    auto fwd = model_.forward_teacher_forced(
                        inst, batch.horizon_start[r], model_.noise_rng());
                    Tensor loss = model_.loss_elbo(fwd, beta);
                    step_loss += loss.item();
                    finite = finite && std::isfinite(loss.item());
                    backward(mul_scalar(loss, 1.0 / double(batch.padded.rows)));
                } catch (const DataError& e) {
                    // non-finite state mid-forward is a divergence symptom
                    if (std::string(e.what()).find("non-finite") ==
                        std::string::npos)
                        throw;
                    finite = false;
                    break;
                }
            }
            step_loss /= double(batch.padded.rows);

            if (!finite) {
                if (++bad_steps >= 3)
                    throw DivergenceError(
                        "training diverged: non-finite loss on 3 consecutive "
                        "steps (step " +
                        std::to_string(step) + ")");
            } else {
                bad_steps = 0;
                opt.set_lr(regime_.kind == RegimeKind::pretrain
                               ? step_lr(step)
                               : epoch_lr(epoch));
                opt.step(model_.params(), trainable);
            }
            epoch_loss += step_loss * double(hi - lo);
            epoch_rows += hi - lo;
            ++step;
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = epoch_loss / double(epoch_rows);
        rec.val_mse = validate();
        rec.lr = regime_.kind == RegimeKind::pretrain ? step_lr(step - 1)
                                                      : epoch_lr(epoch);
        result.history.push_back(rec);

        if (rec.val_mse < best) {
            best = rec.val_mse;
            result.best_epoch = epoch;
            patience_left = regime_.patience;
            best_params.clear();
            for (const auto& [name, t] : model_.params().items())
                best_params[name] = t.values();
        } else if (--patience_left == 0) {
            break;
        }
    }

    for (auto& [name, vals] : best_params)
        model_.params().get(name).mutable_values() = vals;
    result.best_val_mse = best;
    result.steps = step;
    return result;
}

// ---------------------------------------------------------------------------
// higher-level harnesses

EvalReport zero_shot_eval(const FlexTsfModel& model, const Dataset& dataset,
                          const EvalOptions& opts) {
    EvalReport rep = evaluate_mse(model, dataset, Split::test, opts);
    rep.variant = "zero-shot";
    rep.zero_shot = true;
    return rep;
}

EvalReport few_shot_finetune(FlexTsfModel& model, const Dataset& dataset,
                             std::size_t k, TrainRegime regime,
                             const EvalOptions& opts) {
    if (k == 0) {
        EvalReport rep = zero_shot_eval(model, dataset, opts);
        rep.variant = "few-shot";
        rep.k = 0;
        return rep;
    }

    auto train_ptrs = dataset.in_split(Split::train);
    if (k > train_ptrs.size()) k = train_ptrs.size();  // clamp with warning
    std::vector<std::size_t> order(train_ptrs.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    RngState pick = RngState(regime.seed).fork(0xf5);
    pick.shuffle(order);

    Dataset sub;
    sub.manifest = dataset.manifest;
    sub.manifest.splits.clear();
    for (std::size_t i = 0; i < k; ++i) {
        sub.series.push_back(*train_ptrs[order[i]]);
        sub.manifest.splits[train_ptrs[order[i]]->series_id] = Split::train;
    }
    for (const auto* s : dataset.in_split(Split::val)) {
        sub.series.push_back(*s);
        sub.manifest.splits[s->series_id] = Split::val;
    }

    regime.kind = RegimeKind::finetune;
    Trainer trainer(model, sub, regime);
    trainer.train();

    EvalReport rep = evaluate_mse(model, dataset, Split::test, opts);
    rep.variant = "few-shot";
    rep.k = k;
    rep.seed = regime.seed;
    return rep;
}

std::vector<AblationRow> ablation_suite(const ModelConfig& cfg,
                                        const Dataset& dataset,
                                        TrainRegime regime) {
    auto run = [&](AblationFlags flags) {
        ModelConfig variant_cfg = cfg;
        variant_cfg.ablation = flags;
        FlexTsfModel model(variant_cfg, regime.seed);
        Trainer trainer(model, dataset, regime);
        trainer.train();
        EvalOptions opts;
        opts.with_baselines = false;
        return evaluate_mse(model, dataset, Split::test, opts).mse;
    };

    std::vector<AblationRow> rows;
    const double base = run(AblationFlags{});
    rows.push_back({"base", base, 0.0});

    auto add = [&](const char* name, AblationFlags flags) {
        const double mse = run(flags);
        rows.push_back({name, mse, 100.0 * (mse - base) / base});
    };
    AblationFlags f1;
    f1.disable_vt_norm = true;
    add("vt-norm", f1);
    AblationFlags f2;
    f2.disable_ivp_patcher = true;
    add("ivp-patcher", f2);
    AblationFlags f3;
    f3.disable_led_extras = true;
    add("led-attention", f3);
    return rows;
}

}  // namespace flextsf
