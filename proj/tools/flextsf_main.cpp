// Command-line front end: synth, train, pretrain, finetune, eval, forecast,
// ablate. Every run echoes its resolved configuration into the output
// directory; all randomness flows from --seed.

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "flextsf/checkpoint.hpp"
#include "flextsf/diag.hpp"
#include "flextsf/model.hpp"
#include "flextsf/series.hpp"
#include "flextsf/train_eval.hpp"

namespace fs = std::filesystem;
using namespace flextsf;

namespace {

// exit codes: 2 config, 3 missing file, 4 data contract, 5 divergence
constexpr int kExitConfig = 2;
constexpr int kExitMissingFile = 3;
constexpr int kExitData = 4;
constexpr int kExitDivergence = 5;

int fail(int code, const std::string& msg) {
    std::cerr << "flextsf-error code=" << code << " msg=\"" << msg << "\"\n";
    return code;
}

std::string fmt_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

struct ModelFlags {
    std::string preset = "classic";
    std::size_t patch_len = 8;
    std::size_t latent_dim = 0;  // 0: keep preset value
    std::size_t heads = 0;
    std::size_t head_dim = 0;
    std::size_t layers = 0;
    std::size_t solver_hidden = 0;
    std::string solver = "resnet-flow";
    std::size_t rk4_steps_per_unit = 4;
    double rotary_base = 10000.0;
    double rotary_tau_scale = 1.0;
    double kl_weight = 1.0;
    std::string sample_mode = "sample";
    std::size_t horizon_patches_max = 4;
    bool disable_vt_norm = false;
    bool disable_ivp_patcher = false;
    bool disable_led_extras = false;

    ModelConfig build() const {
        ModelConfig cfg;
        if (preset == "classic")
            cfg = ModelConfig::classic();
        else if (preset == "large")
            cfg = ModelConfig::large();
        else
            throw ConfigError("unknown preset '" + preset + "'");
        cfg.patch_len = patch_len;
        if (latent_dim) cfg.latent_dim = latent_dim;
        if (heads) cfg.heads = heads;
        if (head_dim) cfg.head_dim = head_dim;
        if (layers) cfg.layers = layers;
        if (solver_hidden)
            cfg.solver_hidden = solver_hidden;
        else
            cfg.solver_hidden = cfg.latent_dim;
        auto kind = solver_kind_from_string(solver);
        if (!kind) throw ConfigError("unknown solver '" + solver + "'");
        cfg.solver_kind = *kind;
        cfg.rk4_steps_per_unit = rk4_steps_per_unit;
        cfg.rotary_base = rotary_base;
        cfg.rotary_tau_scale = rotary_tau_scale;
        cfg.kl_weight = kl_weight;
        if (sample_mode != "sample" && sample_mode != "mean")
            throw ConfigError("sample mode must be 'sample' or 'mean'");
        cfg.sample_posterior = sample_mode == "sample";
        cfg.horizon_patches_max = horizon_patches_max;
        cfg.ablation.disable_vt_norm = disable_vt_norm;
        cfg.ablation.disable_ivp_patcher = disable_ivp_patcher;
        cfg.ablation.disable_led_extras = disable_led_extras;
        cfg.validate();
        return cfg;
    }
};

void add_model_options(CLI::App* app, ModelFlags& f) {
    app->add_option("--preset", f.preset, "model preset: classic or large")
        ->capture_default_str();
    app->add_option("--patch-len", f.patch_len, "patch length p")
        ->capture_default_str();
    app->add_option("--latent-dim", f.latent_dim,
                    "latent dim d_z (0 keeps the preset; must equal "
                    "heads*head_dim)")
        ->capture_default_str();
    app->add_option("--heads", f.heads, "attention heads (0 keeps preset)")
        ->capture_default_str();
    app->add_option("--head-dim", f.head_dim, "per-head dim (0 keeps preset)")
        ->capture_default_str();
    app->add_option("--layers", f.layers, "attention layers (0 keeps preset)")
        ->capture_default_str();
    app->add_option("--solver", f.solver, "ivp solver: resnet-flow or rk4-ode")
        ->capture_default_str();
    app->add_option("--solver-hidden", f.solver_hidden,
                    "solver hidden width (0: same as latent dim)")
        ->capture_default_str();
    app->add_option("--rk4-steps-per-unit", f.rk4_steps_per_unit,
                    "rk4 steps per unit time")
        ->capture_default_str();
    app->add_option("--rotary-base", f.rotary_base, "rotary base")
        ->capture_default_str();
    app->add_option("--rotary-tau-scale", f.rotary_tau_scale,
                    "scale applied to time indicators before rotation")
        ->capture_default_str();
    app->add_option("--kl-weight", f.kl_weight, "ELBO beta")
        ->capture_default_str();
    app->add_option("--sample-mode", f.sample_mode,
                    "posterior draw during training: sample or mean")
        ->capture_default_str();
    app->add_option("--horizon-patches-max", f.horizon_patches_max,
                    "max horizon patches per pre-training draw")
        ->capture_default_str();
    app->add_flag("--disable-vt-norm", f.disable_vt_norm,
                  "ablation: raw values, zero leader vector");
    app->add_flag("--disable-ivp-patcher", f.disable_ivp_patcher,
                  "ablation: flat linear patch maps");
    app->add_flag("--disable-led-extras", f.disable_led_extras,
                  "ablation: no leader/rotary, index embeddings");
}

struct RegimeFlags {
    std::size_t epochs = 0;  // 0 keeps regime default
    std::size_t batch_size = 64;
    double lr = 0.0;  // 0 keeps default
    double weight_decay = -1.0;
    std::size_t patience = 10;
    std::size_t warmup_steps = std::size_t(-1);
    std::size_t lr_step_epochs = 20;
    double lr_decay = 0.5;
    bool no_kl_warmup = false;

    TrainRegime build(RegimeKind kind, std::uint64_t seed) const {
        TrainRegime r;
        switch (kind) {
            case RegimeKind::classic: r = TrainRegime::classic_defaults(); break;
            case RegimeKind::pretrain:
                r = TrainRegime::pretrain_defaults();
                break;
            case RegimeKind::finetune:
                r = TrainRegime::finetune_defaults();
                break;
        }
        if (epochs) r.epochs = epochs;
        r.batch_size = batch_size;
        if (lr > 0.0) r.lr = lr;
        if (weight_decay >= 0.0) r.weight_decay = weight_decay;
        r.patience = patience;
        if (warmup_steps != std::size_t(-1)) r.warmup_steps = warmup_steps;
        r.lr_step_epochs = lr_step_epochs;
        r.lr_decay = lr_decay;
        r.kl_warmup = !no_kl_warmup;
        r.seed = seed;
        return r;
    }
};

void add_regime_options(CLI::App* app, RegimeFlags& f) {
    app->add_option("--epochs", f.epochs, "epoch budget (0: regime default)")
        ->capture_default_str();
    app->add_option("--batch-size", f.batch_size, "series per optimizer step")
        ->capture_default_str();
    app->add_option("--lr", f.lr, "learning rate (0: regime default)")
        ->capture_default_str();
    app->add_option("--weight-decay", f.weight_decay,
                    "weight decay (<0: regime default)")
        ->capture_default_str();
    app->add_option("--patience", f.patience,
                    "early-stopping patience on validation MSE")
        ->capture_default_str();
    app->add_option("--warmup-steps", f.warmup_steps,
                    "pretrain warmup steps (default 1000)")
        ->capture_default_str();
    app->add_option("--lr-step-epochs", f.lr_step_epochs,
                    "epochs between step decays")
        ->capture_default_str();
    app->add_option("--lr-decay", f.lr_decay, "step decay factor")
        ->capture_default_str();
    app->add_flag("--no-kl-warmup", f.no_kl_warmup,
                  "disable the beta ramp over the first 10% of steps");
}

Dataset load_dataset(const std::string& data_path,
                     const std::string& manifest_path, std::uint64_t seed) {
    Dataset ds;
    if (!manifest_path.empty()) {
        DatasetManifest m = load_manifest(manifest_path);
        ds = load_csv(data_path, &m);
    } else {
        ds = load_csv(data_path);
    }
    if (ds.manifest.splits.empty()) assign_splits(ds, seed);
    return ds;
}

void write_text(const fs::path& path, const std::string& content) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write file: " + path.string());
    out << content;
}

void write_config_echo(CLI::App* root, const fs::path& outdir) {
    fs::create_directories(outdir);
    write_text(outdir / "config.echo", root->config_to_str(true, false));
}

void write_history_csv(const fs::path& path, const TrainResult& res) {
    std::ofstream out(path);
    out << "epoch,train_loss,val_mse,lr\n";
    for (const auto& rec : res.history)
        out << rec.epoch << ',' << fmt_double(rec.train_loss) << ','
            << fmt_double(rec.val_mse) << ',' << fmt_double(rec.lr) << '\n';
}

int run_training(RegimeKind kind, const std::string& data,
                 const std::string& manifest, const std::string& out,
                 const ModelFlags& mf, const RegimeFlags& rf,
                 std::uint64_t seed, const std::string& init_checkpoint) {
    Dataset ds = load_dataset(data, manifest, seed);
    TrainRegime regime = rf.build(kind, seed);

    std::unique_ptr<FlexTsfModel> model;
    if (!init_checkpoint.empty()) {
        model = std::make_unique<FlexTsfModel>(
            load_checkpoint_model(init_checkpoint));
    } else {
        model = std::make_unique<FlexTsfModel>(mf.build(), seed);
    }

    Trainer trainer(*model, ds, regime);
    TrainResult res = trainer.train();

    fs::path outdir(out);
    fs::create_directories(outdir);
    save_checkpoint((outdir / "checkpoint.bin").string(), *model);
    write_history_csv(outdir / "history.csv", res);

    EvalOptions opts;
    EvalReport rep = evaluate_mse(*model, ds, Split::test, opts);
    rep.variant = regime_name(kind);
    rep.seed = seed;
    write_text(outdir / "report.txt", report_to_text(rep));
    append_metrics_csv((outdir / "metrics.csv").string(), rep);

    std::cout << "trained " << res.history.size() << " epochs (best epoch "
              << res.best_epoch << ", val mse " << fmt_double(res.best_val_mse)
              << "), test mse " << fmt_double(rep.mse) << "\n"
              << "parameters: " << model->count_parameters() << "\n"
              << "artifacts in " << outdir.string() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"FlexTSF forecasting toolkit"};
    app.require_subcommand(1);
    // one config file for the whole invocation; keys are dotted
    // (`eval.checkpoint=...`), exactly what config.echo contains. Place
    // --config before the subcommand name.
    app.set_config("--config", "", "read options from a config file");

    // ---- synth ----
    auto* synth = app.add_subcommand("synth", "generate a synthetic corpus");
    std::string synth_kind = "sine", synth_out = "out";
    std::size_t synth_n = 100, synth_lo = 60, synth_hi = 120;
    std::uint64_t synth_seed = 0;
    synth->add_option("--kind", synth_kind,
                      "sine | mixed-freq-sine | scale-shifted-sine | "
                      "drop-masked-sine")
        ->capture_default_str();
    synth->add_option("--n-series", synth_n, "series count")
        ->capture_default_str();
    synth->add_option("--len-lo", synth_lo, "min length")->capture_default_str();
    synth->add_option("--len-hi", synth_hi, "max length")->capture_default_str();
    double synth_period_lo = 20.0, synth_period_hi = 40.0;
    synth->add_option("--period-lo", synth_period_lo,
                      "min base period (time units)")
        ->capture_default_str();
    synth->add_option("--period-hi", synth_period_hi,
                      "max base period (time units)")
        ->capture_default_str();
    synth->add_option("--seed", synth_seed, "rng seed")->capture_default_str();
    synth->add_option("--out", synth_out, "output directory")
        ->capture_default_str();


    // ---- train / pretrain ----
    std::string tr_data, tr_manifest, tr_out = "out", tr_init;
    std::uint64_t tr_seed = 0;
    ModelFlags tr_model;
    RegimeFlags tr_regime;
    auto* train =
        app.add_subcommand("train", "classic supervised training (80/20)");
    train->add_option("--data", tr_data, "input csv")->required();
    train->add_option("--manifest", tr_manifest, "manifest file");
    train->add_option("--out", tr_out, "output directory")
        ->capture_default_str();
    train->add_option("--seed", tr_seed, "rng seed")->capture_default_str();
    train->add_option("--init-checkpoint", tr_init,
                      "start from an existing checkpoint");
    add_model_options(train, tr_model);
    add_regime_options(train, tr_regime);


    std::string pt_data, pt_manifest, pt_out = "out", pt_init;
    std::uint64_t pt_seed = 0;
    ModelFlags pt_model;
    RegimeFlags pt_regime;
    auto* pretrain = app.add_subcommand(
        "pretrain", "self-supervised pre-training on sub-sequences");
    pretrain->add_option("--data", pt_data, "input csv")->required();
    pretrain->add_option("--manifest", pt_manifest, "manifest file");
    pretrain->add_option("--out", pt_out, "output directory")
        ->capture_default_str();
    pretrain->add_option("--seed", pt_seed, "rng seed")->capture_default_str();
    pretrain->add_option("--init-checkpoint", pt_init,
                         "start from an existing checkpoint");
    add_model_options(pretrain, pt_model);
    add_regime_options(pretrain, pt_regime);


    // ---- finetune ----
    std::string ft_data, ft_manifest, ft_out = "out", ft_ckpt;
    std::uint64_t ft_seed = 0;
    std::vector<std::size_t> ft_grid = {10, 50, 100, 500};
    RegimeFlags ft_regime;
    auto* finetune = app.add_subcommand(
        "finetune", "few-shot fine-tuning of the io parameter group");
    finetune->add_option("--checkpoint", ft_ckpt, "pre-trained checkpoint")
        ->required();
    finetune->add_option("--data", ft_data, "target dataset csv")->required();
    finetune->add_option("--manifest", ft_manifest, "manifest file");
    finetune->add_option("--k-grid", ft_grid,
                         "fine-tuning sample counts (0 = zero-shot)")
        ->capture_default_str();
    finetune->add_option("--out", ft_out, "output directory")
        ->capture_default_str();
    finetune->add_option("--seed", ft_seed, "rng seed")->capture_default_str();
    add_regime_options(finetune, ft_regime);


    // ---- eval ----
    std::string ev_data, ev_manifest, ev_out = "out", ev_ckpt,
                ev_split = "test";
    std::uint64_t ev_seed = 0;
    bool ev_zero_shot = false, ev_raw = false;
    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
    eval->add_option("--checkpoint", ev_ckpt, "checkpoint file")->required();
    eval->add_option("--data", ev_data, "dataset csv")->required();
    eval->add_option("--manifest", ev_manifest, "manifest file");
    eval->add_option("--split", ev_split, "train | val | test")
        ->capture_default_str();
    eval->add_flag("--zero-shot", ev_zero_shot,
                   "flag the run as zero-shot (stats from this dataset's "
                   "train split; no parameter updates either way)");
    eval->add_flag("--raw-scale", ev_raw, "also report raw-scale MSE");
    eval->add_option("--out", ev_out, "output directory")
        ->capture_default_str();
    eval->add_option("--seed", ev_seed, "report seed tag")
        ->capture_default_str();


    // ---- forecast ----
    std::string fc_data, fc_manifest, fc_out = "out", fc_ckpt;
    std::uint64_t fc_seed = 0;
    std::size_t fc_future = 0;
    auto* forecast = app.add_subcommand(
        "forecast", "emit point forecasts for each series (80/20 split, or "
                    "--future-steps past the end)");
    forecast->add_option("--checkpoint", fc_ckpt, "checkpoint file")
        ->required();
    forecast->add_option("--data", fc_data, "dataset csv")->required();
    forecast->add_option("--manifest", fc_manifest, "manifest file");
    forecast->add_option("--future-steps", fc_future,
                         "forecast this many steps past each series' end "
                         "instead of the 20% holdout");
    forecast->add_option("--out", fc_out, "output directory")
        ->capture_default_str();
    forecast->add_option("--seed", fc_seed, "rng seed")->capture_default_str();


    // ---- ablate ----
    std::string ab_data, ab_manifest, ab_out = "out";
    std::uint64_t ab_seed = 0;
    ModelFlags ab_model;
    RegimeFlags ab_regime;
    auto* ablate = app.add_subcommand(
        "ablate", "train base and single-component-removed variants");
    ablate->add_option("--data", ab_data, "dataset csv")->required();
    ablate->add_option("--manifest", ab_manifest, "manifest file");
    ablate->add_option("--out", ab_out, "output directory")
        ->capture_default_str();
    ablate->add_option("--seed", ab_seed, "rng seed")->capture_default_str();
    add_model_options(ablate, ab_model);
    add_regime_options(ablate, ab_regime);


    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        app.exit(e);
        return kExitConfig;
    }

    try {
        if (synth->parsed()) {
            auto kind = synthetic_kind_from_string(synth_kind);
            if (!kind)
                throw ConfigError("unknown synthetic kind '" + synth_kind + "'");
            SyntheticParams sp;
            sp.n_series = synth_n;
            sp.len_lo = synth_lo;
            sp.len_hi = synth_hi;
            sp.period_lo = synth_period_lo;
            sp.period_hi = synth_period_hi;
            Dataset ds = make_synthetic(*kind, sp, synth_seed);
            fs::path outdir(synth_out);
            write_config_echo(&app, outdir);
            write_csv((outdir / "data.csv").string(), ds.series);
            save_manifest((outdir / "manifest.txt").string(), ds.manifest);
            std::cout << "wrote " << ds.series.size() << " series to "
                      << (outdir / "data.csv").string() << "\n";
            return 0;
        }
        if (train->parsed()) {
            write_config_echo(&app, tr_out);
            return run_training(RegimeKind::classic, tr_data, tr_manifest,
                                tr_out, tr_model, tr_regime, tr_seed, tr_init);
        }
        if (pretrain->parsed()) {
            write_config_echo(&app, pt_out);
            return run_training(RegimeKind::pretrain, pt_data, pt_manifest,
                                pt_out, pt_model, pt_regime, pt_seed, pt_init);
        }
        if (finetune->parsed()) {
            fs::path outdir(ft_out);
            write_config_echo(&app, outdir);
            Dataset ds = load_dataset(ft_data, ft_manifest, ft_seed);
            std::string all_reports;
            for (std::size_t k : ft_grid) {
                FlexTsfModel model = load_checkpoint_model(ft_ckpt);
                TrainRegime regime =
                    ft_regime.build(RegimeKind::finetune, ft_seed);
                EvalReport rep = few_shot_finetune(model, ds, k, regime);
                rep.seed = ft_seed;
                append_metrics_csv((outdir / "metrics.csv").string(), rep);
                all_reports += report_to_text(rep) + "\n";
                std::cout << "k=" << k << " mse " << fmt_double(rep.mse)
                          << "\n";
            }
            write_text(outdir / "report.txt", all_reports);
            return 0;
        }
        if (eval->parsed()) {
            fs::path outdir(ev_out);
            write_config_echo(&app, outdir);
            Dataset ds = load_dataset(ev_data, ev_manifest, ev_seed);
            FlexTsfModel model = load_checkpoint_model(ev_ckpt);
            EvalOptions opts;
            opts.raw_scale = ev_raw;
            EvalReport rep;
            if (ev_zero_shot) {
                rep = zero_shot_eval(model, ds, opts);
            } else {
                auto split = split_from_string(ev_split);
                if (!split)
                    throw ConfigError("unknown split '" + ev_split + "'");
                rep = evaluate_mse(model, ds, *split, opts);
            }
            rep.seed = ev_seed;
            write_text(outdir / "report.txt", report_to_text(rep));
            append_metrics_csv((outdir / "metrics.csv").string(), rep);
            std::cout << report_to_text(rep)
                      << "wall_clock_seconds " << rep.wall_clock_seconds
                      << "\n";
            return 0;
        }
        if (forecast->parsed()) {
            fs::path outdir(fc_out);
            write_config_echo(&app, outdir);
            Dataset ds = load_dataset(fc_data, fc_manifest, fc_seed);
            FlexTsfModel model = load_checkpoint_model(fc_ckpt);
            auto stats = fit_global(ds.in_split(Split::train).empty()
                                        ? [&] {
                                              std::vector<const IrregularSeries*>
                                                  all;
                                              for (const auto& s : ds.series)
                                                  all.push_back(&s);
                                              return all;
                                          }()
                                        : ds.in_split(Split::train));
            std::ofstream out(outdir / "forecast.csv");
            if (!out)
                throw DataError("cannot write forecast.csv in " + fc_out);
            out << "series_id,channel,time,value_pred\n";
            std::size_t rows = 0;
            for (const auto& s : ds.series) {
                if (s.length() < 5) continue;
                IrregularSeries ctx;
                std::vector<double> horizon;
                if (fc_future > 0) {
                    ctx = s;
                    TimeNorm tn =
                        normalize_times(s.times, ds.manifest.time_unit_seconds);
                    double t = s.times.back();
                    for (std::size_t i = 0; i < fc_future; ++i)
                        horizon.push_back(t += tn.omega_i);
                } else {
                    auto [c, h] = split_context_horizon(s);
                    ctx = std::move(c);
                    horizon = h.times;
                }
                if (ctx.observed_count() == 0) continue;
                auto pred = model.generate(
                    ctx, horizon, stats.at(s.channel).mean,
                    stats.at(s.channel).std, ds.manifest.time_unit_seconds);
                for (std::size_t i = 0; i < horizon.size(); ++i) {
                    out << s.series_id << ',' << s.channel << ','
                        << fmt_double(horizon[i]) << ',' << fmt_double(pred[i])
                        << '\n';
                    ++rows;
                }
            }
            std::cout << "wrote " << rows << " forecast rows\n";
            return 0;
        }
        if (ablate->parsed()) {
            fs::path outdir(ab_out);
            write_config_echo(&app, outdir);
            Dataset ds = load_dataset(ab_data, ab_manifest, ab_seed);
            TrainRegime regime =
                ab_regime.build(RegimeKind::classic, ab_seed);
            auto rows = ablation_suite(ab_model.build(), ds, regime);
            std::ostringstream rep;
            rep << "variant mse mse_change_percent\n";
            for (const auto& row : rows) {
                char delta[32];
                std::snprintf(delta, sizeof(delta), "%+.2f%%",
                              row.delta_percent);
                rep << row.name << ' ' << fmt_double(row.mse) << ' ' << delta
                    << '\n';
                EvalReport r;
                r.dataset = ds.manifest.dataset_name;
                r.variant = row.name;
                r.seed = ab_seed;
                r.mse = row.mse;
                append_metrics_csv((outdir / "metrics.csv").string(), r);
            }
            write_text(outdir / "report.txt", rep.str());
            std::cout << rep.str();
            return 0;
        }
    } catch (const ConfigError& e) {
        return fail(kExitConfig, e.what());
    } catch (const DivergenceError& e) {
        return fail(kExitDivergence, e.what());
    } catch (const DataError& e) {
        const std::string msg = e.what();
        if (msg.rfind("cannot open", 0) == 0 || msg.find("cannot open") != std::string::npos)
            return fail(kExitMissingFile, msg);
        return fail(kExitData, msg);
    } catch (const std::exception& e) {
        return fail(1, e.what());
    }
    return 0;
}
