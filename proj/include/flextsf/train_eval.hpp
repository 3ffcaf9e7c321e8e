#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "flextsf/model.hpp"
#include "flextsf/series.hpp"
#include "flextsf/vt_norm.hpp"

namespace flextsf {

struct DivergenceError : std::runtime_error {
    explicit DivergenceError(const std::string& msg)
        : std::runtime_error(msg) {}
};

enum class RegimeKind { classic, pretrain, finetune };

const char* regime_name(RegimeKind k);
std::optional<RegimeKind> regime_from_string(const std::string& s);

// Optimizer settings per regime: classic/finetune use Adam with step decay,
// pre-training uses AdamW with linear warmup into a cosine schedule.
struct TrainRegime {
    RegimeKind kind = RegimeKind::classic;
    double lr = 1e-4;
    double weight_decay = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    bool decoupled_wd = false;
    std::size_t warmup_steps = 0;
    std::size_t lr_step_epochs = 20;
    double lr_decay = 0.5;
    std::size_t epochs = 50;
    std::size_t batch_size = 64;
    std::size_t patience = 10;
    bool kl_warmup = true;  // beta ramps over the first 10% of steps
    std::uint64_t seed = 0;

    static TrainRegime classic_defaults();
    static TrainRegime pretrain_defaults();
    static TrainRegime finetune_defaults();
};

struct EpochRecord {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double val_mse = 0.0;
    double lr = 0.0;
};

struct TrainResult {
    std::vector<EpochRecord> history;
    std::size_t best_epoch = 0;
    double best_val_mse = 0.0;
    std::size_t steps = 0;
};

// One padded batch plus everything forward needs per row.
struct TrainingBatch {
    Batch padded;
    std::vector<std::size_t> horizon_start;  // per row, index into the row
    std::vector<StaticFeatures> features;    // per row
};

// row r of the padded batch back as a NormalizedInstance (valid cells only)
NormalizedInstance batch_row_instance(const TrainingBatch& batch,
                                      std::size_t row);

// mean per-row ELBO over the batch; reads exclusively through the padded
// matrices, so padding cells cannot reach the loss
Tensor batch_loss(const FlexTsfModel& model, const TrainingBatch& batch,
                  RngState& noise, double beta);

struct EvalOptions {
    bool raw_scale = false;
    bool with_baselines = true;
    SplitSpec split;
};

struct EvalReport {
    std::string dataset;
    std::string variant = "base";
    std::uint64_t seed = 0;
    std::size_t k = 0;  // few-shot sample count
    double mse = 0.0;   // normalized scale, observed horizon points only
    double mse_raw = 0.0;
    std::map<std::string, double> baseline_mse;
    std::string config_hash;
    bool zero_shot = false;
    std::size_t n_series = 0;
    std::size_t n_points = 0;
    double wall_clock_seconds = 0.0;  // reported on stdout, never serialized
};

// structured text (documented keys, deterministic order, no wall clock)
std::string report_to_text(const EvalReport& r);
void append_metrics_csv(const std::string& path, const EvalReport& r);
std::string config_hash(const ModelConfig& cfg);

enum class BaselineKind { mean, last_value, linear_trend };

// mean / last observed value / least-squares line over the observed context
std::vector<double> baseline_forecast(BaselineKind kind,
                                      const IrregularSeries& context,
                                      const std::vector<double>& horizon_times);

class Trainer {
public:
    Trainer(FlexTsfModel& model, const Dataset& dataset, TrainRegime regime);

    // best-validation parameters are restored into the model on return
    TrainResult train();

    const std::map<std::string, GlobalStats>& global_stats() const {
        return stats_;
    }

private:
    double epoch_lr(std::size_t epoch) const;
    double step_lr(std::size_t step) const;
    double beta_at(std::size_t step) const;
    double validate();

    FlexTsfModel& model_;
    const Dataset& dataset_;
    TrainRegime regime_;
    std::map<std::string, GlobalStats> stats_;
    std::size_t total_steps_ = 0;
};

// MSE on the normalized scale over observed horizon points; the metric's
// normalization is the standard VT chain regardless of model ablations
EvalReport evaluate_mse(const FlexTsfModel& model, const Dataset& dataset,
                        Split split, const EvalOptions& opts = {});

// fits global stats on the unseen dataset's train split (statistics, not
// learned parameters); model parameters are never touched
EvalReport zero_shot_eval(const FlexTsfModel& model, const Dataset& dataset,
                          const EvalOptions& opts = {});

// io_group-only updates on k samples; k = 0 degenerates to zero-shot
EvalReport few_shot_finetune(FlexTsfModel& model, const Dataset& dataset,
                             std::size_t k, TrainRegime regime,
                             const EvalOptions& opts = {});

struct AblationRow {
    std::string name;  // "base", "vt-norm", "ivp-patcher", "led-attention"
    double mse = 0.0;
    double delta_percent = 0.0;  // vs base
};

// trains each single-flag variant with an identical budget and seed
std::vector<AblationRow> ablation_suite(const ModelConfig& cfg,
                                        const Dataset& dataset,
                                        TrainRegime regime);

}  // namespace flextsf
