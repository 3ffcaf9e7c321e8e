#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace flextsf {

struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// One univariate channel: (timestamp, value) pairs with an observation mask.
// Timestamps are seconds, strictly increasing. Missing values keep their
// timestamp; the stored value is a 0.0 placeholder with observed = 0.
struct IrregularSeries {
    std::string series_id;
    std::string channel;
    std::vector<double> times;
    std::vector<double> values;
    std::vector<std::uint8_t> observed;

    std::size_t length() const { return times.size(); }
    std::size_t observed_count() const;
    void validate() const;
};

enum class Split { train, val, test };

const char* split_name(Split s);
std::optional<Split> split_from_string(const std::string& s);

struct DatasetManifest {
    std::string dataset_name;
    double time_unit_seconds = 0.0;  // omega_g; 0 means "compute from data"
    std::uint64_t split_seed = 0;
    std::map<std::string, double> channel_mean;  // optional, fitted stats
    std::map<std::string, double> channel_std;
    std::map<std::string, Split> splits;  // per series_id
};

struct SplitSpec {
    double context_fraction = 0.8;
    double horizon_fraction = 0.2;
};

struct Dataset {
    std::vector<IrregularSeries> series;
    DatasetManifest manifest;

    std::vector<const IrregularSeries*> in_split(Split s) const;
};

// CSV contract: header `series_id,channel,time,value`; `time` in seconds as
// a decimal; an empty `value` field is missing-but-timestamped; rows grouped
// by series and sorted by time within each channel.
Dataset load_csv(const std::string& path,
                 const DatasetManifest* manifest = nullptr);
void write_csv(const std::string& path,
               const std::vector<IrregularSeries>& series);

DatasetManifest load_manifest(const std::string& path);
void save_manifest(const std::string& path, const DatasetManifest& m);

// dataset-wide minimum positive interval; the omega_g fallback
double min_positive_interval(const std::vector<IrregularSeries>& series);

// Rank-based 8:1:1 assignment: ids ordered by a seeded hash, then cut by
// count, so any dataset with >= 10 series populates every split.
void assign_splits(Dataset& ds, std::uint64_t seed);

// context gets floor(context_fraction * M) points, horizon the rest
std::pair<IrregularSeries, IrregularSeries> split_context_horizon(
    const IrregularSeries& s, const SplitSpec& spec = {});

enum class SyntheticKind {
    sine,               // regular unit gaps, random period/phase
    mixed_freq_sine,    // two components, wide period spread, irregular gaps
    scale_shifted_sine, // per-series amplitude/offset shifts, regular gaps
    drop_masked_sine,   // irregular gaps plus 30% masked observations
};

std::optional<SyntheticKind> synthetic_kind_from_string(const std::string& s);
const char* synthetic_kind_name(SyntheticKind k);

struct SyntheticParams {
    std::size_t n_series = 100;
    std::size_t len_lo = 60;
    std::size_t len_hi = 120;
    double period_lo = 20.0;  // base period range in time units
    double period_hi = 40.0;
};

Dataset make_synthetic(SyntheticKind kind, const SyntheticParams& params,
                       std::uint64_t seed);
Dataset make_synthetic(SyntheticKind kind, std::size_t n_series,
                       std::size_t len_lo, std::size_t len_hi,
                       std::uint64_t seed);

// ---------------------------------------------------------------------------
// padded batches

struct SeriesView {
    const std::vector<double>* times = nullptr;
    const std::vector<double>* values = nullptr;
    const std::vector<std::uint8_t>* observed = nullptr;

    SeriesView() = default;
    SeriesView(const std::vector<double>& t, const std::vector<double>& v,
               const std::vector<std::uint8_t>& o)
        : times(&t), values(&v), observed(&o) {}
    explicit SeriesView(const IrregularSeries& s)
        : times(&s.times), values(&s.values), observed(&s.observed) {}
};

// Right-padded (rows x cols) matrices. `valid` marks real positions and is
// distinct from `observed`, which is the pass-through observation mask.
struct Batch {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> values;
    std::vector<double> times;
    std::vector<std::uint8_t> observed;
    std::vector<std::uint8_t> valid;
    std::vector<std::size_t> lengths;

    double value_at(std::size_t r, std::size_t c) const {
        return values[r * cols + c];
    }
    double time_at(std::size_t r, std::size_t c) const {
        return times[r * cols + c];
    }
    bool observed_at(std::size_t r, std::size_t c) const {
        return observed[r * cols + c] != 0;
    }
    bool valid_at(std::size_t r, std::size_t c) const {
        return valid[r * cols + c] != 0;
    }
};

Batch make_batch(const std::vector<SeriesView>& rows, std::size_t max_batch);

}  // namespace flextsf
