#include "flextsf/series.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "flextsf/rng.hpp"

namespace flextsf {

std::size_t IrregularSeries::observed_count() const {
    std::size_t n = 0;
    for (auto o : observed) n += (o != 0);
    return n;
}

void IrregularSeries::validate() const {
    if (times.size() != values.size() || times.size() != observed.size())
        throw DataError("series " + series_id + "/" + channel +
                        ": times/values/observed lengths differ");
    for (std::size_t i = 1; i < times.size(); ++i)
        if (!(times[i] > times[i - 1]))
            throw DataError("series " + series_id + "/" + channel +
                            ": timestamps not strictly increasing at index " +
                            std::to_string(i));
}

const char* split_name(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::val: return "val";
        case Split::test: return "test";
    }
    return "?";
}

std::optional<Split> split_from_string(const std::string& s) {
    if (s == "train") return Split::train;
    if (s == "val") return Split::val;
    if (s == "test") return Split::test;
    return std::nullopt;
}

std::vector<const IrregularSeries*> Dataset::in_split(Split s) const {
    std::vector<const IrregularSeries*> out;
    for (const auto& sr : series) {
        auto it = manifest.splits.find(sr.series_id);
        if (it != manifest.splits.end() && it->second == s) out.push_back(&sr);
    }
    return out;
}

// ---------------------------------------------------------------------------
// CSV

namespace {

bool parse_double(const std::string& field, double& out) {
    const char* first = field.data();
    const char* last = field.data() + field.size();
    auto [ptr, ec] = std::from_chars(first, last, out);
    return ec == std::errc() && ptr == last;
}

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

std::string fmt_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

Dataset load_csv(const std::string& path, const DatasetManifest* manifest) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open csv file: " + path);

    std::string line;
    if (!std::getline(in, line)) throw DataError(path + ": empty file");
    if (split_fields(line) !=
        std::vector<std::string>{"series_id", "channel", "time", "value"})
        throw DataError(path + ": bad header, expected "
                        "series_id,channel,time,value");

    Dataset ds;
    std::map<std::pair<std::string, std::string>, std::size_t> index;
    std::string prev_sid;
    std::map<std::string, bool> sid_closed;

    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty()) continue;
        auto f = split_fields(line);
        if (f.size() != 4)
            throw DataError(path + ": row " + std::to_string(row) +
                            ": expected 4 fields, got " +
                            std::to_string(f.size()));
        const std::string& sid = f[0];
        const std::string& ch = f[1];
        double t;
        if (!parse_double(f[2], t))
            throw DataError(path + ": row " + std::to_string(row) +
                            ": unparseable time '" + f[2] + "'");
        bool obs = !f[3].empty();
        double v = 0.0;
        if (obs && !parse_double(f[3], v))
            throw DataError(path + ": row " + std::to_string(row) +
                            ": unparseable value '" + f[3] + "'");

        if (sid != prev_sid) {
            if (sid_closed.count(sid))
                throw DataError(path + ": row " + std::to_string(row) +
                                ": series '" + sid +
                                "' reappears after other series; rows must be "
                                "grouped by series");
            if (!prev_sid.empty()) sid_closed[prev_sid] = true;
            prev_sid = sid;
        }

        auto key = std::make_pair(sid, ch);
        auto it = index.find(key);
        if (it == index.end()) {
            index[key] = ds.series.size();
            IrregularSeries s;
            s.series_id = sid;
            s.channel = ch;
            ds.series.push_back(std::move(s));
            it = index.find(key);
        }
        IrregularSeries& s = ds.series[it->second];
        if (!s.times.empty() && !(t > s.times.back()))
            throw DataError(path + ": row " + std::to_string(row) +
                            ": non-monotone timestamp for series '" + sid +
                            "' channel '" + ch + "'");
        s.times.push_back(t);
        s.values.push_back(v);
        s.observed.push_back(obs ? 1 : 0);
    }

    if (manifest) {
        ds.manifest = *manifest;
    } else {
        ds.manifest.dataset_name = path;
    }
    if (ds.manifest.time_unit_seconds <= 0.0)
        ds.manifest.time_unit_seconds = min_positive_interval(ds.series);
    return ds;
}

void write_csv(const std::string& path,
               const std::vector<IrregularSeries>& series) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write csv file: " + path);
    out << "series_id,channel,time,value\n";
    for (const auto& s : series)
        for (std::size_t i = 0; i < s.length(); ++i) {
            out << s.series_id << ',' << s.channel << ',' << fmt_double(s.times[i])
                << ',';
            if (s.observed[i]) out << fmt_double(s.values[i]);
            out << '\n';
        }
}

double min_positive_interval(const std::vector<IrregularSeries>& series) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& s : series)
        for (std::size_t i = 1; i < s.times.size(); ++i) {
            double dt = s.times[i] - s.times[i - 1];
            if (dt > 0.0 && dt < best) best = dt;
        }
    if (!std::isfinite(best))
        throw DataError("cannot infer time unit: no positive interval found");
    return best;
}

// ---------------------------------------------------------------------------
// manifest text format: one `key value...` pair per line

DatasetManifest load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open manifest: " + path);
    DatasetManifest m;
    std::string line;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        std::string key;
        ls >> key;
        auto fail = [&](const std::string& why) {
            throw DataError(path + ": line " + std::to_string(row) + ": " + why);
        };
        if (key == "dataset_name") {
            if (!(ls >> m.dataset_name)) fail("missing dataset name");
        } else if (key == "time_unit_seconds") {
            if (!(ls >> m.time_unit_seconds) || m.time_unit_seconds <= 0.0)
                fail("time_unit_seconds must be a positive number");
        } else if (key == "split_seed") {
            if (!(ls >> m.split_seed)) fail("bad split_seed");
        } else if (key == "channel_stat") {
            std::string ch;
            double mean, std_;
            if (!(ls >> ch >> mean >> std_) || std_ < 0.0)
                fail("channel_stat wants: channel mean std(>=0)");
            m.channel_mean[ch] = mean;
            m.channel_std[ch] = std_;
        } else if (key == "split") {
            std::string sid, sp;
            if (!(ls >> sid >> sp)) fail("split wants: series_id name");
            auto s = split_from_string(sp);
            if (!s) fail("unknown split '" + sp + "'");
            m.splits[sid] = *s;
        } else {
            fail("unknown manifest key '" + key + "'");
        }
    }
    return m;
}

void save_manifest(const std::string& path, const DatasetManifest& m) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write manifest: " + path);
    out << "dataset_name " << m.dataset_name << '\n';
    if (m.time_unit_seconds > 0.0)
        out << "time_unit_seconds " << fmt_double(m.time_unit_seconds) << '\n';
    out << "split_seed " << m.split_seed << '\n';
    for (const auto& [ch, mean] : m.channel_mean) {
        auto it = m.channel_std.find(ch);
        double sd = it == m.channel_std.end() ? 0.0 : it->second;
        out << "channel_stat " << ch << ' ' << fmt_double(mean) << ' '
            << fmt_double(sd) << '\n';
    }
    for (const auto& [sid, sp] : m.splits)
        out << "split " << sid << ' ' << split_name(sp) << '\n';
}

// ---------------------------------------------------------------------------
// splits

void assign_splits(Dataset& ds, std::uint64_t seed) {
    std::vector<std::string> ids;
    for (const auto& s : ds.series) ids.push_back(s.series_id);
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());

    auto id_rank = [seed](const std::string& id) {
        RngState h(seed);
        std::uint64_t acc = h.fork(0x5eed).next_u64();
        for (char c : id) acc = RngState(acc ^ std::uint64_t(c)).next_u64();
        return acc;
    };
    std::stable_sort(ids.begin(), ids.end(),
                     [&](const std::string& a, const std::string& b) {
                         auto ra = id_rank(a), rb = id_rank(b);
                         return ra != rb ? ra < rb : a < b;
                     });

    const std::size_t n = ids.size();
    const std::size_t n_train = static_cast<std::size_t>(0.8 * double(n));
    const std::size_t n_val = (n - n_train) / 2;
    ds.manifest.split_seed = seed;
    ds.manifest.splits.clear();
    for (std::size_t i = 0; i < n; ++i) {
        Split sp = i < n_train               ? Split::train
                   : (i < n_train + n_val)   ? Split::val
                                             : Split::test;
        ds.manifest.splits[ids[i]] = sp;
    }
}

std::pair<IrregularSeries, IrregularSeries> split_context_horizon(
    const IrregularSeries& s, const SplitSpec& spec) {
    const std::size_t m = s.length();
    if (m < 5)
        throw DataError("split_context_horizon: need at least 5 points, got " +
                        std::to_string(m));
    const std::size_t n_ctx =
        static_cast<std::size_t>(std::floor(spec.context_fraction * double(m)));
    if (n_ctx == 0 || n_ctx >= m)
        throw DataError("split_context_horizon: empty context or horizon");

    auto take = [&](std::size_t lo, std::size_t hi) {
        IrregularSeries part;
        part.series_id = s.series_id;
        part.channel = s.channel;
        part.times.assign(s.times.begin() + lo, s.times.begin() + hi);
        part.values.assign(s.values.begin() + lo, s.values.begin() + hi);
        part.observed.assign(s.observed.begin() + lo, s.observed.begin() + hi);
        return part;
    };
    return {take(0, n_ctx), take(n_ctx, m)};
}

// ---------------------------------------------------------------------------
// synthetic corpora

std::optional<SyntheticKind> synthetic_kind_from_string(const std::string& s) {
    if (s == "sine") return SyntheticKind::sine;
    if (s == "mixed-freq-sine") return SyntheticKind::mixed_freq_sine;
    if (s == "scale-shifted-sine") return SyntheticKind::scale_shifted_sine;
    if (s == "drop-masked-sine") return SyntheticKind::drop_masked_sine;
    return std::nullopt;
}

const char* synthetic_kind_name(SyntheticKind k) {
    switch (k) {
        case SyntheticKind::sine: return "sine";
        case SyntheticKind::mixed_freq_sine: return "mixed-freq-sine";
        case SyntheticKind::scale_shifted_sine: return "scale-shifted-sine";
        case SyntheticKind::drop_masked_sine: return "drop-masked-sine";
    }
    return "?";
}

namespace {

constexpr double kTwoPi = 6.283185307179586476925287;

// shifted, truncated exponential gap; keeps omega_i bounded away from zero
double draw_gap(RngState& rng) {
    double g = 0.25 + rng.next_exponential(1.0 / 0.75);
    return std::min(g, 5.0);
}

}  // namespace

Dataset make_synthetic(SyntheticKind kind, std::size_t n_series,
                       std::size_t len_lo, std::size_t len_hi,
                       std::uint64_t seed) {
    SyntheticParams p;
    p.n_series = n_series;
    p.len_lo = len_lo;
    p.len_hi = len_hi;
    return make_synthetic(kind, p, seed);
}

Dataset make_synthetic(SyntheticKind kind, const SyntheticParams& params,
                       std::uint64_t seed) {
    const std::size_t n_series = params.n_series;
    const std::size_t len_lo = params.len_lo, len_hi = params.len_hi;
    if (len_lo < 5 || len_hi < len_lo)
        throw DataError("make_synthetic: bad length range");
    if (!(params.period_lo > 0.0) || params.period_hi < params.period_lo)
        throw DataError("make_synthetic: bad period range");
    Dataset ds;
    ds.manifest.dataset_name = synthetic_kind_name(kind);

    RngState root(seed);
    for (std::size_t i = 0; i < n_series; ++i) {
        RngState rng = root.fork(i);
        const std::size_t len =
            len_lo + static_cast<std::size_t>(rng.next_below(len_hi - len_lo + 1));

        IrregularSeries s;
        char idbuf[64];
        std::snprintf(idbuf, sizeof(idbuf), "%s_%05zu",
                      synthetic_kind_name(kind), i);
        s.series_id = idbuf;
        s.channel = "v";

        const bool irregular = (kind == SyntheticKind::mixed_freq_sine ||
                                kind == SyntheticKind::drop_masked_sine);
        double t = 0.0;
        s.times.resize(len);
        for (std::size_t j = 0; j < len; ++j) {
            s.times[j] = t;
            t += irregular ? draw_gap(rng) : 1.0;
        }

        const double period = rng.uniform(params.period_lo, params.period_hi);
        const double phase = rng.uniform(0.0, kTwoPi);
        double amp = 1.0, offset = 0.0;
        double period2 = 0.0, amp2 = 0.0, phase2 = 0.0;
        switch (kind) {
            case SyntheticKind::sine:
            case SyntheticKind::drop_masked_sine:
                break;
            case SyntheticKind::mixed_freq_sine: {
                // wide log-uniform period spread plus a second component
                const double lp = rng.uniform(std::log(params.period_lo / 2.5),
                                              std::log(params.period_hi * 1.6));
                period2 = std::exp(lp) / 3.1;
                amp2 = rng.uniform(0.2, 0.5);
                phase2 = rng.uniform(0.0, kTwoPi);
                break;
            }
            case SyntheticKind::scale_shifted_sine: {
                amp = std::exp(rng.uniform(std::log(0.5), std::log(50.0)));
                offset = rng.uniform(-100.0, 100.0);
                break;
            }
        }
        const double base_period =
            (kind == SyntheticKind::mixed_freq_sine) ? period2 * 3.1 : period;

        s.values.resize(len);
        s.observed.assign(len, 1);
        for (std::size_t j = 0; j < len; ++j) {
            double v = std::sin(kTwoPi * s.times[j] / base_period + phase);
            if (kind == SyntheticKind::mixed_freq_sine)
                v += amp2 * std::sin(kTwoPi * s.times[j] / period2 + phase2);
            s.values[j] = offset + amp * v;
        }

        if (kind == SyntheticKind::drop_masked_sine) {
            // mask exactly round(0.3 * len) positions
            const std::size_t n_mask =
                static_cast<std::size_t>(std::llround(0.3 * double(len)));
            std::vector<std::size_t> idx(len);
            for (std::size_t j = 0; j < len; ++j) idx[j] = j;
            rng.shuffle(idx);
            for (std::size_t j = 0; j < n_mask; ++j) {
                s.observed[idx[j]] = 0;
                s.values[idx[j]] = 0.0;
            }
        }
        ds.series.push_back(std::move(s));
    }

    ds.manifest.time_unit_seconds = min_positive_interval(ds.series);
    assign_splits(ds, seed);
    return ds;
}

// ---------------------------------------------------------------------------
// batching

Batch make_batch(const std::vector<SeriesView>& rows, std::size_t max_batch) {
    if (rows.empty()) throw DataError("make_batch: empty row list");
    if (rows.size() > max_batch)
        throw DataError("make_batch: " + std::to_string(rows.size()) +
                        " rows exceed max batch " + std::to_string(max_batch));
    Batch b;
    b.rows = rows.size();
    for (const auto& r : rows) b.cols = std::max(b.cols, r.times->size());
    b.values.assign(b.rows * b.cols, 0.0);
    b.times.assign(b.rows * b.cols, 0.0);
    b.observed.assign(b.rows * b.cols, 0);
    b.valid.assign(b.rows * b.cols, 0);
    b.lengths.resize(b.rows);
    for (std::size_t r = 0; r < b.rows; ++r) {
        const auto& row = rows[r];
        const std::size_t len = row.times->size();
        b.lengths[r] = len;
        for (std::size_t c = 0; c < len; ++c) {
            b.values[r * b.cols + c] = (*row.values)[c];
            b.times[r * b.cols + c] = (*row.times)[c];
            b.observed[r * b.cols + c] = (*row.observed)[c];
            b.valid[r * b.cols + c] = 1;
        }
    }
    return b;
}

}  // namespace flextsf
