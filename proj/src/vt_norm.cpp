#include "flextsf/vt_norm.hpp"

#include <algorithm>
#include <cmath>

namespace flextsf {

namespace {

// two-pass mean / population std, stable for large offsets
void mean_pop_std(const std::vector<double>& xs, double& mean, double& std) {
    double s = 0.0;
    for (double x : xs) s += x;
    mean = s / double(xs.size());
    double v = 0.0;
    for (double x : xs) v += (x - mean) * (x - mean);
    std = std::sqrt(v / double(xs.size()));
}

}  // namespace

std::map<std::string, GlobalStats> fit_global(
    const std::vector<const IrregularSeries*>& train_split) {
    if (train_split.empty())
        throw DataError("fit_global: empty training split");

    std::map<std::string, std::vector<double>> per_channel;
    for (const auto* s : train_split) {
        auto& bucket = per_channel[s->channel];
        for (std::size_t i = 0; i < s->length(); ++i)
            if (s->observed[i]) bucket.push_back(s->values[i]);
    }

    std::map<std::string, GlobalStats> out;
    for (auto& [ch, xs] : per_channel) {
        if (xs.empty())
            throw DataError("fit_global: channel '" + ch +
                            "' has no observed values in the training split");
        GlobalStats g;
        mean_pop_std(xs, g.mean, g.std);
        if (g.std < kSigmaFloor) g.std = kSigmaFloor;
        out[ch] = g;
    }
    return out;
}

ValueNorm normalize_values(const std::vector<double>& values,
                           const std::vector<std::uint8_t>& observed,
                           double mu_g, double sigma_g) {
    if (sigma_g < kSigmaFloor)
        throw DataError("normalize_values: sigma_g below floor");
    std::vector<double> globally(values.size());
    std::vector<double> obs_vals;
    for (std::size_t i = 0; i < values.size(); ++i) {
        globally[i] = (values[i] - mu_g) / sigma_g;
        if (observed[i]) obs_vals.push_back(globally[i]);
    }
    if (obs_vals.empty())
        throw DataError("normalize_values: no observed points");

    ValueNorm out;
    mean_pop_std(obs_vals, out.mu_i, out.sigma_i);
    if (out.sigma_i < kSigmaFloor) out.sigma_i = kSigmaFloor;
    out.values_prime.resize(values.size());
    for (std::size_t i = 0; i < values.size(); ++i)
        out.values_prime[i] = (globally[i] - out.mu_i) / out.sigma_i;
    return out;
}

TimeNorm normalize_times(const std::vector<double>& times, double omega_g) {
    TimeNorm out;
    if (times.empty()) throw DataError("normalize_times: no timestamps");
    if (times.size() == 1) {
        out.omega_i = omega_g;
        out.times_prime = {0.0};
        return out;
    }
    double min_gap = times[1] - times[0];
    for (std::size_t i = 1; i + 1 < times.size(); ++i)
        min_gap = std::min(min_gap, times[i + 1] - times[i]);
    if (!(min_gap > 0.0))
        throw DataError("normalize_times: timestamps not strictly increasing");
    out.omega_i = min_gap;

    out.times_prime.resize(times.size());
    out.times_prime[0] = 0.0;
    double acc = 0.0;
    for (std::size_t i = 1; i < times.size(); ++i) {
        acc += (times[i] - times[i - 1]) / min_gap;
        out.times_prime[i] = acc;
    }
    return out;
}

NormalizedInstance normalize_instance(const IrregularSeries& s, double mu_g,
                                      double sigma_g, double omega_g) {
    if (omega_g <= 0.0)
        throw DataError("normalize_instance: omega_g must be positive");
    NormalizedInstance inst;
    ValueNorm vn = normalize_values(s.values, s.observed, mu_g, sigma_g);
    TimeNorm tn = normalize_times(s.times, omega_g);
    inst.values_prime = std::move(vn.values_prime);
    inst.times_prime = std::move(tn.times_prime);
    inst.observed = s.observed;
    inst.features.mu_g = mu_g;
    inst.features.sigma_g = sigma_g;
    inst.features.mu_i = vn.mu_i;
    inst.features.sigma_i = vn.sigma_i;
    inst.features.omega_g = omega_g;
    inst.features.omega_i = tn.omega_i;
    return inst;
}

std::vector<double> denormalize(const std::vector<double>& values_prime,
                                const StaticFeatures& f) {
    std::vector<double> out(values_prime.size());
    for (std::size_t i = 0; i < values_prime.size(); ++i)
        out[i] = denormalize_one(values_prime[i], f);
    return out;
}

double denormalize_one(double value_prime, const StaticFeatures& f) {
    return (value_prime * f.sigma_i + f.mu_i) * f.sigma_g + f.mu_g;
}

std::array<double, 6> FeatureStandardizer::log_transform(
    const StaticFeatures& f) {
    // omegas span many decades across datasets; compare them in log space
    return {f.mu_g,  f.sigma_g,          f.mu_i,
            f.sigma_i, std::log(f.omega_g), std::log(f.omega_i)};
}

FeatureStandardizer FeatureStandardizer::fit(
    const std::vector<StaticFeatures>& corpus) {
    if (corpus.empty())
        throw DataError("FeatureStandardizer: empty training corpus");
    FeatureStandardizer fs;
    std::array<std::vector<double>, 6> cols;
    for (const auto& f : corpus) {
        auto t = log_transform(f);
        for (std::size_t j = 0; j < 6; ++j) cols[j].push_back(t[j]);
    }
    for (std::size_t j = 0; j < 6; ++j) {
        double m, sd;
        mean_pop_std(cols[j], m, sd);
        fs.mean_[j] = m;
        fs.std_[j] = sd;
    }
    fs.fitted_ = true;
    return fs;
}

std::array<double, 6> FeatureStandardizer::apply(const StaticFeatures& f) const {
    // A feature that was constant while fitting carries no signal the model
    // could have learned, so it contributes zero rather than a huge z-score
    // on unseen data. Low-variance features get a floored denominator and
    // the result is clipped, keeping the leader input bounded off-domain.
    constexpr double kDegenerate = 1e-9;
    constexpr double kDenomFloor = 1e-2;
    constexpr double kClip = 8.0;
    auto t = log_transform(f);
    std::array<double, 6> out{};
    for (std::size_t j = 0; j < 6; ++j) {
        if (std_[j] < kDegenerate) {
            out[j] = 0.0;
            continue;
        }
        double z = (t[j] - mean_[j]) / std::max(std_[j], kDenomFloor);
        out[j] = std::clamp(z, -kClip, kClip);
    }
    return out;
}

void FeatureStandardizer::set(const std::array<double, 6>& mean,
                              const std::array<double, 6>& std, bool fitted) {
    mean_ = mean;
    std_ = std;
    fitted_ = fitted;
}

}  // namespace flextsf
