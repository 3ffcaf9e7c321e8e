#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "flextsf/series.hpp"

namespace flextsf {

// floor for every standard-deviation estimate
inline constexpr double kSigmaFloor = 1e-6;

// Static domain feature vector, fixed order [mu_g, sigma_g, mu_i, sigma_i,
// omega_g, omega_i].
struct StaticFeatures {
    double mu_g = 0.0;
    double sigma_g = 1.0;
    double mu_i = 0.0;
    double sigma_i = 1.0;
    double omega_g = 1.0;  // seconds
    double omega_i = 1.0;  // seconds

    std::array<double, 6> as_array() const {
        return {mu_g, sigma_g, mu_i, sigma_i, omega_g, omega_i};
    }
};

// Output of VT-Norm for one instance. Observed normalized values have mean
// ~0 and population std ~1; times_prime starts at 0 with minimum gap 1.
struct NormalizedInstance {
    std::vector<double> values_prime;
    std::vector<double> times_prime;
    std::vector<std::uint8_t> observed;
    StaticFeatures features;

    std::size_t length() const { return values_prime.size(); }
};

struct GlobalStats {
    double mean = 0.0;
    double std = 1.0;  // clamped at kSigmaFloor
};

// per-channel statistics over observed values of the training split only
std::map<std::string, GlobalStats> fit_global(
    const std::vector<const IrregularSeries*>& train_split);

struct ValueNorm {
    std::vector<double> values_prime;
    double mu_i = 0.0;
    double sigma_i = 1.0;
};

// values' = ((x - mu_g)/sigma_g - mu_i)/sigma_i with instance stats over
// the globally normalized observed points
ValueNorm normalize_values(const std::vector<double>& values,
                           const std::vector<std::uint8_t>& observed,
                           double mu_g, double sigma_g);

struct TimeNorm {
    std::vector<double> times_prime;
    double omega_i = 1.0;
};

// omega_i = min gap; times' = cumulative gaps / omega_i anchored at 0.
// A single timestamp maps to [0] with omega_i = omega_g.
TimeNorm normalize_times(const std::vector<double>& times, double omega_g);

NormalizedInstance normalize_instance(const IrregularSeries& s, double mu_g,
                                      double sigma_g, double omega_g);

// exact inverse chain x = (v' * sigma_i + mu_i) * sigma_g + mu_g
std::vector<double> denormalize(const std::vector<double>& values_prime,
                                const StaticFeatures& f);
double denormalize_one(double value_prime, const StaticFeatures& f);

// Standardization of L before the leader projection: omegas are
// log-transformed, then each of the 6 components is z-scored with constants
// fitted on the training corpus.
class FeatureStandardizer {
public:
    static std::array<double, 6> log_transform(const StaticFeatures& f);

    static FeatureStandardizer fit(const std::vector<StaticFeatures>& corpus);

    std::array<double, 6> apply(const StaticFeatures& f) const;

    bool fitted() const { return fitted_; }
    const std::array<double, 6>& mean() const { return mean_; }
    const std::array<double, 6>& std() const { return std_; }
    void set(const std::array<double, 6>& mean, const std::array<double, 6>& std,
             bool fitted);

private:
    std::array<double, 6> mean_{};
    std::array<double, 6> std_{1, 1, 1, 1, 1, 1};
    bool fitted_ = false;
};

}  // namespace flextsf
