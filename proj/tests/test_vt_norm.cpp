#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "flextsf/rng.hpp"
#include "flextsf/series.hpp"
#include "flextsf/vt_norm.hpp"

using namespace flextsf;

namespace {

IrregularSeries series_of(std::vector<double> times, std::vector<double> values) {
    IrregularSeries s;
    s.series_id = "s";
    s.channel = "v";
    s.times = std::move(times);
    s.values = std::move(values);
    s.observed.assign(s.values.size(), 1);
    return s;
}

// fuzzed irregular series; dyadic = true makes all normalized time
// quantities exactly representable so exact assertions are meaningful
IrregularSeries fuzz_series(RngState& rng, bool dyadic) {
    const std::size_t len = 10 + rng.next_below(50);
    IrregularSeries s;
    s.series_id = "f";
    s.channel = "v";
    const double unit = dyadic ? std::ldexp(1.0, int(rng.next_below(8)) - 4)
                               : rng.uniform(0.05, 1000.0);
    // dyadic mode keeps every timestamp an exact multiple of unit/4 and
    // forces one gap to equal the unit itself, so normalized gaps and their
    // prefix sums carry no rounding at all
    double t = dyadic ? unit * double(int(rng.next_below(800)) - 400)
                      : rng.uniform(-100.0, 100.0);
    const std::size_t unit_gap_at = rng.next_below(len - 1);
    for (std::size_t i = 0; i < len; ++i) {
        s.times.push_back(t);
        double mult = dyadic ? (1.0 + double(rng.next_below(64)) * 0.25)
                             : rng.uniform(1.0, 16.0);
        if (dyadic && i == unit_gap_at) mult = 1.0;
        t += mult * unit;
        s.values.push_back(rng.uniform(-5.0, 5.0) * std::exp(rng.uniform(0.0, 4.0)));
        s.observed.push_back(rng.next_uniform() < 0.85 ? 1 : 0);
    }
    if (s.observed_count() < 2) {
        s.observed[0] = 1;
        s.observed[1] = 1;
    }
    return s;
}

double min_positive_gap(const std::vector<double>& xs) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 1; i < xs.size(); ++i) {
        double d = xs[i] - xs[i - 1];
        if (d > 0.0) best = std::min(best, d);
    }
    return best;
}

}  // namespace

TEST_CASE("fit_global: {2,4,6} gives mean 4 and population std sqrt(8/3)") {
    auto s = series_of({0, 1, 2}, {2, 4, 6});
    auto stats = fit_global({&s});
    CHECK(stats.at("v").mean == doctest::Approx(4.0).epsilon(1e-15));
    // population std of {2,4,6}: sqrt(8/3), from an independent
    // arbitrary-precision computation: 1.6329931618554520654...
    CHECK(stats.at("v").std ==
          doctest::Approx(1.6329931618554520654).epsilon(1e-14));
}

TEST_CASE("fit_global: constant channel clamps sigma to the floor") {
    auto s = series_of({0, 1, 2}, {5, 5, 5});
    auto stats = fit_global({&s});
    CHECK(stats.at("v").std == kSigmaFloor);
}

TEST_CASE("fit_global: channels get independent statistics") {
    auto a = series_of({0, 1}, {0, 2});
    auto b = series_of({0, 1}, {10, 30});
    b.channel = "w";
    auto stats = fit_global({&a, &b});
    CHECK(stats.at("v").mean == doctest::Approx(1.0));
    CHECK(stats.at("w").mean == doctest::Approx(20.0));
    CHECK(stats.at("v").std != stats.at("w").std);
}

TEST_CASE("fit_global: all-missing channel is an error") {
    auto s = series_of({0, 1}, {1, 2});
    s.observed = {0, 0};
    CHECK_THROWS_AS(fit_global({&s}), DataError);
}

TEST_CASE("normalize_values matches the hand-computed example") {
    // x = [2,4,6], mu_g = 4, sigma_g = 2: global [-1,0,1];
    // instance mu_i = 0, sigma_i = sqrt(2/3) = 0.81649658092772603;
    // values' = [-1.2247448713915890, 0, 1.2247448713915890]
    auto vn = normalize_values({2, 4, 6}, {1, 1, 1}, 4.0, 2.0);
    CHECK(vn.mu_i == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(vn.sigma_i == doctest::Approx(0.81649658092772603).epsilon(1e-14));
    CHECK(vn.values_prime[0] ==
          doctest::Approx(-1.2247448713915890).epsilon(1e-14));
    CHECK(vn.values_prime[1] == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(vn.values_prime[2] ==
          doctest::Approx(1.2247448713915890).epsilon(1e-14));
}

TEST_CASE("normalize_values: constant series collapses to zeros via clamp") {
    auto vn = normalize_values({3, 3, 3}, {1, 1, 1}, 0.0, 1.0);
    CHECK(vn.sigma_i == kSigmaFloor);
    for (double v : vn.values_prime) CHECK(v == 0.0);
}

TEST_CASE("normalize_values: already standardized input is nearly unchanged") {
    std::vector<double> x = {-1.2247448713915890, 0.0, 1.2247448713915890};
    auto vn = normalize_values(x, {1, 1, 1}, 0.0, 1.0);
    CHECK(vn.mu_i == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(vn.sigma_i == doctest::Approx(1.0).epsilon(1e-12));
    for (std::size_t i = 0; i < x.size(); ++i)
        CHECK(vn.values_prime[i] == doctest::Approx(x[i]).epsilon(1e-12));
}

TEST_CASE("normalize_values: zero observed points is an error") {
    CHECK_THROWS_AS(normalize_values({1, 2}, {0, 0}, 0.0, 1.0), DataError);
}

TEST_CASE("normalize_times: [0,2,6,8] -> omega 2, [0,1,3,4]") {
    auto tn = normalize_times({0, 2, 6, 8}, 1.0);
    CHECK(tn.omega_i == 2.0);
    CHECK(tn.times_prime == std::vector<double>{0, 1, 3, 4});
}

TEST_CASE("normalize_times: regular hourly grid") {
    std::vector<double> t;
    for (int i = 0; i < 24; ++i) t.push_back(3600.0 * i);
    auto tn = normalize_times(t, 3600.0);
    CHECK(tn.omega_i == 3600.0);
    for (int i = 0; i < 24; ++i) CHECK(tn.times_prime[i] == double(i));
}

TEST_CASE("normalize_times: two points re-anchor to [0,1]") {
    auto tn = normalize_times({5, 6}, 1.0);
    CHECK(tn.times_prime == std::vector<double>{0, 1});
}

TEST_CASE("normalize_times: single timestamp falls back to omega_g") {
    auto tn = normalize_times({42.0}, 3600.0);
    CHECK(tn.omega_i == 3600.0);
    CHECK(tn.times_prime == std::vector<double>{0});
}

TEST_CASE("denormalize closed-form cases") {
    StaticFeatures f;
    f.mu_g = 10.0;
    f.sigma_g = 2.0;
    f.mu_i = 0.5;
    f.sigma_i = 1.5;
    // values' = 0 -> x = mu_i * sigma_g + mu_g
    CHECK(denormalize_one(0.0, f) == doctest::Approx(0.5 * 2.0 + 10.0));
}

TEST_CASE("round-trip: denormalize(normalize(x)) == x within 1e-9, 1000 fuzz") {
    RngState rng(2024);
    double worst = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        IrregularSeries s = fuzz_series(rng, false);
        auto stats = fit_global({&s});
        auto inst = normalize_instance(s, stats.at("v").mean, stats.at("v").std,
                                       1.0);
        auto raw = denormalize(inst.values_prime, inst.features);
        for (std::size_t i = 0; i < s.length(); ++i)
            if (s.observed[i])
                worst = std::max(worst, std::fabs(raw[i] - s.values[i]));
    }
    CHECK(worst < 1e-9);
}

TEST_CASE("instance invariants hold on fuzzed series") {
    RngState rng(77);
    for (int trial = 0; trial < 300; ++trial) {
        IrregularSeries s = fuzz_series(rng, false);
        auto inst = normalize_instance(s, 1.0, 2.0, 1.0);

        CHECK(inst.times_prime[0] == 0.0);
        double gap = min_positive_gap(inst.times_prime);
        CHECK(gap == doctest::Approx(1.0).epsilon(1e-9));

        double sum = 0.0, count = 0.0;
        for (std::size_t i = 0; i < inst.length(); ++i)
            if (inst.observed[i]) {
                sum += inst.values_prime[i];
                count += 1.0;
            }
        double mean = sum / count;
        double var = 0.0;
        for (std::size_t i = 0; i < inst.length(); ++i)
            if (inst.observed[i])
                var += (inst.values_prime[i] - mean) * (inst.values_prime[i] - mean);
        var /= count;
        CHECK(std::fabs(mean) < 1e-6);
        CHECK(std::fabs(std::sqrt(var) - 1.0) < 1e-6);
    }
}

TEST_CASE("min normalized gap is exactly 1 on exactly-representable inputs") {
    RngState rng(88);
    for (int trial = 0; trial < 200; ++trial) {
        IrregularSeries s = fuzz_series(rng, true);
        auto tn = normalize_times(s.times, 1.0);
        CHECK(min_positive_gap(tn.times_prime) == 1.0);
    }
}

TEST_CASE("scale/shift equivariance: a*x+b normalizes to identical values'") {
    RngState rng(31);
    for (int trial = 0; trial < 100; ++trial) {
        IrregularSeries s = fuzz_series(rng, false);
        double a = std::exp(rng.uniform(-2.0, 4.0));
        double b = rng.uniform(-1000.0, 1000.0);
        IrregularSeries s2 = s;
        for (double& v : s2.values) v = a * v + b;

        auto st1 = fit_global({&s});
        auto st2 = fit_global({&s2});
        auto i1 = normalize_instance(s, st1.at("v").mean, st1.at("v").std, 1.0);
        auto i2 = normalize_instance(s2, st2.at("v").mean, st2.at("v").std, 1.0);
        for (std::size_t i = 0; i < s.length(); ++i)
            if (s.observed[i])
                CHECK(i2.values_prime[i] ==
                      doctest::Approx(i1.values_prime[i]).epsilon(1e-9));
        // mu/sigma features absorb the transform
        CHECK(i2.features.mu_g == doctest::Approx(a * i1.features.mu_g + b));
        CHECK(i2.features.sigma_g ==
              doctest::Approx(a * i1.features.sigma_g).epsilon(1e-9));
    }
}

TEST_CASE("time-unit equivariance: rescaling timestamps by c > 0") {
    RngState rng(41);
    for (int trial = 0; trial < 100; ++trial) {
        IrregularSeries s = fuzz_series(rng, false);
        double c = std::exp(rng.uniform(-3.0, 5.0));
        std::vector<double> scaled(s.times);
        for (double& t : scaled) t *= c;

        auto t1 = normalize_times(s.times, 1.0);
        auto t2 = normalize_times(scaled, c);
        CHECK(t2.omega_i == doctest::Approx(c * t1.omega_i).epsilon(1e-12));
        for (std::size_t i = 0; i < s.length(); ++i)
            CHECK(t2.times_prime[i] ==
                  doctest::Approx(t1.times_prime[i]).epsilon(1e-9));
    }
}

TEST_CASE("feature vector has the fixed 6-element layout") {
    auto s = series_of({0, 3600, 7200}, {1, 2, 3});
    auto stats = fit_global({&s});
    auto inst =
        normalize_instance(s, stats.at("v").mean, stats.at("v").std, 3600.0);
    auto l = inst.features.as_array();
    REQUIRE(l.size() == 6);
    CHECK(l[0] == inst.features.mu_g);
    CHECK(l[1] == inst.features.sigma_g);
    CHECK(l[2] == inst.features.mu_i);
    CHECK(l[3] == inst.features.sigma_i);
    CHECK(l[4] == 3600.0);  // omega_g
    CHECK(l[5] == 3600.0);  // omega_i: hourly grid
}

TEST_CASE("feature standardization centers the training corpus") {
    RngState rng(55);
    std::vector<StaticFeatures> corpus;
    for (int i = 0; i < 50; ++i) {
        IrregularSeries s = fuzz_series(rng, false);
        auto stats = fit_global({&s});
        corpus.push_back(
            normalize_instance(s, stats.at("v").mean, stats.at("v").std, 1.0)
                .features);
    }
    auto fs = FeatureStandardizer::fit(corpus);
    std::array<double, 6> mean{};
    for (const auto& f : corpus) {
        auto t = fs.apply(f);
        for (int j = 0; j < 6; ++j) mean[j] += t[j];
    }
    for (int j = 0; j < 6; ++j) {
        mean[j] /= double(corpus.size());
        CHECK(std::fabs(mean[j]) < 1e-9);
    }
}
