#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "flextsf/series.hpp"

using namespace flextsf;

namespace {

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path);
    out << content;
}

}  // namespace

TEST_CASE("load_csv: one series, two channels, five rows each") {
    std::string path = temp_path("two_channels.csv");
    std::string body = "series_id,channel,time,value\n";
    for (int i = 0; i < 5; ++i) {
        body += "s1,a," + std::to_string(i * 10) + "," + std::to_string(i) + "\n";
        body += "s1,b," + std::to_string(i * 10) + "," + std::to_string(i * 2) + "\n";
    }
    write_file(path, body);
    Dataset ds = load_csv(path);
    REQUIRE(ds.series.size() == 2);
    CHECK(ds.series[0].length() == 5);
    CHECK(ds.series[1].length() == 5);
    CHECK(ds.series[0].channel == "a");
    CHECK(ds.series[1].channel == "b");
}

TEST_CASE("load_csv: omega_g falls back to minimum positive interval") {
    std::string path = temp_path("hourly.csv");
    write_file(path,
               "series_id,channel,time,value\n"
               "s1,v,0,1.5\n"
               "s1,v,3600,2.5\n"
               "s1,v,7200,3.5\n");
    Dataset ds = load_csv(path);
    CHECK(ds.manifest.time_unit_seconds == 3600.0);
}

TEST_CASE("load_csv: empty value field becomes observed=false with timestamp") {
    std::string path = temp_path("missing.csv");
    write_file(path,
               "series_id,channel,time,value\n"
               "s1,v,0,1.0\n"
               "s1,v,60,\n"
               "s1,v,120,3.0\n");
    Dataset ds = load_csv(path);
    REQUIRE(ds.series.size() == 1);
    const auto& s = ds.series[0];
    CHECK(s.length() == 3);
    CHECK(s.observed[0] == 1);
    CHECK(s.observed[1] == 0);
    CHECK(s.values[1] == 0.0);
    CHECK(s.times[1] == 60.0);
}

TEST_CASE("load_csv: non-monotone timestamps rejected with row number") {
    std::string path = temp_path("bad_times.csv");
    write_file(path,
               "series_id,channel,time,value\n"
               "s1,v,0,1\n"
               "s1,v,10,2\n"
               "s1,v,5,3\n");
    CHECK_THROWS_WITH_AS(load_csv(path),
                         doctest::Contains("row 4"), DataError);
}

TEST_CASE("load_csv: unparseable row rejected") {
    std::string path = temp_path("bad_value.csv");
    write_file(path,
               "series_id,channel,time,value\n"
               "s1,v,0,not_a_number\n");
    CHECK_THROWS_AS(load_csv(path), DataError);
}

TEST_CASE("csv round-trip is the identity on times/values/observed") {
    Dataset ds = make_synthetic(SyntheticKind::drop_masked_sine, 6, 20, 40, 3);
    std::string path = temp_path("roundtrip.csv");
    write_csv(path, ds.series);
    Dataset back = load_csv(path);
    REQUIRE(back.series.size() == ds.series.size());
    for (std::size_t i = 0; i < ds.series.size(); ++i) {
        const auto& a = ds.series[i];
        const auto& b = back.series[i];
        REQUIRE(a.length() == b.length());
        for (std::size_t j = 0; j < a.length(); ++j) {
            CHECK(a.times[j] == b.times[j]);
            CHECK(a.values[j] == b.values[j]);
            CHECK(a.observed[j] == b.observed[j]);
        }
    }
}

TEST_CASE("manifest round-trip") {
    DatasetManifest m;
    m.dataset_name = "demo";
    m.time_unit_seconds = 3600.0;
    m.split_seed = 17;
    m.channel_mean["a"] = 1.25;
    m.channel_std["a"] = 0.5;
    m.splits["s1"] = Split::train;
    m.splits["s2"] = Split::test;
    std::string path = temp_path("manifest.txt");
    save_manifest(path, m);
    DatasetManifest back = load_manifest(path);
    CHECK(back.dataset_name == "demo");
    CHECK(back.time_unit_seconds == 3600.0);
    CHECK(back.split_seed == 17);
    CHECK(back.channel_mean.at("a") == 1.25);
    CHECK(back.splits.at("s1") == Split::train);
    CHECK(back.splits.at("s2") == Split::test);
}

TEST_CASE("splits are disjoint, exhaustive and deterministic") {
    Dataset ds = make_synthetic(SyntheticKind::sine, 10, 30, 40, 5);
    std::size_t n_train = 0, n_val = 0, n_test = 0;
    for (const auto& s : ds.series) {
        REQUIRE(ds.manifest.splits.count(s.series_id) == 1);
        switch (ds.manifest.splits.at(s.series_id)) {
            case Split::train: ++n_train; break;
            case Split::val: ++n_val; break;
            case Split::test: ++n_test; break;
        }
    }
    CHECK(n_train == 8);
    CHECK(n_val == 1);
    CHECK(n_test == 1);

    Dataset ds2 = make_synthetic(SyntheticKind::sine, 10, 30, 40, 5);
    CHECK(ds.manifest.splits == ds2.manifest.splits);

    Dataset ds3 = ds;
    assign_splits(ds3, 99);  // different seed, still a partition
    std::size_t total = 0;
    for (const auto& [sid, sp] : ds3.manifest.splits) ++total;
    CHECK(total == 10);
}

TEST_CASE("split_context_horizon obeys floor arithmetic and keeps times") {
    IrregularSeries s;
    s.series_id = "s";
    s.channel = "v";
    for (int i = 0; i < 10; ++i) {
        s.times.push_back(i * 7.0 + (i % 3));  // irregular
        s.values.push_back(i);
        s.observed.push_back(1);
    }
    auto [ctx, hor] = split_context_horizon(s);
    CHECK(ctx.length() == 8);
    CHECK(hor.length() == 2);
    CHECK(ctx.times.front() == s.times[0]);
    CHECK(hor.times.front() == s.times[8]);
    CHECK(hor.times.back() == s.times[9]);

    IrregularSeries s96 = s;
    s96.times.clear();
    s96.values.clear();
    s96.observed.clear();
    for (int i = 0; i < 96; ++i) {
        s96.times.push_back(i);
        s96.values.push_back(i);
        s96.observed.push_back(1);
    }
    auto [c96, h96] = split_context_horizon(s96);
    CHECK(c96.length() == 76);
    CHECK(h96.length() == 20);

    IrregularSeries tiny = s;
    tiny.times.resize(4);
    tiny.values.resize(4);
    tiny.observed.resize(4);
    CHECK_THROWS_AS(split_context_horizon(tiny), DataError);
}

TEST_CASE("synthetic generation is bit-identical given the seed") {
    Dataset a = make_synthetic(SyntheticKind::sine, 4, 30, 60, 7);
    Dataset b = make_synthetic(SyntheticKind::sine, 4, 30, 60, 7);
    REQUIRE(a.series.size() == b.series.size());
    for (std::size_t i = 0; i < a.series.size(); ++i) {
        CHECK(a.series[i].times == b.series[i].times);
        CHECK(a.series[i].values == b.series[i].values);
        CHECK(a.series[i].observed == b.series[i].observed);
    }
    Dataset c = make_synthetic(SyntheticKind::sine, 4, 30, 60, 8);
    CHECK(a.series[0].values != c.series[0].values);
}

TEST_CASE("drop-masked kind masks 30% +/- 2% per series") {
    Dataset ds = make_synthetic(SyntheticKind::drop_masked_sine, 20, 60, 120, 9);
    for (const auto& s : ds.series) {
        double frac =
            1.0 - double(s.observed_count()) / double(s.length());
        CHECK(frac >= 0.28);
        CHECK(frac <= 0.32);
    }
}

TEST_CASE("synthetic lengths stay inside the requested range") {
    Dataset ds = make_synthetic(SyntheticKind::mixed_freq_sine, 30, 60, 120, 11);
    std::set<std::size_t> lens;
    for (const auto& s : ds.series) {
        CHECK(s.length() >= 60);
        CHECK(s.length() <= 120);
        lens.insert(s.length());
    }
    CHECK(lens.size() > 3);  // ragged, not constant
}

TEST_CASE("scale-shifted kind actually shifts scales") {
    Dataset ds = make_synthetic(SyntheticKind::scale_shifted_sine, 10, 60, 80, 13);
    double min_amp = 1e18, max_amp = -1e18;
    for (const auto& s : ds.series) {
        double lo = 1e18, hi = -1e18;
        for (double v : s.values) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        min_amp = std::min(min_amp, hi - lo);
        max_amp = std::max(max_amp, hi - lo);
    }
    CHECK(max_amp / min_amp > 5.0);
}

TEST_CASE("batch pads to the max length with a distinct validity mask") {
    IrregularSeries a, b;
    a.series_id = "a";
    b.series_id = "b";
    a.channel = b.channel = "v";
    for (int i = 0; i < 5; ++i) {
        a.times.push_back(i);
        a.values.push_back(i + 1);
        a.observed.push_back(i % 2);
    }
    for (int i = 0; i < 3; ++i) {
        b.times.push_back(i);
        b.values.push_back(-double(i));
        b.observed.push_back(1);
    }
    Batch batch = make_batch({SeriesView(a), SeriesView(b)}, 64);
    CHECK(batch.rows == 2);
    CHECK(batch.cols == 5);
    for (std::size_t c = 0; c < 5; ++c) CHECK(batch.valid_at(0, c));
    for (std::size_t c = 0; c < 3; ++c) CHECK(batch.valid_at(1, c));
    CHECK_FALSE(batch.valid_at(1, 3));
    CHECK_FALSE(batch.valid_at(1, 4));
    // observation mask is carried through unchanged, not conflated with padding
    CHECK(batch.observed_at(0, 1));
    CHECK_FALSE(batch.observed_at(0, 0));
    CHECK(batch.value_at(1, 2) == -2.0);
    CHECK(batch.value_at(1, 4) == 0.0);

    Batch single = make_batch({SeriesView(b)}, 64);
    CHECK(single.rows == 1);
    CHECK(single.cols == 3);
    for (std::size_t c = 0; c < 3; ++c)
        CHECK(single.value_at(0, c) == b.values[c]);

    CHECK_THROWS_AS(make_batch({SeriesView(a), SeriesView(b)}, 1), DataError);
}
