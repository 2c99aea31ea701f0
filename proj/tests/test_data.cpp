// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "flowgen/data.hpp"
#include "flowgen/errors.hpp"
#include "flowgen/judge.hpp"
#include "flowgen/metrics.hpp"

using namespace flowgen;

namespace {

Scenario make_scenario(std::vector<double> series, Kind kind, Metadata md) {
    Scenario s;
    s.id = "t0";
    s.kind = kind;
    s.series = std::move(series);
    s.metadata = md;
    return s;
}

std::vector<double> bell64(double peak, int at) {
    std::vector<double> x(64, 0.0);
    for (int i = 0; i < 64; ++i) {
        const double d = (i - at) / 8.0;
        const double tau = (i + 0.5) / 64.0;
        if (tau > 0.2 && tau < 0.82) x[static_cast<std::size_t>(i)] = peak * std::exp(-0.5 * d * d);
    }
    return x;
}

}  // namespace

TEST_CASE("synthetic pv scenarios respect their own metadata") {
    const auto ds = synth_dataset(Kind::kPv, 40, 64, 7);
    REQUIRE(ds.size() == 40);
    bool saw_sunny = false;
    for (const auto& s : ds) {
        for (double v : s.series) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
        const double mx = *std::max_element(s.series.begin(), s.series.end());
        CHECK(std::abs(mx - s.metadata.peak) <= 1e-6);
        CHECK(std::abs(mx - s.metadata.peak) <= 0.02);
        const int argmax = static_cast<int>(
            std::max_element(s.series.begin(), s.series.end()) - s.series.begin());
        CHECK(argmax == s.metadata.peak_time_index);
        REQUIRE(s.metadata.weather.has_value());
        if (*s.metadata.weather == Weather::kSunny) {
            saw_sunny = true;
            CHECK(marr(s.series) < kStableMarrMax);
        }
        const auto v = judge(s.series, s.kind, s.metadata);
        CHECK(v.score == 5);
    }
    CHECK(saw_sunny);
}

TEST_CASE("synthetic generation is deterministic in the seed") {
    const auto a = synth_dataset(Kind::kPv, 8, 64, 123);
    const auto b = synth_dataset(Kind::kPv, 8, 64, 123);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].series == b[i].series);
    const auto c = synth_dataset(Kind::kPv, 8, 64, 124);
    CHECK(a.front().series != c.front().series);
}

TEST_CASE("residential load peaks in the evening quarter") {
    const auto ds = synth_dataset(Kind::kLoad, 40, 64, 11);
    int residential = 0;
    for (const auto& s : ds) {
        REQUIRE(s.metadata.user_type.has_value());
        if (*s.metadata.user_type == UserType::kResidential) {
            ++residential;
            CHECK(s.metadata.peak_time_index >= 48);
        }
        CHECK(judge(s.series, s.kind, s.metadata).score == 5);
    }
    CHECK(residential > 0);
}

TEST_CASE("volatility classes order the measured ramp rates") {
    const auto ds = synth_dataset(Kind::kLoad, 150, 64, 3);
    std::vector<double> by_class[3];
    for (const auto& s : ds)
        by_class[static_cast<int>(s.metadata.volatility)].push_back(marr(s.series));
    double medians[3];
    for (int c = 0; c < 3; ++c) {
        REQUIRE(by_class[c].size() > 10);
        auto& v = by_class[c];
        std::nth_element(v.begin(), v.begin() + v.size() / 2, v.end());
        medians[c] = v[v.size() / 2];
    }
    CHECK(medians[0] < medians[1]);
    CHECK(medians[1] < medians[2]);
}

TEST_CASE("stat report globals and quarters") {
    Scenario s = make_scenario(std::vector<double>(16, 0.4), Kind::kLoad, {});
    auto r = stat_report(s);
    CHECK(r.max == doctest::Approx(0.4));
    CHECK(r.min == doctest::Approx(0.4));
    CHECK(r.mean == doctest::Approx(0.4));
    CHECK(r.std_dev == doctest::Approx(0.0));
    CHECK(r.marr == doctest::Approx(0.0));

    std::vector<double> evening(16, 0.0);
    for (int i = 12; i < 16; ++i) evening[static_cast<std::size_t>(i)] = 1.0;
    r = stat_report(make_scenario(evening, Kind::kLoad, {}));
    CHECK(r.segments[3].max == doctest::Approx(1.0));
    CHECK(r.segments[0].max == doctest::Approx(0.0));
    CHECK(r.segments[1].max == doctest::Approx(0.0));
    CHECK(r.segments[2].max == doctest::Approx(0.0));

    std::vector<double> alt;
    for (int i = 0; i < 16; ++i) alt.push_back(i % 2 == 0 ? 0.0 : 1.0);
    r = stat_report(make_scenario(alt, Kind::kLoad, {}));
    CHECK(r.marr == doctest::Approx(1.0));

    Scenario bad = make_scenario(std::vector<double>(18, 0.1), Kind::kLoad, {});
    CHECK_THROWS_AS(stat_report(bad), std::invalid_argument);
}

TEST_CASE("annotation template renders deterministically") {
    Metadata md;
    md.weather = Weather::kSunny;
    md.volatility = Volatility::kStable;
    md.shape = ShapeClass::kBell;
    md.peak = 0.80;
    md.peak_time_index = 32;
    Scenario s = make_scenario(bell64(0.8, 32), Kind::kPv, md);
    const auto rep = stat_report(s);
    CHECK(annotate(s, rep) == "A sunny day with stable output, peaking at 0.80 around 12:00.");
    CHECK(annotate(s, rep) == annotate(s, rep));

    s.metadata.event = EventInfo{36};  // 36 * 22.5 min = 13:30
    const auto text = annotate(s, rep);
    CHECK(text.find("dip at 13:30") != std::string::npos);

    Metadata ld;
    ld.user_type = UserType::kIndustrial;
    ld.volatility = Volatility::kModerate;
    ld.shape = ShapeClass::kPlateau;
    ld.peak = 0.75;
    ld.peak_time_index = 36;
    Scenario l = make_scenario(std::vector<double>(64, 0.5), Kind::kLoad, ld);
    const auto lt = annotate(l, stat_report(l));
    CHECK(lt.find("An industrial load profile") == 0);
    CHECK(lt.find("plateau pattern") != std::string::npos);
}

TEST_CASE("judge bands on engineered inputs") {
    Metadata md;
    md.weather = Weather::kSunny;
    md.volatility = Volatility::kStable;
    md.shape = ShapeClass::kBell;
    md.peak = 0.8;
    md.peak_time_index = 32;

    // flat zero line misses the promised peak entirely
    std::vector<double> flat(64, 0.0);
    auto v = judge(flat, Kind::kPv, md);
    CHECK(v.peak_score == 1);

    // a clean stable bell against a high-volatility request
    Metadata want_high = md;
    want_high.volatility = Volatility::kHigh;
    v = judge(bell64(0.8, 32), Kind::kPv, want_high);
    CHECK(*v.volatility_score <= 2);

    CHECK_THROWS_AS(judge(std::vector<double>{0.1, 0.2}, Kind::kPv, md), std::invalid_argument);
    Metadata bad = md;
    bad.peak_time_index = 200;
    CHECK_THROWS_AS(judge(bell64(0.8, 32), Kind::kPv, bad), std::invalid_argument);
}

TEST_CASE("mjas is the mean of judge scores") {
    const auto ds = synth_dataset(Kind::kPv, 6, 64, 21);
    std::vector<JudgedSample> samples;
    for (const auto& s : ds) samples.push_back({s.series, s.kind, s.metadata});
    CHECK(mjas(samples) == doctest::Approx(5.0));

    // degrade one target so its verdict drops below 5
    std::vector<JudgedSample> mixed = samples;
    mixed[0].target.volatility = mixed[0].target.volatility == Volatility::kHigh
                                     ? Volatility::kStable
                                     : Volatility::kHigh;
    double expected = 0.0;
    for (const auto& s : mixed) expected += judge(s.series, s.kind, s.target).score;
    expected /= static_cast<double>(mixed.size());
    CHECK(mjas(mixed) == doctest::Approx(expected));
    CHECK(mjas({samples[0]}) == doctest::Approx(judge(samples[0].series, samples[0].kind,
                                                      samples[0].target).score));

    CHECK_THROWS_AS(mjas({}), std::invalid_argument);
}

TEST_CASE("dataset files round-trip") {
    namespace fs = std::filesystem;
    auto ds = synth_dataset(Kind::kLoad, 6, 64, 9);
    for (auto& s : ds) s.prompt = annotate(s, stat_report(s));

    const auto path = (fs::temp_directory_path() / "flowgen_ds_test.ndjson").string();
    write_dataset(path, ds);
    const auto back = read_dataset(path);
    REQUIRE(back.size() == ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) {
        CHECK(back[i].id == ds[i].id);
        CHECK(back[i].series == ds[i].series);
        CHECK(back[i].kind == ds[i].kind);
        CHECK(back[i].metadata.peak == ds[i].metadata.peak);
        CHECK(back[i].metadata.volatility == ds[i].metadata.volatility);
        CHECK(back[i].prompt == ds[i].prompt);
    }
    fs::remove(path);

    {
        std::ofstream out(path);
        out << "{\"id\":\"x\",\"kind\":\"pv\"}\n";
    }
    CHECK_THROWS_AS(read_dataset(path), FormatError);
    {
        std::ofstream out(path);
        out << "{\"id\":\"x\",\"kind\":\"pv\",\"series\":[2.0],\"metadata\":{\"peak\":1.0,"
               "\"peak_time_index\":0,\"volatility\":\"stable\",\"shape\":\"bell\"}}\n";
    }
    CHECK_THROWS_AS(read_dataset(path), FormatError);
    fs::remove(path);
}

TEST_CASE("label csv lists one row per scenario") {
    namespace fs = std::filesystem;
    const auto ds = synth_dataset(Kind::kPv, 5, 64, 2);
    const auto path = (fs::temp_directory_path() / "flowgen_labels.csv").string();
    write_label_csv(path, ds);
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    CHECK(line == "id,kind,weather,peak,peak_time_index,volatility,shape,user_type,event_dip_at");
    int rows = 0;
    while (std::getline(in, line))
        if (!line.empty()) ++rows;
    CHECK(rows == 5);
    fs::remove(path);
}
