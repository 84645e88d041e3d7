#include "dasleak/detect.hpp"
#include "dasleak/error.hpp"
#include "dasleak/rng.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>

using namespace dasleak;

namespace {

// windows x channels map with channels 0 and last unscored
std::vector<Prediction> grid_predictions(std::size_t windows, std::size_t channels,
                                         const std::function<double(std::size_t, std::size_t)>& p) {
    std::vector<Prediction> out;
    for (std::size_t w = 0; w < windows; ++w)
        for (std::size_t c = 1; c + 1 < channels; ++c) out.push_back({w, c, p(w, c)});
    return out;
}

} // namespace

TEST_CASE("assemble_map places predictions and marks unscored channels") {
    const auto preds = grid_predictions(3, 6, [](auto w, auto c) { return 0.1 * double(w) + 0.01 * double(c); });
    const auto map = assemble_map(preds, 6, 0.8);
    CHECK(map.windows == 3);
    CHECK(map.channels == 6);
    CHECK(map.at(2, 3) == doctest::Approx(0.23));
    CHECK_FALSE(map.present(0, 0));
    CHECK(map.present(0, 1));
    CHECK(map.scored_channel_count() == 4);
    CHECK(map.channel_position(5) == doctest::Approx(4.0));
}

TEST_CASE("assemble_map is order independent") {
    auto preds = grid_predictions(4, 7, [](auto w, auto c) { return std::fmod(0.37 * double(w * 7 + c), 1.0); });
    const auto a = assemble_map(preds, 7, 0.8);
    Rng rng(3);
    for (std::size_t i = preds.size(); i > 1; --i) std::swap(preds[i - 1], preds[rng.below(i)]);
    const auto b = assemble_map(preds, 7, 0.8);
    CHECK(map_to_csv(a) == map_to_csv(b));
}

TEST_CASE("assemble_map rejects malformed streams") {
    CHECK_THROWS_AS(assemble_map({}, 5, 0.8), DomainError);
    std::vector<Prediction> bad{{0, 9, 0.5}};
    CHECK_THROWS_AS(assemble_map(bad, 5, 0.8), DomainError);
    bad = {{0, 1, 1.5}};
    CHECK_THROWS_AS(assemble_map(bad, 5, 0.8), DomainError);
    bad = {{0, 1, 0.5}, {0, 1, 0.6}};
    CHECK_THROWS_AS(assemble_map(bad, 5, 0.8), DomainError);
    bad = {{0, 1, 0.5}, {0, 2, 0.5}, {1, 1, 0.5}};   // window 1 misses channel 2
    CHECK_THROWS_AS(assemble_map(bad, 5, 0.8), DomainError);
    bad = {{0, 1, 0.5}, {0, 1, 0.5}};
    CHECK_NOTHROW(assemble_map(bad, 5, 0.8));
}

TEST_CASE("median profile uses the most recent windows within the horizon") {
    // 50 windows of 5 s; 210 s covers the last 42
    const auto preds = grid_predictions(50, 5, [](auto w, auto) { return w < 8 ? 1.0 : 0.0; });
    const auto map = assemble_map(preds, 5, 0.8);
    const auto prof = median_profile(map);
    CHECK(prof.windows_used == 42);
    CHECK_FALSE(prof.clamped);
    CHECK(prof.values[2] == 0.0);
    CHECK(std::isnan(prof.values[0]));
    const auto all = median_profile(map, 250.0);
    CHECK(all.windows_used == 50);
    CHECK(median_profile(map, 300.0).clamped);
    CHECK_THROWS_AS(median_profile(map, 0.0), DomainError);
}

TEST_CASE("median profile ignores a minority of bursts") {
    // 20 of 42 windows at 1.0 still leave the lower median at 0
    const auto preds = grid_predictions(42, 5, [](auto w, auto c) { return c == 2 && w % 2 == 0 && w < 40 ? 1.0 : 0.05; });
    const auto prof = median_profile(assemble_map(preds, 5, 0.8));
    CHECK(prof.values[2] == doctest::Approx(0.05));
    CHECK_FALSE(find_leak(prof).declared);
}

TEST_CASE("median of an even count takes the lower middle") {
    const auto preds = grid_predictions(4, 3, [](auto w, auto) { return 0.1 * double(w + 1); });
    const auto prof = median_profile(assemble_map(preds, 3, 0.8), 20.0);
    CHECK(prof.values[1] == doctest::Approx(0.2));
}

TEST_CASE("widest run tie-breaks on peak then position") {
    const double nan = std::nan("");
    std::vector<double> v{0.95, 0.95, 0.1, 0.91, 0.99, 0.2, nan, 0.97, 0.92};
    auto r = widest_run(v, 0.9);
    REQUIRE(r);
    CHECK(r->first == 3);   // three runs of two; the middle has the highest peak
    CHECK(r->peak == 0.99);
    v[4] = 0.95;
    r = widest_run(v, 0.9);
    CHECK(r->first == 7);   // 0.97 beats 0.95
    v = {0.95, 0.95, 0.1, 0.93, 0.95};
    CHECK(widest_run(v, 0.9)->first == 0);
    CHECK_FALSE(widest_run(std::vector<double>{0.9, 0.2}, 0.9));
}

TEST_CASE("leak finding reports the outer edges of the run") {
    MedianProfile prof;
    prof.channel_spacing = 0.8;
    prof.values = {std::nan(""), 0.1, 0.95, 0.97, 0.93, 0.2, std::nan("")};
    const auto f = find_leak(prof);
    REQUIRE(f.declared);
    CHECK(f.first_channel == 2);
    CHECK(f.last_channel == 4);
    CHECK(f.range_start == doctest::Approx(1.2));
    CHECK(f.range_end == doctest::Approx(3.6));
    CHECK(f.width() == doctest::Approx(2.4));
    CHECK(f.center == doctest::Approx(2.4));
    CHECK(f.peak_median == 0.97);
}

TEST_CASE("raising the threshold never widens the declared range") {
    Rng rng(5);
    MedianProfile prof;
    for (int i = 0; i < 60; ++i) prof.values.push_back(rng.uniform());
    double last = 1e9;
    for (double thr = 0.0; thr < 1.0; thr += 0.05) {
        const auto r = widest_run(prof.values, thr);
        const double width = r ? double(r->length()) : 0.0;
        CHECK(width <= last);
        last = width;
    }
}

TEST_CASE("rate counts use a strict threshold") {
    RateCounts c;
    c.add(true, 0.95);
    c.add(true, 0.9);
    c.add(false, 0.91);
    c.add(false, 0.2);
    CHECK(*c.tpr() == 0.5);
    CHECK(*c.far() == 0.5);
    RateCounts empty;
    CHECK_FALSE(empty.tpr());
    empty += c;
    CHECK(empty.leak_total == 2);
}

TEST_CASE("metrics score location error only for declared leaks") {
    RateCounts c;
    c.add(true, 0.99);
    LeakFinding f;
    f.declared = true;
    f.center = 9.0;
    auto m = score_metrics(c, f, 8.0);
    CHECK(*m.location_error == doctest::Approx(1.0));
    CHECK_FALSE(score_metrics(c, f, std::nullopt).location_error);
    f.declared = false;
    CHECK_FALSE(score_metrics(c, f, 8.0).location_error);
    const auto json = metrics_to_json(m);
    CHECK(json.find("\"location_error_m\"") != std::string::npos);
    CHECK(json.find("\"far\": null") != std::string::npos);
}

TEST_CASE("probability map CSV round-trips exactly") {
    auto preds = grid_predictions(5, 8, [](auto w, auto c) { return std::fmod(0.1234567891 * double(w * 8 + c), 1.0); });
    const auto map = assemble_map(preds, 8, 0.8);
    const auto prof = median_profile(map);
    const auto csv = map_to_csv(map, &prof);
    const auto parsed = parse_map_csv(csv);
    CHECK(parsed.map.windows == map.windows);
    CHECK(parsed.map.channels == map.channels);
    CHECK(parsed.map.channel_spacing == map.channel_spacing);
    for (std::size_t i = 0; i < map.values.size(); ++i) {
        if (std::isnan(map.values[i])) CHECK(std::isnan(parsed.map.values[i]));
        else CHECK(parsed.map.values[i] == map.values[i]);
    }
    REQUIRE(parsed.median);
    CHECK(map_to_csv(parsed.map, &prof) == csv);
    CHECK_THROWS_AS(parse_map_csv("window_start_s,0\n0,abc\n"), FormatError);
    CHECK_THROWS_AS(parse_map_csv(""), FormatError);
}

TEST_CASE("shortest round-trip formatting") {
    CHECK(format_double(0.1) == "0.1");
    CHECK(std::stod(format_double(1.0 / 3.0)) == 1.0 / 3.0);
}
