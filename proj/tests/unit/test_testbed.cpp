#include "dasleak/error.hpp"
#include "dasleak/testbed.hpp"

#include <doctest.h>

#include <cmath>
#include <numeric>

using namespace dasleak;

namespace {

double rms(std::span<const double> x) {
    double s = 0;
    for (double v : x) s += v * v;
    return std::sqrt(s / double(x.size()));
}

double rms(std::span<const float> x) {
    double s = 0;
    for (float v : x) s += double(v) * v;
    return std::sqrt(s / double(x.size()));
}

CaseSpec short_case(double seconds, bool leak) {
    auto c = reference_cases(seconds, 42)[leak ? 0 : 9];
    return c;
}

} // namespace

TEST_CASE("reference table has eleven rows in three leak levels plus two leak-free flows") {
    const auto cases = reference_cases(120.0, 42);
    REQUIRE(cases.size() == 11);
    CHECK(cases[0].case_id == "case01");
    CHECK(cases[10].case_id == "case11");
    std::size_t leaks = 0;
    for (const auto& c : cases) {
        leaks += c.has_leak();
        CHECK(c.duration == 120.0);
    }
    CHECK(leaks == 9);
    CHECK(cases[0].level() == LeakLevel::Excessive);
    CHECK(cases[8].level() == LeakLevel::Small);
    CHECK(cases[8].flow.leak_ratio() == doctest::Approx(0.015));
    CHECK(cases[9].level() == LeakLevel::NoLeak);
    CHECK(cases[0].reynolds_ratio(PipeSpec{}) == doctest::Approx(10.06).epsilon(0.005));
}

TEST_CASE("default layout") {
    DasConfig cfg;
    const auto layout = default_layout(cfg, 8.0);
    CHECK(layout.tags.size() == 50);
    CHECK(layout.reference_channels.size() == 7);
    CHECK(layout.leak_channel() == 10u);
    std::size_t flanges = 0, elbows = 0;
    for (auto t : layout.tags) {
        flanges += t == PositionTag::FlangeJoint;
        elbows += t == PositionTag::Elbow;
    }
    CHECK(flanges == 1);
    CHECK(elbows == 2);
    CHECK_FALSE(default_layout(cfg, std::nullopt).leak_channel().has_value());
}

TEST_CASE("gauge window spans the spatial resolution") {
    DasConfig cfg;
    CHECK(cfg.gauge_window() == 3);
    cfg.spatial_resolution = 4.0;
    CHECK(cfg.gauge_window() % 2 == 1);
}

TEST_CASE("flow noise RMS scales with the square of the flow rate") {
    SignalModel m;
    DasConfig cfg;
    const double lo = flow_noise_rms(m, 0.427e-3, PositionTag::StraightPipe);
    const double hi = flow_noise_rms(m, 1.8e-3, PositionTag::StraightPipe);
    CHECK(hi / lo == doctest::Approx(std::pow(1.8 / 0.427, 2)));
    CHECK(flow_noise_rms(m, 1e-3, PositionTag::FlangeJoint) == doctest::Approx(1.5 * flow_noise_rms(m, 1e-3, PositionTag::StraightPipe)));
    const auto x = synth_flow_noise(cfg, m, 1.8e-3, PositionTag::StraightPipe, 400000, 3);
    CHECK(rms(x) == doctest::Approx(hi).epsilon(0.05));
    const auto silent = synth_flow_noise(cfg, m, 0.0, PositionTag::StraightPipe, 100, 3);
    CHECK(std::all_of(silent.begin(), silent.end(), [](double v) { return v == 0.0; }));
}

TEST_CASE("leak envelope decays exponentially away from the orifice") {
    DasConfig cfg;
    SignalModel m;
    PipeSpec pipe;
    LeakSpec leak;
    leak.orifice_diameter = 3.72e-3;
    leak.position = 8.0;
    FlowState flow{0.427e-3, 0.319e-3};
    const auto env = leak_envelope(cfg, m, pipe, leak, flow);
    const double lambda = leak_decay_length(m, pipe, leak, flow);
    CHECK(lambda == doctest::Approx(0.22 * reynolds_leak(pipe, flow.leak_flow_rate, leak.orifice_diameter) /
                                    reynolds_pipe(pipe, flow.pipe_flow_rate)));
    const std::size_t at = cfg.nearest_channel(8.0);
    CHECK(std::max_element(env.begin(), env.end()) - env.begin() == long(at));
    CHECK(env[at + 3] / env[at] == doctest::Approx(std::exp(-2.4 / lambda)));
    CHECK(leak_envelope_extent(m, pipe, leak, flow, std::exp(-1.0)) == doctest::Approx(2 * lambda));
}

TEST_CASE("simulation is deterministic and seed dependent") {
    DasConfig cfg;
    PipeSpec pipe;
    SignalModel m;
    auto spec = short_case(1.0, true);
    const auto a = simulate_case(spec, cfg, pipe, m);
    const auto b = simulate_case(spec, cfg, pipe, m);
    CHECK(a.samples == b.samples);
    CHECK(a.samples_per_channel == 10000);
    spec.seed += 1;
    CHECK(simulate_case(spec, cfg, pipe, m).samples != a.samples);
}

TEST_CASE("leak raises vibration energy near the orifice") {
    DasConfig cfg;
    PipeSpec pipe;
    SignalModel m;
    const auto rec = simulate_case(short_case(2.0, true), cfg, pipe, m);
    const double at_leak = rms(rec.channel(10));
    const double far = rms(rec.channel(45));
    CHECK(at_leak > 3 * far);
}

TEST_CASE("transients land on the requested channel and interval") {
    DasConfig cfg;
    cfg.instrument_noise_rms = 0.0;
    PipeSpec pipe;
    SignalModel m;
    m.flow_noise_gain = 0.0;
    auto spec = short_case(3.0, false);
    spec.transients.push_back({20.0, 1.0, 1.0, 5.0, 9});
    const auto rec = simulate_case(spec, cfg, pipe, m);
    const auto ch = rec.channel(25);
    CHECK(rms(ch.subspan(0, 10000)) == 0.0);
    CHECK(rms(ch.subspan(10000, 10000)) > 1.0);
    CHECK(rms(ch.subspan(20000, 10000)) == 0.0);
    CHECK(rms(rec.channel(40)) == 0.0);
    spec.transients[0].start = 2.5;
    CHECK_THROWS_AS(simulate_case(spec, cfg, pipe, m), DomainError);
}

TEST_CASE("gauge averaging preserves a uniform field") {
    DasConfig cfg;
    cfg.instrument_noise_rms = 0.0;
    ChannelMatrix series(cfg.channel_count, 4);
    std::fill(series.data.begin(), series.data.end(), 2.5);
    apply_instrument(cfg, series, 1);
    for (double v : series.data) CHECK(v == doctest::Approx(2.5));
}

TEST_CASE("sweep cases respect their level bands") {
    SweepSettings s;
    s.count = 200;
    const auto cases = sweep_cases(s, PipeSpec{});
    REQUIRE(cases.size() == 200);
    CHECK(cases[0].case_id == "sweep001");
    std::size_t per_level[4] = {};
    const double v = jet_velocity(200e3, 0.61, 998.0);
    for (const auto& c : cases) {
        REQUIRE(c.leak);
        ++per_level[static_cast<int>(c.level())];
        CHECK(c.leak->position >= 12.0);
        CHECK(c.leak->position <= 16.0);
        const double area = std::numbers::pi * c.leak->orifice_diameter * c.leak->orifice_diameter / 4;
        CHECK(area * v == doctest::Approx(c.flow.leak_flow_rate).epsilon(1e-12));
        const double r = c.flow.leak_ratio();
        CHECK((r < 0.045 + 1e-12 || (r > 0.055 - 1e-12 && r < 0.145 + 1e-12) || r > 0.16 - 1e-12));
    }
    CHECK(per_level[0] == 0);
    for (int l = 1; l <= 3; ++l) CHECK(per_level[l] > 40);
    CHECK(sweep_cases(s, PipeSpec{})[17].seed == cases[17].seed);
}

TEST_CASE("invalid cases are rejected") {
    auto c = short_case(1.0, true);
    c.flow.leak_flow_rate = 0.0;
    CHECK_THROWS_AS(c.validate(PipeSpec{}), DomainError);
    auto d = short_case(1.0, false);
    d.duration = -1;
    CHECK_THROWS_AS(d.validate(PipeSpec{}), DomainError);
}
