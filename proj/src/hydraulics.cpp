#include "dasleak/hydraulics.hpp"

#include "dasleak/error.hpp"

#include <cmath>
#include <numbers>

namespace dasleak {

namespace {

constexpr double kSmallUpper = 0.05;
constexpr double kSignificantUpper = 0.15;

bool positive_finite(double x) { return std::isfinite(x) && x > 0.0; }

} // namespace

void PipeSpec::validate() const {
    require(positive_finite(internal_diameter), "pipe internal diameter must be positive");
    require(positive_finite(wall_thickness), "pipe wall thickness must be positive");
    require(std::isfinite(sensed_length) && sensed_length >= 1.0, "sensed length must be at least 1 m");
    require(positive_finite(kinematic_viscosity), "kinematic viscosity must be positive");
    require(positive_finite(water_density), "water density must be positive");
}

void LeakSpec::validate(const PipeSpec& pipe) const {
    require(positive_finite(orifice_diameter) && orifice_diameter < pipe.internal_diameter,
            "orifice diameter must lie in (0, pipe internal diameter)");
    require(std::isfinite(position) && position >= 0.0 && position <= pipe.sensed_length,
            "leak position must lie on the sensed section");
    require(positive_finite(gauge_pressure), "gauge pressure must be positive");
    require(positive_finite(discharge_coefficient) && discharge_coefficient <= 1.0,
            "discharge coefficient must lie in (0, 1]");
}

void FlowState::validate() const {
    require(positive_finite(pipe_flow_rate), "pipe flow rate must be positive");
    require(std::isfinite(leak_flow_rate) && leak_flow_rate >= 0.0 && leak_flow_rate < pipe_flow_rate,
            "leak flow rate must lie in [0, pipe flow rate)");
}

std::string_view to_string(LeakLevel level) {
    switch (level) {
    case LeakLevel::NoLeak: return "no_leak";
    case LeakLevel::Small: return "small";
    case LeakLevel::Significant: return "significant";
    case LeakLevel::Excessive: return "excessive";
    }
    return "unknown";
}

std::optional<LeakLevel> parse_leak_level(std::string_view name) {
    for (auto level : {LeakLevel::NoLeak, LeakLevel::Small, LeakLevel::Significant, LeakLevel::Excessive})
        if (to_string(level) == name) return level;
    return std::nullopt;
}

double reynolds_pipe(const PipeSpec& pipe, double flow_rate) {
    require(positive_finite(flow_rate), "pipe flow rate must be positive and finite");
    require(positive_finite(pipe.internal_diameter) && positive_finite(pipe.kinematic_viscosity),
            "pipe diameter and viscosity must be positive and finite");
    return 4.0 * flow_rate / (std::numbers::pi * pipe.internal_diameter * pipe.kinematic_viscosity);
}

double reynolds_leak(const PipeSpec& pipe, double leak_flow_rate, double orifice_diameter) {
    require(positive_finite(leak_flow_rate), "leak flow rate must be positive and finite");
    require(positive_finite(orifice_diameter), "orifice diameter must be positive and finite");
    require(positive_finite(pipe.kinematic_viscosity), "viscosity must be positive and finite");
    return 4.0 * leak_flow_rate / (std::numbers::pi * orifice_diameter * pipe.kinematic_viscosity);
}

double jet_velocity(double gauge_pressure, double discharge_coefficient, double density) {
    require(positive_finite(gauge_pressure), "gauge pressure must be positive");
    require(positive_finite(discharge_coefficient) && discharge_coefficient <= 1.0,
            "discharge coefficient must lie in (0, 1]");
    require(positive_finite(density), "density must be positive");
    return discharge_coefficient * std::sqrt(2.0 * gauge_pressure / density);
}

OrificeFlow orifice_flow(const LeakSpec& leak, const PipeSpec& pipe) {
    const double v = jet_velocity(leak.gauge_pressure, leak.discharge_coefficient, pipe.water_density);
    require(std::isfinite(leak.orifice_diameter) && leak.orifice_diameter >= 0.0,
            "orifice diameter must be non-negative");
    const double area = std::numbers::pi * leak.orifice_diameter * leak.orifice_diameter / 4.0;
    return {area * v, v};
}

LeakLevel classify_leak_level(double leak_ratio) {
    require(std::isfinite(leak_ratio) && leak_ratio >= 0.0, "leak ratio must be non-negative");
    if (leak_ratio == 0.0) return LeakLevel::NoLeak;
    if (leak_ratio < kSmallUpper) return LeakLevel::Small;
    if (leak_ratio <= kSignificantUpper) return LeakLevel::Significant;
    return LeakLevel::Excessive;
}

} // namespace dasleak
