#pragma once

#include <optional>
#include <string_view>

namespace dasleak {

/// Pipe geometry and fluid properties. Lengths in m, viscosity in m²/s.
struct PipeSpec {
    double internal_diameter = 0.05;       // m
    double wall_thickness = 0.0036;        // m
    double sensed_length = 40.0;           // m
    double kinematic_viscosity = 1.0035e-6;// m²/s, water near 20 °C
    double water_density = 998.0;          // kg/m³

    void validate() const;
};

/// An orifice leak on the sensed pipe section.
struct LeakSpec {
    double orifice_diameter = 0.0;         // m
    double position = 0.0;                 // m along the sensed section
    double gauge_pressure = 200e3;         // Pa
    double discharge_coefficient = 0.61;   // sharp-edged orifice

    void validate(const PipeSpec& pipe) const;
};

/// Volumetric flows in m³/s.
struct FlowState {
    double pipe_flow_rate = 0.0;
    double leak_flow_rate = 0.0;           // zero when there is no leak

    void validate() const;
    double leak_ratio() const { return leak_flow_rate / pipe_flow_rate; }
};

enum class LeakLevel { NoLeak, Small, Significant, Excessive };

std::string_view to_string(LeakLevel level);
std::optional<LeakLevel> parse_leak_level(std::string_view name);

/// Re = 4q / (π D ν) for the full pipe cross-section.
double reynolds_pipe(const PipeSpec& pipe, double flow_rate);

/// Re = 4q / (π d ν) for the jet through an orifice of diameter d.
double reynolds_leak(const PipeSpec& pipe, double leak_flow_rate, double orifice_diameter);

struct OrificeFlow {
    double flow_rate;      // m³/s
    double jet_velocity;   // m/s, C_d·sqrt(2ΔP/ρ)
};

/// Jet velocity C_d·sqrt(2ΔP/ρ) of the orifice equation.
double jet_velocity(double gauge_pressure, double discharge_coefficient, double density);

/// Orifice equation Q = C_d·(π d²/4)·sqrt(2ΔP/ρ).
OrificeFlow orifice_flow(const LeakSpec& leak, const PipeSpec& pipe);

/**
 * Three-level leak taxonomy on the leak-to-pipe flow ratio:
 * 0 is NoLeak, (0, 0.05) Small, [0.05, 0.15] Significant, above 0.15 Excessive.
 */
LeakLevel classify_leak_level(double leak_ratio);

} // namespace dasleak
