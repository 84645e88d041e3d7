#pragma once

#include "dasleak/detect.hpp"
#include "dasleak/hydraulics.hpp"

#include <array>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace dasleak {

/// affected range [m] = a · Reynolds ratio + b
struct RangeModel {
    double a = 0.0;
    double b = 0.0;
    double r_squared = 0.0;
    std::vector<std::string> fit_case_ids;

    std::string to_json() const;
    static RangeModel from_json(const std::string& text, const std::string& source = "range model");
};

struct RangeSample {
    double affected_range = 0.0;   // m
    double re_ratio = 0.0;
    std::string case_id;
};

/// Ordinary least squares; throws DomainError with fewer than two distinct ratios.
RangeModel fit_range_model(std::span<const RangeSample> samples);

inline constexpr double kRangeAveragingTime = 30.0;   // s

/// Widest above-threshold run of one window, in metres (0 without a run).
double window_affected_range(const ProbabilityMap& map, std::size_t window, double threshold = kLeakThreshold);

/// Mean of window_affected_range over the most recent `duration` seconds of the map.
double mean_affected_range(const ProbabilityMap& map, double duration = kRangeAveragingTime,
                           double threshold = kLeakThreshold);

struct HydraulicInputs {
    double pipe_flow_rate = 0.0;          // m³/s
    double gauge_pressure = 200e3;        // Pa
    double discharge_coefficient = 0.61;
};

struct QuantifiedLeak {
    double affected_range = 0.0;
    double re_ratio = 0.0;
    double orifice_diameter = 0.0;   // m
    double leak_flow_rate = 0.0;     // m³/s
    double leak_ratio = 0.0;
    LeakLevel level = LeakLevel::NoLeak;

    std::string to_json() const;
};

/**
 * Inverts the range model and the orifice equation:
 * ratio = max(0, (range - b) / a), d = ratio · Re_pipe · ν / v_jet,
 * Q = v_jet · π d² / 4. Throws DomainError when a ≤ 0.
 */
QuantifiedLeak quantify(double affected_range, const RangeModel& model, const PipeSpec& pipe,
                        const HydraulicInputs& inputs);

/// 3×3 confusion counts over Small/Significant/Excessive plus true leaks quantified as no leak.
struct TruthTable {
    std::array<std::array<std::size_t, 3>, 3> counts{};
    std::array<std::size_t, 3> missed{};   // predicted NoLeak

    std::size_t row_total(std::size_t row) const;
    std::optional<double> accuracy(std::size_t row) const;   // absent for an empty row
    std::optional<double> overall_accuracy() const;
    std::string to_json() const;
};

/// Pairs of (true, predicted); true NoLeak entries are skipped.
TruthTable truth_table(std::span<const std::pair<LeakLevel, LeakLevel>> outcomes);

} // namespace dasleak
