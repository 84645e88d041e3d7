#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace dasleak {

/// One cube prediction placed on the time-position grid.
struct Prediction {
    std::size_t window = 0;
    std::size_t channel = 0;
    double probability = 0.0;
};

/// Window-major (time × position) leak probabilities; NaN marks unscored cells.
struct ProbabilityMap {
    std::size_t windows = 0;
    std::size_t channels = 0;
    double channel_spacing = 0.8;     // m
    double window_duration = 5.0;     // s
    std::vector<double> values;

    double at(std::size_t window, std::size_t channel) const { return values[window * channels + channel]; }
    bool present(std::size_t window, std::size_t channel) const;
    double channel_position(std::size_t channel) const { return static_cast<double>(channel) * channel_spacing; }
    std::size_t scored_channel_count() const;
};

/**
 * Builds the map from predictions in any order. The predicted windows must be
 * 0..n-1 and every scored channel must appear in every window. Identical
 * duplicates are accepted; conflicting duplicates, an empty stream and
 * probabilities outside [0, 1] raise DomainError.
 */
ProbabilityMap assemble_map(std::span<const Prediction> predictions, std::size_t channel_count,
                            double channel_spacing, double window_duration = 5.0);

struct MedianProfile {
    std::vector<double> values;       // per channel; NaN where unscored
    double channel_spacing = 0.8;
    std::size_t windows_used = 0;
    bool clamped = false;             // horizon was longer than the map
};

inline constexpr double kDefaultHorizon = 210.0;   // s
inline constexpr double kLeakThreshold = 0.9;

/// Per-channel median over the last ceil(horizon / window) windows (lower middle for even counts).
MedianProfile median_profile(const ProbabilityMap& map, double horizon = kDefaultHorizon);

struct LeakFinding {
    bool declared = false;
    double range_start = 0.0;         // m, outer edge of the first channel in the run
    double range_end = 0.0;           // m
    double center = 0.0;              // m, midpoint of the run's channel positions
    double peak_median = 0.0;
    std::size_t first_channel = 0;
    std::size_t last_channel = 0;

    double width() const { return declared ? range_end - range_start : 0.0; }
};

/// A run of consecutive present channels strictly above a threshold.
struct ChannelRun {
    std::size_t first = 0;
    std::size_t last = 0;
    double peak = 0.0;
    std::size_t length() const { return last - first + 1; }
};

/// Widest run; ties go to the higher peak, then the leftmost. Absent entries break runs.
std::optional<ChannelRun> widest_run(std::span<const double> values, double threshold);

LeakFinding find_leak(const MedianProfile& profile, double threshold = kLeakThreshold);

/// Per-cube tallies at a detection threshold.
struct RateCounts {
    std::size_t leak_total = 0;
    std::size_t leak_hits = 0;
    std::size_t nonleak_total = 0;
    std::size_t false_alarms = 0;

    void add(bool is_leak, double probability, double threshold = kLeakThreshold);
    RateCounts& operator+=(const RateCounts& other);
    std::optional<double> tpr() const;
    std::optional<double> far() const;
};

struct DetectionMetrics {
    std::optional<double> tpr;
    std::optional<double> far;
    std::optional<double> location_error;   // m; leak cases with a declaration only
    LeakFinding finding;
};

DetectionMetrics score_metrics(const RateCounts& counts, const LeakFinding& finding,
                               std::optional<double> true_leak_position);

std::string metrics_to_json(const DetectionMetrics& metrics);

/// CSV with a header of channel positions, one row per window and a trailing "# median" row.
std::string map_to_csv(const ProbabilityMap& map, const MedianProfile* profile = nullptr);

struct ParsedMapCsv {
    ProbabilityMap map;
    std::optional<std::vector<double>> median;
};

/// Inverse of map_to_csv; throws FormatError naming `source` on malformed input.
ParsedMapCsv parse_map_csv(const std::string& text, const std::string& source = "map");

/// Shortest decimal text that reads back to the same double.
std::string format_double(double value);

} // namespace dasleak
