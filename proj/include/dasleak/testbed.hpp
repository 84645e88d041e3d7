#pragma once

#include "dasleak/hydraulics.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace dasleak {

/// Largest cube depth any feature extractor may request.
inline constexpr std::size_t kMaxCubeDepth = 9;

/// Interrogator settings of the simulated DAS.
struct DasConfig {
    double sampling_rate = 10000.0;     // Hz
    double channel_spacing = 0.8;       // m
    double spatial_resolution = 2.0;    // m, gauge length
    std::size_t channel_count = 50;     // 40 m / 0.8 m
    double instrument_noise_rms = 0.003;

    void validate() const;
    double channel_position(std::size_t channel) const { return static_cast<double>(channel) * channel_spacing; }
    std::size_t nearest_channel(double position) const;
    /// Channels averaged by the gauge length: nearbyint(res/spacing)+1, forced odd.
    std::size_t gauge_window() const;
};

/**
 * Calibration constants of the phenomenological signal model.
 *
 * Flow noise RMS is flow_noise_gain·q² (q in m³/s) at straight pipe, scaled
 * by the coupling factors at flanges and elbows. A leak adds band-limited
 * noise whose amplitude at distance x is A0·exp(-|x|/λ), with
 * A0 = leak_amplitude_gain·r·(flow noise RMS) and λ = leak_decay_length·r,
 * r being the leak-to-pipe Reynolds ratio.
 */
struct SignalModel {
    double flow_noise_gain = 3.0e5;     // RMS per (m³/s)²
    double flow_corner_hz = 500.0;      // one-pole roll-off, -20 dB/decade above
    double flange_coupling = 1.5;
    double elbow_coupling = 1.3;
    double leak_band_low_hz = 200.0;
    double leak_band_high_hz = 4000.0;
    double leak_amplitude_gain = 1.0;   // c_A
    double leak_decay_length = 0.22;    // c_λ, m per unit Reynolds ratio

    void validate() const;
};

enum class PositionTag : std::uint8_t { StraightPipe, FlangeJoint, Elbow, LeakOrifice };

std::string_view to_string(PositionTag tag);

/// Per-channel fitting tags plus the channels used as non-leak references.
struct PipeLayout {
    std::vector<PositionTag> tags;
    std::vector<std::size_t> reference_channels;   // 1 flange, 2 elbows, 4 straight

    std::optional<std::size_t> leak_channel() const;
};

/// Testbed fittings: flange at 22.4 m, elbows at 31.2 m and 35.2 m, four
/// straight-pipe references beyond 24 m; the leak channel is tagged when given.
PipeLayout default_layout(const DasConfig& config, std::optional<double> leak_position);

/// A short external perturbation.
struct TransientSpec {
    double position = 0.0;   // m
    double start = 0.0;      // s
    double duration = 2.0;   // s, at most 5
    double amplitude = 1.0;  // peak RMS of the burst
    std::uint64_t seed = 0;
};

/// One experimental condition.
struct CaseSpec {
    std::string case_id;
    FlowState flow;
    std::optional<LeakSpec> leak;
    double duration = 120.0;  // s
    std::uint64_t seed = 0;
    std::vector<TransientSpec> transients;

    void validate(const PipeSpec& pipe) const;
    bool has_leak() const { return leak.has_value(); }
    /// Re_leak / Re_pipe, zero without a leak.
    double reynolds_ratio(const PipeSpec& pipe) const;
    LeakLevel level() const { return classify_leak_level(flow.leak_ratio()); }
};

struct GroundTruth {
    CaseSpec spec;
    PipeLayout layout;
};

/// Channel-major double-precision scratch matrix for signal synthesis.
struct ChannelMatrix {
    std::size_t channels = 0;
    std::size_t samples = 0;
    std::vector<double> data;

    ChannelMatrix() = default;
    ChannelMatrix(std::size_t c, std::size_t n) : channels(c), samples(n), data(c * n, 0.0) {}
    std::span<double> row(std::size_t c) { return {data.data() + c * samples, samples}; }
    std::span<const double> row(std::size_t c) const { return {data.data() + c * samples, samples}; }
};

/// A multi-channel DAS recording with its ground truth.
struct DasRecording {
    DasConfig config;
    std::size_t samples_per_channel = 0;
    std::vector<float> samples;   // channel-major
    GroundTruth truth;

    std::span<const float> channel(std::size_t c) const {
        return {samples.data() + c * samples_per_channel, samples_per_channel};
    }
    double duration() const { return static_cast<double>(samples_per_channel) / config.sampling_rate; }
};

/// Expected flow-noise RMS at a channel with the given tag.
double flow_noise_rms(const SignalModel& model, double flow_rate, PositionTag tag);

/**
 * Flow-induced vibration at one channel: zero-mean Gaussian noise through a
 * one-pole low-pass, scaled so its expected RMS is flow_noise_rms(). A zero
 * flow rate yields silence.
 */
std::vector<double> synth_flow_noise(const DasConfig& config, const SignalModel& model, double flow_rate,
                                     PositionTag tag, std::size_t sample_count, std::uint64_t seed);

/// Per-channel leak amplitude A0·exp(-|x - x_leak|/λ).
std::vector<double> leak_envelope(const DasConfig& config, const SignalModel& model, const PipeSpec& pipe,
                                  const LeakSpec& leak, const FlowState& flow);

/// λ = leak_decay_length·(Re_leak/Re_pipe).
double leak_decay_length(const SignalModel& model, const PipeSpec& pipe, const LeakSpec& leak,
                         const FlowState& flow);

/**
 * Closed-form width of the envelope above a fraction of its peak,
 * 2λ·ln(1/relative_level), before channel sampling.
 */
double leak_envelope_extent(const SignalModel& model, const PipeSpec& pipe, const LeakSpec& leak,
                            const FlowState& flow, double relative_level);

/// Leak jet vibration: independent flat-band noise per channel under leak_envelope().
ChannelMatrix synth_leak_signature(const DasConfig& config, const SignalModel& model, const PipeSpec& pipe,
                                   const LeakSpec& leak, const FlowState& flow, std::size_t sample_count,
                                   std::uint64_t seed);

/// A burst on a single channel, Hann-tapered white noise.
struct TransientBurst {
    std::size_t channel = 0;
    std::size_t start_sample = 0;
    std::vector<double> samples;
};

TransientBurst synth_transient(const DasConfig& config, const TransientSpec& spec, std::size_t sample_count);

void add_transient(ChannelMatrix& series, const TransientBurst& burst);

/**
 * Gauge-length averaging across gauge_window() channels with half-sample
 * symmetric edges (unit column sums, so the channel mean is preserved),
 * then additive white instrument noise.
 */
void apply_instrument(const DasConfig& config, ChannelMatrix& series, std::uint64_t seed);

DasRecording simulate_case(const CaseSpec& spec, const DasConfig& config, const PipeSpec& pipe,
                           const SignalModel& model);

/**
 * The eleven testbed rows: nine orifice leaks and two leak-free flows.
 * Leak cases sit at 8 m with gauge pressure 200 kPa.
 */
std::vector<CaseSpec> reference_cases(double duration, std::uint64_t base_seed);

/// Randomized leak cases for range-model fitting and quantification tests.
struct SweepSettings {
    std::size_t count = 60;
    double duration = 30.0;               // s
    std::uint64_t seed = 1000;
    std::string id_prefix = "sweep";
    double position_min = 12.0;           // m
    double position_max = 16.0;           // m
    double gauge_pressure = 200e3;        // Pa
    double discharge_coefficient = 0.61;
};

/**
 * Each case draws a leak level uniformly from Small/Significant/Excessive,
 * a leak-to-pipe flow ratio log-uniformly inside that level's band, a pipe
 * flow of 0.427 or 1.8 L/s, and the orifice diameter that passes the leak
 * flow at the gauge pressure.
 */
std::vector<CaseSpec> sweep_cases(const SweepSettings& settings, const PipeSpec& pipe);

struct ManifestEntry {
    std::string case_id;
    std::string recording;   // file name relative to the dataset directory
    std::string truth;
    std::uint64_t seed = 0;
    double pipe_flow_rate = 0.0;
    double leak_flow_rate = 0.0;
    double orifice_diameter = 0.0;
    double duration = 0.0;
};

struct DatasetManifest {
    std::vector<ManifestEntry> entries;
};

/// Simulates every case and writes <id>.dasr, <id>.truth and manifest.json.
DatasetManifest build_dataset(const std::vector<CaseSpec>& cases, const DasConfig& config, const PipeSpec& pipe,
                              const SignalModel& model, const std::filesystem::path& out_dir,
                              std::size_t threads = 1);

} // namespace dasleak
