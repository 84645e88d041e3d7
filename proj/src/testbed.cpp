#include "dasleak/testbed.hpp"

#include "dasleak/error.hpp"
#include "dasleak/fft.hpp"
#include "dasleak/recording_io.hpp"
#include "dasleak/rng.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <complex>
#include <cstdio>
#include <exception>
#include <mutex>
#include <numbers>
#include <set>
#include <thread>

namespace dasleak {

namespace {

// Sub-stream identifiers for derive_seed().
enum : std::uint64_t { kFlowStream = 1, kLeakStream = 2, kInstrumentStream = 3, kTransientStream = 4 };

/// Unit-RMS Gaussian noise, flat between lo and hi Hz, built in the frequency domain.
void band_noise(RealFft& fft, double sampling_rate, double lo, double hi, Rng& rng, std::span<double> out) {
    const std::size_t n = fft.size();
    std::vector<std::complex<double>> spectrum(fft.bins());
    std::size_t in_band = 0;
    for (std::size_t k = 1; k + 1 < fft.bins(); ++k) {
        const double f = static_cast<double>(k) * sampling_rate / static_cast<double>(n);
        if (f < lo || f > hi) continue;
        spectrum[k] = {rng.normal() * std::numbers::sqrt2 / 2.0, rng.normal() * std::numbers::sqrt2 / 2.0};
        ++in_band;
    }
    require(in_band > 0, "leak band contains no frequency bins");
    fft.inverse(spectrum, out);
    const double scale = 1.0 / std::sqrt(2.0 * static_cast<double>(in_band));
    for (double& v : out) v *= scale;
}

} // namespace

void DasConfig::validate() const {
    require(std::isfinite(sampling_rate) && sampling_rate > 0.0, "sampling rate must be positive");
    require(std::isfinite(channel_spacing) && channel_spacing > 0.0, "channel spacing must be positive");
    require(std::isfinite(spatial_resolution) && spatial_resolution >= channel_spacing,
            "spatial resolution must be at least the channel spacing");
    require(channel_count >= kMaxCubeDepth, "channel count must cover the deepest feature cube");
    require(std::isfinite(instrument_noise_rms) && instrument_noise_rms >= 0.0,
            "instrument noise RMS must be non-negative");
}

std::size_t DasConfig::nearest_channel(double position) const {
    const double idx = std::nearbyint(position / channel_spacing);
    if (idx <= 0.0) return 0;
    return std::min(static_cast<std::size_t>(idx), channel_count - 1);
}

std::size_t DasConfig::gauge_window() const {
    auto w = static_cast<std::size_t>(std::nearbyint(spatial_resolution / channel_spacing)) + 1;
    if (w % 2 == 0) ++w;
    return w;
}

void SignalModel::validate() const {
    require(flow_noise_gain >= 0.0 && std::isfinite(flow_noise_gain), "flow noise gain must be non-negative");
    require(flow_corner_hz > 0.0, "flow corner frequency must be positive");
    require(flange_coupling > 0.0 && elbow_coupling > 0.0, "coupling factors must be positive");
    require(leak_band_low_hz >= 0.0 && leak_band_high_hz > leak_band_low_hz, "leak band must be non-empty");
    require(leak_amplitude_gain >= 0.0, "leak amplitude gain must be non-negative");
    require(leak_decay_length > 0.0, "leak decay length must be positive");
}

std::string_view to_string(PositionTag tag) {
    switch (tag) {
    case PositionTag::StraightPipe: return "straight";
    case PositionTag::FlangeJoint: return "flange";
    case PositionTag::Elbow: return "elbow";
    case PositionTag::LeakOrifice: return "leak";
    }
    return "unknown";
}

std::optional<std::size_t> PipeLayout::leak_channel() const {
    auto it = std::find(tags.begin(), tags.end(), PositionTag::LeakOrifice);
    if (it == tags.end()) return std::nullopt;
    return static_cast<std::size_t>(it - tags.begin());
}

PipeLayout default_layout(const DasConfig& config, std::optional<double> leak_position) {
    PipeLayout layout;
    layout.tags.assign(config.channel_count, PositionTag::StraightPipe);
    const std::size_t flange = config.nearest_channel(22.4);
    const std::size_t elbows[] = {config.nearest_channel(31.2), config.nearest_channel(35.2)};
    const std::size_t straight[] = {config.nearest_channel(24.0), config.nearest_channel(26.4),
                                    config.nearest_channel(28.8), config.nearest_channel(33.6)};
    layout.tags[flange] = PositionTag::FlangeJoint;
    for (auto c : elbows) layout.tags[c] = PositionTag::Elbow;
    layout.reference_channels = {flange, elbows[0], elbows[1]};
    layout.reference_channels.insert(layout.reference_channels.end(), std::begin(straight), std::end(straight));
    std::sort(layout.reference_channels.begin(), layout.reference_channels.end());

    if (leak_position) {
        const std::size_t leak = config.nearest_channel(*leak_position);
        layout.tags[leak] = PositionTag::LeakOrifice;
        // A reference channel cannot double as the leak.
        std::erase(layout.reference_channels, leak);
    }
    return layout;
}

void CaseSpec::validate(const PipeSpec& pipe) const {
    require(!case_id.empty(), "case id must not be empty");
    require(std::isfinite(duration) && duration > 0.0, "case duration must be positive");
    flow.validate();
    require(leak.has_value() == (flow.leak_flow_rate > 0.0), "a leak is present iff the leak flow is positive");
    if (leak) leak->validate(pipe);
}

double CaseSpec::reynolds_ratio(const PipeSpec& pipe) const {
    if (!leak) return 0.0;
    return reynolds_leak(pipe, flow.leak_flow_rate, leak->orifice_diameter) /
           reynolds_pipe(pipe, flow.pipe_flow_rate);
}

double flow_noise_rms(const SignalModel& model, double flow_rate, PositionTag tag) {
    double coupling = 1.0;
    if (tag == PositionTag::FlangeJoint) coupling = model.flange_coupling;
    if (tag == PositionTag::Elbow) coupling = model.elbow_coupling;
    return model.flow_noise_gain * flow_rate * flow_rate * coupling;
}

std::vector<double> synth_flow_noise(const DasConfig& config, const SignalModel& model, double flow_rate,
                                     PositionTag tag, std::size_t sample_count, std::uint64_t seed) {
    require(std::isfinite(flow_rate) && flow_rate >= 0.0, "flow rate must be non-negative");
    std::vector<double> out(sample_count, 0.0);
    const double rms = flow_noise_rms(model, flow_rate, tag);
    if (rms == 0.0) return out;

    const double pole = std::exp(-2.0 * std::numbers::pi * model.flow_corner_hz / config.sampling_rate);
    const double gain = (1.0 - pole) / (1.0 + pole);  // output/input variance ratio
    const double drive = rms / std::sqrt(gain);
    Rng rng(seed);
    double state = rms * rng.normal();  // start in the stationary distribution
    for (auto& v : out) {
        state = pole * state + (1.0 - pole) * drive * rng.normal();
        v = state;
    }
    return out;
}

double leak_decay_length(const SignalModel& model, const PipeSpec& pipe, const LeakSpec& leak,
                         const FlowState& flow) {
    const double ratio = reynolds_leak(pipe, flow.leak_flow_rate, leak.orifice_diameter) /
                         reynolds_pipe(pipe, flow.pipe_flow_rate);
    return model.leak_decay_length * ratio;
}

std::vector<double> leak_envelope(const DasConfig& config, const SignalModel& model, const PipeSpec& pipe,
                                  const LeakSpec& leak, const FlowState& flow) {
    const double ratio = reynolds_leak(pipe, flow.leak_flow_rate, leak.orifice_diameter) /
                         reynolds_pipe(pipe, flow.pipe_flow_rate);
    const double peak = model.leak_amplitude_gain * ratio *
                        flow_noise_rms(model, flow.pipe_flow_rate, PositionTag::StraightPipe);
    const double decay = model.leak_decay_length * ratio;
    std::vector<double> amplitude(config.channel_count);
    for (std::size_t c = 0; c < config.channel_count; ++c) {
        const double distance = std::abs(config.channel_position(c) - leak.position);
        amplitude[c] = peak * std::exp(-distance / decay);
    }
    return amplitude;
}

double leak_envelope_extent(const SignalModel& model, const PipeSpec& pipe, const LeakSpec& leak,
                            const FlowState& flow, double relative_level) {
    require(relative_level > 0.0 && relative_level < 1.0, "relative level must lie in (0, 1)");
    return 2.0 * leak_decay_length(model, pipe, leak, flow) * std::log(1.0 / relative_level);
}

ChannelMatrix synth_leak_signature(const DasConfig& config, const SignalModel& model, const PipeSpec& pipe,
                                   const LeakSpec& leak, const FlowState& flow, std::size_t sample_count,
                                   std::uint64_t seed) {
    require(flow.leak_flow_rate > 0.0, "leak signature needs a positive leak flow");
    ChannelMatrix out(config.channel_count, sample_count);
    if (sample_count < 2) return out;
    const auto amplitude = leak_envelope(config, model, pipe, leak, flow);
    const double peak = *std::max_element(amplitude.begin(), amplitude.end());
    if (peak == 0.0) return out;

    RealFft fft(sample_count);
    for (std::size_t c = 0; c < config.channel_count; ++c) {
        // Below this the contribution is far under float resolution of the flow noise.
        if (amplitude[c] < 1e-9 * peak) continue;
        Rng rng(derive_seed(seed, c));
        auto row = out.row(c);
        band_noise(fft, config.sampling_rate, model.leak_band_low_hz, model.leak_band_high_hz, rng, row);
        for (double& v : row) v *= amplitude[c];
    }
    return out;
}

TransientBurst synth_transient(const DasConfig& config, const TransientSpec& spec, std::size_t sample_count) {
    require(std::isfinite(spec.duration) && spec.duration > 0.0 && spec.duration <= 5.0,
            "transient duration must lie in (0, 5] s");
    require(std::isfinite(spec.start) && spec.start >= 0.0, "transient start must be non-negative");
    require(spec.position >= 0.0 && spec.position <= config.channel_position(config.channel_count - 1),
            "transient position lies outside the fiber");
    const auto start = static_cast<std::size_t>(std::llround(spec.start * config.sampling_rate));
    const auto length = static_cast<std::size_t>(std::llround(spec.duration * config.sampling_rate));
    if (start + length > sample_count) throw DomainError("transient extends past the end of the recording");

    TransientBurst burst;
    burst.channel = config.nearest_channel(spec.position);
    burst.start_sample = start;
    burst.samples.assign(length, 0.0);
    if (spec.amplitude == 0.0 || length < 2) return burst;
    Rng rng(spec.seed);
    for (std::size_t i = 0; i < length; ++i) {
        const double taper = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                                  static_cast<double>(length - 1));
        burst.samples[i] = spec.amplitude * taper * rng.normal();
    }
    return burst;
}

void add_transient(ChannelMatrix& series, const TransientBurst& burst) {
    require(burst.channel < series.channels, "transient channel outside the recording");
    require(burst.start_sample + burst.samples.size() <= series.samples, "transient outside the recording");
    auto row = series.row(burst.channel);
    for (std::size_t i = 0; i < burst.samples.size(); ++i) row[burst.start_sample + i] += burst.samples[i];
}

void apply_instrument(const DasConfig& config, ChannelMatrix& series, std::uint64_t seed) {
    const std::size_t window = config.gauge_window();
    const auto half = static_cast<std::ptrdiff_t>(window / 2);
    const auto channels = static_cast<std::ptrdiff_t>(series.channels);
    const double weight = 1.0 / static_cast<double>(window);
    auto reflect = [channels](std::ptrdiff_t i) {
        while (i < 0 || i >= channels) i = i < 0 ? -i - 1 : 2 * channels - i - 1;
        return i;
    };

    ChannelMatrix averaged(series.channels, series.samples);
    for (std::ptrdiff_t c = 0; c < channels; ++c) {
        auto dst = averaged.row(static_cast<std::size_t>(c));
        for (std::ptrdiff_t j = -half; j <= half; ++j) {
            auto src = series.row(static_cast<std::size_t>(reflect(c + j)));
            for (std::size_t t = 0; t < series.samples; ++t) dst[t] += weight * src[t];
        }
    }
    if (config.instrument_noise_rms > 0.0) {
        for (std::size_t c = 0; c < averaged.channels; ++c) {
            Rng rng(derive_seed(seed, c));
            for (double& v : averaged.row(c)) v += config.instrument_noise_rms * rng.normal();
        }
    }
    series = std::move(averaged);
}

DasRecording simulate_case(const CaseSpec& spec, const DasConfig& config, const PipeSpec& pipe,
                           const SignalModel& model) {
    config.validate();
    pipe.validate();
    model.validate();
    spec.validate(pipe);

    const auto n = static_cast<std::size_t>(std::llround(spec.duration * config.sampling_rate));
    DasRecording rec;
    rec.config = config;
    rec.samples_per_channel = n;
    rec.truth.spec = spec;
    rec.truth.layout = default_layout(config, spec.leak ? std::optional(spec.leak->position) : std::nullopt);

    ChannelMatrix series(config.channel_count, n);
    for (std::size_t c = 0; c < config.channel_count; ++c) {
        // The orifice itself sits on straight pipe.
        auto tag = rec.truth.layout.tags[c];
        if (tag == PositionTag::LeakOrifice) tag = PositionTag::StraightPipe;
        auto flow = synth_flow_noise(config, model, spec.flow.pipe_flow_rate, tag, n,
                                     derive_seed(spec.seed, kFlowStream, c));
        std::copy(flow.begin(), flow.end(), series.row(c).begin());
    }
    if (spec.leak) {
        const auto leak = synth_leak_signature(config, model, pipe, *spec.leak, spec.flow, n,
                                               derive_seed(spec.seed, kLeakStream));
        for (std::size_t i = 0; i < series.data.size(); ++i) series.data[i] += leak.data[i];
    }
    for (const auto& transient : spec.transients) add_transient(series, synth_transient(config, transient, n));
    apply_instrument(config, series, derive_seed(spec.seed, kInstrumentStream));

    rec.samples.resize(series.data.size());
    for (std::size_t i = 0; i < series.data.size(); ++i) {
        const double v = series.data[i];
        if (!std::isfinite(v)) throw NumericalError("non-finite sample synthesized for case " + spec.case_id);
        rec.samples[i] = static_cast<float>(v);
    }
    return rec;
}

std::vector<CaseSpec> reference_cases(double duration, std::uint64_t base_seed) {
    struct Row {
        double pipe_lps;
        double leak_lps;
        double orifice_mm;
    };
    static constexpr Row rows[] = {
        {0.427, 0.319, 3.72}, {0.427, 0.261, 3.36}, {0.427, 0.102, 2.15}, {1.800, 0.399, 4.63},
        {1.800, 0.257, 3.72}, {1.800, 0.209, 3.36}, {0.427, 0.034, 1.22}, {1.800, 0.084, 2.15},
        {1.800, 0.027, 1.22}, {0.427, 0.0, 0.0},    {1.800, 0.0, 0.0},
    };
    std::vector<CaseSpec> cases;
    for (std::size_t i = 0; i < std::size(rows); ++i) {
        CaseSpec spec;
        spec.case_id = (i + 1 < 10 ? "case0" : "case") + std::to_string(i + 1);
        spec.flow.pipe_flow_rate = rows[i].pipe_lps * 1e-3;
        spec.flow.leak_flow_rate = rows[i].leak_lps * 1e-3;
        spec.duration = duration;
        spec.seed = derive_seed(base_seed, i + 1);
        if (rows[i].leak_lps > 0.0) {
            LeakSpec leak;
            leak.orifice_diameter = rows[i].orifice_mm * 1e-3;
            leak.position = 8.0;
            spec.leak = leak;
        }
        cases.push_back(std::move(spec));
    }
    return cases;
}

std::vector<CaseSpec> sweep_cases(const SweepSettings& settings, const PipeSpec& pipe) {
    require(settings.duration > 0.0, "sweep duration must be positive");
    require(settings.position_min >= 0.0 && settings.position_max >= settings.position_min &&
                settings.position_max <= pipe.sensed_length,
            "sweep leak positions must lie on the pipe");
    // Flow-ratio bands kept clear of the level boundaries at 5% and 15%.
    static constexpr double bands[3][2] = {{0.01, 0.045}, {0.055, 0.145}, {0.16, 0.75}};
    static constexpr double pipe_flows[2] = {0.427e-3, 1.8e-3};
    const double v = jet_velocity(settings.gauge_pressure, settings.discharge_coefficient, pipe.water_density);
    std::vector<CaseSpec> cases;
    for (std::size_t i = 0; i < settings.count; ++i) {
        Rng rng(derive_seed(settings.seed, i));
        const auto level = rng.below(3);
        const double ratio = std::exp(rng.uniform(std::log(bands[level][0]), std::log(bands[level][1])));
        CaseSpec spec;
        char id[32];
        std::snprintf(id, sizeof id, "%03zu", i + 1);
        spec.case_id = settings.id_prefix + id;
        spec.flow.pipe_flow_rate = pipe_flows[rng.below(2)];
        spec.flow.leak_flow_rate = ratio * spec.flow.pipe_flow_rate;
        spec.duration = settings.duration;
        spec.seed = derive_seed(settings.seed, i, 1);
        LeakSpec leak;
        leak.orifice_diameter = std::sqrt(4.0 * spec.flow.leak_flow_rate / (std::numbers::pi * v));
        leak.position = rng.uniform(settings.position_min, settings.position_max);
        leak.gauge_pressure = settings.gauge_pressure;
        leak.discharge_coefficient = settings.discharge_coefficient;
        spec.leak = leak;
        cases.push_back(std::move(spec));
    }
    return cases;
}

DatasetManifest build_dataset(const std::vector<CaseSpec>& cases, const DasConfig& config, const PipeSpec& pipe,
                              const SignalModel& model, const std::filesystem::path& out_dir,
                              std::size_t threads) {
    require(!cases.empty(), "dataset needs at least one case");
    std::set<std::string> ids;
    for (const auto& c : cases) {
        if (!ids.insert(c.case_id).second) throw DomainError("duplicate case id: " + c.case_id);
        c.validate(pipe);
    }
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec || !std::filesystem::is_directory(out_dir))
        throw IoError("cannot create output directory " + out_dir.string());

    DatasetManifest manifest;
    manifest.entries.resize(cases.size());
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
        for (std::size_t i = next++; i < cases.size(); i = next++) {
            try {
                const auto& spec = cases[i];
                const auto rec = simulate_case(spec, config, pipe, model);
                const auto base = out_dir / spec.case_id;
                write_recording(rec, base.string() + ".dasr");
                auto& e = manifest.entries[i];
                e.case_id = spec.case_id;
                e.recording = spec.case_id + ".dasr";
                e.truth = spec.case_id + ".truth";
                e.seed = spec.seed;
                e.pipe_flow_rate = spec.flow.pipe_flow_rate;
                e.leak_flow_rate = spec.flow.leak_flow_rate;
                e.orifice_diameter = spec.leak ? spec.leak->orifice_diameter : 0.0;
                e.duration = spec.duration;
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
                return;
            }
        }
    };
    const std::size_t n_threads = std::clamp<std::size_t>(threads, 1, cases.size());
    std::vector<std::thread> pool;
    for (std::size_t t = 1; t < n_threads; ++t) pool.emplace_back(worker);
    worker();
    for (auto& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);

    write_manifest(manifest, out_dir / "manifest.json");
    return manifest;
}

} // namespace dasleak
