#include "dasleak/features.hpp"

#include "dasleak/error.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <numbers>
#include <thread>

namespace dasleak {

void FeatureParams::validate(double sampling_rate) const {
    require(segment_length > 0.0, "segment length must be positive");
    require(window_length >= 2, "STFT window must hold at least two samples");
    require(hop_length >= 1 && hop_length <= window_length, "hop must lie in [1, window]");
    require(mel_bands_kept >= 1 && mel_bands_kept <= mel_bands_total, "kept bands must lie in [1, total bands]");
    require(fmin >= 0.0 && fmax > fmin, "frequency range must be non-empty");
    require(fmax <= sampling_rate / 2.0 + 1e-9, "upper frequency must not exceed Nyquist");
}

std::size_t FeatureParams::segment_samples(double sampling_rate) const {
    return static_cast<std::size_t>(std::llround(segment_length * sampling_rate));
}

std::size_t FeatureParams::frame_count(std::size_t clip_samples) const {
    if (center_padding) return 1 + clip_samples / hop_length;
    if (clip_samples < window_length) return 0;
    return 1 + (clip_samples - window_length) / hop_length;
}

std::size_t window_count(const DasRecording& recording, const FeatureParams& params) {
    return recording.samples_per_channel / params.segment_samples(recording.config.sampling_rate);
}

std::vector<Segment> segment(const DasRecording& recording, const FeatureParams& params) {
    require(recording.samples_per_channel > 0 && recording.config.channel_count > 0, "recording is empty");
    params.validate(recording.config.sampling_rate);
    const std::size_t len = params.segment_samples(recording.config.sampling_rate);
    const std::size_t windows = window_count(recording, params);
    std::vector<Segment> out;
    out.reserve(windows * recording.config.channel_count);
    for (std::size_t c = 0; c < recording.config.channel_count; ++c) {
        const auto ch = recording.channel(c);
        for (std::size_t w = 0; w < windows; ++w) out.push_back({c, w, ch.subspan(w * len, len)});
    }
    return out;
}

std::vector<double> zscore(std::span<const double> signal) {
    std::vector<double> out(signal.size(), 0.0);
    if (signal.size() < 2) return out;
    double mean = 0.0;
    for (double v : signal) mean += v;
    mean /= static_cast<double>(signal.size());
    double var = 0.0;
    for (double v : signal) var += (v - mean) * (v - mean);
    var /= static_cast<double>(signal.size());
    const double sd = std::sqrt(var);
    // Relative guard: float-rounded constants leave a tiny nonzero spread.
    if (!(sd > 1e-12 * std::max(1.0, std::abs(mean)))) return out;
    for (std::size_t i = 0; i < signal.size(); ++i) out[i] = (signal[i] - mean) / sd;
    return out;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

MelFilterbank::MelFilterbank(std::size_t bands, std::size_t fft_length, double sampling_rate, double fmin,
                             double fmax)
    : bands_(bands), bins_(fft_length / 2 + 1) {
    require(bands >= 1, "filterbank needs at least one band");
    const double mel_lo = hz_to_mel(fmin);
    const double mel_hi = hz_to_mel(fmax);
    edges_.resize(bands + 2);
    for (std::size_t i = 0; i < edges_.size(); ++i)
        edges_[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) / static_cast<double>(bands + 1));
    edges_.front() = fmin;
    edges_.back() = fmax;

    filters_.resize(bands);
    const double bin_hz = sampling_rate / static_cast<double>(fft_length);
    for (std::size_t b = 0; b < bands; ++b) {
        const double lo = edges_[b], mid = edges_[b + 1], hi = edges_[b + 2];
        const double norm = 2.0 / (hi - lo);
        auto& band = filters_[b];
        bool started = false;
        for (std::size_t k = 0; k < bins_; ++k) {
            const double f = static_cast<double>(k) * bin_hz;
            if (f < fmin || f > fmax) continue;
            double w = std::min((f - lo) / (mid - lo), (hi - f) / (hi - mid));
            if (b == 0 && f <= mid) w = 1.0;
            if (b + 1 == bands && f >= mid) w = 1.0;
            w = std::max(0.0, w);
            if (w <= 0.0) {
                if (started) break;
                continue;
            }
            if (!started) {
                band.first_bin = k;
                started = true;
            }
            // Fill any interior zero gap so weights stay contiguous.
            band.weights.resize(k - band.first_bin, 0.0);
            band.weights.push_back(w * norm);
        }
    }
}

double MelFilterbank::weight(std::size_t band, std::size_t bin) const {
    const auto& f = filters_.at(band);
    if (bin < f.first_bin || bin >= f.first_bin + f.weights.size()) return 0.0;
    return f.weights[bin - f.first_bin];
}

void MelFilterbank::apply(std::span<const double> power, std::span<double> energies) const {
    require(power.size() == bins_ && energies.size() == bands_, "filterbank buffer size mismatch");
    for (std::size_t b = 0; b < bands_; ++b) {
        const auto& f = filters_[b];
        double acc = 0.0;
        for (std::size_t i = 0; i < f.weights.size(); ++i) acc += f.weights[i] * power[f.first_bin + i];
        energies[b] = acc;
    }
}

std::vector<double> hann_window(std::size_t n) {
    std::vector<double> w(n);
    for (std::size_t i = 0; i < n; ++i)
        w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n));
    return w;
}

MelExtractor::MelExtractor(const FeatureParams& params, double sampling_rate)
    : params_(params),
      sampling_rate_(sampling_rate),
      clip_samples_(params.segment_samples(sampling_rate)),
      filterbank_(params.mel_bands_total, params.window_length, sampling_rate, params.fmin, params.fmax),
      window_(hann_window(params.window_length)),
      fft_(params.window_length),
      frame_(params.window_length),
      spectrum_(params.window_length / 2 + 1) {
    params.validate(sampling_rate);
}

void MelExtractor::stft_power(std::span<const double> clip, std::vector<double>& power) {
    const std::size_t n = clip.size();
    const std::size_t win = params_.window_length;
    const std::size_t frames = params_.frame_count(n);
    const std::size_t bins = fft_.bins();
    const auto pad = static_cast<std::ptrdiff_t>(params_.center_padding ? win / 2 : 0);
    const auto len = static_cast<std::ptrdiff_t>(n);
    require(!params_.center_padding || n > win / 2, "clip too short for reflect padding");
    // numpy-style "reflect": the edge sample is not repeated.
    auto sample = [&](std::ptrdiff_t i) {
        if (i < 0) i = -i;
        if (i >= len) i = 2 * (len - 1) - i;
        return clip[static_cast<std::size_t>(i)];
    };

    power.assign(frames * bins, 0.0);
    for (std::size_t t = 0; t < frames; ++t) {
        const auto start = static_cast<std::ptrdiff_t>(t * params_.hop_length) - pad;
        for (std::size_t i = 0; i < win; ++i) frame_[i] = window_[i] * sample(start + static_cast<std::ptrdiff_t>(i));
        fft_.forward(frame_, spectrum_);
        for (std::size_t k = 0; k < bins; ++k) power[t * bins + k] = std::norm(spectrum_[k]);
    }
}

std::vector<std::vector<double>> MelExtractor::stft_magnitudes(std::span<const double> clip) {
    std::vector<double> power;
    stft_power(clip, power);
    const std::size_t bins = fft_.bins();
    const std::size_t frames = power.size() / bins;
    std::vector<std::vector<double>> out(frames, std::vector<double>(bins));
    for (std::size_t t = 0; t < frames; ++t)
        for (std::size_t k = 0; k < bins; ++k) out[t][k] = std::sqrt(power[t * bins + k]);
    return out;
}

MelSpectrogram MelExtractor::compute(std::span<const float> clip) {
    std::vector<double> converted(clip.begin(), clip.end());
    return compute(std::span<const double>(converted));
}

MelSpectrogram MelExtractor::compute(std::span<const double> clip) {
    if (clip.size() != clip_samples_)
        throw DomainError("clip has " + std::to_string(clip.size()) + " samples, expected " +
                          std::to_string(clip_samples_));
    const auto normalized = zscore(clip);
    std::vector<double> power;
    stft_power(normalized, power);

    const std::size_t bins = fft_.bins();
    const std::size_t frames = power.size() / bins;
    const std::size_t kept = params_.mel_bands_kept;
    std::vector<double> energies(filterbank_.bands());
    std::vector<double> logmel(kept * frames);
    for (std::size_t t = 0; t < frames; ++t) {
        filterbank_.apply(std::span<const double>(power).subspan(t * bins, bins), energies);
        for (std::size_t b = 0; b < kept; ++b) logmel[b * frames + t] = std::log1p(energies[b]);
    }
    const auto scaled = zscore(logmel);

    MelSpectrogram out;
    out.bands = kept;
    out.frames = frames;
    out.values.assign(scaled.begin(), scaled.end());
    return out;
}

SpectrogramGrid compute_spectrograms(const DasRecording& recording, const FeatureParams& params,
                                     std::size_t threads) {
    const auto segments = segment(recording, params);
    SpectrogramGrid grid;
    grid.channels = recording.config.channel_count;
    grid.windows = window_count(recording, params);
    grid.channel_spacing = recording.config.channel_spacing;
    grid.bands = params.mel_bands_kept;
    grid.frames = params.frame_count(params.segment_samples(recording.config.sampling_rate));
    grid.cells.resize(segments.size());

    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
        try {
            MelExtractor extractor(params, recording.config.sampling_rate);
            for (std::size_t i = next++; i < segments.size(); i = next++) {
                const auto& s = segments[i];
                auto mel = extractor.compute(s.samples);
                mel.source_channel = s.channel;
                mel.window_index = s.window_index;
                grid.cells[s.window_index * grid.channels + s.channel] = std::move(mel);
            }
        } catch (...) {
            std::lock_guard lock(failure_mutex);
            if (!failure) failure = std::current_exception();
        }
    };
    const std::size_t n_threads = std::max<std::size_t>(1, std::min(threads, segments.size()));
    std::vector<std::thread> pool;
    for (std::size_t t = 1; t < n_threads; ++t) pool.emplace_back(worker);
    worker();
    for (auto& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);
    return grid;
}

std::vector<std::size_t> scored_channels(std::size_t channel_count, std::size_t depth) {
    if (depth % 2 == 0 || depth == 0) throw DomainError("cube depth must be odd");
    require(depth <= channel_count, "cube depth exceeds the channel count");
    const std::size_t half = depth / 2;
    std::vector<std::size_t> out;
    for (std::size_t c = half; c + half < channel_count; ++c) out.push_back(c);
    return out;
}

FeatureCube make_cube(const SpectrogramGrid& grid, std::size_t center_channel, std::size_t window,
                      std::size_t depth) {
    if (depth % 2 == 0 || depth == 0) throw DomainError("cube depth must be odd");
    const std::size_t half = depth / 2;
    require(center_channel >= half && center_channel + half < grid.channels, "cube would extend past the fiber");
    require(window < grid.windows, "window index out of range");
    FeatureCube cube;
    cube.bands = grid.bands;
    cube.frames = grid.frames;
    cube.depth = depth;
    cube.center_channel = center_channel;
    cube.window_index = window;
    cube.values.resize(grid.bands * grid.frames * depth);
    for (std::size_t z = 0; z < depth; ++z) {
        const auto& mel = grid.at(center_channel - half + z, window);
        for (std::size_t i = 0; i < grid.bands * grid.frames; ++i) cube.values[i * depth + z] = mel.values[i];
    }
    return cube;
}

std::vector<FeatureCube> stack_cubes(const SpectrogramGrid& grid, std::size_t depth) {
    const auto channels = scored_channels(grid.channels, depth);
    std::vector<FeatureCube> cubes;
    cubes.reserve(channels.size() * grid.windows);
    for (std::size_t w = 0; w < grid.windows; ++w)
        for (auto c : channels) cubes.push_back(make_cube(grid, c, w, depth));
    return cubes;
}

CubeLabel label_for_channel(const GroundTruth& truth, std::size_t channel, double channel_spacing, double halo) {
    if (!truth.spec.leak) return CubeLabel::NonLeak;
    const double leak_pos = truth.spec.leak->position;
    const double distance = std::abs(static_cast<double>(channel) * channel_spacing - leak_pos);
    const auto nearest = static_cast<std::size_t>(std::max(0.0, std::nearbyint(leak_pos / channel_spacing)));
    if (channel == nearest || distance <= halo + 1e-9) return CubeLabel::Leak;
    return CubeLabel::NonLeak;
}

void label_cubes(std::vector<FeatureCube>& cubes, const GroundTruth& truth, double channel_spacing, double halo) {
    require(halo >= 0.0, "leak halo must be non-negative");
    for (auto& cube : cubes) cube.label = label_for_channel(truth, cube.center_channel, channel_spacing, halo);
}

bool is_training_position(const GroundTruth& truth, std::size_t channel, CubeLabel label) {
    if (label == CubeLabel::Leak) return true;
    if (label != CubeLabel::NonLeak) return false;
    const auto& refs = truth.layout.reference_channels;
    return std::find(refs.begin(), refs.end(), channel) != refs.end();
}

} // namespace dasleak
