#pragma once

#include "dasleak/fft.hpp"
#include "dasleak/testbed.hpp"

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace dasleak {

/// Short-time spectral feature settings.
struct FeatureParams {
    double segment_length = 5.0;        // s
    std::size_t window_length = 2048;   // samples, 204.8 ms at 10 kHz
    std::size_t hop_length = 512;       // samples, 51.2 ms at 10 kHz
    std::size_t mel_bands_total = 128;
    std::size_t mel_bands_kept = 90;
    double fmin = 0.0;                  // Hz
    double fmax = 5000.0;               // Hz
    bool center_padding = true;

    void validate(double sampling_rate) const;
    std::size_t segment_samples(double sampling_rate) const;
    std::size_t frame_count(std::size_t clip_samples) const;
};

/// One 5-s clip of one channel.
struct Segment {
    std::size_t channel = 0;
    std::size_t window_index = 0;
    std::span<const float> samples;
};

/// Non-overlapping consecutive clips per channel; a trailing partial clip is dropped.
std::vector<Segment> segment(const DasRecording& recording, const FeatureParams& params);

std::size_t window_count(const DasRecording& recording, const FeatureParams& params);

/// Population Z-score; constant input maps to zeros.
std::vector<double> zscore(std::span<const double> signal);

double hz_to_mel(double hz);
double mel_to_hz(double mel);

/**
 * Triangular filters on the mel scale mel = 2595·log10(1 + f/700).
 *
 * B filters use B+2 edge points equally spaced in mel between fmin and
 * fmax; filter b rises linearly from edge b to edge b+1 and falls to edge
 * b+2, and is scaled by 2/(f[b+2] - f[b]) so each filter has unit area in
 * Hz. The lowest filter is held at its peak weight below its centre and
 * the highest above its centre, so every bin in [fmin, fmax] is covered.
 */
class MelFilterbank {
public:
    MelFilterbank(std::size_t bands, std::size_t fft_length, double sampling_rate, double fmin, double fmax);

    std::size_t bands() const { return bands_; }
    std::size_t bins() const { return bins_; }
    /// Edge frequencies in Hz, bands()+2 entries.
    const std::vector<double>& edges() const { return edges_; }
    double center_frequency(std::size_t band) const { return edges_[band + 1]; }
    double weight(std::size_t band, std::size_t bin) const;

    /// Band energies of one power spectrum.
    void apply(std::span<const double> power, std::span<double> energies) const;

private:
    struct Band {
        std::size_t first_bin = 0;
        std::vector<double> weights;
    };
    std::size_t bands_;
    std::size_t bins_;
    std::vector<double> edges_;
    std::vector<Band> filters_;
};

/// Kept mel bands × frames, band-major.
struct MelSpectrogram {
    std::size_t bands = 0;
    std::size_t frames = 0;
    std::vector<float> values;
    std::size_t source_channel = 0;
    std::size_t window_index = 0;

    float at(std::size_t band, std::size_t frame) const { return values[band * frames + frame]; }
};

/// Periodic Hann window of length n.
std::vector<double> hann_window(std::size_t n);

/**
 * Clip to mel-spectrogram: Z-score the clip, Hann STFT with reflect centre
 * padding, power spectrum, mel filterbank, log(1 + P), keep the lowest
 * mel_bands_kept bands, then Z-score the whole matrix.
 *
 * Holds an FFT plan and scratch buffers, so use one instance per thread.
 */
class MelExtractor {
public:
    MelExtractor(const FeatureParams& params, double sampling_rate);

    const FeatureParams& params() const { return params_; }
    const MelFilterbank& filterbank() const { return filterbank_; }
    std::size_t clip_samples() const { return clip_samples_; }

    MelSpectrogram compute(std::span<const float> clip);
    MelSpectrogram compute(std::span<const double> clip);

    /// STFT magnitudes (frames × bins) of a clip, without any normalization.
    std::vector<std::vector<double>> stft_magnitudes(std::span<const double> clip);

private:
    /// Power spectra of all frames of an already normalized clip.
    void stft_power(std::span<const double> clip, std::vector<double>& power);

    FeatureParams params_;
    double sampling_rate_;
    std::size_t clip_samples_;
    MelFilterbank filterbank_;
    std::vector<double> window_;
    RealFft fft_;
    std::vector<double> frame_;
    std::vector<std::complex<double>> spectrum_;
};

/// Mel spectrograms of every (channel, window) of a recording.
struct SpectrogramGrid {
    std::size_t channels = 0;
    std::size_t windows = 0;
    std::size_t bands = 0;
    std::size_t frames = 0;
    double channel_spacing = 0.8;
    std::vector<MelSpectrogram> cells;   // window-major: cells[w * channels + c]

    const MelSpectrogram& at(std::size_t channel, std::size_t window) const { return cells[window * channels + channel]; }
};

SpectrogramGrid compute_spectrograms(const DasRecording& recording, const FeatureParams& params,
                                     std::size_t threads = 1);

enum class CubeLabel : std::uint8_t { NonLeak = 0, Leak = 1, Unlabeled = 255 };

/// Z stacked spectrograms of consecutive channels; values in (band, frame, z) order.
struct FeatureCube {
    std::size_t bands = 0;
    std::size_t frames = 0;
    std::size_t depth = 0;
    std::vector<float> values;
    std::size_t center_channel = 0;
    std::size_t window_index = 0;
    CubeLabel label = CubeLabel::Unlabeled;

    float at(std::size_t band, std::size_t frame, std::size_t z) const {
        return values[(band * frames + frame) * depth + z];
    }
};

/// Channels that can be cube centres for depth Z: [Z/2, channels - Z/2).
std::vector<std::size_t> scored_channels(std::size_t channel_count, std::size_t depth);

FeatureCube make_cube(const SpectrogramGrid& grid, std::size_t center_channel, std::size_t window,
                      std::size_t depth);

/// Every cube of the grid, ordered by (window, channel). Edge channels are skipped.
std::vector<FeatureCube> stack_cubes(const SpectrogramGrid& grid, std::size_t depth);

/// Leak iff the case has a leak and the centre lies within `halo` metres of it
/// (the nearest channel always counts); otherwise non-leak.
CubeLabel label_for_channel(const GroundTruth& truth, std::size_t channel, double channel_spacing, double halo);

void label_cubes(std::vector<FeatureCube>& cubes, const GroundTruth& truth, double channel_spacing,
                 double halo = 1.0);

/// Training subset: leak-labelled cubes plus non-leak cubes at reference channels.
bool is_training_position(const GroundTruth& truth, std::size_t channel, CubeLabel label);

} // namespace dasleak
