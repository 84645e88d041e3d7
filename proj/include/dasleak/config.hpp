#pragma once

#include "dasleak/features.hpp"
#include "dasleak/hydraulics.hpp"
#include "dasleak/nn/architecture.hpp"
#include "dasleak/nn/train.hpp"
#include "dasleak/testbed.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace dasleak {

struct SimulationSettings {
    double duration = 120.0;            // s per case
    std::uint64_t seed = 42;
    std::vector<std::size_t> cases;     // 1-based table rows; empty selects all eleven
};

struct SplitSettings {
    double test_fraction = 0.25;
    std::uint64_t seed = 7;
};

struct ModelSettings {
    nn::Variant variant = nn::Variant::Cnn3D;
    std::size_t cube_depth = 5;
    std::uint64_t init_seed = 1;
    std::uint64_t train_seed = 3;
    double label_halo = 1.0;            // m around the leak labelled as leak
};

struct DetectSettings {
    double threshold = 0.9;
    double horizon = 210.0;             // s
};

struct QuantifySettings {
    double gauge_pressure = 200e3;      // Pa
    double discharge_coefficient = 0.61;
    double averaging_time = 30.0;       // s
};

/// Every tunable of the pipeline. Defaults reproduce the testbed settings.
struct ExperimentConfig {
    DasConfig das;
    PipeSpec pipe;
    SignalModel signal;
    SimulationSettings simulation;
    FeatureParams features;
    ModelSettings model;
    nn::TrainConfig train;
    SplitSettings split;
    DetectSettings detect;
    QuantifySettings quantify;
    std::size_t threads = 1;

    void validate() const;
    nn::ArchitectureSpec architecture() const;

    /// INI text listing every key; parse(to_ini()) reproduces the config.
    std::string to_ini() const;

    /// Starts from defaults and applies the given text. Unknown sections or
    /// keys and malformed values raise DomainError naming the line.
    static ExperimentConfig parse(const std::string& text, const std::string& source = "config");
    static ExperimentConfig load(const std::filesystem::path& path);
};

} // namespace dasleak
