#pragma once

#include "dasleak/config.hpp"
#include "dasleak/detect.hpp"
#include "dasleak/nn/model.hpp"
#include "dasleak/quantify.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace dasleak {

inline constexpr std::string_view kToolVersion = "1.0.0";

/// Deterministic test/train assignment of one (case, window) pair.
bool is_test_window(std::string_view case_id, std::size_t window, const SplitSettings& split);

/// Spectrograms of one recording; cubes are cut from the grid on demand.
struct FeaturizedCase {
    std::string case_id;
    GroundTruth truth;
    SpectrogramGrid grid;
};

FeaturizedCase featurize(const DasRecording& recording, const ExperimentConfig& config);

/// Labelled cubes of one window, ordered by channel.
std::vector<FeatureCube> window_cubes(const FeaturizedCase& fc, std::size_t window, const ExperimentConfig& config);

/// Training cubes: windows outside the test split, at leak or reference positions.
bool is_training_cube(const FeatureCube& cube, const std::string& case_id, const GroundTruth& truth,
                      const ExperimentConfig& config);

struct ScoredCube {
    std::size_t window = 0;
    std::size_t channel = 0;
    double probability = 0.0;
    CubeLabel label = CubeLabel::Unlabeled;
};

std::vector<ScoredCube> score_case(const nn::Model& model, const FeaturizedCase& fc, const ExperimentConfig& config);

struct CaseEvaluation {
    std::string case_id;
    GroundTruth truth;
    ProbabilityMap map;
    MedianProfile profile;
    RateCounts test_counts;        // per-cube tallies on the test windows only
    DetectionMetrics metrics;
};

/// Map, median profile, leak finding and test-split rates of one case.
CaseEvaluation evaluate_scores(const std::string& case_id, const GroundTruth& truth,
                               std::span<const ScoredCube> scores, std::size_t channel_count, double channel_spacing,
                               const ExperimentConfig& config);

/// Hydraulic inputs for quantification taken from a case's ground truth.
HydraulicInputs hydraulic_inputs(const GroundTruth& truth, const ExperimentConfig& config);

/// Hex SHA-256 of bytes or of a file.
std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

struct FileDigest {
    std::string path;
    std::string sha256;
};

/// Provenance of one command run, kept apart from the deterministic reports.
struct RunManifest {
    std::string command;
    std::string tool_version{kToolVersion};
    std::string config_sha256;
    std::vector<FileDigest> inputs;
    std::vector<FileDigest> outputs;
    double wall_seconds = 0.0;

    std::string to_json() const;
};

struct CommandContext {
    ExperimentConfig config;
    std::filesystem::path out_dir;
    bool force = false;
};

/// Reference cases (or config-selected rows), or `sweep` randomized leak cases when non-zero.
RunManifest cmd_simulate(const CommandContext& ctx, std::size_t sweep = 0);

RunManifest cmd_featurize(const CommandContext& ctx, const std::filesystem::path& dataset_dir);

RunManifest cmd_train(const CommandContext& ctx, const std::vector<std::filesystem::path>& cube_dirs);

RunManifest cmd_evaluate(const CommandContext& ctx, const std::filesystem::path& checkpoint,
                         const std::vector<std::filesystem::path>& cube_dirs);

/// Fits a range model on `fit_dirs` (or loads `range_model`) and quantifies every case of `eval_dirs`.
RunManifest cmd_quantify(const CommandContext& ctx, const std::vector<std::filesystem::path>& eval_dirs,
                         const std::vector<std::filesystem::path>& fit_dirs,
                         const std::optional<std::filesystem::path>& range_model);

} // namespace dasleak
