#pragma once

#include "dasleak/testbed.hpp"

#include <filesystem>
#include <string>

namespace dasleak {

inline constexpr char kRecordingMagic[] = "DASR";
inline constexpr std::uint16_t kRecordingVersion = 1;

/**
 * Writes the binary recording to `path` and its ground truth to the sibling
 * `<stem>.truth`. Layout (little-endian): "DASR", u16 version, u32 channel
 * count, f64 sample rate, f64 channel spacing, u64 samples per channel, then
 * channel-major f32 samples.
 */
void write_recording(const DasRecording& recording, const std::filesystem::path& path);

/// Reads a recording and its sidecar; FormatError names the offending file.
DasRecording read_recording(const std::filesystem::path& path);

std::filesystem::path truth_path_for(const std::filesystem::path& recording_path);

std::string truth_to_json(const GroundTruth& truth);
GroundTruth truth_from_json(const std::string& text, const std::string& source);

GroundTruth read_truth(const std::filesystem::path& path);
void write_truth(const GroundTruth& truth, const std::filesystem::path& path);

void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);
DatasetManifest read_manifest(const std::filesystem::path& path);

} // namespace dasleak
