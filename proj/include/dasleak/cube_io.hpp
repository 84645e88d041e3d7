#pragma once

#include "dasleak/binary_io.hpp"
#include "dasleak/features.hpp"

#include <filesystem>
#include <fstream>
#include <optional>

namespace dasleak {

inline constexpr char kCubeMagic[] = "DASF";
inline constexpr std::uint16_t kCubeVersion = 1;

/**
 * Streaming writer for feature cube files. Layout (little-endian): "DASF",
 * u16 version, u16 Z, u16 bands, u16 frames, u64 cube count, then per cube
 * u32 centre channel, u32 window index, u8 label (0/1/255) and f32 values in
 * (band, frame, z) order. The file appears only after commit() has seen
 * exactly `cube_count` cubes.
 */
class CubeFileWriter {
public:
    CubeFileWriter(const std::filesystem::path& path, std::size_t depth, std::size_t bands, std::size_t frames,
                   std::uint64_t cube_count);

    void write(const FeatureCube& cube);
    void commit();

private:
    io::AtomicFile file_;
    io::BinaryWriter writer_;
    std::size_t depth_, bands_, frames_;
    std::uint64_t expected_, written_ = 0;
};

class CubeFileReader {
public:
    explicit CubeFileReader(const std::filesystem::path& path);

    std::size_t depth() const { return depth_; }
    std::size_t bands() const { return bands_; }
    std::size_t frames() const { return frames_; }
    std::uint64_t cube_count() const { return count_; }

    /// Next cube, or nullopt after the last one.
    std::optional<FeatureCube> next();

private:
    std::ifstream in_;
    io::BinaryReader reader_;
    std::size_t depth_ = 0, bands_ = 0, frames_ = 0;
    std::uint64_t count_ = 0, read_ = 0;
};

void write_cube_file(const std::filesystem::path& path, const std::vector<FeatureCube>& cubes);
std::vector<FeatureCube> read_cube_file(const std::filesystem::path& path);

} // namespace dasleak
