#pragma once

#include "dasleak/nn/model.hpp"

#include <filesystem>
#include <optional>

namespace dasleak::nn {

inline constexpr char kCheckpointMagic[4] = {'D', 'A', 'S', 'M'};
inline constexpr std::uint16_t kCheckpointVersion = 1;

/// Writes the architecture, seed and every named tensor; atomic on success.
void save_checkpoint(const Model& model, const std::filesystem::path& path);

/**
 * Reads a checkpoint, checking every tensor shape against the stored
 * architecture. When `expected` is given the stored architecture must equal
 * it (variant, depth and layer table). Throws FormatError.
 */
Model load_checkpoint(const std::filesystem::path& path, const std::optional<ArchitectureSpec>& expected = {});

} // namespace dasleak::nn
