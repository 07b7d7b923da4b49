#pragma once

#include "uno/models.hpp"

#include <filesystem>

namespace uno {

// Binary container: 8-byte magic, u32 format version, u64 header length,
// JSON header (kind, architecture, tensor layout), then raw little-endian
// float64 parameter values. Round trips bitwise.
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const VaeModel& model);
void save_checkpoint(const std::filesystem::path& path, const ClassifierModel& model);

// Throw BadMagic, TruncatedFile, LayoutMismatch, Io.
VaeModel load_vae(const std::filesystem::path& path);
ClassifierModel load_classifier(const std::filesystem::path& path);

}  // namespace uno
