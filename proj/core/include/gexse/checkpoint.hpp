#pragma once

#include <filesystem>
#include <nlohmann/json.hpp>

#include "gexse/encoder.hpp"

namespace gexse {

/// On-disk model container ("GEXSE01").
///
/// Layout, all integers little-endian:
///   magic "GEXSE01\0" (8 bytes), u32 version (1)
///   config: 11 x u64 (in_channels, window_length, width, n_blocks,
///           num_classes, embed_dim, stem_kernel, head_kernel, branch_kernels[3])
///   u32 length + UTF-8 JSON metadata (dataset, label names, seed, epoch, ...)
///   u32 tensor count, then per tensor:
///     u16 name length, name, u8 rank, rank x u64 dims, f64 values
///   u64 FNV-1a of every preceding byte
/// BatchNorm statistics are stored as tensors "<site>.running_mean" and
/// "<site>.running_var".
struct Checkpoint {
    EncoderConfig config;
    EncoderParams params;
    nlohmann::json metadata = nlohmann::json::object();
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const EncoderConfig& cfg, EncoderParams& params,
                     const nlohmann::json& metadata = nlohmann::json::object());

/// Throws a data error on bad magic, unknown version, truncation, checksum
/// mismatch, or a tensor set that does not match the stored config.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace gexse
