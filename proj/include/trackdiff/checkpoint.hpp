#pragma once

#include "trackdiff/diffusion.hpp"

#include <filesystem>

namespace trackdiff {

/// Everything needed to run a trained TrackDiffuser.
struct TrackDiffuserModel {
    NetConfig net;
    DenoiserParams params;
    Normalizer normalizer;
    int diffusion_steps = 50;
    ScheduleKind schedule = ScheduleKind::cosine;
};

/// Binary container, little-endian:
///   magic "TDCKPT\0\0" | u32 version | u64 meta length | meta JSON
///   u64 tensor count | per tensor: u32 name length, name, u64 rows, u64 cols, rows*cols f64 (row-major)
///   u64 FNV-1a 64 checksum of every preceding byte
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const TrackDiffuserModel& model);
TrackDiffuserModel load_checkpoint(const std::filesystem::path& path);

std::string serialize_checkpoint(const TrackDiffuserModel& model);
TrackDiffuserModel deserialize_checkpoint(const std::string& bytes);

std::uint64_t fnv1a64(const void* data, std::size_t size, std::uint64_t seed = 0xcbf29ce484222325ULL);

/// Hex digest of the serialised model; echoed in reports.
std::string model_digest(const TrackDiffuserModel& model);

} // namespace trackdiff
