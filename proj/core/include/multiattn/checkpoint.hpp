#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "multiattn/model.hpp"

namespace multiattn {

/// Binary checkpoint layout (all integers little-endian):
///
///   offset 0   8 bytes   magic "MATTNCKP"
///   offset 8   u32       format version (currently 1)
///   offset 12  u64       payload length P
///   offset 20  P bytes   payload
///   offset 20+P u32      CRC-32 (zlib polynomial) of the payload
///
/// Payload:
///   u32 L, then L bytes of compact JSON describing the model config,
///       source schemas and target vocabulary (keys sorted)
///   u32 count of parameters, then per parameter in name order:
///       u16 name length, name bytes, u8 rank, rank x u64 extents,
///       the values as IEEE-754 binary64
///
/// The encoding is a pure function of the model, so save -> load -> save
/// reproduces the same bytes.
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> save_checkpoint(const MultiSourceModel& model);
/// Throws FormatError on bad magic, unsupported version, truncation,
/// checksum mismatch, or parameters that do not fit the stored config.
MultiSourceModel load_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint_file(const std::filesystem::path& path, const MultiSourceModel& model);
MultiSourceModel load_checkpoint_file(const std::filesystem::path& path);

/// Throws DataError when the dataset's sources or target vocabulary differ
/// from the ones the model was built with (compared by vocab fingerprint).
void check_compatible(const MultiSourceModel& model, const DatasetHeader& header);

}  // namespace multiattn
