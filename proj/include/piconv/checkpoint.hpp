#pragma once

// Binary model checkpoints.
//
// Layout: 8-byte magic "PICONVCK", u32 format version, u64 header length,
// a JSON header (config, seed, epochs, array table) and the parameter
// payload as little-endian doubles.

#include "piconv/model.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

namespace piconv {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ModelConfig config;
  ModelParams params;
  std::uint64_t seed = 0;
  Index epochs = 0;
  bool use_pi_loss = false;
  bool use_pi_input = false;
};

std::string encode_checkpoint(const Checkpoint& ck);
Checkpoint decode_checkpoint(const std::string& bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck);

/// Throws CorruptError on bad magic, truncation or an inconsistent array
/// table, and ValidationError on an unknown version. When `expected` is
/// given, a configuration mismatch raises ValidationError naming the field.
Checkpoint load_checkpoint(const std::filesystem::path& path,
                           const std::optional<ModelConfig>& expected = std::nullopt);

}  // namespace piconv
