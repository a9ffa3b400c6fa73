#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "blastoseg/tensor.hpp"

namespace blastoseg::numerics {

/// On-disk layout:
///   BLASTOSEG-CHECKPOINT v1
///   meta <key> <value...>
///   tensor <name> <n> <c> <h> <w> <byte offset>
///   end <payload bytes>
/// followed by little-endian IEEE-754 binary32 payloads. Offsets are relative
/// to the first payload byte.
struct CheckpointTensor {
  std::string name;
  Tensor<float> value;
};

struct Checkpoint {
  std::vector<std::pair<std::string, std::string>> metadata;
  std::vector<CheckpointTensor> tensors;

  void set_meta(const std::string& key, const std::string& value);
  std::optional<std::string> meta(const std::string& key) const;
  const CheckpointTensor* find(const std::string& name) const;
};

inline constexpr const char* kCheckpointMagic = "BLASTOSEG-CHECKPOINT";
inline constexpr int kCheckpointVersion = 1;

std::string encode_checkpoint(const Checkpoint& checkpoint);
Checkpoint decode_checkpoint(const std::string& bytes);

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint read_checkpoint(const std::filesystem::path& path);

}  // namespace blastoseg::numerics
