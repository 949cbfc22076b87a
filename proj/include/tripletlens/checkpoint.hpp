#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "tripletlens/net.hpp"

namespace tl {

enum class TrainMode { Triplet, Classifier };

std::string to_string(TrainMode mode);
TrainMode parse_train_mode(std::string_view text);

struct CheckpointMeta {
  TrainMode mode = TrainMode::Triplet;
  std::size_t epochs = 0;
  double final_loss = 0.0;
  std::uint64_t seed = 0;
  /// Class ids whose samples contributed gradients.
  std::vector<int> trained_classes;
};

struct Checkpoint {
  EmbeddingNet net;
  CheckpointMeta meta;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Binary little-endian layout:
///   "LV2V" | version u32 | name_len u32 | name bytes | embedding_dim u32 |
///   entry_count u32 | entries...
/// entry = path_len u32 | path bytes | rank u32 | dims u32[rank] | f64[prod(dims)]
/// Parameters use their layer path ("conv1.weight"); training metadata is
/// stored as extra entries under "meta/".
std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace tl
