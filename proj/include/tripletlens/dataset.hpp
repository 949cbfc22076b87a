#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "tripletlens/tensor.hpp"

namespace tl {

enum class Split { Train, Test };

std::string to_string(Split split);
Split parse_split(std::string_view text);

/// In-memory labelled images, each [3,S,S] with values in [0,1].
struct Dataset {
  std::vector<Tensor> images;
  std::vector<int> labels;
  std::vector<Split> splits;
  std::vector<std::string> ids;
  std::size_t image_size = 0;

  std::size_t size() const { return images.size(); }
  void add(Tensor image, int label, Split split, std::string id);

  Dataset subset(Split split) const;
  /// Samples whose label differs from `label`.
  Dataset without_label(int label) const;
  /// Stacks the selected images into [n,3,S,S].
  Tensor batch(std::span<const std::size_t> indices) const;
  /// Stacks every image.
  Tensor all_images() const;
  /// Distinct labels, ascending.
  std::vector<int> classes() const;
};

/// One manifest row: `path,label,split,seed`.
struct ManifestRecord {
  std::string path;  // relative to the manifest's directory
  int label = 0;
  Split split = Split::Train;
  std::uint64_t seed = 0;
};

struct DatasetManifest {
  std::vector<ManifestRecord> records;
  std::uint64_t global_seed = 0;
  std::size_t image_size = 0;
};

inline constexpr const char* kManifestHeader = "path,label,split,seed";
inline constexpr const char* kManifestFile = "manifest.csv";

void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);
DatasetManifest read_manifest(const std::filesystem::path& path);

/// Loads every record in manifest order. Throws LoadError naming the record
/// for a missing or undecodable file or an image whose shape differs from the
/// first record's.
Dataset load_dataset(const std::filesystem::path& manifest_path);

}  // namespace tl
