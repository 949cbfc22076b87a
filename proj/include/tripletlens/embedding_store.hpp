#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "tripletlens/tensor.hpp"

namespace tl {

struct EmbeddingRecord {
  std::string id;
  std::optional<int> label;
  std::vector<double> vec;
};

/// JSON-lines, one `{"id": ..., "label": int|null, "vec": [...]}` per line.
/// Floats are written with 17 significant digits so they reload exactly.
std::string format_embedding_record(const EmbeddingRecord& record);
void write_embeddings(const std::filesystem::path& path,
                      const std::vector<EmbeddingRecord>& records);
std::vector<EmbeddingRecord> read_embeddings(const std::filesystem::path& path);

/// Stacks the vectors into [N, D]; throws DimensionError on ragged input.
Tensor stack_embeddings(const std::vector<EmbeddingRecord>& records);

}  // namespace tl
