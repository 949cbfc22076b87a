#include "tripletlens/embedding_store.hpp"

#include <cstdio>
#include <fstream>
#include <json.hpp>

#include "tripletlens/error.hpp"

namespace tl {

std::string format_embedding_record(const EmbeddingRecord& record) {
  std::string line = "{\"id\": " + nlohmann::json(record.id).dump() + ", \"label\": ";
  line += record.label ? std::to_string(*record.label) : "null";
  line += ", \"vec\": [";
  char buf[40];
  for (std::size_t i = 0; i < record.vec.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", record.vec[i]);
    if (i) line += ", ";
    line += buf;
  }
  line += "]}";
  return line;
}

void write_embeddings(const std::filesystem::path& path,
                      const std::vector<EmbeddingRecord>& records) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  for (const EmbeddingRecord& r : records) out << format_embedding_record(r) << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

std::vector<EmbeddingRecord> read_embeddings(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open embedding store " + path.string());
  std::vector<EmbeddingRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      EmbeddingRecord r;
      r.id = j.at("id").get<std::string>();
      if (!j.at("label").is_null()) r.label = j.at("label").get<int>();
      r.vec = j.at("vec").get<std::vector<double>>();
      out.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw LoadError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

Tensor stack_embeddings(const std::vector<EmbeddingRecord>& records) {
  if (records.empty()) throw DimensionError("no embeddings to stack");
  const std::size_t d = records.front().vec.size();
  std::vector<double> data;
  data.reserve(records.size() * d);
  for (const EmbeddingRecord& r : records) {
    if (r.vec.size() != d) {
      throw DimensionError("embedding " + r.id + " has length " + std::to_string(r.vec.size()) +
                           ", expected " + std::to_string(d));
    }
    data.insert(data.end(), r.vec.begin(), r.vec.end());
  }
  return Tensor(Shape{records.size(), d}, std::move(data));
}

}  // namespace tl
