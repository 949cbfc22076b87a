#include "tripletlens/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "tripletlens/error.hpp"
#include "tripletlens/png_io.hpp"

namespace tl {

std::string to_string(Split split) { return split == Split::Train ? "train" : "test"; }

Split parse_split(std::string_view text) {
  if (text == "train") return Split::Train;
  if (text == "test") return Split::Test;
  throw ConfigError("unknown split '" + std::string(text) + "' (expected train or test)");
}

void Dataset::add(Tensor image, int label, Split split, std::string id) {
  if (image.rank() != 3 || image.dim(0) != 3 || image.dim(1) != image.dim(2)) {
    throw DimensionError("dataset images must be [3,S,S], got " +
                         shape_to_string(image.shape()));
  }
  if (images.empty() && image_size == 0) image_size = image.dim(1);
  if (image.dim(1) != image_size) {
    throw DimensionError("dataset image " + id + " has size " + std::to_string(image.dim(1)) +
                         ", expected " + std::to_string(image_size));
  }
  images.push_back(std::move(image));
  labels.push_back(label);
  splits.push_back(split);
  ids.push_back(std::move(id));
}

Dataset Dataset::subset(Split split) const {
  Dataset out;
  out.image_size = image_size;
  for (std::size_t i = 0; i < size(); ++i) {
    if (splits[i] == split) out.add(images[i], labels[i], splits[i], ids[i]);
  }
  return out;
}

Dataset Dataset::without_label(int label) const {
  Dataset out;
  out.image_size = image_size;
  for (std::size_t i = 0; i < size(); ++i) {
    if (labels[i] != label) out.add(images[i], labels[i], splits[i], ids[i]);
  }
  return out;
}

Tensor Dataset::batch(std::span<const std::size_t> indices) const {
  if (indices.empty()) throw ContractViolation("Dataset::batch: no indices");
  const std::size_t per = 3 * image_size * image_size;
  std::vector<double> data;
  data.reserve(indices.size() * per);
  for (std::size_t i : indices) {
    if (i >= size()) throw IndexError("Dataset::batch: index " + std::to_string(i));
    auto src = images[i].data();
    data.insert(data.end(), src.begin(), src.end());
  }
  return Tensor(Shape{indices.size(), 3, image_size, image_size}, std::move(data));
}

Tensor Dataset::all_images() const {
  std::vector<std::size_t> idx(size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  return batch(idx);
}

std::vector<int> Dataset::classes() const {
  std::set<int> s(labels.begin(), labels.end());
  return {s.begin(), s.end()};
}

void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << kManifestHeader << '\n';
  for (const ManifestRecord& r : manifest.records) {
    out << r.path << ',' << r.label << ',' << to_string(r.split) << ',' << r.seed << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

DatasetManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open manifest " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kManifestHeader) {
    throw LoadError("manifest " + path.string() + " lacks header '" + kManifestHeader + "'");
  }
  DatasetManifest manifest;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (fields.size() != 4) {
      throw LoadError("manifest line " + std::to_string(lineno) + ": expected 4 fields");
    }
    ManifestRecord r;
    r.path = fields[0];
    try {
      r.label = std::stoi(fields[1]);
      r.split = parse_split(fields[2]);
      r.seed = std::stoull(fields[3]);
    } catch (const std::exception&) {
      throw LoadError("manifest line " + std::to_string(lineno) + ": malformed record '" +
                      line + "'");
    }
    manifest.records.push_back(std::move(r));
  }
  return manifest;
}

Dataset load_dataset(const std::filesystem::path& manifest_path) {
  const DatasetManifest manifest = read_manifest(manifest_path);
  const std::filesystem::path root = manifest_path.parent_path();
  Dataset ds;
  for (const ManifestRecord& r : manifest.records) {
    Tensor image;
    try {
      image = read_png(root / r.path);
    } catch (const Error& e) {
      throw LoadError("record " + r.path + ": " + e.what());
    }
    if (image.dim(1) != image.dim(2) || (ds.image_size && image.dim(1) != ds.image_size)) {
      throw LoadError("record " + r.path + ": shape " + shape_to_string(image.shape()) +
                      " does not match dataset image size " + std::to_string(ds.image_size));
    }
    ds.add(std::move(image), r.label, r.split, r.path);
  }
  return ds;
}

}  // namespace tl
