#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "helpers.hpp"
#include "tripletlens/datagen.hpp"
#include "tripletlens/dataset.hpp"
#include "tripletlens/embedding_store.hpp"
#include "tripletlens/error.hpp"
#include "tripletlens/png_io.hpp"

using namespace tl;
namespace fs = std::filesystem;
using tl::test::random_tensor;
using tl::test::to_vector;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("tl_test_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

double mean_luminance(const Tensor& f) {
  const std::size_t plane = f.dim(1) * f.dim(2);
  double s = 0.0;
  for (std::size_t i = 0; i < plane; ++i) {
    s += 0.299 * f[i] + 0.587 * f[plane + i] + 0.114 * f[2 * plane + i];
  }
  return s / static_cast<double>(plane);
}

}  // namespace

TEST_CASE("class specs") {
  const auto specs = default_class_specs();
  REQUIRE(specs.size() == kNumSynthClasses);
  std::set<Motif> motifs;
  for (std::size_t c = 0; c < specs.size(); ++c) {
    CHECK(specs[c].class_id == static_cast<int>(c));
    CHECK(specs[c].size.lo <= specs[c].size.hi);
    CHECK(specs[c].count.lo <= specs[c].count.hi);
    CHECK(specs[c].contrast.lo <= specs[c].contrast.hi);
    motifs.insert(specs[c].motif);
  }
  CHECK(motifs.size() == kNumSynthClasses);
  CHECK(to_string(specs[4].motif) == "ring-lesion");
}

TEST_CASE("generated frames") {
  const auto specs = default_class_specs();
  for (const SynthClassSpec& spec : specs) {
    for (std::size_t size : {32u, 64u, 97u}) {
      Rng rng(static_cast<std::uint64_t>(size) + 31 * static_cast<std::uint64_t>(spec.class_id));
      const Tensor f = generate_frame(spec, size, rng);
      CHECK(f.shape() == Shape{3, size, size});
      for (double v : f.data()) CHECK((v >= 0.0 && v <= 1.0));
      for (std::size_t c = 0; c < 3; ++c) {
        for (std::size_t i : {std::size_t{0}, size - 1}) {
          for (std::size_t j : {std::size_t{0}, size - 1}) CHECK(f[(c * size + i) * size + j] == 0.0);
        }
      }
    }
    Rng a(5), b(5);
    CHECK(to_vector(generate_frame(spec, 64, a).data()) == to_vector(generate_frame(spec, 64, b).data()));
  }
  Rng rng(1);
  CHECK_THROWS_AS(generate_frame(specs[0], 31, rng), DimensionError);
}

TEST_CASE("dark-blob frames are darker than speckle-field frames") {
  const auto specs = default_class_specs();
  Rng rng(2);
  double blob = 0.0, speckle = 0.0;
  for (int i = 0; i < 100; ++i) {
    blob += mean_luminance(generate_frame(specs[1], 64, rng));
    speckle += mean_luminance(generate_frame(specs[3], 64, rng));
  }
  CHECK(blob < speckle);
}

TEST_CASE("split arithmetic") {
  CHECK(train_count(10) == 7);
  CHECK(train_count(200) == 140);
  for (std::size_t n = 1; n < 300; ++n) {
    CHECK(std::abs(static_cast<double>(train_count(n)) - 0.7 * static_cast<double>(n)) <= 1.0);
  }
}

TEST_CASE("generate and load a dataset") {
  const fs::path dir = scratch("gen");
  const DatasetManifest m = generate_dataset(dir, 10, 32, 3, true);
  CHECK(m.records.size() == 50);
  CHECK(m.image_size == 32);
  std::map<int, std::pair<int, int>> splits;
  for (const ManifestRecord& r : m.records) {
    (r.split == Split::Train ? splits[r.label].first : splits[r.label].second)++;
    CHECK(fs::exists(dir / r.path));
  }
  for (int c = 0; c < 4; ++c) CHECK(splits[c] == std::pair{7, 3});
  CHECK(splits[4] == std::pair{0, 10});
  CHECK(slurp(dir / kManifestFile).rfind(std::string(kManifestHeader) + "\n", 0) == 0);

  const DatasetManifest back = read_manifest(dir / kManifestFile);
  REQUIRE(back.records.size() == m.records.size());
  for (std::size_t i = 0; i < m.records.size(); ++i) {
    CHECK(back.records[i].path == m.records[i].path);
    CHECK(back.records[i].label == m.records[i].label);
    CHECK(back.records[i].split == m.records[i].split);
    CHECK(back.records[i].seed == m.records[i].seed);
  }

  const Dataset d = load_dataset(dir / kManifestFile);
  CHECK(d.size() == 50);
  CHECK(d.image_size == 32);
  for (std::size_t i = 0; i < d.size(); ++i) CHECK(d.labels[i] == m.records[i].label);
  CHECK(d.subset(Split::Train).size() == 28);
  CHECK(d.subset(Split::Test).size() == 22);
  CHECK(d.without_label(4).size() == 40);
  CHECK(d.classes() == std::vector<int>{0, 1, 2, 3, 4});

  // Reloaded pixels equal the generator output to 8-bit precision.
  const auto specs = default_class_specs();
  for (std::size_t i = 0; i < m.records.size(); i += 7) {
    Rng rng(m.records[i].seed);
    const Tensor orig = generate_frame(specs[static_cast<std::size_t>(m.records[i].label)], 32, rng);
    for (std::size_t j = 0; j < orig.numel(); ++j) {
      CHECK(std::abs(orig[j] * 255.0 - d.images[i][j] * 255.0) <= 0.5 + 1e-9);
    }
  }

  const fs::path dir2 = scratch("gen2");
  generate_dataset(dir2, 10, 32, 3, true);
  for (const ManifestRecord& r : m.records) CHECK(slurp(dir / r.path) == slurp(dir2 / r.path));
  CHECK(slurp(dir / kManifestFile) == slurp(dir2 / kManifestFile));

  fs::remove(dir / m.records[5].path);
  bool named = false;
  try {
    load_dataset(dir / kManifestFile);
  } catch (const LoadError& e) {
    named = std::string(e.what()).find(m.records[5].path) != std::string::npos;
  }
  CHECK(named);
  fs::remove_all(dir);
  fs::remove_all(dir2);
}

TEST_CASE("without the unseen protocol class 4 is split like the others") {
  const fs::path dir = scratch("gen3");
  const DatasetManifest m = generate_dataset(dir, 10, 32, 4, false);
  int train4 = 0;
  for (const ManifestRecord& r : m.records) train4 += r.label == 4 && r.split == Split::Train;
  CHECK(train4 == 7);
  fs::remove_all(dir);
}

TEST_CASE("unwritable output") {
  const fs::path file = scratch("not_a_dir");
  std::ofstream(file) << "x";
  CHECK_THROWS_AS(generate_dataset(file / "sub", 2, 32, 1, false), IoError);
  fs::remove(file);
}

TEST_CASE("png round trip") {
  const fs::path p = scratch("img.png");
  Rng rng(6);
  const Tensor img = random_tensor({3, 17, 23}, rng, 0.0, 1.0);
  write_png(p, img);
  const Tensor back = read_png(p);
  CHECK(back.shape() == img.shape());
  for (std::size_t i = 0; i < img.numel(); ++i) CHECK(std::abs(img[i] * 255.0 - back[i] * 255.0) <= 0.5 + 1e-9);
  write_png(p, back);
  CHECK(to_vector(read_png(p).data()) == to_vector(back.data()));
  fs::remove(p);
  CHECK_THROWS_AS(read_png(p), LoadError);
  std::ofstream(p) << "not a png";
  CHECK_THROWS_AS(read_png(p), LoadError);
  fs::remove(p);
}

TEST_CASE("embedding store round trip") {
  const fs::path p = scratch("emb.jsonl");
  Rng rng(7);
  std::vector<EmbeddingRecord> recs;
  for (int i = 0; i < 5; ++i) {
    EmbeddingRecord r{"frame \"" + std::to_string(i) + "\"", i == 3 ? std::nullopt : std::optional(i), {}};
    for (int j = 0; j < 128; ++j) r.vec.push_back(rng.normal() * std::pow(10.0, rng.uniform(-300, 300)));
    recs.push_back(r);
  }
  recs[0].vec[0] = 0.1;
  recs[0].vec[1] = -0.0;
  write_embeddings(p, recs);
  const auto back = read_embeddings(p);
  REQUIRE(back.size() == recs.size());
  for (std::size_t i = 0; i < recs.size(); ++i) {
    CHECK(back[i].id == recs[i].id);
    CHECK(back[i].label == recs[i].label);
    CHECK(back[i].vec == recs[i].vec);
  }
  CHECK(format_embedding_record(recs[3]).find("\"label\": null") != std::string::npos);
  const Tensor stacked = stack_embeddings(back);
  CHECK(stacked.shape() == Shape{5, 128});
  auto ragged = back;
  ragged[2].vec.pop_back();
  CHECK_THROWS_AS(stack_embeddings(ragged), DimensionError);
  std::ofstream(p, std::ios::app) << "{broken\n";
  CHECK_THROWS_AS(read_embeddings(p), LoadError);
  fs::remove(p);
}
