#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "tripletlens/dataset.hpp"
#include "tripletlens/rng.hpp"
#include "tripletlens/tensor.hpp"

namespace tl {

enum class Motif { VesselWeb, DarkBlob, PalePlaque, SpeckleField, RingLesion };

std::string to_string(Motif motif);

struct Range {
  double lo = 0.0;
  double hi = 0.0;
  double draw(Rng& rng) const { return rng.uniform(lo, hi); }
};

/// Procedural class definition. Sizes are in pixels at the 64 px reference
/// resolution and scale linearly with the frame size.
struct SynthClassSpec {
  int class_id = 0;
  Motif motif = Motif::VesselWeb;
  Range size;      // motif radius / half-length
  Range count;     // number of motif instances
  Range contrast;  // blend opacity of the motif
  Range hue_red{0.70, 0.86};
  Range hue_green{0.34, 0.46};
  Range hue_blue{0.28, 0.38};
  double noise_scale = 0.02;
};

/// Five classes with distinct motifs, ids 0..4. Class 4 (ring-lesion) covers a
/// tiny area of the frame.
std::vector<SynthClassSpec> default_class_specs();

inline constexpr int kNumSynthClasses = 5;
inline constexpr int kUnseenClass = 4;
inline constexpr std::size_t kDefaultImageSize = 64;
inline constexpr std::size_t kDefaultPerClass = 200;
inline constexpr double kTrainFraction = 0.7;

/// Mucosa-like low-frequency base texture, class motif overlay, then a
/// circular field-of-view mask that blacks out everything outside the
/// inscribed circle. Values lie in [0,1].
Tensor generate_frame(const SynthClassSpec& spec, std::size_t size, Rng& rng);

/// Number of training records for a class of n samples (70% rounded).
std::size_t train_count(std::size_t n);

/// Writes n_per_class frames of each class as PNG under out_dir/images and
/// the manifest to out_dir/manifest.csv. Each class is split 70/30; with
/// unseen_protocol, class 4 is test-only. Record i uses seed
/// derive_seed(seed, "frame", i), so output is independent of write order.
DatasetManifest generate_dataset(const std::filesystem::path& out_dir,
                                 std::size_t n_per_class, std::size_t size,
                                 std::uint64_t seed, bool unseen_protocol);

}  // namespace tl
