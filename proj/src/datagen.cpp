#include "tripletlens/datagen.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "tripletlens/error.hpp"
#include "tripletlens/png_io.hpp"

namespace tl {

namespace {

using Color = std::array<double, 3>;

class Canvas {
 public:
  explicit Canvas(std::size_t size) : size_(size), pixels_(Shape{3, size, size}) {}

  std::size_t size() const { return size_; }
  Tensor& pixels() { return pixels_; }

  double& at(std::size_t c, std::size_t i, std::size_t j) {
    return pixels_[(c * size_ + i) * size_ + j];
  }

  void blend(std::size_t i, std::size_t j, const Color& color, double alpha) {
    alpha = std::clamp(alpha, 0.0, 1.0);
    for (std::size_t c = 0; c < 3; ++c) {
      double& p = at(c, i, j);
      p = p + (color[c] - p) * alpha;
    }
  }

  void darken(std::size_t i, std::size_t j, const Color& factor, double alpha) {
    alpha = std::clamp(alpha, 0.0, 1.0);
    for (std::size_t c = 0; c < 3; ++c) {
      double& p = at(c, i, j);
      p = p * (1.0 - alpha + alpha * factor[c]);
    }
  }

  /// Calls fn(i, j, distance) for pixels within `reach` of (cy, cx).
  template <class Fn>
  void around(double cy, double cx, double reach, Fn&& fn) {
    const long s = static_cast<long>(size_);
    const long i0 = std::max(0L, static_cast<long>(std::floor(cy - reach)));
    const long i1 = std::min(s - 1, static_cast<long>(std::ceil(cy + reach)));
    const long j0 = std::max(0L, static_cast<long>(std::floor(cx - reach)));
    const long j1 = std::min(s - 1, static_cast<long>(std::ceil(cx + reach)));
    for (long i = i0; i <= i1; ++i)
      for (long j = j0; j <= j1; ++j) {
        const double d = std::hypot(static_cast<double>(i) - cy, static_cast<double>(j) - cx);
        if (d <= reach) fn(static_cast<std::size_t>(i), static_cast<std::size_t>(j), d);
      }
  }

 private:
  std::size_t size_;
  Tensor pixels_;
};

// Smooth noise: bilinear upsampling of a coarse grid of normal draws.
std::vector<double> low_frequency_field(std::size_t size, std::size_t grid, Rng& rng) {
  std::vector<double> coarse(grid * grid);
  for (double& v : coarse) v = rng.normal();
  std::vector<double> field(size * size);
  const double scale = static_cast<double>(grid - 1) / static_cast<double>(size - 1);
  for (std::size_t i = 0; i < size; ++i) {
    const double y = static_cast<double>(i) * scale;
    const auto y0 = std::min(static_cast<std::size_t>(y), grid - 2);
    const double fy = y - static_cast<double>(y0);
    for (std::size_t j = 0; j < size; ++j) {
      const double x = static_cast<double>(j) * scale;
      const auto x0 = std::min(static_cast<std::size_t>(x), grid - 2);
      const double fx = x - static_cast<double>(x0);
      const double top = coarse[y0 * grid + x0] * (1 - fx) + coarse[y0 * grid + x0 + 1] * fx;
      const double bot =
          coarse[(y0 + 1) * grid + x0] * (1 - fx) + coarse[(y0 + 1) * grid + x0 + 1] * fx;
      field[i * size + j] = top * (1 - fy) + bot * fy;
    }
  }
  return field;
}

// Random point inside the central disc of radius `fraction` * R.
std::pair<double, double> point_in_disc(std::size_t size, double fraction, Rng& rng) {
  const double c = (static_cast<double>(size) - 1.0) / 2.0;
  const double r = fraction * static_cast<double>(size) / 2.0 * std::sqrt(rng.uniform());
  const double t = rng.uniform(0.0, 2.0 * std::numbers::pi);
  return {c + r * std::sin(t), c + r * std::cos(t)};
}

double soft_edge(double distance, double radius, double feather) {
  return std::clamp((radius - distance) / feather + 0.5, 0.0, 1.0);
}

int draw_count(const Range& r, Rng& rng) {
  return static_cast<int>(std::lround(r.draw(rng)));
}

void paint_vessels(Canvas& canvas, const SynthClassSpec& spec, double unit, Rng& rng) {
  const int n = draw_count(spec.count, rng);
  const Color tint{0.45, 0.18, 0.22};
  for (int v = 0; v < n; ++v) {
    auto [y, x] = point_in_disc(canvas.size(), 0.8, rng);
    double heading = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double length = spec.size.draw(rng) * unit;
    const double alpha = spec.contrast.draw(rng);
    const double width = 0.9 * unit;
    for (double step = 0.0; step < length; step += 0.5) {
      canvas.around(y, x, width + 0.5, [&](std::size_t i, std::size_t j, double d) {
        canvas.darken(i, j, tint, alpha * soft_edge(d, width, 1.0));
      });
      heading += rng.normal() * 0.12;
      y += 0.5 * std::sin(heading);
      x += 0.5 * std::cos(heading);
    }
  }
}

void paint_disc_motifs(Canvas& canvas, const SynthClassSpec& spec, double unit,
                       const Color& color, double placement, double aspect_jitter,
                       Rng& rng) {
  const int n = draw_count(spec.count, rng);
  for (int k = 0; k < n; ++k) {
    auto [cy, cx] = point_in_disc(canvas.size(), placement, rng);
    const double radius = spec.size.draw(rng) * unit;
    const double alpha = spec.contrast.draw(rng);
    const double stretch = 1.0 + aspect_jitter * rng.uniform(-1.0, 1.0);
    const double angle = rng.uniform(0.0, std::numbers::pi);
    const double ca = std::cos(angle), sa = std::sin(angle);
    canvas.around(cy, cx, radius * (1.0 + aspect_jitter) + 1.0,
                  [&](std::size_t i, std::size_t j, double) {
                    const double dy = static_cast<double>(i) - cy;
                    const double dx = static_cast<double>(j) - cx;
                    const double u = (ca * dx + sa * dy) / stretch;
                    const double w = (-sa * dx + ca * dy) * stretch;
                    const double d = std::hypot(u, w);
                    canvas.blend(i, j, color, alpha * soft_edge(d, radius, std::max(1.0, 0.35 * radius)));
                  });
  }
}

void paint_rings(Canvas& canvas, const SynthClassSpec& spec, double unit, Rng& rng) {
  const int n = draw_count(spec.count, rng);
  const Color color{0.98, 0.95, 0.55};
  for (int k = 0; k < n; ++k) {
    auto [cy, cx] = point_in_disc(canvas.size(), 0.6, rng);
    const double radius = spec.size.draw(rng) * unit;
    const double alpha = spec.contrast.draw(rng);
    const double half_width = 0.9 * unit;
    canvas.around(cy, cx, radius + half_width + 1.0, [&](std::size_t i, std::size_t j, double d) {
      canvas.blend(i, j, color, alpha * soft_edge(std::abs(d - radius), half_width, 1.0));
    });
  }
}

}  // namespace

std::string to_string(Motif motif) {
  switch (motif) {
    case Motif::VesselWeb: return "vessel-web";
    case Motif::DarkBlob: return "dark-blob";
    case Motif::PalePlaque: return "pale-plaque";
    case Motif::SpeckleField: return "speckle-field";
    case Motif::RingLesion: return "ring-lesion";
  }
  return "unknown";
}

std::vector<SynthClassSpec> default_class_specs() {
  std::vector<SynthClassSpec> specs(5);
  specs[0] = {0, Motif::VesselWeb, {14, 26}, {4, 7}, {0.55, 0.85}};
  specs[1] = {1, Motif::DarkBlob, {5, 9}, {1, 3}, {0.70, 0.90}};
  specs[2] = {2, Motif::PalePlaque, {2.5, 4.5}, {4, 8}, {0.60, 0.85}};
  specs[3] = {3, Motif::SpeckleField, {0.7, 1.2}, {25, 45}, {0.70, 1.00}};
  specs[4] = {4, Motif::RingLesion, {3.0, 5.0}, {1, 1}, {0.80, 1.00}};
  return specs;
}

Tensor generate_frame(const SynthClassSpec& spec, std::size_t size, Rng& rng) {
  if (size < 32) throw DimensionError("generate_frame: size must be at least 32");
  const double unit = static_cast<double>(size) / 64.0;
  Canvas canvas(size);

  const Color base{spec.hue_red.draw(rng), spec.hue_green.draw(rng), spec.hue_blue.draw(rng)};
  const std::vector<double> shade = low_frequency_field(size, 5, rng);
  const std::vector<double> tint = low_frequency_field(size, 4, rng);
  const double c = (static_cast<double>(size) - 1.0) / 2.0;
  const double radius = static_cast<double>(size) / 2.0;
  for (std::size_t i = 0; i < size; ++i) {
    for (std::size_t j = 0; j < size; ++j) {
      const double r2 = (std::pow(static_cast<double>(i) - c, 2) +
                         std::pow(static_cast<double>(j) - c, 2)) /
                        (radius * radius);
      const double light = (1.0 - 0.35 * r2) * (1.0 + 0.07 * shade[i * size + j]);
      const double warm = 0.03 * tint[i * size + j];
      canvas.at(0, i, j) = (base[0] + warm) * light + spec.noise_scale * rng.normal();
      canvas.at(1, i, j) = (base[1] - 0.5 * warm) * light + spec.noise_scale * rng.normal();
      canvas.at(2, i, j) = base[2] * light + spec.noise_scale * rng.normal();
    }
  }

  switch (spec.motif) {
    case Motif::VesselWeb:
      paint_vessels(canvas, spec, unit, rng);
      break;
    case Motif::DarkBlob:
      paint_disc_motifs(canvas, spec, unit, Color{0.22, 0.07, 0.05}, 0.6, 0.3, rng);
      break;
    case Motif::PalePlaque:
      paint_disc_motifs(canvas, spec, unit, Color{0.96, 0.90, 0.72}, 0.75, 0.4, rng);
      break;
    case Motif::SpeckleField:
      paint_disc_motifs(canvas, spec, unit, Color{1.0, 1.0, 0.97}, 0.85, 0.0, rng);
      break;
    case Motif::RingLesion:
      paint_rings(canvas, spec, unit, rng);
      break;
  }

  Tensor& px = canvas.pixels();
  for (std::size_t i = 0; i < size; ++i) {
    for (std::size_t j = 0; j < size; ++j) {
      const double dy = static_cast<double>(i) - c;
      const double dx = static_cast<double>(j) - c;
      const bool outside = dy * dy + dx * dx > radius * radius;
      for (std::size_t ch = 0; ch < 3; ++ch) {
        double& v = px[(ch * size + i) * size + j];
        v = outside ? 0.0 : std::clamp(v, 0.0, 1.0);
      }
    }
  }
  return std::move(px);
}

std::size_t train_count(std::size_t n) {
  return static_cast<std::size_t>(std::lround(kTrainFraction * static_cast<double>(n)));
}

DatasetManifest generate_dataset(const std::filesystem::path& out_dir,
                                 std::size_t n_per_class, std::size_t size,
                                 std::uint64_t seed, bool unseen_protocol) {
  if (n_per_class == 0) throw ConfigError("n_per_class must be positive");
  if (size < 32) throw ConfigError("image size must be at least 32");
  std::error_code ec;
  std::filesystem::create_directories(out_dir / "images", ec);
  if (ec) throw IoError("cannot create " + (out_dir / "images").string() + ": " + ec.message());

  DatasetManifest manifest;
  manifest.global_seed = seed;
  manifest.image_size = size;
  const auto specs = default_class_specs();
  for (const SynthClassSpec& spec : specs) {
    std::vector<std::size_t> order(n_per_class);
    for (std::size_t i = 0; i < n_per_class; ++i) order[i] = i;
    Rng split_rng(derive_seed(seed, "split", static_cast<std::uint64_t>(spec.class_id)));
    for (std::size_t i = n_per_class; i > 1; --i) std::swap(order[i - 1], order[split_rng.below(i)]);
    std::vector<Split> split(n_per_class, Split::Test);
    const bool test_only = unseen_protocol && spec.class_id == kUnseenClass;
    if (!test_only) {
      for (std::size_t i = 0; i < train_count(n_per_class); ++i) split[order[i]] = Split::Train;
    }

    for (std::size_t i = 0; i < n_per_class; ++i) {
      const std::uint64_t index = static_cast<std::uint64_t>(spec.class_id) * n_per_class + i;
      ManifestRecord rec;
      char name[64];
      std::snprintf(name, sizeof name, "images/c%d_%05zu.png", spec.class_id, i);
      rec.path = name;
      rec.label = spec.class_id;
      rec.split = split[i];
      rec.seed = derive_seed(seed, "frame", index);
      Rng rng(rec.seed);
      write_png(out_dir / rec.path, generate_frame(spec, size, rng));
      manifest.records.push_back(std::move(rec));
    }
  }
  write_manifest(out_dir / kManifestFile, manifest);
  return manifest;
}

}  // namespace tl
