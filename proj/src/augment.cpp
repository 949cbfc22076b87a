#include "tripletlens/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "tripletlens/error.hpp"

namespace tl {

namespace {

struct Dims {
  std::size_t c, h, w;
};

Dims image_dims(const Tensor& image, const char* what) {
  expect_rank(image, 3, what);
  return {image.dim(0), image.dim(1), image.dim(2)};
}

double sample_bilinear(const Tensor& image, std::size_t c, double y, double x, double fill,
                       bool clamp) {
  const Dims d{image.dim(0), image.dim(1), image.dim(2)};
  const double maxy = static_cast<double>(d.h - 1);
  const double maxx = static_cast<double>(d.w - 1);
  if (clamp) {
    y = std::clamp(y, 0.0, maxy);
    x = std::clamp(x, 0.0, maxx);
  } else if (y < 0.0 || x < 0.0 || y > maxy || x > maxx) {
    return fill;
  }
  const auto y0 = static_cast<std::size_t>(std::floor(y));
  const auto x0 = static_cast<std::size_t>(std::floor(x));
  const std::size_t y1 = std::min(y0 + 1, d.h - 1);
  const std::size_t x1 = std::min(x0 + 1, d.w - 1);
  const double fy = y - static_cast<double>(y0);
  const double fx = x - static_cast<double>(x0);
  const double* p = image.data().data() + c * d.h * d.w;
  // Lerp form keeps constant regions exactly constant.
  const double a = p[y0 * d.w + x0], b = p[y0 * d.w + x1];
  const double c0 = p[y1 * d.w + x0], c1 = p[y1 * d.w + x1];
  const double top = a + (b - a) * fx;
  const double bottom = c0 + (c1 - c0) * fx;
  return top + (bottom - top) * fy;
}

}  // namespace

AugmentDraw draw_augmentation(Rng& rng, const AugmentOptions& options) {
  AugmentDraw d;
  d.flip_horizontal = rng.coin();
  d.flip_vertical = rng.coin();
  if (options.arbitrary_rotation) {
    d.angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
  } else {
    d.quarter_turns = static_cast<int>(rng.below(4));
  }
  return d;
}

Tensor apply_augmentation(const Tensor& image, const AugmentDraw& draw,
                          const AugmentOptions& options) {
  const Dims d = image_dims(image, "augment");
  if (d.h != d.w) throw DimensionError("augment: image must be square");
  Tensor out = image;
  if (draw.flip_horizontal) out = flip_horizontal(out);
  if (draw.flip_vertical) out = flip_vertical(out);
  if (options.arbitrary_rotation) {
    if (draw.angle != 0.0) out = rotate_bilinear(out, draw.angle);
  } else if (draw.quarter_turns % 4 != 0) {
    out = rotate_quarter(out, draw.quarter_turns);
  }
  return out;
}

Tensor augment(const Tensor& image, Rng& rng, const AugmentOptions& options) {
  return apply_augmentation(image, draw_augmentation(rng, options), options);
}

Tensor flip_horizontal(const Tensor& image) {
  const Dims d = image_dims(image, "flip_horizontal");
  Tensor out(image.shape());
  for (std::size_t c = 0; c < d.c; ++c)
    for (std::size_t i = 0; i < d.h; ++i)
      for (std::size_t j = 0; j < d.w; ++j)
        out[(c * d.h + i) * d.w + j] = image[(c * d.h + i) * d.w + (d.w - 1 - j)];
  return out;
}

Tensor flip_vertical(const Tensor& image) {
  const Dims d = image_dims(image, "flip_vertical");
  Tensor out(image.shape());
  for (std::size_t c = 0; c < d.c; ++c)
    for (std::size_t i = 0; i < d.h; ++i)
      for (std::size_t j = 0; j < d.w; ++j)
        out[(c * d.h + i) * d.w + j] = image[(c * d.h + (d.h - 1 - i)) * d.w + j];
  return out;
}

Tensor rotate_quarter(const Tensor& image, int turns) {
  const Dims d = image_dims(image, "rotate_quarter");
  if (d.h != d.w) throw DimensionError("rotate_quarter: image must be square");
  turns = ((turns % 4) + 4) % 4;
  Tensor out = image;
  const std::size_t s = d.h;
  for (int t = 0; t < turns; ++t) {
    Tensor next(image.shape());
    for (std::size_t c = 0; c < d.c; ++c)
      for (std::size_t i = 0; i < s; ++i)
        for (std::size_t j = 0; j < s; ++j)
          next[(c * s + i) * s + j] = out[(c * s + j) * s + (s - 1 - i)];
    out = std::move(next);
  }
  return out;
}

Tensor rotate_bilinear(const Tensor& image, double radians) {
  const Dims d = image_dims(image, "rotate_bilinear");
  Tensor out(image.shape());
  const double cy = (static_cast<double>(d.h) - 1.0) / 2.0;
  const double cx = (static_cast<double>(d.w) - 1.0) / 2.0;
  const double cs = std::cos(radians), sn = std::sin(radians);
  for (std::size_t i = 0; i < d.h; ++i) {
    for (std::size_t j = 0; j < d.w; ++j) {
      // Inverse map of a counter-clockwise rotation in image coordinates (y down).
      const double dy = static_cast<double>(i) - cy;
      const double dx = static_cast<double>(j) - cx;
      const double sx = cs * dx - sn * dy + cx;
      const double sy = sn * dx + cs * dy + cy;
      for (std::size_t c = 0; c < d.c; ++c) {
        out[(c * d.h + i) * d.w + j] = sample_bilinear(image, c, sy, sx, 0.0, false);
      }
    }
  }
  return out;
}

Tensor center_crop(const Tensor& image, std::size_t size) {
  const Dims d = image_dims(image, "center_crop");
  if (size == 0 || size > d.h || size > d.w) {
    throw DimensionError("center_crop: cannot crop " + std::to_string(size) + " from " +
                         shape_to_string(image.shape()));
  }
  const std::size_t top = (d.h - size) / 2;
  const std::size_t left = (d.w - size) / 2;
  Tensor out(Shape{d.c, size, size});
  for (std::size_t c = 0; c < d.c; ++c)
    for (std::size_t i = 0; i < size; ++i)
      for (std::size_t j = 0; j < size; ++j)
        out[(c * size + i) * size + j] = image[(c * d.h + top + i) * d.w + left + j];
  return out;
}

Tensor resize_bilinear(const Tensor& image, std::size_t out_h, std::size_t out_w) {
  const Dims d = image_dims(image, "resize_bilinear");
  Tensor out(Shape{d.c, out_h, out_w});
  const double sy = static_cast<double>(d.h) / static_cast<double>(out_h);
  const double sx = static_cast<double>(d.w) / static_cast<double>(out_w);
  for (std::size_t c = 0; c < d.c; ++c)
    for (std::size_t i = 0; i < out_h; ++i)
      for (std::size_t j = 0; j < out_w; ++j) {
        const double y = (static_cast<double>(i) + 0.5) * sy - 0.5;
        const double x = (static_cast<double>(j) + 0.5) * sx - 0.5;
        out[(c * out_h + i) * out_w + j] = sample_bilinear(image, c, y, x, 0.0, true);
      }
  return out;
}

Tensor preprocess(const Tensor& frame) {
  const Dims d = image_dims(frame, "preprocess");
  if (d.h < kCropSize || d.w < kCropSize) {
    throw DimensionError("preprocess: frame " + shape_to_string(frame.shape()) +
                         " smaller than the " + std::to_string(kCropSize) + " px crop");
  }
  Tensor out = resize_bilinear(center_crop(frame, kCropSize), kNetworkInputSize,
                               kNetworkInputSize);
  for (double& v : out.data()) v = std::clamp(v, 0.0, 1.0);
  return out;
}

}  // namespace tl
