#pragma once

#include <cstddef>

#include "tripletlens/rng.hpp"
#include "tripletlens/tensor.hpp"

namespace tl {

/// One realisation of the training-time augmentation.
struct AugmentDraw {
  bool flip_horizontal = false;
  bool flip_vertical = false;
  int quarter_turns = 0;   // counter-clockwise, 0..3
  double angle = 0.0;      // radians; used only with arbitrary rotation
};

struct AugmentOptions {
  /// Replace right-angle rotation with a uniform angle in [0, 2pi), bilinear
  /// resampling and black fill.
  bool arbitrary_rotation = false;
};

/// Draws horizontal flip (p=0.5), vertical flip (p=0.5), then a rotation.
AugmentDraw draw_augmentation(Rng& rng, const AugmentOptions& options = {});

/// Applies flips then rotation to a [C,S,S] image.
Tensor apply_augmentation(const Tensor& image, const AugmentDraw& draw,
                          const AugmentOptions& options = {});

Tensor augment(const Tensor& image, Rng& rng, const AugmentOptions& options = {});

Tensor flip_horizontal(const Tensor& image);
Tensor flip_vertical(const Tensor& image);
/// Counter-clockwise by 90 degrees `turns` times: out(i, j) = in(j, S-1-i) per turn.
Tensor rotate_quarter(const Tensor& image, int turns);
/// Rotation about the image centre by `radians` (counter-clockwise), bilinear,
/// with zero fill outside the source.
Tensor rotate_bilinear(const Tensor& image, double radians);

Tensor center_crop(const Tensor& image, std::size_t size);
/// Bilinear resize of a [C,H,W] image with half-pixel centres.
Tensor resize_bilinear(const Tensor& image, std::size_t out_h, std::size_t out_w);

inline constexpr std::size_t kCropSize = 500;
inline constexpr std::size_t kNetworkInputSize = 224;

/// Raw frame [3,H,W] (H,W >= 500, values in [0,1]) -> centre 500x500 crop ->
/// bilinear 224x224, clamped to [0,1].
Tensor preprocess(const Tensor& frame);

}  // namespace tl
