#pragma once

#include <filesystem>

#include "tripletlens/tensor.hpp"

namespace tl {

/// Writes a [3,H,W] image with values in [0,1] as 8-bit RGB PNG
/// (round(v * 255), clamped). Output bytes depend only on the pixels.
void write_png(const std::filesystem::path& path, const Tensor& image);

/// Reads an 8-bit RGB(A)/gray PNG as a [3,H,W] tensor scaled to [0,1].
/// Throws LoadError on missing or undecodable files.
Tensor read_png(const std::filesystem::path& path);

}  // namespace tl
