#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "relprop/tensor.hpp"

namespace relprop::pgm {

/// Binary PGM (P5, maxval 255). Pixel (row r, col c) maps to tensor[r, c, 0]
/// with values 0..255 as floats. Comment lines are allowed between header
/// tokens.
Tensor decode(std::span<const std::uint8_t> bytes);
Tensor load(const std::filesystem::path& path);

/// Values are rounded half-up and clamped to 0..255. Accepts H x W or
/// H x W x 1 tensors.
std::vector<std::uint8_t> encode(const Tensor& image);
void save(const Tensor& image, const std::filesystem::path& path);

}  // namespace relprop::pgm
