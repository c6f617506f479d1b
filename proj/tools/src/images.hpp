#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "irbm/numeric.hpp"

namespace irbm::cli {

/// Binary P5 graymap, 8-bit.
void write_pgm(const std::string& path, std::size_t width, std::size_t height,
               const std::vector<std::uint8_t>& gray);

/// Tiles images (values in [0, 1], row-major, width x height each) into a
/// grid with a one-pixel gray border.
void write_image_grid(const std::string& path, const std::vector<Vector>& images,
                      std::size_t width, std::size_t height, std::size_t columns);

/// Rescales a filter row to [0, 1] by its own min and max.
Vector normalize_filter(std::span<const double> row);

/// Square side when D is a perfect square, otherwise D (one row).
std::size_t default_image_width(std::size_t num_visible);

}  // namespace irbm::cli
