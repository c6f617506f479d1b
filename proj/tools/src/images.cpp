#include "images.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace irbm::cli {

void write_pgm(const std::string& path, std::size_t width, std::size_t height,
               const std::vector<std::uint8_t>& gray) {
  if (gray.size() != width * height) throw std::invalid_argument("PGM size mismatch");
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write '" + path + "'");
  f << "P5\n" << width << " " << height << "\n255\n";
  f.write(reinterpret_cast<const char*>(gray.data()), static_cast<std::streamsize>(gray.size()));
  if (!f) throw std::runtime_error("write failed for '" + path + "'");
}

void write_image_grid(const std::string& path, const std::vector<Vector>& images,
                      std::size_t width, std::size_t height, std::size_t columns) {
  if (images.empty() || width == 0 || height == 0 || columns == 0)
    throw std::invalid_argument("empty image grid");
  const std::size_t cols = std::min(columns, images.size());
  const std::size_t rows = (images.size() + cols - 1) / cols;
  const std::size_t gw = cols * (width + 1) + 1;
  const std::size_t gh = rows * (height + 1) + 1;
  std::vector<std::uint8_t> gray(gw * gh, 128);
  for (std::size_t k = 0; k < images.size(); ++k) {
    if (images[k].size() != width * height) throw std::invalid_argument("image size mismatch");
    const std::size_t x0 = (k % cols) * (width + 1) + 1;
    const std::size_t y0 = (k / cols) * (height + 1) + 1;
    for (std::size_t y = 0; y < height; ++y)
      for (std::size_t x = 0; x < width; ++x) {
        const double v = std::clamp(images[k][y * width + x], 0.0, 1.0);
        gray[(y0 + y) * gw + x0 + x] = static_cast<std::uint8_t>(std::lround(v * 255.0));
      }
  }
  write_pgm(path, gw, gh, gray);
}

Vector normalize_filter(std::span<const double> row) {
  Vector out(row.begin(), row.end());
  if (out.empty()) return out;
  const auto [lo, hi] = std::minmax_element(out.begin(), out.end());
  const double a = *lo;
  const double span = *hi - *lo;
  for (double& x : out) x = span > 0.0 ? (x - a) / span : 0.5;
  return out;
}

std::size_t default_image_width(std::size_t num_visible) {
  const auto side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(num_visible))));
  return side * side == num_visible ? side : num_visible;
}

}  // namespace irbm::cli
