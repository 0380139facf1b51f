#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "vitlp/geometry.hpp"

namespace vitlp {

// Grayscale page, row-major, values in [0,1] with 1 = white paper.
struct Image {
  int height = 0;
  int width = 0;
  std::vector<double> pixels;

  Image() = default;
  Image(int h, int w, double fill = 1.0);

  double at(int y, int x) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
  double& at(int y, int x) { return pixels[static_cast<std::size_t>(y) * width + x]; }
  bool operator==(const Image&) const = default;
};

// Binary portable graymap (P5, maxval 255). Reading also accepts P2.
std::string encode_pgm(const Image& img);
Image decode_pgm(const std::string& bytes);
void write_pgm(const std::filesystem::path& path, const Image& img);
Image read_pgm(const std::filesystem::path& path);

// Box bins mapped back onto pixel edges of an image of the given size.
struct PixelRect {
  int x0, y0, x1, y1;  // half-open
};
PixelRect to_pixels(const BBox& box, int width, int height);

// Copy of `img` with each box outline drawn at the given gray level.
Image draw_boxes(const Image& img, const std::vector<BBox>& boxes, double level = 0.5);

}  // namespace vitlp
