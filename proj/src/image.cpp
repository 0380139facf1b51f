#include "vitlp/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>
#include <stdexcept>

namespace vitlp {

Image::Image(int h, int w, double fill) : height(h), width(w), pixels(static_cast<std::size_t>(h) * w, fill) {
  if (h <= 0 || w <= 0) throw std::invalid_argument("image dimensions must be positive");
}

std::string encode_pgm(const Image& img) {
  std::string out = "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  out.reserve(out.size() + img.pixels.size());
  for (double v : img.pixels) {
    const double c = std::clamp(v, 0.0, 1.0);
    out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(c * 255.0))));
  }
  return out;
}

namespace {

// Reads the next header integer, skipping whitespace and '#' comments.
int next_header_int(const std::string& s, std::size_t& pos) {
  while (pos < s.size()) {
    if (s[pos] == '#') {
      while (pos < s.size() && s[pos] != '\n') ++pos;
    } else if (std::isspace(static_cast<unsigned char>(s[pos]))) {
      ++pos;
    } else {
      break;
    }
  }
  std::size_t start = pos;
  while (pos < s.size() && std::isdigit(static_cast<unsigned char>(s[pos]))) ++pos;
  if (start == pos) throw std::runtime_error("pgm: malformed header");
  return std::stoi(s.substr(start, pos - start));
}

}  // namespace

Image decode_pgm(const std::string& bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '2')) {
    throw std::runtime_error("pgm: unsupported magic (expected P5 or P2)");
  }
  const bool binary = bytes[1] == '5';
  std::size_t pos = 2;
  const int w = next_header_int(bytes, pos);
  const int h = next_header_int(bytes, pos);
  const int maxval = next_header_int(bytes, pos);
  if (maxval <= 0 || maxval > 255) throw std::runtime_error("pgm: only 8-bit maxval is supported");
  Image img(h, w);
  if (binary) {
    ++pos;  // single whitespace after maxval
    if (bytes.size() - pos < img.pixels.size()) throw std::runtime_error("pgm: truncated pixel data");
    for (std::size_t i = 0; i < img.pixels.size(); ++i) {
      img.pixels[i] = static_cast<unsigned char>(bytes[pos + i]) / static_cast<double>(maxval);
    }
  } else {
    for (auto& p : img.pixels) p = next_header_int(bytes, pos) / static_cast<double>(maxval);
  }
  return img;
}

void write_pgm(const std::filesystem::path& path, const Image& img) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  const std::string data = encode_pgm(img);
  os.write(data.data(), static_cast<std::streamsize>(data.size()));
}

Image read_pgm(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read " + path.string());
  std::string data((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return decode_pgm(data);
}

PixelRect to_pixels(const BBox& box, int width, int height) {
  auto px = [](int bin, int extent) { return static_cast<int>(std::lround(static_cast<double>(bin) * extent / kMaxBin)); };
  return {px(box.x1, width), px(box.y1, height), px(box.x2, width), px(box.y2, height)};
}

Image draw_boxes(const Image& img, const std::vector<BBox>& boxes, double level) {
  Image out = img;
  for (const auto& b : boxes) {
    const PixelRect r = to_pixels(b, img.width, img.height);
    const int x0 = std::clamp(r.x0 - 1, 0, img.width - 1), x1 = std::clamp(r.x1, 0, img.width - 1);
    const int y0 = std::clamp(r.y0 - 1, 0, img.height - 1), y1 = std::clamp(r.y1, 0, img.height - 1);
    for (int x = x0; x <= x1; ++x) {
      out.at(y0, x) = level;
      out.at(y1, x) = level;
    }
    for (int y = y0; y <= y1; ++y) {
      out.at(y, x0) = level;
      out.at(y, x1) = level;
    }
  }
  return out;
}

}  // namespace vitlp
