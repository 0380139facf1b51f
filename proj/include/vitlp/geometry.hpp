#pragma once

#include <array>
#include <stdexcept>
#include <string>

namespace vitlp {

class RangeError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

inline constexpr int kMaxBin = 1000;
inline constexpr int kLayoutBins = kMaxBin + 1;

// Quantized box; coordinates are bins in [0, 1000].
struct BBox {
  int x1 = 0, y1 = 0, x2 = 0, y2 = 0;

  bool valid() const;
  bool degenerate() const { return x2 <= x1 || y2 <= y1; }
  std::array<int, 4> coords() const { return {x1, y1, x2, y2}; }
  static BBox from_coords(const std::array<int, 4>& c);
  auto operator<=>(const BBox&) const = default;
};

// Page-relative box with coordinates in [0, 1].
struct NormBox {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;
  bool valid() const;
};

int quantize(double v);
double dequantize(int bin);
BBox quantize(const NormBox& b);
NormBox dequantize(const BBox& b);

// Intersection over union with boxes as half-open ranges [x1,x2)×[y1,y2).
// Degenerate boxes overlap nothing, themselves included.
double iou(const BBox& a, const BBox& b);

std::string to_string(const BBox& b);

}  // namespace vitlp
