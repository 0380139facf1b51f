#include "vitlp/geometry.hpp"

#include <algorithm>
#include <cmath>

namespace vitlp {

namespace {
bool in_bins(int v) { return v >= 0 && v <= kMaxBin; }
bool in_unit(double v) { return v >= 0.0 && v <= 1.0; }
}  // namespace

bool BBox::valid() const { return in_bins(x1) && in_bins(y1) && in_bins(x2) && in_bins(y2) && x1 <= x2 && y1 <= y2; }

BBox BBox::from_coords(const std::array<int, 4>& c) {
  BBox b{c[0], c[1], c[2], c[3]};
  if (!b.valid()) throw RangeError("invalid box " + to_string(b));
  return b;
}

bool NormBox::valid() const { return in_unit(x1) && in_unit(y1) && in_unit(x2) && in_unit(y2) && x1 <= x2 && y1 <= y2; }

int quantize(double v) {
  if (!(v >= 0.0 && v <= 1.0)) throw RangeError("quantize: value outside [0,1]: " + std::to_string(v));
  // Half-up: floor(v·1000 + 0.5).
  return std::min(kMaxBin, static_cast<int>(std::floor(v * kMaxBin + 0.5)));
}

double dequantize(int bin) {
  if (!in_bins(bin)) throw RangeError("dequantize: bin outside [0,1000]: " + std::to_string(bin));
  return static_cast<double>(bin) / kMaxBin;
}

BBox quantize(const NormBox& b) {
  if (!b.valid()) throw RangeError("quantize: invalid normalized box");
  return {quantize(b.x1), quantize(b.y1), quantize(b.x2), quantize(b.y2)};
}

NormBox dequantize(const BBox& b) {
  if (!b.valid()) throw RangeError("dequantize: invalid box " + to_string(b));
  return {dequantize(b.x1), dequantize(b.y1), dequantize(b.x2), dequantize(b.y2)};
}

double iou(const BBox& a, const BBox& b) {
  if (a.degenerate() || b.degenerate()) return 0.0;
  const long iw = std::max(0, std::min(a.x2, b.x2) - std::max(a.x1, b.x1));
  const long ih = std::max(0, std::min(a.y2, b.y2) - std::max(a.y1, b.y1));
  const long inter = iw * ih;
  if (inter == 0) return 0.0;
  const long area_a = static_cast<long>(a.x2 - a.x1) * (a.y2 - a.y1);
  const long area_b = static_cast<long>(b.x2 - b.x1) * (b.y2 - b.y1);
  return static_cast<double>(inter) / static_cast<double>(area_a + area_b - inter);
}

std::string to_string(const BBox& b) {
  return "(" + std::to_string(b.x1) + "," + std::to_string(b.y1) + "," + std::to_string(b.x2) + "," +
         std::to_string(b.y2) + ")";
}

}  // namespace vitlp
