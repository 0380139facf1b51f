#include <doctest.h>

#include <cmath>

#include "test_util.hpp"
#include "vitlp/geometry.hpp"

using namespace vitlp;

TEST_CASE("quantize endpoints and half-up boundary") {
  CHECK(quantize(0.0) == 0);
  CHECK(quantize(1.0) == 1000);
  CHECK(quantize(0.5) == 500);
  CHECK(quantize(0.0004) == 0);
  CHECK(quantize(0.0005) == 1);
  CHECK_THROWS_AS(quantize(-0.001), RangeError);
  CHECK_THROWS_AS(quantize(1.0001), RangeError);
  CHECK_THROWS_AS(quantize(std::nan("")), RangeError);
}

TEST_CASE("quantize is monotone and surjective") {
  std::vector<bool> hit(1001, false);
  int prev = 0;
  for (int i = 0; i <= 100000; ++i) {
    const double v = i / 100000.0;
    const int q = quantize(v);
    CHECK(q >= prev);
    prev = q;
    hit[static_cast<std::size_t>(q)] = true;
    CHECK(std::abs(dequantize(q) - v) <= 0.0005 + 1e-12);
  }
  CHECK(std::all_of(hit.begin(), hit.end(), [](bool b) { return b; }));
}

TEST_CASE("dequantize values and round trip") {
  CHECK(dequantize(1000) == 1.0);
  CHECK(dequantize(500) == 0.5);
  for (int b = 0; b <= 1000; ++b) CHECK(quantize(dequantize(b)) == b);
  CHECK_THROWS_AS(dequantize(-1), RangeError);
  CHECK_THROWS_AS(dequantize(1001), RangeError);
}

TEST_CASE("box validity") {
  CHECK(BBox{0, 0, 10, 10}.valid());
  CHECK(BBox{5, 5, 5, 5}.valid());
  CHECK_FALSE(BBox{10, 0, 5, 10}.valid());
  CHECK_FALSE(BBox{0, 0, 1001, 10}.valid());
  CHECK_FALSE(BBox{-1, 0, 5, 10}.valid());
  CHECK(quantize(NormBox{0.1, 0.2, 0.3, 0.4}) == BBox{100, 200, 300, 400});
  CHECK_THROWS_AS(quantize(NormBox{0.5, 0.2, 0.3, 0.4}), RangeError);
}

TEST_CASE("iou hand-computed cases") {
  const BBox b{100, 200, 300, 400};
  CHECK(iou(b, b) == 1.0);
  CHECK(iou(BBox{0, 0, 10, 10}, BBox{20, 20, 30, 30}) == 0.0);
  CHECK(iou(BBox{0, 0, 10, 10}, BBox{5, 0, 15, 10}) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  // Touching edges share no area under half-open ranges.
  CHECK(iou(BBox{0, 0, 10, 10}, BBox{10, 0, 20, 10}) == 0.0);
  const BBox flat{5, 5, 5, 9};
  CHECK(iou(flat, flat) == 0.0);
  CHECK(iou(flat, BBox{0, 0, 10, 10}) == 0.0);
}

TEST_CASE("iou is symmetric, bounded and translation invariant") {
  Rng rng(5);
  for (int i = 0; i < 500; ++i) {
    const int x1 = rng.range(0, 400), y1 = rng.range(0, 400);
    const BBox a{x1, y1, x1 + rng.range(0, 300), y1 + rng.range(0, 300)};
    const int u1 = rng.range(0, 400), v1 = rng.range(0, 400);
    const BBox b{u1, v1, u1 + rng.range(0, 300), v1 + rng.range(0, 300)};
    const double ab = iou(a, b);
    CHECK(ab == iou(b, a));
    CHECK(ab >= 0.0);
    CHECK(ab <= 1.0);
    const int dx = rng.range(0, 299), dy = rng.range(0, 299);
    const BBox as{a.x1 + dx, a.y1 + dy, a.x2 + dx, a.y2 + dy};
    const BBox bs{b.x1 + dx, b.y1 + dy, b.x2 + dx, b.y2 + dy};
    CHECK(iou(as, bs) == doctest::Approx(ab).epsilon(1e-15));
  }
}
