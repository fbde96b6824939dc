#include "memesent/spatial.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "memesent/error.hpp"

namespace memesent {

namespace {

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

} // namespace

SpatialEncoding SpatialEncoding::from_normalized(const std::array<double, kSize>& c) {
  for (double v : c) {
    if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
      throw DataError("spatial encoding coordinate outside [0,1]: " + std::to_string(v));
    }
  }
  if (c[0] > c[2] || c[1] > c[3]) {
    throw DataError("spatial encoding has min corner past max corner");
  }
  return SpatialEncoding{c};
}

SpatialEncoding normalize_box(const BBox& box, double width, double height) {
  if (!(width > 0.0) || !(height > 0.0)) {
    throw UsageError("image dimensions must be positive");
  }
  if (!std::isfinite(box.x_min) || !std::isfinite(box.y_min) || !std::isfinite(box.x_max) ||
      !std::isfinite(box.y_max)) {
    throw DataError("bounding box has non-finite coordinates");
  }
  if (box.x_min > box.x_max || box.y_min > box.y_max) {
    throw DataError("bounding box has min corner past max corner");
  }
  // Clamping is monotone, so ordering survives it.
  return SpatialEncoding{{clamp01(box.x_min / width), clamp01(box.y_min / height),
                          clamp01(box.x_max / width), clamp01(box.y_max / height)}};
}

Vector append_spatial(const Vector& vec, const SpatialEncoding& enc) {
  Vector out(vec.size() + SpatialEncoding::kSize);
  out.head(vec.size()) = vec;
  for (int c = 0; c < SpatialEncoding::kSize; ++c) out[vec.size() + c] = enc.coords[c];
  return out;
}

} // namespace memesent
