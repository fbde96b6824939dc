#pragma once

#include <array>

#include <Eigen/Core>

namespace memesent {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Axis-aligned box in pixel space, origin at the top-left corner.
/// Detector output may overshoot the frame; normalize_box clamps it.
struct BBox {
  double x_min = 0.0;
  double y_min = 0.0;
  double x_max = 0.0;
  double y_max = 0.0;

  double width() const { return x_max - x_min; }
  double height() const { return y_max - y_min; }
  double area() const { return width() * height(); }

  friend bool operator==(const BBox&, const BBox&) = default;
};

/// Box corners (x_min, y_min, x_max, y_max) expressed on the shared
/// [0,1] x [0,1] frame of the meme image. Pad slots use all zeros.
struct SpatialEncoding {
  static constexpr int kSize = 4;

  std::array<double, kSize> coords{0.0, 0.0, 0.0, 0.0};

  double x_min() const { return coords[0]; }
  double y_min() const { return coords[1]; }
  double x_max() const { return coords[2]; }
  double y_max() const { return coords[3]; }

  bool is_zero() const {
    return coords[0] == 0.0 && coords[1] == 0.0 && coords[2] == 0.0 && coords[3] == 0.0;
  }

  static SpatialEncoding zero() { return {}; }

  /// Validates an already-normalized box (e.g. read from a manifest).
  static SpatialEncoding from_normalized(const std::array<double, kSize>& c);

  friend bool operator==(const SpatialEncoding&, const SpatialEncoding&) = default;
};

/// Divides pixel coordinates by the frame size and clamps to [0,1].
/// Throws UsageError for non-positive frame dimensions and DataError for
/// inverted boxes.
SpatialEncoding normalize_box(const BBox& box, double width, double height);

/// vec followed by the four encoding coordinates.
Vector append_spatial(const Vector& vec, const SpatialEncoding& enc);

} // namespace memesent
