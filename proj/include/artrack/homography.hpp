#pragma once

#include <array>
#include <span>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "artrack/imaging.hpp"

namespace artrack {

// Planar projective map, stored with unit Frobenius norm and h(2,2) >= 0.
class Homography {
 public:
  Homography() : h_(Eigen::Matrix3d::Identity() / std::sqrt(3.0)) {}
  // Normalizes `h`; throws GeometryError if it is singular.
  explicit Homography(const Eigen::Matrix3d& h);

  const Eigen::Matrix3d& matrix() const { return h_; }

  // Maps a point with perspective division. Throws GeometryError when the
  // point lands on the line at infinity.
  Point2 apply(const Point2& p) const;
  Homography inverse() const;

 private:
  Eigen::Matrix3d h_;
};

// Direct linear transform from four correspondences, solved in
// Hartley-normalized coordinates. Throws GeometryError if three points of
// either set are collinear.
Homography homography_from_corners(std::span<const Point2, 4> src,
                                   std::span<const Point2, 4> dst);

}  // namespace artrack
