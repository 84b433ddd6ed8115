#include "artrack/homography.hpp"

#include <cmath>

#include <Eigen/SVD>

#include "artrack/errors.hpp"

namespace artrack {

namespace {

// Similarity moving the centroid to the origin with mean distance sqrt(2).
Eigen::Matrix3d normalizing_transform(std::span<const Point2, 4> pts) {
  Point2 centroid = Point2::Zero();
  for (const auto& p : pts) centroid += p;
  centroid /= 4.0;
  double mean_dist = 0.0;
  for (const auto& p : pts) mean_dist += (p - centroid).norm();
  mean_dist /= 4.0;
  if (!(mean_dist > 0.0) || !std::isfinite(mean_dist)) {
    throw GeometryError("homography: coincident points");
  }
  const double s = std::sqrt(2.0) / mean_dist;
  Eigen::Matrix3d t;
  t << s, 0, -s * centroid.x(),
       0, s, -s * centroid.y(),
       0, 0, 1;
  return t;
}

void check_no_collinear_triple(std::span<const Point2, 4> pts, const Eigen::Matrix3d& norm,
                               const char* which) {
  std::array<Point2, 4> q;
  for (int i = 0; i < 4; ++i) q[i] = (norm * pts[i].homogeneous()).hnormalized();
  for (int i = 0; i < 4; ++i) {
    for (int j = i + 1; j < 4; ++j) {
      for (int k = j + 1; k < 4; ++k) {
        const Point2 a = q[j] - q[i];
        const Point2 b = q[k] - q[i];
        if (std::abs(a.x() * b.y() - a.y() * b.x()) < 1e-10) {
          throw GeometryError(std::string("homography: collinear triple in ") + which +
                              " points (" + std::to_string(i) + "," + std::to_string(j) +
                              "," + std::to_string(k) + ")");
        }
      }
    }
  }
}

}  // namespace

Homography::Homography(const Eigen::Matrix3d& h) {
  if (!h.allFinite()) throw GeometryError("homography: non-finite entries");
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(h);
  const auto& sv = svd.singularValues();
  if (!(sv(0) > 0.0) || sv(2) / sv(0) < 1e-14) {
    throw GeometryError("homography: matrix is singular");
  }
  h_ = h / h.norm();
  if (h_(2, 2) < 0.0) h_ = -h_;
}

Point2 Homography::apply(const Point2& p) const {
  const Eigen::Vector3d q = h_ * p.homogeneous();
  if (std::abs(q.z()) < 1e-300) throw GeometryError("homography: point maps to infinity");
  return q.hnormalized();
}

Homography Homography::inverse() const { return Homography(h_.inverse()); }

Homography homography_from_corners(std::span<const Point2, 4> src,
                                   std::span<const Point2, 4> dst) {
  const Eigen::Matrix3d ts = normalizing_transform(src);
  const Eigen::Matrix3d td = normalizing_transform(dst);
  check_no_collinear_triple(src, ts, "source");
  check_no_collinear_triple(dst, td, "destination");

  // Square system with a zero row so the null vector is V's last column.
  Eigen::Matrix<double, 9, 9> a = Eigen::Matrix<double, 9, 9>::Zero();
  for (int i = 0; i < 4; ++i) {
    const Eigen::Vector3d x = ts * src[i].homogeneous();
    const Eigen::Vector3d y = td * dst[i].homogeneous();
    const double u = y.x() / y.z();
    const double v = y.y() / y.z();
    a.row(2 * i) << x.transpose(), 0, 0, 0, -u * x.transpose();
    a.row(2 * i + 1) << 0, 0, 0, x.transpose(), -v * x.transpose();
  }
  Eigen::JacobiSVD<Eigen::Matrix<double, 9, 9>> svd(a, Eigen::ComputeFullV);
  const Eigen::Matrix<double, 9, 1> h = svd.matrixV().col(8);
  Eigen::Matrix3d hn;
  hn << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), h(8);
  return Homography(td.inverse() * hn * ts);
}

}  // namespace artrack
