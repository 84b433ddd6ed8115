#include "artrack/pose.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include <Eigen/Dense>

#include "artrack/errors.hpp"
#include "json.hpp"

namespace artrack {

// --- Intrinsics ------------------------------------------------------------

void CameraIntrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) throw ParameterError("intrinsics: fx and fy must be positive");
  if (width < 1 || height < 1) throw ParameterError("intrinsics: frame size must be positive");
  if (!(cx >= 0.0 && cx < width) || !(cy >= 0.0 && cy < height)) {
    throw ParameterError("intrinsics: principal point outside the frame");
  }
}

Eigen::Matrix3d CameraIntrinsics::matrix() const {
  Eigen::Matrix3d k;
  k << fx, 0.0, cx, 0.0, fy, cy, 0.0, 0.0, 1.0;
  return k;
}

CameraIntrinsics parse_intrinsics_json(std::string_view text) {
  CameraIntrinsics k;
  try {
    const auto doc = nlohmann::json::parse(text);
    k.fx = doc.at("fx").get<double>();
    k.fy = doc.at("fy").get<double>();
    k.cx = doc.at("cx").get<double>();
    k.cy = doc.at("cy").get<double>();
    k.width = doc.at("width").get<int>();
    k.height = doc.at("height").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("camera.json: ") + e.what());
  }
  k.validate();
  return k;
}

CameraIntrinsics load_intrinsics_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open intrinsics file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_intrinsics_json(ss.str());
}

std::string intrinsics_to_json(const CameraIntrinsics& k) {
  const nlohmann::json doc = {{"fx", k.fx}, {"fy", k.fy},       {"cx", k.cx},
                              {"cy", k.cy}, {"width", k.width}, {"height", k.height}};
  return doc.dump(2) + "\n";
}

// --- Rotations -------------------------------------------------------------

bool Pose::satisfies_invariants(double tol) const {
  if (!R.allFinite() || !t.allFinite()) return false;
  if ((R.transpose() * R - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > tol) return false;
  if (std::abs(R.determinant() - 1.0) > tol) return false;
  return t.z() > 0.0;
}

double rotation_angle_between(const Eigen::Matrix3d& a, const Eigen::Matrix3d& b) {
  // atan2 form stays accurate near zero where acos((tr-1)/2) loses precision.
  const Eigen::Matrix3d d = a * b.transpose();
  const Eigen::Vector3d axis(d(2, 1) - d(1, 2), d(0, 2) - d(2, 0), d(1, 0) - d(0, 1));
  return std::atan2(0.5 * axis.norm(), 0.5 * (d.trace() - 1.0));
}

Eigen::Matrix3d rotation_from_ypr_deg(double yaw, double pitch, double roll) {
  constexpr double kDeg = M_PI / 180.0;
  return (Eigen::AngleAxisd(yaw * kDeg, Eigen::Vector3d::UnitY()) *
          Eigen::AngleAxisd(pitch * kDeg, Eigen::Vector3d::UnitX()) *
          Eigen::AngleAxisd(roll * kDeg, Eigen::Vector3d::UnitZ()))
      .toRotationMatrix();
}

Eigen::Matrix3d rotation_from_axis_angle(const Eigen::Vector3d& w) {
  const double angle = w.norm();
  if (angle == 0.0) return Eigen::Matrix3d::Identity();
  return Eigen::AngleAxisd(angle, w / angle).toRotationMatrix();
}

Eigen::Matrix3d nearest_rotation(const Eigen::Matrix3d& m) {
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::Matrix3d u = svd.matrixU();
  const Eigen::Matrix3d v = svd.matrixV();
  const double det = (u * v.transpose()).determinant();
  return u * Eigen::Vector3d(1.0, 1.0, det > 0.0 ? 1.0 : -1.0).asDiagonal() * v.transpose();
}

// --- Pose recovery ---------------------------------------------------------

Pose decompose_planar_homography(const Homography& h, const CameraIntrinsics& k) {
  const Eigen::Matrix3d m = k.matrix().inverse() * h.matrix();
  const Eigen::Vector3d m1 = m.col(0);
  const Eigen::Vector3d m2 = m.col(1);
  const Eigen::Vector3d m3 = m.col(2);
  const double n1 = m1.norm();
  const double n2 = m2.norm();
  if (n1 < 1e-12 || n2 < 1e-12) {
    throw GeometryError("decompose_planar_homography: ill-conditioned homography");
  }
  const double lambda = 2.0 / (n1 + n2);
  Eigen::Vector3d r1 = lambda * m1;
  Eigen::Vector3d r2 = lambda * m2;
  Eigen::Vector3d t = lambda * m3;
  if (t.z() < 0.0) {
    r1 = -r1;
    r2 = -r2;
    t = -t;
  }
  if (!(t.z() > 0.0)) throw GeometryError("decompose_planar_homography: plane through camera center");
  Eigen::Matrix3d r;
  r.col(0) = r1;
  r.col(1) = r2;
  r.col(2) = r1.cross(r2);
  return Pose{nearest_rotation(r), t};
}

std::array<Eigen::Vector3d, 4> marker_corners_3d(double side_m) {
  const double h = 0.5 * side_m;
  return {Eigen::Vector3d(-h, -h, 0.0), Eigen::Vector3d(h, -h, 0.0), Eigen::Vector3d(h, h, 0.0),
          Eigen::Vector3d(-h, h, 0.0)};
}

Pose estimate_pose(const Detection& d, double side_m, const CameraIntrinsics& k) {
  if (!(side_m > 0.0)) throw ParameterError("estimate_pose: side_m must be positive");
  if (!(signed_area(d.corners) > 0.0)) {
    throw GeometryError("estimate_pose: detection corners are not clockwise");
  }
  const auto obj = marker_corners_3d(side_m);
  std::array<Point2, 4> plane;
  for (int i = 0; i < 4; ++i) plane[i] = obj[i].head<2>();
  const Homography h = homography_from_corners(std::span<const Point2, 4>(plane),
                                               std::span<const Point2, 4>(d.corners));
  Pose pose = decompose_planar_homography(h, k);
  if (!pose.satisfies_invariants()) throw GeometryError("estimate_pose: invalid pose recovered");
  return pose;
}

Point2 project_point(const Eigen::Vector3d& p, const Pose& pose, const CameraIntrinsics& k) {
  const Eigen::Vector3d c = pose.R * p + pose.t;
  if (!(c.z() > 1e-9)) throw ProjectionError("project_point: point at or behind the camera plane");
  return Point2(k.fx * c.x() / c.z() + k.cx, k.fy * c.y() / c.z() + k.cy);
}

double reprojection_error(const Pose& pose, const Detection& d, double side_m,
                          const CameraIntrinsics& k) {
  const auto obj = marker_corners_3d(side_m);
  double sq = 0.0;
  for (int i = 0; i < 4; ++i) sq += (project_point(obj[i], pose, k) - d.corners[i]).squaredNorm();
  return std::sqrt(sq / 4.0);
}

// --- Refinement ------------------------------------------------------------

namespace {

using Vec6 = Eigen::Matrix<double, 6, 1>;
using Vec8 = Eigen::Matrix<double, 8, 1>;

Pose apply_increment(const Pose& pose, const Vec6& delta) {
  return Pose{rotation_from_axis_angle(delta.head<3>()) * pose.R, pose.t + delta.tail<3>()};
}

double rms(const Vec8& r) { return std::sqrt(r.squaredNorm() / 4.0); }

}  // namespace

Vec8 corner_residuals(const Pose& pose, const Vec6& delta, const Detection& d, double side_m,
                      const CameraIntrinsics& k) {
  const Pose p = apply_increment(pose, delta);
  const auto obj = marker_corners_3d(side_m);
  Vec8 r;
  for (int i = 0; i < 4; ++i) {
    const Point2 e = project_point(obj[i], p, k) - d.corners[i];
    r(2 * i) = e.x();
    r(2 * i + 1) = e.y();
  }
  return r;
}

Eigen::Matrix<double, 8, 6> numeric_jacobian(const Pose& pose, const Detection& d, double side_m,
                                             const CameraIntrinsics& k, double step) {
  Eigen::Matrix<double, 8, 6> j;
  for (int c = 0; c < 6; ++c) {
    Vec6 delta = Vec6::Zero();
    delta(c) = step;
    const Vec8 plus = corner_residuals(pose, delta, d, side_m, k);
    delta(c) = -step;
    const Vec8 minus = corner_residuals(pose, delta, d, side_m, k);
    j.col(c) = (plus - minus) / (2.0 * step);
  }
  return j;
}

RefineResult refine_pose(const Pose& initial, const Detection& d, double side_m,
                         const CameraIntrinsics& k) {
  constexpr int kMaxIterations = 20;
  constexpr int kMaxHalvings = 8;
  constexpr double kMinStep = 1e-10;

  RefineResult result;
  result.pose = initial;
  Vec8 residual = corner_residuals(initial, Vec6::Zero(), d, side_m, k);
  result.initial_error = rms(residual);
  result.final_error = result.initial_error;

  Pose cur = initial;
  double cur_err = result.initial_error;
  for (int it = 0; it < kMaxIterations; ++it) {
    const Eigen::Matrix<double, 8, 6> jac = numeric_jacobian(cur, d, side_m, k);
    const Eigen::Matrix<double, 6, 6> normal = jac.transpose() * jac;
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, 6, 6>> eig(normal);
    const double max_ev = eig.eigenvalues().maxCoeff();
    const double min_ev = eig.eigenvalues().minCoeff();
    if (!(max_ev > 0.0) || min_ev <= max_ev * 1e-15) {
      RefineResult degraded;
      degraded.pose = initial;
      degraded.initial_error = result.initial_error;
      degraded.final_error = result.initial_error;
      degraded.iterations = it;
      degraded.degraded = true;
      return degraded;
    }
    Vec6 step = -normal.ldlt().solve(jac.transpose() * residual);

    bool accepted = false;
    for (int halving = 0; halving <= kMaxHalvings; ++halving) {
      const Pose candidate = apply_increment(cur, step);
      double err = std::numeric_limits<double>::infinity();
      Vec8 r;
      try {
        r = corner_residuals(candidate, Vec6::Zero(), d, side_m, k);
        err = rms(r);
      } catch (const ProjectionError&) {
      }
      if (candidate.t.z() > 0.0 && err <= cur_err) {
        cur = candidate;
        cur_err = err;
        residual = r;
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    result.iterations = it + 1;
    if (!accepted || step.norm() < kMinStep) break;
  }
  cur.R = nearest_rotation(cur.R);
  // Re-projection onto SO(3) can perturb the error in the last ulp.
  const double final_err = reprojection_error(cur, d, side_m, k);
  if (final_err <= result.initial_error) {
    result.pose = cur;
    result.final_error = final_err;
  }
  return result;
}

// --- Overlay ---------------------------------------------------------------

ModelViewMatrix model_view_matrix(const Pose& pose, const LocalTransform& local) {
  Eigen::Matrix4d extrinsic = Eigen::Matrix4d::Identity();
  extrinsic.topLeftCorner<3, 3>() = pose.R;
  extrinsic.topRightCorner<3, 1>() = pose.t;
  Eigen::Matrix4d translate = Eigen::Matrix4d::Identity();
  translate.topRightCorner<3, 1>() = local.translation;
  Eigen::Matrix4d rotate = Eigen::Matrix4d::Identity();
  rotate.topLeftCorner<3, 3>() = rotation_from_axis_angle(local.rotation);
  Eigen::Matrix4d scale = Eigen::Matrix4d::Identity();
  scale.topLeftCorner<3, 3>() *= local.scale;

  ModelViewMatrix mv;
  mv.m = extrinsic * translate * rotate * scale;
  mv.m.row(3) << 0.0, 0.0, 0.0, 1.0;
  return mv;
}

std::vector<Segment2> project_model(const Mesh& mesh, const ModelViewMatrix& mv,
                                    const CameraIntrinsics& k) {
  mesh.validate();
  const Pose identity{Eigen::Matrix3d::Identity(), Eigen::Vector3d::Zero()};
  std::vector<std::optional<Point2>> projected(mesh.vertices.size());
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
    const Eigen::Vector3d cam = (mv.m * mesh.vertices[i].homogeneous()).head<3>();
    try {
      projected[i] = project_point(cam, identity, k);
    } catch (const ProjectionError&) {
    }
  }

  std::vector<Segment2> out;
  std::set<std::pair<int, int>> seen;
  for (const auto& tri : mesh.triangles) {
    for (int e = 0; e < 3; ++e) {
      int a = tri[static_cast<std::size_t>(e)];
      int b = tri[static_cast<std::size_t>((e + 1) % 3)];
      if (a == b) continue;
      const std::pair<int, int> key = std::minmax(a, b);
      if (!seen.insert(key).second) continue;
      const auto& pa = projected[static_cast<std::size_t>(key.first)];
      const auto& pb = projected[static_cast<std::size_t>(key.second)];
      if (pa && pb) out.push_back(Segment2{*pa, *pb});
    }
  }
  return out;
}

}  // namespace artrack
