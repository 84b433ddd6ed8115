#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "artrack/homography.hpp"
#include "artrack/marker.hpp"

namespace artrack {

// Pinhole camera, zero skew, no distortion.
struct CameraIntrinsics {
  double fx = 800.0;
  double fy = 800.0;
  double cx = 479.5;
  double cy = 359.5;
  int width = 960;
  int height = 720;

  // Throws ParameterError on fx/fy <= 0 or a principal point outside the frame.
  void validate() const;
  Eigen::Matrix3d matrix() const;
};

CameraIntrinsics parse_intrinsics_json(std::string_view text);
CameraIntrinsics load_intrinsics_file(const std::string& path);
std::string intrinsics_to_json(const CameraIntrinsics& k);

// Marker frame -> camera frame. Marker frame: origin at the mark center, x
// right, y down (as printed), z pointing away from the viewer; a mark facing
// the camera head-on has R = I.
struct Pose {
  Eigen::Matrix3d R = Eigen::Matrix3d::Identity();
  Eigen::Vector3d t = Eigen::Vector3d(0.0, 0.0, 1.0);

  // Orthonormality and det within 1e-9, t.z > 0.
  bool satisfies_invariants(double tol = 1e-9) const;
};

// Angle of R_a * R_b^T in radians.
double rotation_angle_between(const Eigen::Matrix3d& a, const Eigen::Matrix3d& b);

// R = Ry(yaw) * Rx(pitch) * Rz(roll), angles in degrees.
Eigen::Matrix3d rotation_from_ypr_deg(double yaw, double pitch, double roll);

Eigen::Matrix3d rotation_from_axis_angle(const Eigen::Vector3d& w);
// Projects onto SO(3) via SVD: U diag(1, 1, det(UV^T)) V^T.
Eigen::Matrix3d nearest_rotation(const Eigen::Matrix3d& m);

// Planar pose from H ~ K [r1 r2 t]. Throws GeometryError when the first two
// columns of K^-1 H vanish.
Pose decompose_planar_homography(const Homography& h, const CameraIntrinsics& k);

// Marker-plane corners in canonical order (top-left, then clockwise as
// printed) for a mark of the given side.
std::array<Eigen::Vector3d, 4> marker_corners_3d(double side_m);

// Throws GeometryError if the corners are not clockwise on screen.
Pose estimate_pose(const Detection& d, double side_m, const CameraIntrinsics& k);

// Throws ProjectionError if the point is not in front of the camera
// (camera-frame z <= 1e-9).
Point2 project_point(const Eigen::Vector3d& p, const Pose& pose, const CameraIntrinsics& k);

// RMS pixel distance between projected canonical corners and detected corners.
double reprojection_error(const Pose& pose, const Detection& d, double side_m,
                          const CameraIntrinsics& k);

struct RefineResult {
  Pose pose;
  double initial_error = 0.0;
  double final_error = 0.0;
  int iterations = 0;
  // Normal equations were singular; `pose` is the unchanged input.
  bool degraded = false;
};

// Gauss-Newton on the 8 corner residuals over (axis-angle increment,
// translation), with step halving. Never returns a worse pose than `initial`.
RefineResult refine_pose(const Pose& initial, const Detection& d, double side_m,
                         const CameraIntrinsics& k);

// 8 residuals (projected - observed, x then y per corner) at pose
// (Exp(delta[0:3]) * R, t + delta[3:6]).
Eigen::Matrix<double, 8, 1> corner_residuals(const Pose& pose,
                                             const Eigen::Matrix<double, 6, 1>& delta,
                                             const Detection& d, double side_m,
                                             const CameraIntrinsics& k);

// Central-difference Jacobian of corner_residuals at delta = 0.
Eigen::Matrix<double, 8, 6> numeric_jacobian(const Pose& pose, const Detection& d, double side_m,
                                             const CameraIntrinsics& k, double step = 1e-6);

struct LocalTransform {
  double scale = 1.0;
  Eigen::Vector3d rotation = Eigen::Vector3d::Zero();     // axis-angle, radians
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();  // meters, marker frame
};

// Homogeneous model -> camera transform; bottom row is exactly (0, 0, 0, 1).
// Serialized row-major.
struct ModelViewMatrix {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
};

// [R t; 0 1] * T(translation) * Rot(rotation) * S(scale).
ModelViewMatrix model_view_matrix(const Pose& pose, const LocalTransform& local);

struct Mesh {
  std::vector<Eigen::Vector3d> vertices;
  std::vector<std::array<int, 3>> triangles;

  // Throws ValidationError on out-of-range indices or an empty face list.
  void validate() const;
};

// Wavefront OBJ subset: "v x y z" and "f a b c ..." (1-based, negative
// relative indices, "a/b/c" forms); polygons are fan-triangulated and all
// other statements ignored.
Mesh parse_obj(std::string_view text);
Mesh load_obj_file(const std::string& path);

struct Segment2 {
  Point2 a;
  Point2 b;
};

// Each unique undirected triangle edge once, in first-seen order, running
// from its lower to its higher vertex index; edges with an endpoint at or
// behind the camera plane are dropped.
std::vector<Segment2> project_model(const Mesh& mesh, const ModelViewMatrix& mv,
                                    const CameraIntrinsics& k);

}  // namespace artrack
