#include "artrack/synth.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "artrack/errors.hpp"
#include "json.hpp"

namespace artrack {

namespace {

std::array<Point2, 4> project_corners(const MarkerTemplate& marker, const Pose& pose,
                                      const CameraIntrinsics& k) {
  const auto obj = marker_corners_3d(marker.side_m);
  std::array<Point2, 4> img;
  for (int i = 0; i < 4; ++i) img[i] = project_point(obj[i], pose, k);
  return img;
}

// Uniform in (0, 1) from the top 53 bits.
double unit_uniform(std::mt19937_64& rng) {
  return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
}

double uniform_in(std::mt19937_64& rng, const Range& r) {
  return r.lo + (r.hi - r.lo) * unit_uniform(rng);
}

class BoxMuller {
 public:
  explicit BoxMuller(std::uint64_t seed) : rng_(seed) {}

  double next() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = unit_uniform(rng_);
    const double u2 = unit_uniform(rng_);
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * M_PI * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

 private:
  std::mt19937_64 rng_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace

double projected_min_side(const MarkerTemplate& marker, const Pose& pose,
                          const CameraIntrinsics& k) {
  const auto img = project_corners(marker, pose, k);
  double min_side = std::numeric_limits<double>::infinity();
  for (int i = 0; i < 4; ++i) min_side = std::min(min_side, (img[(i + 1) % 4] - img[i]).norm());
  return min_side;
}

void check_scene_bounds(const MarkerTemplate& marker, const Pose& pose, const CameraIntrinsics& k,
                        double min_side_px) {
  k.validate();
  if (!pose.satisfies_invariants(1e-6)) throw SceneError("scene: pose violates its invariants");
  std::array<Point2, 4> img;
  try {
    img = project_corners(marker, pose, k);
  } catch (const ProjectionError&) {
    throw SceneError("scene: marker corner behind the camera");
  }
  for (int i = 0; i < 4; ++i) {
    const auto& p = img[i];
    if (p.x() < 0.0) throw SceneError("scene: corner " + std::to_string(i) + " left of x = 0");
    if (p.y() < 0.0) throw SceneError("scene: corner " + std::to_string(i) + " above y = 0");
    if (p.x() > k.width - 1) {
      throw SceneError("scene: corner " + std::to_string(i) + " right of x = " +
                       std::to_string(k.width - 1));
    }
    if (p.y() > k.height - 1) {
      throw SceneError("scene: corner " + std::to_string(i) + " below y = " +
                       std::to_string(k.height - 1));
    }
  }
  const double side = projected_min_side(marker, pose, k);
  if (side < min_side_px) {
    throw SceneError("scene: projected side " + std::to_string(side) + " px below minimum " +
                     std::to_string(min_side_px) + " px");
  }
}

GrayImage render_marker(const SynthScene& scene) {
  const auto& k = scene.intrinsics;
  check_scene_bounds(scene.marker, scene.pose, k);
  if (!(scene.noise_sigma >= 0.0)) throw SceneError("scene: noise_sigma must be >= 0");

  // Marker plane (X, Y) -> pixel.
  Eigen::Matrix3d plane_to_px;
  plane_to_px.col(0) = scene.pose.R.col(0);
  plane_to_px.col(1) = scene.pose.R.col(1);
  plane_to_px.col(2) = scene.pose.t;
  plane_to_px = k.matrix() * plane_to_px;
  const Eigen::Matrix3d px_to_plane = plane_to_px.inverse();

  const PatternBits bits = PatternBits::from_payload(scene.marker.payload);
  const double half = 0.5 * scene.marker.side_m;
  const double cell = scene.marker.side_m / kGridSide;
  auto shade = [&](double x, double y) -> double {
    const Eigen::Vector3d q = px_to_plane * Eigen::Vector3d(x, y, 1.0);
    const double mx = q.x() / q.z();
    const double my = q.y() / q.z();
    if (!(mx >= -half && mx < half && my >= -half && my < half)) return scene.background;
    const int c = std::min(static_cast<int>((mx + half) / cell), kGridSide - 1);
    const int r = std::min(static_cast<int>((my + half) / cell), kGridSide - 1);
    return bits.get(r, c) ? 0.0 : 255.0;
  };

  const auto corners = project_corners(scene.marker, scene.pose, k);
  double min_x = corners[0].x(), max_x = min_x, min_y = corners[0].y(), max_y = min_y;
  for (const auto& p : corners) {
    min_x = std::min(min_x, p.x());
    max_x = std::max(max_x, p.x());
    min_y = std::min(min_y, p.y());
    max_y = std::max(max_y, p.y());
  }
  const int x0 = std::max(0, static_cast<int>(std::floor(min_x)) - 1);
  const int x1 = std::min(k.width - 1, static_cast<int>(std::ceil(max_x)) + 1);
  const int y0 = std::max(0, static_cast<int>(std::floor(min_y)) - 1);
  const int y1 = std::min(k.height - 1, static_cast<int>(std::ceil(max_y)) + 1);

  std::vector<double> value(static_cast<std::size_t>(k.width) * k.height, scene.background);
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      const double s = shade(x - 0.25, y - 0.25) + shade(x + 0.25, y - 0.25) +
                       shade(x - 0.25, y + 0.25) + shade(x + 0.25, y + 0.25);
      value[static_cast<std::size_t>(y) * k.width + x] = 0.25 * s;
    }
  }

  GrayImage img(k.width, k.height);
  auto out = img.pixels();
  BoxMuller noise(scene.seed);
  for (std::size_t i = 0; i < value.size(); ++i) {
    double v = value[i];
    if (scene.noise_sigma > 0.0) v += scene.noise_sigma * noise.next();
    out[i] = static_cast<std::uint8_t>(std::clamp(std::round(v), 0.0, 255.0));
  }
  return img;
}

Pose random_pose(std::uint64_t seed, const PoseRanges& ranges, double side_m,
                 const CameraIntrinsics& k) {
  for (const Range* r : {&ranges.yaw_deg, &ranges.pitch_deg, &ranges.roll_deg,
                         &ranges.distance_sides, &ranges.lateral}) {
    if (!(r->lo <= r->hi)) throw ParameterError("random_pose: empty range");
  }
  if (!(ranges.distance_sides.lo > 0.0)) throw ParameterError("random_pose: distance must be > 0");
  if (!(side_m > 0.0)) throw ParameterError("random_pose: side_m must be > 0");
  k.validate();

  MarkerTemplate probe;
  probe.side_m = side_m;
  std::mt19937_64 rng(seed);
  constexpr int kAttempts = 100;
  for (int attempt = 0; attempt < kAttempts; ++attempt) {
    Pose pose;
    const double yaw = uniform_in(rng, ranges.yaw_deg);
    const double pitch = uniform_in(rng, ranges.pitch_deg);
    const double roll = uniform_in(rng, ranges.roll_deg);
    const double distance = uniform_in(rng, ranges.distance_sides) * side_m;
    const double lat_x = uniform_in(rng, ranges.lateral);
    const double lat_y = uniform_in(rng, ranges.lateral);
    pose.R = rotation_from_ypr_deg(yaw, pitch, roll);
    pose.t = Eigen::Vector3d(0.0, 0.0, distance);

    // Shift within the free margin around the centered projection.
    std::array<Point2, 4> img;
    try {
      img = project_corners(probe, pose, k);
    } catch (const ProjectionError&) {
      continue;
    }
    double min_x = img[0].x(), max_x = min_x, min_y = img[0].y(), max_y = min_y;
    for (const auto& p : img) {
      min_x = std::min(min_x, p.x());
      max_x = std::max(max_x, p.x());
      min_y = std::min(min_y, p.y());
      max_y = std::max(max_y, p.y());
    }
    const double room_left = min_x - 1.0;
    const double room_right = (k.width - 2.0) - max_x;
    const double room_up = min_y - 1.0;
    const double room_down = (k.height - 2.0) - max_y;
    const double shift_x = lat_x >= 0.0 ? lat_x * room_right : lat_x * room_left;
    const double shift_y = lat_y >= 0.0 ? lat_y * room_down : lat_y * room_up;
    pose.t.x() = shift_x * distance / k.fx;
    pose.t.y() = shift_y * distance / k.fy;
    // Angles are relative to the line of sight, not the optical axis.
    pose.R = Eigen::Quaterniond::FromTwoVectors(Eigen::Vector3d::UnitZ(), pose.t)
                 .toRotationMatrix() *
             pose.R;
    try {
      check_scene_bounds(probe, pose, k, ranges.min_side_px);
    } catch (const SceneError&) {
      continue;
    }
    return pose;
  }
  throw SceneError("random_pose: no in-frame pose after 100 attempts");
}

std::string ground_truth_json(const SynthScene& scene) {
  nlohmann::json r = nlohmann::json::array();
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) r.push_back(scene.pose.R(i, j));
  }
  const nlohmann::json doc = {
      {"pose", {{"R", r}, {"t", {scene.pose.t.x(), scene.pose.t.y(), scene.pose.t.z()}}}},
      {"marker_id", scene.marker.id},
      {"seed", scene.seed}};
  return doc.dump(2) + "\n";
}

}  // namespace artrack
