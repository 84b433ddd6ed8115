#pragma once

#include <cstdint>
#include <string>

#include "artrack/imaging.hpp"
#include "artrack/marker.hpp"
#include "artrack/pose.hpp"

namespace artrack {

struct SynthScene {
  MarkerTemplate marker;
  Pose pose;
  CameraIntrinsics intrinsics;
  std::uint8_t background = 255;
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;
};

inline constexpr double kMinProjectedSidePx = 16.0;

// Throws SceneError naming the first violated bound: a corner behind the
// camera or outside [0, width-1] x [0, height-1], or a projected side shorter
// than `min_side_px`.
void check_scene_bounds(const MarkerTemplate& marker, const Pose& pose, const CameraIntrinsics& k,
                        double min_side_px = kMinProjectedSidePx);

// Shortest projected marker side in pixels.
double projected_min_side(const MarkerTemplate& marker, const Pose& pose, const CameraIntrinsics& k);

// Inverse-maps every pixel onto the marker plane (2x2 supersampled), then
// adds Gaussian noise and clamps. Noise: std::mt19937_64 seeded with
// scene.seed, one normal per pixel in raster order. Normals come in pairs
// r*cos(2 pi u2), r*sin(2 pi u2) with r = sqrt(-2 ln u1), each uniform formed
// as ((x >> 11) + 0.5) * 2^-53.
GrayImage render_marker(const SynthScene& scene);

struct Range {
  double lo = 0.0;
  double hi = 0.0;
};

struct PoseRanges {
  Range yaw_deg{-60.0, 60.0};
  Range pitch_deg{-60.0, 60.0};
  Range roll_deg{-60.0, 60.0};
  Range distance_sides{2.0, 10.0};
  // Fraction of the free image margin used for the lateral offset, per axis.
  Range lateral{-1.0, 1.0};
  double min_side_px = kMinProjectedSidePx;
};

// Deterministic in `seed`. Resamples up to 100 times until the marker lies in
// frame; throws SceneError otherwise.
Pose random_pose(std::uint64_t seed, const PoseRanges& ranges, double side_m,
                 const CameraIntrinsics& k = {});

// {"pose": {"R": [9, row-major], "t": [3]}, "marker_id", "seed"}
std::string ground_truth_json(const SynthScene& scene);

}  // namespace artrack
