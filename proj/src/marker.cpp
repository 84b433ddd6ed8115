#include "artrack/marker.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Eigenvalues>

#include "artrack/errors.hpp"

namespace artrack {

PatternBits PatternBits::from_payload(const Payload& payload) {
  PatternBits bits;
  for (int r = 0; r < kGridSide; ++r) {
    for (int c = 0; c < kGridSide; ++c) {
      const bool ring = r == 0 || c == 0 || r == kGridSide - 1 || c == kGridSide - 1;
      bits.set(r, c, ring || payload.get(r - 1, c - 1));
    }
  }
  return bits;
}

bool PatternBits::frame_intact() const {
  for (int i = 0; i < kGridSide; ++i) {
    if (!get(0, i) || !get(kGridSide - 1, i) || !get(i, 0) || !get(i, kGridSide - 1)) {
      return false;
    }
  }
  return true;
}

Payload PatternBits::payload() const {
  Payload p;
  for (int r = 0; r < kPayloadSide; ++r) {
    for (int c = 0; c < kPayloadSide; ++c) p.set(r, c, get(r + 1, c + 1));
  }
  return p;
}

namespace {

std::array<Point2, 4> canonical_square() {
  return {Point2(0.0, 0.0), Point2(kGridSide, 0.0), Point2(kGridSide, kGridSide),
          Point2(0.0, kGridSide)};
}

}  // namespace

PatternBits sample_pattern(const GrayImage& img, const Quad& quad) {
  const auto square = canonical_square();
  const Homography h = homography_from_corners(std::span<const Point2, 4>(square),
                                               std::span<const Point2, 4>(quad.corners));
  std::array<double, kGridSide * kGridSide> means{};
  constexpr double kStencil = 1.0 / 6.0;
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (int r = 0; r < kGridSide; ++r) {
    for (int c = 0; c < kGridSide; ++c) {
      double acc = 0.0;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const Point2 p = h.apply(Point2(c + 0.5 + dx * kStencil, r + 0.5 + dy * kStencil));
          acc += img.sample(p.x(), p.y());
        }
      }
      const double mean = acc / 9.0;
      means[static_cast<std::size_t>(r * kGridSide + c)] = mean;
      lo = std::min(lo, mean);
      hi = std::max(hi, mean);
    }
  }
  const double mid = 0.5 * (lo + hi);
  PatternBits bits;
  for (int r = 0; r < kGridSide; ++r) {
    for (int c = 0; c < kGridSide; ++c) {
      bits.set(r, c, means[static_cast<std::size_t>(r * kGridSide + c)] < mid);
    }
  }
  return bits;
}

std::optional<PatternMatch> match_pattern(const PatternBits& bits, const MarkerDictionary& dict,
                                          double min_confidence) {
  if (dict.size() == 0) throw ParameterError("match_pattern: empty dictionary");
  if (!bits.frame_intact()) return std::nullopt;
  const Payload observed = bits.payload();

  std::optional<PatternMatch> best;
  // Templates visited by ascending id so strict '>' keeps the lowest id/k on ties.
  std::vector<const MarkerTemplate*> order;
  for (const auto& t : dict.templates()) order.push_back(&t);
  std::sort(order.begin(), order.end(),
            [](const MarkerTemplate* a, const MarkerTemplate* b) { return a->id < b->id; });
  for (const MarkerTemplate* t : order) {
    for (int k = 0; k < 4; ++k) {
      const int agree = kPayloadBits - t->payload.rotated_cw(k).hamming(observed);
      const double confidence = static_cast<double>(agree) / kPayloadBits;
      if (!best || confidence > best->confidence) best = PatternMatch{t->id, k, confidence};
    }
  }
  if (best && best->confidence >= min_confidence) return best;
  return std::nullopt;
}

namespace {

struct EdgeLine {
  Point2 point;
  Point2 normal;
};

std::optional<EdgeLine> fit_edge_points(const std::vector<Point2>& pts) {
  if (pts.size() < 3) return std::nullopt;
  Point2 mean = Point2::Zero();
  for (const auto& p : pts) mean += p;
  mean /= static_cast<double>(pts.size());
  Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
  for (const auto& p : pts) cov += (p - mean) * (p - mean).transpose();
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(cov);
  return EdgeLine{mean, eig.eigenvectors().col(0).normalized()};
}

// Offset along `normal` (dark to bright) of the half-intensity crossing
// nearest `base`, searched within +-reach.
std::optional<double> edge_crossing(const GrayImage& img, const Point2& base, const Point2& normal,
                                    double reach) {
  constexpr double kStep = 0.25;
  constexpr double kMinContrast = 30.0;
  const int steps = static_cast<int>(std::round(reach / kStep));
  if (steps < 3) return std::nullopt;
  std::vector<double> profile(static_cast<std::size_t>(2 * steps + 1));
  for (int j = -steps; j <= steps; ++j) {
    const Point2 p = base + normal * (j * kStep);
    profile[static_cast<std::size_t>(j + steps)] = img.sample(p.x(), p.y());
  }
  const std::size_t n = profile.size();
  const double dark = (profile[0] + profile[1] + profile[2]) / 3.0;
  const double bright = (profile[n - 1] + profile[n - 2] + profile[n - 3]) / 3.0;
  if (bright - dark < kMinContrast) return std::nullopt;
  const double mid = 0.5 * (dark + bright);
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j + 1 < n; ++j) {
    const double v0 = profile[j];
    const double v1 = profile[j + 1];
    if ((v0 < mid) == (v1 < mid) || v0 == v1) continue;
    const double offset = (static_cast<double>(j) + (mid - v0) / (v1 - v0) - steps) * kStep;
    if (std::abs(offset) < std::abs(best)) best = offset;
  }
  if (!std::isfinite(best)) return std::nullopt;
  return best;
}

// One pass: locate the half-intensity crossing along each side's normal.
std::optional<Quad> refine_once(const GrayImage& img, const Quad& quad) {
  double min_side = std::numeric_limits<double>::infinity();
  for (int s = 0; s < 4; ++s) {
    min_side = std::min(min_side, (quad.corners[(s + 1) % 4] - quad.corners[s]).norm());
  }
  // Stay inside the one-cell frame ring on the dark side.
  const double reach = std::clamp(0.4 * min_side / kGridSide, 1.0, 2.5);

  std::array<EdgeLine, 4> lines;
  for (int s = 0; s < 4; ++s) {
    const Point2 a = quad.corners[s];
    const Point2 b = quad.corners[(s + 1) % 4];
    const double len = (b - a).norm();
    const Point2 dir = (b - a) / len;
    const Point2 outward(dir.y(), -dir.x());
    const int samples = std::clamp(static_cast<int>(len), 4, 96);

    std::vector<Point2> edge_pts;
    for (int i = 0; i < samples; ++i) {
      const double f = 0.15 + 0.7 * (i + 0.5) / samples;
      const Point2 base = a + f * (b - a);
      if (auto offset = edge_crossing(img, base, outward, reach)) {
        edge_pts.push_back(base + outward * *offset);
      }
    }
    auto line = fit_edge_points(edge_pts);
    if (!line || edge_pts.size() < static_cast<std::size_t>(samples / 2)) return std::nullopt;
    lines[static_cast<std::size_t>(s)] = *line;
  }

  Quad out;
  for (int c = 0; c < 4; ++c) {
    const EdgeLine& l0 = lines[static_cast<std::size_t>((c + 3) % 4)];
    const EdgeLine& l1 = lines[static_cast<std::size_t>(c)];
    Eigen::Matrix2d m;
    m << l0.normal.transpose(), l1.normal.transpose();
    if (std::abs(m.determinant()) < 1e-9) return std::nullopt;
    out.corners[c] = m.inverse() * Eigen::Vector2d(l0.normal.dot(l0.point), l1.normal.dot(l1.point));
    if ((out.corners[c] - quad.corners[c]).norm() > reach) return std::nullopt;
  }
  if (!is_convex(out.corners) || signed_area(out.corners) <= 0.0) return std::nullopt;
  return out;
}

}  // namespace

Quad refine_quad_edges(const GrayImage& img, const Quad& quad) {
  Quad cur = quad;
  for (int pass = 0; pass < 2; ++pass) {
    auto next = refine_once(img, cur);
    if (!next) return cur;
    cur = *next;
  }
  return cur;
}

namespace {

// A point on a cell boundary of the canonical 8x8 grid, with the unit normal
// pointing from the black cell into the white one.
struct BoundarySample {
  Point2 grid;
  Point2 normal;
};

std::vector<BoundarySample> boundary_samples(const PatternBits& bits, int per_cell) {
  // Cells outside the grid read as white background.
  auto black = [&](int r, int c) {
    return r >= 0 && c >= 0 && r < kGridSide && c < kGridSide && bits.get(r, c);
  };
  std::vector<BoundarySample> out;
  for (int line = 0; line <= kGridSide; ++line) {
    for (int cell = 0; cell < kGridSide; ++cell) {
      for (int j = 0; j < per_cell; ++j) {
        const double along = cell + 0.25 + 0.5 * (j + 0.5) / per_cell;
        // Vertical boundary u = line between columns line-1 and line.
        if (black(cell, line - 1) != black(cell, line)) {
          const double sign = black(cell, line - 1) ? 1.0 : -1.0;
          out.push_back({Point2(line, along), Point2(sign, 0.0)});
        }
        // Horizontal boundary v = line between rows line-1 and line.
        if (black(line - 1, cell) != black(line, cell)) {
          const double sign = black(line - 1, cell) ? 1.0 : -1.0;
          out.push_back({Point2(along, line), Point2(0.0, sign)});
        }
      }
    }
  }
  return out;
}

Point2 map_point(const Eigen::Matrix3d& h, const Point2& p) {
  const Eigen::Vector3d q = h * p.homogeneous();
  return q.hnormalized();
}

struct EdgeObservation {
  Point2 grid;
  Point2 image;
};

// Signed image distance of each observed edge point from the mapped boundary.
Eigen::VectorXd boundary_residuals(const Eigen::Matrix3d& h, const std::vector<BoundarySample>& s,
                                   const std::vector<EdgeObservation>& obs) {
  Eigen::VectorXd r(static_cast<Eigen::Index>(obs.size()));
  for (std::size_t i = 0; i < obs.size(); ++i) {
    const Point2 p = map_point(h, obs[i].grid);
    const Point2 tangent_grid(s[i].normal.y(), -s[i].normal.x());
    const Point2 tangent = map_point(h, obs[i].grid + 1e-3 * tangent_grid) - p;
    const Point2 normal = Point2(tangent.y(), -tangent.x()).normalized();
    r(static_cast<Eigen::Index>(i)) = normal.dot(obs[i].image - p);
  }
  return r;
}

}  // namespace

Quad refine_with_template(const GrayImage& img, const Quad& quad, const PatternBits& bits) {
  const auto square = canonical_square();
  Eigen::Matrix3d h;
  try {
    h = homography_from_corners(std::span<const Point2, 4>(square),
                                std::span<const Point2, 4>(quad.corners))
            .matrix();
  } catch (const GeometryError&) {
    return quad;
  }
  h /= h(2, 2);

  double min_side = std::numeric_limits<double>::infinity();
  for (int s = 0; s < 4; ++s) {
    min_side = std::min(min_side, (quad.corners[(s + 1) % 4] - quad.corners[s]).norm());
  }
  const double cell_px = min_side / kGridSide;
  // Keep each profile inside the neighboring cells.
  const double reach = std::min(2.5, 0.4 * cell_px);
  if (reach < 0.75) return quad;
  const int per_cell = std::clamp(static_cast<int>(cell_px / 2.0), 2, 12);
  const auto samples = boundary_samples(bits, per_cell);

  for (int pass = 0; pass < 3; ++pass) {
    std::vector<BoundarySample> used;
    std::vector<EdgeObservation> obs;
    for (const auto& s : samples) {
      const Point2 base = map_point(h, s.grid);
      const Point2 ahead = map_point(h, s.grid + 1e-3 * s.normal);
      const Point2 tangent_grid(s.normal.y(), -s.normal.x());
      const Point2 tangent = map_point(h, s.grid + 1e-3 * tangent_grid) - base;
      Point2 normal = Point2(tangent.y(), -tangent.x()).normalized();
      if (normal.dot(ahead - base) < 0.0) normal = -normal;
      if (auto offset = edge_crossing(img, base, normal, reach)) {
        used.push_back(s);
        obs.push_back({s.grid, base + normal * *offset});
      }
    }
    if (obs.size() < 32) return quad;

    // Gauss-Newton over the eight free entries of h (h22 = 1).
    for (int iter = 0; iter < 5; ++iter) {
      const Eigen::VectorXd r = boundary_residuals(h, used, obs);
      Eigen::MatrixXd jac(r.size(), 8);
      for (int k = 0; k < 8; ++k) {
        const double step = 1e-6 * std::max(1.0, std::abs(h(k / 3, k % 3)));
        Eigen::Matrix3d hp = h;
        Eigen::Matrix3d hm = h;
        hp(k / 3, k % 3) += step;
        hm(k / 3, k % 3) -= step;
        jac.col(k) = (boundary_residuals(hp, used, obs) - boundary_residuals(hm, used, obs)) /
                     (2.0 * step);
      }
      const Eigen::VectorXd delta = (jac.transpose() * jac).ldlt().solve(-jac.transpose() * r);
      if (!delta.allFinite()) return quad;
      for (int k = 0; k < 8; ++k) h(k / 3, k % 3) += delta(k);
      if (delta.norm() < 1e-12 * std::max(1.0, h.norm())) break;
    }
  }

  Quad out;
  for (int c = 0; c < 4; ++c) {
    out.corners[c] = map_point(h, square[c]);
    if (!out.corners[c].allFinite() || (out.corners[c] - quad.corners[c]).norm() > reach) {
      return quad;
    }
  }
  if (!is_convex(out.corners) || signed_area(out.corners) <= 0.0) return quad;
  return out;
}

std::vector<Detection> detect_markers(const GrayImage& img, const MarkerDictionary& dict,
                                      const DetectParams& params) {
  const BinaryImage bin =
      std::visit([&](auto t) { return binarize(img, t); }, params.threshold);
  const auto quads = detect_quads(trace_contours(bin), params.quad);

  std::vector<Detection> out;
  for (const Quad& raw : quads) {
    const Quad quad = params.refine_edges ? refine_quad_edges(img, raw) : raw;
    std::optional<PatternMatch> match;
    try {
      match = match_pattern(sample_pattern(img, quad), dict, params.min_confidence);
    } catch (const GeometryError&) {
      continue;
    }
    if (!match) continue;
    Detection d;
    d.marker_id = match->marker_id;
    d.rotation = match->rotation;
    d.confidence = match->confidence;
    // Stored top-left sits at observed corner k after k clockwise turns.
    for (int i = 0; i < 4; ++i) d.corners[i] = quad.corners[(i + match->rotation) % 4];
    if (params.refine_edges) {
      const MarkerTemplate* t = dict.find(match->marker_id);
      d.corners = refine_with_template(img, Quad{d.corners},
                                       PatternBits::from_payload(t->payload))
                      .corners;
    }
    out.push_back(d);
  }
  std::stable_sort(out.begin(), out.end(), [](const Detection& a, const Detection& b) {
    return a.confidence > b.confidence;
  });
  return out;
}

GrayImage generate_marker_image(const MarkerTemplate& t, int cell_px) {
  if (cell_px < 4) {
    throw ParameterError("generate_marker_image: cell_px must be >= 4, got " +
                         std::to_string(cell_px));
  }
  const int margin = 2 * cell_px;
  const int size = kGridSide * cell_px + 2 * margin;
  const PatternBits bits = PatternBits::from_payload(t.payload);
  GrayImage img(size, size, 255);
  for (int y = margin; y < margin + kGridSide * cell_px; ++y) {
    for (int x = margin; x < margin + kGridSide * cell_px; ++x) {
      const int r = (y - margin) / cell_px;
      const int c = (x - margin) / cell_px;
      img.at(x, y) = bits.get(r, c) ? 0 : 255;
    }
  }
  return img;
}

}  // namespace artrack
