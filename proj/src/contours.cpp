#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <vector>

#include <Eigen/Eigenvalues>

#include "artrack/imaging.hpp"

namespace artrack {

namespace {

// Moore neighborhood, clockwise on screen starting at west.
constexpr std::array<PixelPoint, 8> kRing = {{
    {-1, 0}, {-1, -1}, {0, -1}, {1, -1}, {1, 0}, {1, 1}, {0, 1}, {-1, 1},
}};

int ring_index(int dx, int dy) {
  for (int i = 0; i < 8; ++i) {
    if (kRing[i].x == dx && kRing[i].y == dy) return i;
  }
  return -1;
}

void flood_label(const BinaryImage& bin, std::vector<int>& labels, int sx, int sy, int label) {
  const int w = bin.width();
  std::vector<PixelPoint> stack{{sx, sy}};
  labels[static_cast<std::size_t>(sy) * w + sx] = label;
  while (!stack.empty()) {
    const PixelPoint p = stack.back();
    stack.pop_back();
    for (const auto& d : kRing) {
      const int nx = p.x + d.x;
      const int ny = p.y + d.y;
      if (!bin.black_at(nx, ny)) continue;
      int& l = labels[static_cast<std::size_t>(ny) * w + nx];
      if (l != 0) continue;
      l = label;
      stack.push_back({nx, ny});
    }
  }
}

// Moore boundary following from the region's first raster pixel, whose west
// neighbor is known to be white. Stops with Jacob's criterion: the start pixel
// is re-entered from the same backtrack direction. When the start pixel is
// re-entered from elsewhere, the trace also stops once the first move out of
// it is about to repeat, since tracing is a function of (pixel, backtrack).
std::vector<PixelPoint> moore_trace(const BinaryImage& bin, PixelPoint start,
                                    std::size_t max_steps) {
  std::vector<PixelPoint> out{start};
  PixelPoint cur = start;
  int backtrack = 0;
  std::optional<std::pair<PixelPoint, int>> first_move;
  for (std::size_t step = 0; step < max_steps; ++step) {
    int found = -1;
    for (int i = 1; i <= 8; ++i) {
      const int d = (backtrack + i) % 8;
      if (bin.black_at(cur.x + kRing[d].x, cur.y + kRing[d].y)) {
        found = d;
        break;
      }
    }
    if (found < 0) break;  // isolated pixel
    const int prev = (found + 7) % 8;
    const PixelPoint next{cur.x + kRing[found].x, cur.y + kRing[found].y};
    const PixelPoint back{cur.x + kRing[prev].x, cur.y + kRing[prev].y};
    const int next_backtrack = ring_index(back.x - next.x, back.y - next.y);
    if (next == start && next_backtrack == 0) break;
    if (first_move && cur == start && next == first_move->first &&
        next_backtrack == first_move->second) {
      out.pop_back();  // start was appended on re-entry
      break;
    }
    if (!first_move) first_move = std::make_pair(next, next_backtrack);
    out.push_back(next);
    cur = next;
    backtrack = next_backtrack;
  }
  return out;
}

double point_line_distance(const PixelPoint& p, const PixelPoint& a, const PixelPoint& b) {
  const double dx = b.x - a.x;
  const double dy = b.y - a.y;
  const double len = std::hypot(dx, dy);
  if (len == 0.0) return std::hypot(p.x - a.x, p.y - a.y);
  return std::abs(dx * (p.y - a.y) - dy * (p.x - a.x)) / len;
}

// Douglas-Peucker over the open chain points[first..last] (indices modulo n).
void simplify_chain(std::span<const PixelPoint> points, std::size_t first, std::size_t last,
                    double epsilon, std::vector<std::size_t>& keep) {
  const std::size_t n = points.size();
  std::vector<std::pair<std::size_t, std::size_t>> stack{{first, last}};
  while (!stack.empty()) {
    auto [a, b] = stack.back();
    stack.pop_back();
    const std::size_t span_len = (b + n - a) % n;
    if (span_len < 2) continue;
    double best = -1.0;
    std::size_t best_i = a;
    for (std::size_t k = 1; k < span_len; ++k) {
      const std::size_t i = (a + k) % n;
      const double d = point_line_distance(points[i], points[a], points[b]);
      if (d > best) {
        best = d;
        best_i = i;
      }
    }
    if (best > epsilon) {
      keep.push_back(best_i);
      stack.push_back({a, best_i});
      stack.push_back({best_i, b});
    }
  }
}

struct Line {
  Point2 point;
  Point2 normal;  // unit
};

bool fit_line(std::span<const Point2> pts, Line& line) {
  if (pts.size() < 2) return false;
  Point2 mean = Point2::Zero();
  for (const auto& p : pts) mean += p;
  mean /= static_cast<double>(pts.size());
  Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
  for (const auto& p : pts) {
    const Point2 d = p - mean;
    cov += d * d.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(cov);
  if (eig.eigenvalues()(1) <= 0.0) return false;
  line.point = mean;
  line.normal = eig.eigenvectors().col(0).normalized();
  return true;
}

bool intersect(const Line& a, const Line& b, Point2& out) {
  Eigen::Matrix2d m;
  m << a.normal.transpose(), b.normal.transpose();
  const double det = m.determinant();
  if (std::abs(det) < 1e-9) return false;
  const Eigen::Vector2d rhs(a.normal.dot(a.point), b.normal.dot(b.point));
  out = m.inverse() * rhs;
  return true;
}

// Least-squares line through the middle 60% of each side's contour pixels,
// pushed outward onto the black/white boundary. The boundary pixel centers of
// a digitized half-plane sit on average max(|nx|,|ny|)/2 inside the edge.
std::array<Point2, 4> refine_corners(std::span<const PixelPoint> pts,
                                     const std::array<std::size_t, 4>& idx,
                                     const std::array<Point2, 4>& raw, double max_shift) {
  const std::size_t n = pts.size();
  Point2 center = Point2::Zero();
  for (const auto& c : raw) center += c / 4.0;

  std::array<Line, 4> lines;
  for (int s = 0; s < 4; ++s) {
    const std::size_t a = idx[s];
    const std::size_t b = idx[(s + 1) % 4];
    const std::size_t len = (b + n - a) % n;
    const std::size_t skip = static_cast<std::size_t>(std::floor(0.2 * static_cast<double>(len)));
    std::vector<Point2> side;
    for (std::size_t k = skip; k + skip <= len; ++k) {
      const auto& p = pts[(a + k) % n];
      side.emplace_back(p.x, p.y);
    }
    if (!fit_line(side, lines[s])) return raw;
    Point2 normal = lines[s].normal;
    if (normal.dot(lines[s].point - center) < 0.0) normal = -normal;
    lines[s].normal = normal;
    lines[s].point += normal * (0.5 * std::max(std::abs(normal.x()), std::abs(normal.y())));
  }
  std::array<Point2, 4> out;
  for (int c = 0; c < 4; ++c) {
    if (!intersect(lines[(c + 3) % 4], lines[c], out[c])) return raw;
    if ((out[c] - raw[c]).norm() > max_shift) return raw;
  }
  return out;
}

}  // namespace

std::vector<Contour> trace_contours(const BinaryImage& bin) {
  const int w = bin.width();
  const int h = bin.height();
  std::vector<int> labels(static_cast<std::size_t>(w) * h, 0);
  std::vector<Contour> out;
  int next_label = 0;
  const std::size_t max_steps = 4 * static_cast<std::size_t>(w) * h + 16;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!bin.is_black(x, y) || labels[static_cast<std::size_t>(y) * w + x] != 0) continue;
      flood_label(bin, labels, x, y, ++next_label);
      Contour c{moore_trace(bin, {x, y}, max_steps)};
      if (c.points.size() >= 4) out.push_back(std::move(c));
    }
  }
  return out;
}

double contour_perimeter(std::span<const PixelPoint> points) {
  double total = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto& a = points[i];
    const auto& b = points[(i + 1) % points.size()];
    total += std::hypot(b.x - a.x, b.y - a.y);
  }
  return total;
}

std::vector<std::size_t> approximate_closed_polygon(std::span<const PixelPoint> points,
                                                    double epsilon) {
  const std::size_t n = points.size();
  if (n < 3) {
    std::vector<std::size_t> all(n);
    for (std::size_t i = 0; i < n; ++i) all[i] = i;
    return all;
  }
  auto farthest_from = [&](std::size_t from) {
    std::size_t best = from;
    double best_d = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = std::hypot(points[i].x - points[from].x, points[i].y - points[from].y);
      if (d > best_d) {
        best_d = d;
        best = i;
      }
    }
    return best;
  };
  // Anchor on a diameter of the chain: both ends are extreme points.
  const std::size_t a = farthest_from(0);
  const std::size_t b = farthest_from(a);
  if (a == b) return {a};
  std::vector<std::size_t> keep{a, b};
  simplify_chain(points, a, b, epsilon, keep);
  simplify_chain(points, b, a, epsilon, keep);
  // Sort into chain order starting from the lowest index.
  std::sort(keep.begin(), keep.end());
  keep.erase(std::unique(keep.begin(), keep.end()), keep.end());
  // A side nearly parallel to a split chord can leave a vertex mid-side.
  while (keep.size() > 3) {
    double best = epsilon;
    std::size_t drop = keep.size();
    for (std::size_t i = 0; i < keep.size(); ++i) {
      const auto& prev = points[keep[(i + keep.size() - 1) % keep.size()]];
      const auto& next = points[keep[(i + 1) % keep.size()]];
      const double d = point_line_distance(points[keep[i]], prev, next);
      if (d <= best) {
        best = d;
        drop = i;
      }
    }
    if (drop == keep.size()) break;
    keep.erase(keep.begin() + static_cast<std::ptrdiff_t>(drop));
  }
  return keep;
}

double signed_area(std::span<const Point2> polygon) {
  double acc = 0.0;
  for (std::size_t i = 0; i < polygon.size(); ++i) {
    const auto& p = polygon[i];
    const auto& q = polygon[(i + 1) % polygon.size()];
    acc += p.x() * q.y() - q.x() * p.y();
  }
  return 0.5 * acc;
}

bool is_convex(std::span<const Point2> polygon) {
  const std::size_t n = polygon.size();
  if (n < 3) return false;
  int sign = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const Point2 e0 = polygon[(i + 1) % n] - polygon[i];
    const Point2 e1 = polygon[(i + 2) % n] - polygon[(i + 1) % n];
    const double cross = e0.x() * e1.y() - e0.y() * e1.x();
    if (cross == 0.0) return false;
    const int s = cross > 0.0 ? 1 : -1;
    if (sign == 0) sign = s;
    if (s != sign) return false;
  }
  return true;
}

std::vector<Quad> detect_quads(const std::vector<Contour>& contours, const QuadParams& params) {
  std::vector<Quad> out;
  for (const auto& contour : contours) {
    const auto& pts = contour.points;
    if (pts.size() < 4) continue;
    const double eps = params.epsilon_frac * contour_perimeter(pts);
    const auto verts = approximate_closed_polygon(pts, eps);
    if (verts.size() != 4) continue;

    const std::array<std::size_t, 4> idx{verts[0], verts[1], verts[2], verts[3]};
    std::array<Point2, 4> corners;
    for (int i = 0; i < 4; ++i) corners[i] = Point2(pts[idx[i]].x, pts[idx[i]].y);
    if (!is_convex(corners)) continue;
    if (params.refine_corners) corners = refine_corners(pts, idx, corners, std::max(3.0, eps));
    // Outer borders trace clockwise; normalize anyway.
    if (signed_area(corners) < 0.0) std::reverse(corners.begin(), corners.end());
    // Start at the corner nearest the image's top-left.
    const auto first = std::min_element(corners.begin(), corners.end(), [](const Point2& a, const Point2& b) {
      return a.x() + a.y() < b.x() + b.y();
    });
    std::rotate(corners.begin(), first, corners.end());

    if (!is_convex(corners) || signed_area(corners) <= params.min_area) continue;
    bool separated = true;
    for (int i = 0; i < 4 && separated; ++i) {
      for (int j = i + 1; j < 4; ++j) {
        if ((corners[i] - corners[j]).norm() < params.min_corner_separation) {
          separated = false;
          break;
        }
      }
    }
    if (!separated) continue;
    out.push_back(Quad{corners});
  }
  return out;
}

}  // namespace artrack
