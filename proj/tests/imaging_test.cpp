#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <queue>
#include <random>
#include <set>
#include <string>

#include "artrack/errors.hpp"
#include "artrack/imaging.hpp"

using namespace artrack;

namespace {

std::vector<std::uint8_t> bytes_of(const std::string& header, std::vector<std::uint8_t> raster) {
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), raster.begin(), raster.end());
  return out;
}

std::size_t format_offset(const std::vector<std::uint8_t>& bytes) {
  try {
    load_pgm(bytes);
  } catch (const FormatError& e) {
    return e.offset();
  }
  ADD_FAILURE() << "expected FormatError";
  return 0;
}

BinaryImage black_rect(int w, int h, int x0, int y0, int rw, int rh) {
  BinaryImage bin(w, h);
  for (int y = y0; y < y0 + rh; ++y) {
    for (int x = x0; x < x0 + rw; ++x) bin.set(x, y, true);
  }
  return bin;
}

// 4x4 supersampled coverage of a convex clockwise polygon.
GrayImage render_polygon(int w, int h, const std::array<Point2, 4>& poly) {
  GrayImage img(w, h, 255);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      int inside = 0;
      for (int sy = 0; sy < 4; ++sy) {
        for (int sx = 0; sx < 4; ++sx) {
          const Point2 p(x - 0.375 + 0.25 * sx, y - 0.375 + 0.25 * sy);
          bool in = true;
          for (int i = 0; i < 4 && in; ++i) {
            const Point2 a = poly[i];
            const Point2 b = poly[(i + 1) % 4];
            const Point2 e = b - a;
            const Point2 q = p - a;
            in = e.x() * q.y() - e.y() * q.x() >= 0.0;
          }
          inside += in;
        }
      }
      img.at(x, y) = static_cast<std::uint8_t>(std::lround(255.0 * (16 - inside) / 16.0));
    }
  }
  return img;
}

// Black pixels 8-connected to `seed`, by breadth-first flood fill.
std::set<std::pair<int, int>> flood(const BinaryImage& bin, int sx, int sy) {
  std::set<std::pair<int, int>> seen{{sx, sy}};
  std::queue<std::pair<int, int>> q;
  q.push({sx, sy});
  while (!q.empty()) {
    auto [x, y] = q.front();
    q.pop();
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        if (bin.black_at(x + dx, y + dy) && seen.insert({x + dx, y + dy}).second) {
          q.push({x + dx, y + dy});
        }
      }
    }
  }
  return seen;
}

bool has_white_4_neighbor(const BinaryImage& bin, int x, int y) {
  return !bin.black_at(x - 1, y) || !bin.black_at(x + 1, y) || !bin.black_at(x, y - 1) ||
         !bin.black_at(x, y + 1);
}

BinaryImage random_blobs(std::mt19937& rng, int w, int h) {
  BinaryImage bin(w, h);
  std::uniform_int_distribution<int> count(1, 6);
  std::uniform_int_distribution<int> px(0, w - 1);
  std::uniform_int_distribution<int> py(0, h - 1);
  std::uniform_int_distribution<int> size(1, 12);
  std::bernoulli_distribution speckle(0.05);
  const int n = count(rng);
  for (int i = 0; i < n; ++i) {
    const int x0 = px(rng);
    const int y0 = py(rng);
    const int rw = size(rng);
    const int rh = size(rng);
    for (int y = y0; y < std::min(h, y0 + rh); ++y) {
      for (int x = x0; x < std::min(w, x0 + rw); ++x) bin.set(x, y, true);
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (speckle(rng)) bin.set(x, y, !bin.is_black(x, y));
    }
  }
  return bin;
}

}  // namespace

TEST(Pgm, TwoByTwo) {
  const GrayImage img = load_pgm(bytes_of("P5 2 2 255\n", {0, 255, 128, 64}));
  ASSERT_EQ(img.width(), 2);
  ASSERT_EQ(img.height(), 2);
  EXPECT_EQ(img.at(0, 0), 0);
  EXPECT_EQ(img.at(1, 0), 255);
  EXPECT_EQ(img.at(0, 1), 128);
  EXPECT_EQ(img.at(1, 1), 64);
}

TEST(Pgm, SinglePixel) {
  const GrayImage img = load_pgm(bytes_of("P5 1 1 255\n", {7}));
  EXPECT_EQ(img.width(), 1);
  EXPECT_EQ(img.at(0, 0), 7);
}

TEST(Pgm, RejectsColorMagic) {
  EXPECT_THROW(load_pgm(bytes_of("P6 1 1 255\n", {1, 2, 3})), FormatError);
  EXPECT_EQ(format_offset(bytes_of("P6 1 1 255\n", {1, 2, 3})), 0u);
}

TEST(Pgm, CommentsAndWhitespace) {
  const GrayImage img = load_pgm(bytes_of("P5\n# made by hand\n3  1\n# max\n255\n", {9, 8, 7}));
  EXPECT_EQ(img.width(), 3);
  EXPECT_EQ(img.at(2, 0), 7);
}

TEST(Pgm, RasterMayStartWithWhitespaceByte) {
  // Exactly one whitespace byte ends the header; the next byte is pixel data.
  const GrayImage img = load_pgm(bytes_of("P5 2 1 255\n", {'\n', ' '}));
  EXPECT_EQ(img.at(0, 0), '\n');
  EXPECT_EQ(img.at(1, 0), ' ');
}

TEST(Pgm, ErrorsCarryByteOffset) {
  EXPECT_EQ(format_offset(bytes_of("P5 2 2 255\n", {1, 2, 3})), 11u + 3u);
  EXPECT_EQ(format_offset(bytes_of("P5 1 1 256\n", {1})), 7u);
  EXPECT_EQ(format_offset(bytes_of("P5 2 1 100\n", {5, 101})), 11u + 1u);
  EXPECT_THROW(load_pgm(bytes_of("P5 0 1 255\n", {})), FormatError);
  EXPECT_THROW(load_pgm(bytes_of("P5 2", {})), FormatError);
}

TEST(Pgm, SmallMaxvalKeepsSamples) {
  const GrayImage img = load_pgm(bytes_of("P5 2 1 1\n", {0, 1}));
  EXPECT_EQ(img.at(0, 0), 0);
  EXPECT_EQ(img.at(1, 0), 1);
}

TEST(Pgm, EncodeLoadRoundTrip) {
  std::mt19937 rng(7);
  std::uniform_int_distribution<int> dim(1, 40);
  std::uniform_int_distribution<int> val(0, 255);
  for (int trial = 0; trial < 50; ++trial) {
    GrayImage img(dim(rng), dim(rng));
    for (auto& p : img.pixels()) p = static_cast<std::uint8_t>(val(rng));
    EXPECT_EQ(load_pgm(encode_pgm(img)), img);
  }
}

TEST(GrayImage, RejectsEmptyDimensions) {
  EXPECT_THROW(GrayImage(0, 3), ParameterError);
  EXPECT_THROW(GrayImage(3, -1), ParameterError);
}

TEST(GrayImage, BilinearSample) {
  GrayImage img(2, 2, std::vector<std::uint8_t>{0, 100, 200, 40});
  EXPECT_DOUBLE_EQ(img.sample(0.5, 0.0), 50.0);
  EXPECT_DOUBLE_EQ(img.sample(0.5, 0.5), 85.0);
  EXPECT_DOUBLE_EQ(img.sample(-3.0, -3.0), 0.0);
  EXPECT_DOUBLE_EQ(img.sample(5.0, 5.0), 40.0);
}

TEST(Binarize, StrictlyAboveThresholdIsWhite) {
  GrayImage img(2, 2, std::vector<std::uint8_t>{100, 200, 128, 50});
  const BinaryImage bin = binarize(img, 128);
  EXPECT_EQ(bin.at(0, 0), 0);
  EXPECT_EQ(bin.at(1, 0), 255);
  EXPECT_EQ(bin.at(0, 1), 0);
  EXPECT_EQ(bin.at(1, 1), 0);
}

TEST(Binarize, Threshold255IsAllBlack) {
  GrayImage img(3, 3, 255);
  const BinaryImage bin = binarize(img, 255);
  for (auto p : bin.pixels()) EXPECT_EQ(p, BinaryImage::kBlack);
}

TEST(Binarize, OtsuSeparatesTwoLevels) {
  GrayImage img(20, 10);
  for (int y = 0; y < 10; ++y) {
    for (int x = 0; x < 20; ++x) img.at(x, y) = x < 10 ? 20 : 220;
  }
  const int t = otsu_threshold(img);
  EXPECT_GT(t, 20);
  EXPECT_LT(t, 220);
  const BinaryImage bin = binarize(img, kAutoThreshold);
  for (int y = 0; y < 10; ++y) {
    for (int x = 0; x < 20; ++x) EXPECT_EQ(bin.is_black(x, y), x < 10);
  }
}

TEST(Binarize, OtsuMatchesExhaustiveScan) {
  std::mt19937 rng(11);
  for (int trial = 0; trial < 40; ++trial) {
    GrayImage img(16, 16);
    std::normal_distribution<double> lo(60.0, 15.0);
    std::normal_distribution<double> hi(180.0, 25.0);
    std::bernoulli_distribution pick(0.4);
    for (auto& p : img.pixels()) {
      p = static_cast<std::uint8_t>(std::clamp(std::lround(pick(rng) ? lo(rng) : hi(rng)), 0L, 255L));
    }
    // Between-class variance for every t; class 0 is {v <= t}.
    std::array<double, 256> hist{};
    for (auto p : img.pixels()) hist[p] += 1.0;
    const double total = 256.0;
    std::array<double, 256> score{};
    for (int t = 0; t < 256; ++t) {
      double w0 = 0, s0 = 0, s1 = 0;
      for (int v = 0; v < 256; ++v) (v <= t ? (w0 += hist[v], s0 += v * hist[v]) : s1 += v * hist[v]);
      const double w1 = total - w0;
      score[t] = (w0 == 0 || w1 == 0) ? 0.0 : w0 * w1 * std::pow(s0 / w0 - s1 / w1, 2) / (total * total);
    }
    const double best = *std::max_element(score.begin(), score.end());
    const int t = otsu_threshold(img);
    EXPECT_NEAR(score[t], best, 1e-9 * best) << "trial " << trial;
  }
}

TEST(Binarize, MonotoneInThreshold) {
  std::mt19937 rng(3);
  std::uniform_int_distribution<int> val(0, 255);
  for (int trial = 0; trial < 20; ++trial) {
    GrayImage img(12, 9);
    for (auto& p : img.pixels()) p = static_cast<std::uint8_t>(val(rng));
    int prev_white = img.width() * img.height() + 1;
    for (int t = 0; t <= 255; t += 5) {
      const BinaryImage bin = binarize(img, t);
      int white = 0;
      for (auto p : bin.pixels()) {
        ASSERT_TRUE(p == BinaryImage::kBlack || p == BinaryImage::kWhite);
        white += p == BinaryImage::kWhite;
      }
      EXPECT_LE(white, prev_white);
      prev_white = white;
    }
  }
}

TEST(Contours, AllWhiteIsEmpty) { EXPECT_TRUE(trace_contours(BinaryImage(20, 20)).empty()); }

TEST(Contours, SquareBorderMatchesFloodFill) {
  const BinaryImage bin = black_rect(25, 25, 5, 5, 10, 10);
  const auto contours = trace_contours(bin);
  ASSERT_EQ(contours.size(), 1u);
  std::set<std::pair<int, int>> traced;
  for (const auto& p : contours[0].points) traced.insert({p.x, p.y});
  // 4 * 10 - 4 border pixels of a 10x10 square.
  EXPECT_EQ(traced.size(), 36u);
  EXPECT_EQ(contours[0].points.size(), 36u);

  const auto region = flood(bin, 5, 5);
  EXPECT_EQ(region.size(), 100u);
  std::set<std::pair<int, int>> border;
  for (auto [x, y] : region) {
    if (has_white_4_neighbor(bin, x, y)) border.insert({x, y});
  }
  EXPECT_EQ(traced, border);
}

TEST(Contours, DisjointSquaresInRasterOrder) {
  BinaryImage bin = black_rect(40, 40, 20, 2, 5, 5);
  for (int y = 10; y < 16; ++y) {
    for (int x = 3; x < 9; ++x) bin.set(x, y, true);
  }
  const auto contours = trace_contours(bin);
  ASSERT_EQ(contours.size(), 2u);
  EXPECT_EQ(contours[0].points[0], (PixelPoint{20, 2}));
  EXPECT_EQ(contours[1].points[0], (PixelPoint{3, 10}));
}

TEST(Contours, HolesIgnored) {
  BinaryImage bin = black_rect(30, 30, 5, 5, 15, 15);
  for (int y = 9; y < 16; ++y) {
    for (int x = 9; x < 16; ++x) bin.set(x, y, false);
  }
  const auto contours = trace_contours(bin);
  ASSERT_EQ(contours.size(), 1u);
  for (const auto& p : contours[0].points) {
    EXPECT_TRUE(p.x == 5 || p.y == 5 || p.x == 19 || p.y == 19);
  }
}

TEST(Contours, PropertiesOnRandomBlobs) {
  std::mt19937 rng(2024);
  for (int trial = 0; trial < 200; ++trial) {
    const BinaryImage bin = random_blobs(rng, 32, 24);
    for (const auto& c : trace_contours(bin)) {
      ASSERT_GE(c.points.size(), 4u);
      for (std::size_t i = 0; i < c.points.size(); ++i) {
        const auto& p = c.points[i];
        const auto& q = c.points[(i + 1) % c.points.size()];
        ASSERT_TRUE(bin.black_at(p.x, p.y));
        ASSERT_TRUE(has_white_4_neighbor(bin, p.x, p.y));
        ASSERT_LE(std::max(std::abs(p.x - q.x), std::abs(p.y - q.y)), 1) << "trial " << trial;
      }
      // Every traced point belongs to the region of the first one.
      const auto region = flood(bin, c.points[0].x, c.points[0].y);
      for (const auto& p : c.points) ASSERT_TRUE(region.count({p.x, p.y}));
    }
  }
}

TEST(Contours, Deterministic) {
  std::mt19937 rng(5);
  const BinaryImage bin = random_blobs(rng, 40, 30);
  const auto a = trace_contours(bin);
  const auto b = trace_contours(bin);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].points, b[i].points);
}

TEST(Quads, RenderedSquareCorners) {
  const std::array<Point2, 4> truth{Point2(20.3, 30.7), Point2(70.3, 30.7), Point2(70.3, 80.7),
                                    Point2(20.3, 80.7)};
  const GrayImage img = render_polygon(100, 110, truth);
  const auto quads = detect_quads(trace_contours(binarize(img, 128)));
  ASSERT_EQ(quads.size(), 1u);
  for (int i = 0; i < 4; ++i) {
    EXPECT_LT((quads[0].corners[i] - truth[i]).norm(), 1.5) << "corner " << i;
  }
}

TEST(Quads, RotatedSquareIsClockwiseAndConvex) {
  std::mt19937 rng(9);
  std::uniform_real_distribution<double> angle(0.0, std::numbers::pi / 2);
  std::uniform_real_distribution<double> size(15.0, 40.0);
  for (int trial = 0; trial < 30; ++trial) {
    const double a = angle(rng);
    const double s = size(rng);
    const Point2 c(60.0, 60.0);
    std::array<Point2, 4> truth;
    for (int i = 0; i < 4; ++i) {
      const double t = a + i * std::numbers::pi / 2;
      truth[i] = c + s * Point2(std::cos(t), std::sin(t));
    }
    const GrayImage img = render_polygon(120, 120, truth);
    const auto quads = detect_quads(trace_contours(binarize(img, 128)));
    ASSERT_EQ(quads.size(), 1u) << "trial " << trial;
    EXPECT_GT(signed_area(quads[0].corners), 0.0);
    EXPECT_TRUE(is_convex(quads[0].corners));
    for (const auto& corner : quads[0].corners) {
      double best = 1e9;
      for (const auto& t : truth) best = std::min(best, (corner - t).norm());
      EXPECT_LT(best, 1.5);
    }
  }
}

TEST(Quads, CircleDropped) {
  BinaryImage bin(80, 80);
  for (int y = 0; y < 80; ++y) {
    for (int x = 0; x < 80; ++x) {
      if (std::hypot(x - 40, y - 40) <= 30.0) bin.set(x, y, true);
    }
  }
  const auto contours = trace_contours(bin);
  ASSERT_EQ(contours.size(), 1u);
  const double per = contour_perimeter(contours[0].points);
  EXPECT_GT(approximate_closed_polygon(contours[0].points, 0.02 * per).size(), 4u);
  EXPECT_TRUE(detect_quads(contours).empty());
}

TEST(Quads, TinySquareDropped) {
  const auto contours = trace_contours(black_rect(20, 20, 5, 5, 3, 3));
  QuadParams params;
  params.min_area = 100;
  EXPECT_TRUE(detect_quads(contours, params).empty());
}

TEST(Quads, StartsAtTopLeftMostCorner) {
  const std::array<Point2, 4> truth{Point2(30.2, 20.4), Point2(80.1, 35.3), Point2(65.3, 85.2),
                                    Point2(15.4, 70.1)};
  const auto quads = detect_quads(trace_contours(binarize(render_polygon(100, 100, truth), 128)));
  ASSERT_EQ(quads.size(), 1u);
  for (int i = 0; i < 4; ++i) EXPECT_LT((quads[0].corners[i] - truth[i]).norm(), 1.5);
}

TEST(Geometry, SignedAreaOrientation) {
  const std::array<Point2, 4> cw{Point2(0, 0), Point2(2, 0), Point2(2, 2), Point2(0, 2)};
  EXPECT_DOUBLE_EQ(signed_area(cw), 4.0);
  std::array<Point2, 4> ccw = cw;
  std::reverse(ccw.begin(), ccw.end());
  EXPECT_DOUBLE_EQ(signed_area(ccw), -4.0);
  const std::array<Point2, 4> dart{Point2(0, 0), Point2(4, 0), Point2(1, 1), Point2(0, 4)};
  EXPECT_FALSE(is_convex(dart));
}
