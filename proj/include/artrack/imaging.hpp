#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace artrack {

// Row-major 8-bit grayscale raster. Pixel (x, y) has its center at integer
// coordinates (x, y); x grows right, y grows down.
class GrayImage {
 public:
  GrayImage() = default;
  GrayImage(int width, int height, std::uint8_t fill = 0);
  GrayImage(int width, int height, std::vector<std::uint8_t> data);

  int width() const { return width_; }
  int height() const { return height_; }
  bool empty() const { return data_.empty(); }

  std::uint8_t at(int x, int y) const { return data_[index(x, y)]; }
  std::uint8_t& at(int x, int y) { return data_[index(x, y)]; }
  bool contains(int x, int y) const {
    return x >= 0 && y >= 0 && x < width_ && y < height_;
  }

  std::span<const std::uint8_t> pixels() const { return data_; }
  std::span<std::uint8_t> pixels() { return data_; }

  // Bilinear interpolation with edge clamping.
  double sample(double x, double y) const;

  friend bool operator==(const GrayImage&, const GrayImage&) = default;

 private:
  std::size_t index(int x, int y) const {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(x);
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> data_;
};

// Thresholded raster; every pixel is kBlack or kWhite.
class BinaryImage {
 public:
  static constexpr std::uint8_t kBlack = 0;
  static constexpr std::uint8_t kWhite = 255;

  BinaryImage() = default;
  BinaryImage(int width, int height, std::uint8_t fill = kWhite);

  int width() const { return width_; }
  int height() const { return height_; }

  std::uint8_t at(int x, int y) const { return data_[index(x, y)]; }
  void set(int x, int y, bool black) { data_[index(x, y)] = black ? kBlack : kWhite; }
  bool is_black(int x, int y) const { return data_[index(x, y)] == kBlack; }
  // Out-of-bounds pixels read as white.
  bool black_at(int x, int y) const {
    return x >= 0 && y >= 0 && x < width_ && y < height_ && is_black(x, y);
  }

  std::span<const std::uint8_t> pixels() const { return data_; }
  GrayImage to_gray() const;

 private:
  std::size_t index(int x, int y) const {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(x);
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> data_;
};

// --- PGM I/O ---------------------------------------------------------------

// Parses a binary (P5) PGM with maxval <= 255. Throws FormatError carrying the
// byte offset of the first offending byte.
GrayImage load_pgm(std::span<const std::uint8_t> bytes);
GrayImage load_pgm_file(const std::string& path);

std::vector<std::uint8_t> encode_pgm(const GrayImage& img);
void save_pgm_file(const std::string& path, const GrayImage& img);

// --- Binarization ----------------------------------------------------------

struct AutoThreshold {};
inline constexpr AutoThreshold kAutoThreshold{};
inline constexpr int kDefaultThreshold = 128;

// Pixels strictly above `threshold` become white, the rest black.
BinaryImage binarize(const GrayImage& img, int threshold);
BinaryImage binarize(const GrayImage& img, AutoThreshold);

// Otsu's threshold: maximizes between-class variance where class 0 is
// {v <= t}. When several thresholds reach the maximum (empty histogram bins
// between populations) the middle of that plateau is returned.
int otsu_threshold(const GrayImage& img);

// --- Contours and quads ----------------------------------------------------

struct PixelPoint {
  int x = 0;
  int y = 0;
  friend bool operator==(const PixelPoint&, const PixelPoint&) = default;
};

// Outer border of one black 8-connected region, in tracing order.
struct Contour {
  std::vector<PixelPoint> points;
};

// Outer borders of all black regions whose border has at least 4 pixels,
// ordered by the raster position of each region's first pixel.
std::vector<Contour> trace_contours(const BinaryImage& bin);

using Point2 = Eigen::Vector2d;

// Four sub-pixel corners, clockwise on screen (positive shoelace area with
// y down).
struct Quad {
  std::array<Point2, 4> corners;
};

struct QuadParams {
  double min_area = 100.0;
  double epsilon_frac = 0.02;
  double min_corner_separation = 4.0;
  bool refine_corners = true;
};

// Corners run clockwise from the one with the smallest x + y.
std::vector<Quad> detect_quads(const std::vector<Contour>& contours,
                               const QuadParams& params = {});

// Positive when the polygon runs clockwise on screen.
double signed_area(std::span<const Point2> polygon);
bool is_convex(std::span<const Point2> polygon);

// Douglas-Peucker simplification of a closed pixel chain; returns indices
// into `points` of the retained vertices in chain order.
std::vector<std::size_t> approximate_closed_polygon(std::span<const PixelPoint> points,
                                                    double epsilon);

double contour_perimeter(std::span<const PixelPoint> points);

}  // namespace artrack
