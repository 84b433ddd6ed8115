#include "artrack/imaging.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iterator>
#include <limits>

#include "artrack/errors.hpp"

namespace artrack {

GrayImage::GrayImage(int width, int height, std::uint8_t fill)
    : GrayImage(width, height,
                std::vector<std::uint8_t>(
                    static_cast<std::size_t>(std::max(width, 0)) *
                        static_cast<std::size_t>(std::max(height, 0)),
                    fill)) {}

GrayImage::GrayImage(int width, int height, std::vector<std::uint8_t> data)
    : width_(width), height_(height), data_(std::move(data)) {
  if (width < 1 || height < 1) {
    throw ParameterError("image dimensions must be at least 1x1, got " +
                         std::to_string(width) + "x" + std::to_string(height));
  }
  if (data_.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height)) {
    throw ParameterError("pixel count does not match image dimensions");
  }
}

double GrayImage::sample(double x, double y) const {
  x = std::clamp(x, 0.0, static_cast<double>(width_ - 1));
  y = std::clamp(y, 0.0, static_cast<double>(height_ - 1));
  const int x0 = static_cast<int>(std::floor(x));
  const int y0 = static_cast<int>(std::floor(y));
  const int x1 = std::min(x0 + 1, width_ - 1);
  const int y1 = std::min(y0 + 1, height_ - 1);
  const double fx = x - x0;
  const double fy = y - y0;
  const double top = (1.0 - fx) * at(x0, y0) + fx * at(x1, y0);
  const double bottom = (1.0 - fx) * at(x0, y1) + fx * at(x1, y1);
  return (1.0 - fy) * top + fy * bottom;
}

BinaryImage::BinaryImage(int width, int height, std::uint8_t fill)
    : width_(width),
      height_(height),
      data_(static_cast<std::size_t>(std::max(width, 0)) *
                static_cast<std::size_t>(std::max(height, 0)),
            fill == kBlack ? kBlack : kWhite) {
  if (width < 1 || height < 1) {
    throw ParameterError("image dimensions must be at least 1x1");
  }
}

GrayImage BinaryImage::to_gray() const {
  return GrayImage(width_, height_, data_);
}

// --- PGM ---------------------------------------------------------------------

namespace {

bool is_pnm_space(std::uint8_t c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
}

class HeaderReader {
 public:
  explicit HeaderReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      if (is_pnm_space(bytes_[pos_])) {
        ++pos_;
      } else if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n' && bytes_[pos_] != '\r') ++pos_;
      } else {
        break;
      }
    }
  }

  long read_uint(const char* field) {
    skip_space_and_comments();
    const std::size_t start = pos_;
    token_start_ = start;
    long value = 0;
    while (pos_ < bytes_.size() && bytes_[pos_] >= '0' && bytes_[pos_] <= '9') {
      value = value * 10 + (bytes_[pos_] - '0');
      if (value > std::numeric_limits<int>::max()) {
        throw FormatError(std::string("PGM ") + field + " too large at byte " +
                              std::to_string(start),
                          start);
      }
      ++pos_;
    }
    if (pos_ == start) {
      throw FormatError(std::string("PGM header: expected ") + field + " at byte " +
                            std::to_string(start),
                        start);
    }
    return value;
  }

  std::size_t pos() const { return pos_; }
  std::size_t token_start() const { return token_start_; }
  void advance(std::size_t n) { pos_ += n; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
  std::size_t token_start_ = 0;
};

}  // namespace

GrayImage load_pgm(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') {
    throw FormatError("not a binary PGM: magic number must be P5 at byte 0", 0);
  }
  HeaderReader reader(bytes);
  reader.advance(2);
  if (reader.pos() < bytes.size() && !is_pnm_space(bytes[reader.pos()]) &&
      bytes[reader.pos()] != '#') {
    throw FormatError("PGM header: expected whitespace after magic at byte 2", 2);
  }
  const long width = reader.read_uint("width");
  const long height = reader.read_uint("height");
  const long maxval = reader.read_uint("maxval");
  const std::size_t maxval_at = reader.token_start();
  if (width < 1 || height < 1) {
    throw FormatError("PGM header: zero image dimension before byte " +
                          std::to_string(maxval_at),
                      maxval_at);
  }
  if (maxval < 1 || maxval > 255) {
    throw FormatError("PGM header: maxval " + std::to_string(maxval) +
                          " unsupported (must be 1..255) at byte " + std::to_string(maxval_at),
                      maxval_at);
  }
  // Exactly one whitespace byte separates the header from the raster.
  if (reader.pos() >= bytes.size() || !is_pnm_space(bytes[reader.pos()])) {
    throw FormatError("PGM header: missing whitespace after maxval at byte " +
                          std::to_string(reader.pos()),
                      reader.pos());
  }
  const std::size_t data_at = reader.pos() + 1;
  const std::size_t count = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  if (bytes.size() < data_at + count) {
    throw FormatError("PGM raster truncated: expected " + std::to_string(count) +
                          " bytes, data ends at byte " + std::to_string(bytes.size()),
                      bytes.size());
  }
  std::vector<std::uint8_t> data(bytes.begin() + static_cast<std::ptrdiff_t>(data_at),
                                 bytes.begin() + static_cast<std::ptrdiff_t>(data_at + count));
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data[i] > maxval) {
      throw FormatError("PGM sample exceeds maxval at byte " + std::to_string(data_at + i),
                        data_at + i);
    }
  }
  return GrayImage(static_cast<int>(width), static_cast<int>(height), std::move(data));
}

GrayImage load_pgm_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open image file '" + path + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  try {
    return load_pgm(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.what(), e.offset());
  }
}

std::vector<std::uint8_t> encode_pgm(const GrayImage& img) {
  const std::string header = "P5\n" + std::to_string(img.width()) + " " +
                             std::to_string(img.height()) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), img.pixels().begin(), img.pixels().end());
  return out;
}

void save_pgm_file(const std::string& path, const GrayImage& img) {
  const auto bytes = encode_pgm(img);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write image file '" + path + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("short write to '" + path + "'");
}

// --- Binarization --------------------------------------------------------------

BinaryImage binarize(const GrayImage& img, int threshold) {
  if (threshold < 0 || threshold > 255) {
    throw ParameterError("threshold must be in [0,255], got " + std::to_string(threshold));
  }
  BinaryImage out(img.width(), img.height());
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      out.set(x, y, img.at(x, y) <= threshold);
    }
  }
  return out;
}

BinaryImage binarize(const GrayImage& img, AutoThreshold) {
  return binarize(img, otsu_threshold(img));
}

int otsu_threshold(const GrayImage& img) {
  std::array<double, 256> hist{};
  for (std::uint8_t v : img.pixels()) hist[v] += 1.0;
  const double total = static_cast<double>(img.pixels().size());
  double sum_all = 0.0;
  for (int v = 0; v < 256; ++v) sum_all += v * hist[v];

  std::array<double, 256> between{};
  double w0 = 0.0;
  double sum0 = 0.0;
  double best = -1.0;
  for (int t = 0; t < 256; ++t) {
    w0 += hist[t];
    sum0 += t * hist[t];
    const double w1 = total - w0;
    if (w0 == 0.0 || w1 == 0.0) {
      between[t] = 0.0;
    } else {
      const double mu0 = sum0 / w0;
      const double mu1 = (sum_all - sum0) / w1;
      between[t] = w0 * w1 * (mu0 - mu1) * (mu0 - mu1);
    }
    best = std::max(best, between[t]);
  }
  const double tol = best * 1e-12;
  int first = -1;
  int last = -1;
  for (int t = 0; t < 256; ++t) {
    if (between[t] >= best - tol) {
      if (first < 0) first = t;
      last = t;
    } else if (first >= 0) {
      break;
    }
  }
  return (first + last) / 2;
}

}  // namespace artrack
