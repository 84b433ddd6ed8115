#pragma once

#include <array>
#include <bitset>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "artrack/homography.hpp"
#include "artrack/imaging.hpp"

namespace artrack {

// Square bit grid, row-major, 1 = black cell.
template <int N>
class BitGrid {
 public:
  static constexpr int kSide = N;

  bool get(int row, int col) const { return bits_[static_cast<std::size_t>(row * N + col)]; }
  void set(int row, int col, bool black = true) {
    bits_[static_cast<std::size_t>(row * N + col)] = black;
  }

  // Quarter turn clockwise on screen: cell (r, c) moves to (c, N-1-r).
  BitGrid rotated_cw(int quarter_turns = 1) const {
    BitGrid cur = *this;
    for (int k = 0; k < ((quarter_turns % 4) + 4) % 4; ++k) {
      BitGrid next;
      for (int r = 0; r < N; ++r) {
        for (int c = 0; c < N; ++c) next.set(r, c, cur.get(N - 1 - c, r));
      }
      cur = next;
    }
    return cur;
  }

  int count() const { return static_cast<int>(bits_.count()); }
  int hamming(const BitGrid& other) const { return static_cast<int>((bits_ ^ other.bits_).count()); }

  // Rows as "0"/"1" strings.
  std::vector<std::string> to_rows() const {
    std::vector<std::string> rows;
    for (int r = 0; r < N; ++r) {
      std::string s;
      for (int c = 0; c < N; ++c) s += get(r, c) ? '1' : '0';
      rows.push_back(std::move(s));
    }
    return rows;
  }

  friend bool operator==(const BitGrid&, const BitGrid&) = default;

 private:
  std::bitset<N * N> bits_;
};

inline constexpr int kPayloadSide = 6;
inline constexpr int kGridSide = kPayloadSide + 2;
inline constexpr int kPayloadBits = kPayloadSide * kPayloadSide;

using Payload = BitGrid<kPayloadSide>;

// The 8x8 grid read from a quad interior: black frame ring around a 6x6
// payload.
class PatternBits : public BitGrid<kGridSide> {
 public:
  PatternBits() = default;
  PatternBits(const BitGrid<kGridSide>& g) : BitGrid<kGridSide>(g) {}  // NOLINT

  // Frame plus payload as rendered by a marker.
  static PatternBits from_payload(const Payload& payload);

  bool frame_intact() const;
  Payload payload() const;
};

struct MarkerTemplate {
  int id = 0;
  std::string name;
  Payload payload;
  double side_m = 0.1;
};

// Immutable set of templates. Construction enforces unique ids, no
// rotationally symmetric payloads, and a minimum pairwise Hamming distance of
// kMinHamming bits across all rotations.
class MarkerDictionary {
 public:
  static constexpr int kMinHamming = 10;

  explicit MarkerDictionary(std::vector<MarkerTemplate> templates);

  const std::vector<MarkerTemplate>& templates() const { return templates_; }
  const MarkerTemplate* find(int id) const;
  std::size_t size() const { return templates_.size(); }

 private:
  std::vector<MarkerTemplate> templates_;
};

// Four templates bound to the site's buildings: Burnt Palace, Pyramid B,
// Pyramid C, Shrine (ids 1-4).
MarkerDictionary default_dictionary();

// markers.json: array of {"id", "name", "side_m", "payload": [6 strings]}.
MarkerDictionary parse_dictionary_json(std::string_view text);
MarkerDictionary load_dictionary_file(const std::string& path);
std::string dictionary_to_json(const MarkerDictionary& dict);

struct PatternMatch {
  int marker_id = 0;
  // Clockwise quarter turns taking the stored payload to the observed one.
  int rotation = 0;
  double confidence = 0.0;
};

inline constexpr double kDefaultMinConfidence = 0.80;

// Samples the 8x8 grid through the quad->square homography with a 3x3
// stencil per cell, thresholded at the midpoint of the darkest and brightest
// cell means.
PatternBits sample_pattern(const GrayImage& img, const Quad& quad);

std::optional<PatternMatch> match_pattern(const PatternBits& bits, const MarkerDictionary& dict,
                                          double min_confidence = kDefaultMinConfidence);

struct Detection {
  int marker_id = 0;
  // Corner 0 is the stored marker's top-left, then clockwise on screen.
  std::array<Point2, 4> corners;
  int rotation = 0;
  double confidence = 0.0;
};

struct DetectParams {
  std::variant<int, AutoThreshold> threshold = kDefaultThreshold;
  QuadParams quad;
  double min_confidence = kDefaultMinConfidence;
  // Re-fit each side to the grayscale edge after contour refinement.
  bool refine_edges = true;
};

std::vector<Detection> detect_markers(const GrayImage& img, const MarkerDictionary& dict,
                                      const DetectParams& params = {});

// Moves each quad side onto the half-intensity crossing of the grayscale edge.
// Returns the input unchanged if any side lacks contrast.
Quad refine_quad_edges(const GrayImage& img, const Quad& quad);

// Fits the quad's homography to every black/white cell boundary of `bits`,
// whose grid corners 0..3 map to quad corners 0..3. Returns the input
// unchanged when too few boundaries show contrast.
Quad refine_with_template(const GrayImage& img, const Quad& quad, const PatternBits& bits);

// Printable marker: 2*cell_px white margin, black frame ring, payload cells.
GrayImage generate_marker_image(const MarkerTemplate& t, int cell_px);

}  // namespace artrack
