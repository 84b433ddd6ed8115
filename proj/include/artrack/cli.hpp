#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "artrack/imaging.hpp"
#include "artrack/pose.hpp"

namespace artrack {

// Exit codes shared by every subcommand.
enum ExitCode : int {
  kExitOk = 0,
  kExitInputError = 2,
  kExitRegistryError = 3,
  kExitLockContention = 4,
  kExitNoOverlay = 5,
};

// Runs the command line `args` (args[0] is the program name). Data goes to
// `out`, diagnostics to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Integer Bresenham from a to b inclusive; pixels outside the image are
// skipped.
void draw_line(GrayImage& img, PixelPoint a, PixelPoint b, std::uint8_t value);

// Rounds segment endpoints to the nearest pixel and draws each one. Segments
// with an endpoint beyond +-1e6 px are skipped; returns how many were drawn.
std::size_t draw_segments(GrayImage& img, const std::vector<Segment2>& segments,
                          std::uint8_t value = 255);

}  // namespace artrack
