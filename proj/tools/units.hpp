#pragma once

#include <optional>
#include <stdexcept>
#include <string>

namespace psr::cli {

struct UnitError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// A length either in metres or in pixels of a grid not yet known.
struct Length {
  double value = 0.0;
  bool pixels = false;

  double metres(double pitch) const { return pixels ? value * pitch : value; }
};

// "0.743mm", "52um", "1.5e-3m", "8px"; a bare number is rejected.
Length parse_length(const std::string& text, bool allow_pixels = false);
// "500ms", "0.5s"
double parse_time(const std::string& text);
// "100Hz"; a bare number is accepted as hertz.
double parse_frequency(const std::string& text);

struct Extent {
  double width = 0.0;
  double height = 0.0;
};

// "40.1x3.86mm": both sides share the trailing unit.
Extent parse_extent(const std::string& text);

}  // namespace psr::cli
