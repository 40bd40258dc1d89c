#include "units.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <utility>

namespace psr::cli {

namespace {

// Splits a leading number from its unit suffix.
std::pair<double, std::string> split(const std::string& text) {
  std::size_t begin = 0, end = text.size();
  while (begin < end && std::isspace(static_cast<unsigned char>(text[begin]))) ++begin;
  while (end > begin && std::isspace(static_cast<unsigned char>(text[end - 1]))) --end;
  double value = 0.0;
  const char* first = text.data() + begin;
  const char* last = text.data() + end;
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr == first) throw UnitError("'" + text + "' does not start with a number");
  if (!std::isfinite(value)) throw UnitError("'" + text + "' is not finite");
  std::string unit(ptr, last);
  while (!unit.empty() && std::isspace(static_cast<unsigned char>(unit.front()))) unit.erase(unit.begin());
  return {value, unit};
}

}  // namespace

Length parse_length(const std::string& text, bool allow_pixels) {
  auto [v, unit] = split(text);
  if (unit == "m") return {v, false};
  if (unit == "mm") return {v * 1e-3, false};
  if (unit == "um" || unit == "µm") return {v * 1e-6, false};
  if (unit == "px") {
    if (!allow_pixels) throw UnitError("'" + text + "': pixel lengths are not allowed here");
    return {v, true};
  }
  if (unit.empty()) throw UnitError("'" + text + "' needs a length unit (mm, um, m)");
  throw UnitError("'" + text + "': unknown length unit '" + unit + "'");
}

double parse_time(const std::string& text) {
  auto [v, unit] = split(text);
  if (unit == "s") return v;
  if (unit == "ms") return v * 1e-3;
  if (unit.empty()) throw UnitError("'" + text + "' needs a time unit (ms, s)");
  throw UnitError("'" + text + "': unknown time unit '" + unit + "'");
}

double parse_frequency(const std::string& text) {
  auto [v, unit] = split(text);
  if (unit.empty() || unit == "Hz") return v;
  if (unit == "mHz") return v * 1e-3;
  throw UnitError("'" + text + "': unknown frequency unit '" + unit + "'");
}

Extent parse_extent(const std::string& text) {
  const auto x = text.find_first_of("xX");
  if (x == std::string::npos) throw UnitError("'" + text + "' is not of the form WIDTHxHEIGHT<unit>");
  std::string width = text.substr(0, x);
  const std::string height = text.substr(x + 1);
  const Length h = parse_length(height);
  // The unit may be given once at the end.
  const auto [wv, wunit] = split(width);
  if (wunit.empty()) width += height.substr(height.find_first_not_of("0123456789.eE+- "));
  (void)wv;
  const Length w = parse_length(width);
  if (!(w.value > 0.0) || !(h.value > 0.0)) throw UnitError("'" + text + "': extent must be positive");
  return {w.value, h.value};
}

}  // namespace psr::cli
