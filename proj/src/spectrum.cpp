#include "molext/spectrum.hpp"

#include "molext/errors.hpp"

#include <cmath>
#include <string>

namespace molext {

void require_increasing(std::span<const double> grid, const char* what) {
  if (grid.empty())
    throw ArgumentError(std::string(what) + ": empty frequency grid");
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!std::isfinite(grid[i]))
      throw ArgumentError(std::string(what) + ": non-finite frequency at index " + std::to_string(i));
    if (i > 0 && !(grid[i] > grid[i - 1]))
      throw ArgumentError(std::string(what) + ": frequencies not strictly increasing at index " +
                          std::to_string(i));
  }
}

void Spectrum::validate(bool counts) const {
  require_increasing(detunings, "spectrum");
  if (values.size() != detunings.size())
    throw ArgumentError("spectrum: values and detunings differ in length");
  if (sigma && sigma->size() != detunings.size())
    throw ArgumentError("spectrum: sigma and detunings differ in length");
  if (counts) {
    for (double v : values)
      if (v < 0.0) throw ArgumentError("spectrum: negative count rate");
  }
}

std::vector<double> linear_grid(double start, double stop, std::size_t points) {
  if (points == 0) throw ArgumentError("linear_grid: zero points");
  if (points == 1) return {start};
  if (!(stop > start)) throw ArgumentError("linear_grid: stop must exceed start");
  std::vector<double> grid(points);
  const double step = (stop - start) / static_cast<double>(points - 1);
  for (std::size_t i = 0; i < points; ++i) grid[i] = start + step * static_cast<double>(i);
  grid.back() = stop;
  return grid;
}

} // namespace molext
