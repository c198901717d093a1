#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace molext {

// Frequency scan with one intensity per point. Detunings in MHz, values in
// counts per second (or dimensionless for visibility spectra).
struct Spectrum {
  std::vector<double> detunings;
  std::vector<double> values;
  std::optional<std::vector<double>> sigma;
  std::map<std::string, std::string> metadata;

  std::size_t size() const { return detunings.size(); }
  bool empty() const { return detunings.empty(); }

  // Throws ArgumentError on length mismatch or non-increasing detunings.
  // With `counts` set, also rejects negative values.
  void validate(bool counts = false) const;
};

// Evenly spaced grid of `points` frequencies covering [start, stop].
std::vector<double> linear_grid(double start, double stop, std::size_t points);

// Throws ArgumentError unless `grid` is non-empty and strictly increasing.
void require_increasing(std::span<const double> grid, const char* what);

} // namespace molext
