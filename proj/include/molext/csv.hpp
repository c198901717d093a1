#pragma once

// Spectrum interchange format:
//
//   # key=value            (metadata, any number of lines)
//   detuning_mhz,intensity_cps[,sigma_cps][,theta_deg]
//   -3.5e+02,2.5e+05,...
//
// Numbers are written in scientific notation with 17 significant digits so
// that a write/read cycle is exact.

#include "molext/spectrum.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace molext::csv {

std::string format_number(double v);

// Parses a full-string double; throws ArgumentError naming `what` otherwise.
double parse_number(std::string_view text, std::string_view what);

void write_spectrum(std::ostream& os, const Spectrum& s, std::optional<double> theta_deg = std::nullopt);

struct AngleSpectrum {
  std::optional<double> theta_deg;
  Spectrum spectrum;
};

// Reads every row; rows are grouped by theta_deg when that column exists
// (in order of first appearance), otherwise one group is returned. A
// `theta_deg` metadata entry applies to files without the column.
std::vector<AngleSpectrum> read_spectra(std::istream& is, const std::string& source = "<stream>");

// Single spectrum; throws ArgumentError if the input holds several angles.
Spectrum read_spectrum(std::istream& is, const std::string& source = "<stream>");
Spectrum read_spectrum_file(const std::filesystem::path& path);
std::vector<AngleSpectrum> read_spectra_file(const std::filesystem::path& path);

// Writes via a temporary file in the same directory and renames it into place.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

} // namespace molext::csv
