#include "molext/csv.hpp"

#include "molext/errors.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <sstream>
#include <system_error>

namespace molext::csv {
namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(trim(field));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

} // namespace

std::string format_number(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::scientific, 16);
  return std::string(buf, res.ptr);
}

double parse_number(std::string_view text, std::string_view what) {
  const std::string t = trim(text);
  double v = 0.0;
  const char* first = t.data();
  const char* last = t.data() + t.size();
  if (!t.empty() && *first == '+') ++first;
  const auto res = std::from_chars(first, last, v);
  if (t.empty() || res.ec != std::errc() || res.ptr != last)
    throw ArgumentError(std::string(what) + ": '" + t + "' is not a number");
  return v;
}

void write_spectrum(std::ostream& os, const Spectrum& s, std::optional<double> theta_deg) {
  for (const auto& [k, v] : s.metadata) os << "# " << k << '=' << v << '\n';
  os << "detuning_mhz,intensity_cps";
  if (s.sigma) os << ",sigma_cps";
  if (theta_deg) os << ",theta_deg";
  os << '\n';
  for (std::size_t i = 0; i < s.size(); ++i) {
    os << format_number(s.detunings[i]) << ',' << format_number(s.values[i]);
    if (s.sigma) os << ',' << format_number((*s.sigma)[i]);
    if (theta_deg) os << ',' << format_number(*theta_deg);
    os << '\n';
  }
}

std::vector<AngleSpectrum> read_spectra(std::istream& is, const std::string& source) {
  std::map<std::string, std::string> meta;
  std::string line;
  std::size_t lineno = 0;
  std::vector<std::string> header;
  int col_det = -1, col_val = -1, col_sig = -1, col_theta = -1;
  std::vector<AngleSpectrum> groups;
  auto where = [&] { return source + ":" + std::to_string(lineno); };

  while (std::getline(is, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty()) continue;
    if (t[0] == '#') {
      const std::string body = trim(std::string_view(t).substr(1));
      const auto eq = body.find('=');
      if (eq != std::string::npos) meta[trim(body.substr(0, eq))] = trim(body.substr(eq + 1));
      continue;
    }
    if (header.empty()) {
      header = split(t);
      for (std::size_t i = 0; i < header.size(); ++i) {
        const auto& h = header[i];
        const int idx = static_cast<int>(i);
        if (h == "detuning_mhz") col_det = idx;
        else if (h == "intensity_cps") col_val = idx;
        else if (h == "sigma_cps") col_sig = idx;
        else if (h == "theta_deg") col_theta = idx;
        else throw ArgumentError(where() + ": unknown column '" + h + "'");
      }
      if (col_det < 0 || col_val < 0)
        throw ArgumentError(where() + ": header must contain detuning_mhz and intensity_cps");
      continue;
    }
    const auto fields = split(t);
    if (fields.size() != header.size())
      throw ArgumentError(where() + ": expected " + std::to_string(header.size()) + " fields, got " +
                          std::to_string(fields.size()));
    const double det = parse_number(fields[static_cast<std::size_t>(col_det)], where() + " detuning_mhz");
    const double val = parse_number(fields[static_cast<std::size_t>(col_val)], where() + " intensity_cps");
    std::optional<double> theta;
    if (col_theta >= 0) theta = parse_number(fields[static_cast<std::size_t>(col_theta)], where() + " theta_deg");
    AngleSpectrum* g = nullptr;
    for (auto& existing : groups)
      if (existing.theta_deg == theta) g = &existing;
    if (!g) {
      groups.push_back({theta, {}});
      g = &groups.back();
      if (col_sig >= 0) g->spectrum.sigma.emplace();
    }
    g->spectrum.detunings.push_back(det);
    g->spectrum.values.push_back(val);
    if (col_sig >= 0)
      g->spectrum.sigma->push_back(parse_number(fields[static_cast<std::size_t>(col_sig)], where() + " sigma_cps"));
  }
  if (header.empty()) throw ArgumentError(source + ": missing header line");
  if (groups.empty()) throw ArgumentError(source + ": no data rows");
  for (auto& g : groups) {
    g.spectrum.metadata = meta;
    if (!g.theta_deg)
      if (auto it = meta.find("theta_deg"); it != meta.end()) g.theta_deg = parse_number(it->second, source + " theta_deg");
    try {
      g.spectrum.validate();
    } catch (const ArgumentError& e) {
      throw ArgumentError(source + ": " + e.what());
    }
  }
  return groups;
}

Spectrum read_spectrum(std::istream& is, const std::string& source) {
  auto groups = read_spectra(is, source);
  if (groups.size() != 1) throw ArgumentError(source + ": file holds several analyzer angles");
  return std::move(groups.front().spectrum);
}

std::vector<AngleSpectrum> read_spectra_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ArgumentError("cannot open '" + path.string() + "'");
  return read_spectra(in, path.string());
}

Spectrum read_spectrum_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ArgumentError("cannot open '" + path.string() + "'");
  return read_spectrum(in, path.string());
}

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  namespace fs = std::filesystem;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write '" + tmp.string() + "'");
    out << content;
    out.flush();
    if (!out) throw std::runtime_error("write failed for '" + tmp.string() + "'");
  }
  fs::rename(tmp, path);
}

} // namespace molext::csv
