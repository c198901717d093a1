#include "molext/cli.hpp"

#include "molext/config.hpp"
#include "molext/csv.hpp"
#include "molext/errors.hpp"
#include "molext/fitting.hpp"
#include "molext/lineshape.hpp"
#include "molext/polarization.hpp"
#include "molext/synth.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>

namespace molext::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr double kDeg = kPi / 180.0;

struct Options {
  std::string command;
  std::string config_path;
  std::string config_text;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  bool saturation = false;
  bool joint = false;
  std::vector<std::string> inputs;
  std::vector<double> thetas_deg;
  std::string fluorescence;
  std::optional<double> gamma, alpha, gamma0, lambda_nm, tau_ns, c_amp, psi, i_e;
};

json options_to_json(const Options& o) {
  json j;
  j["command"] = o.command;
  j["config_path"] = o.config_path;
  j["config_text"] = o.config_text;
  j["out_dir"] = o.out_dir;
  j["seed"] = o.seed ? json(*o.seed) : json(nullptr);
  j["saturation"] = o.saturation;
  j["joint"] = o.joint;
  j["inputs"] = o.inputs;
  j["thetas_deg"] = o.thetas_deg;
  j["fluorescence"] = o.fluorescence;
  auto opt = [&](const char* key, const std::optional<double>& v) { j[key] = v ? json(*v) : json(nullptr); };
  opt("gamma", o.gamma);
  opt("alpha", o.alpha);
  opt("gamma0", o.gamma0);
  opt("lambda_nm", o.lambda_nm);
  opt("tau_ns", o.tau_ns);
  opt("c_amp", o.c_amp);
  opt("psi", o.psi);
  opt("i_e", o.i_e);
  return j;
}

Options options_from_json(const json& j) {
  Options o;
  o.command = j.at("command").get<std::string>();
  o.config_path = j.value("config_path", "");
  o.config_text = j.value("config_text", "");
  o.out_dir = j.value("out_dir", "");
  if (j.contains("seed") && !j["seed"].is_null()) o.seed = j["seed"].get<std::uint64_t>();
  o.saturation = j.value("saturation", false);
  o.joint = j.value("joint", false);
  o.inputs = j.value("inputs", std::vector<std::string>{});
  o.thetas_deg = j.value("thetas_deg", std::vector<double>{});
  o.fluorescence = j.value("fluorescence", "");
  auto opt = [&](const char* key, std::optional<double>& v) {
    if (j.contains(key) && !j[key].is_null()) v = j[key].get<double>();
  };
  opt("gamma", o.gamma);
  opt("alpha", o.alpha);
  opt("gamma0", o.gamma0);
  opt("lambda_nm", o.lambda_nm);
  opt("tau_ns", o.tau_ns);
  opt("c_amp", o.c_amp);
  opt("psi", o.psi);
  opt("i_e", o.i_e);
  return o;
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

fs::path resolve_out_dir(const Options& o) {
  if (!o.out_dir.empty()) return o.out_dir;
  if (const char* env = std::getenv(kOutputDirEnv); env && *env) return env;
  return "molext_out";
}

Config load_config(const Options& o) {
  if (o.config_text.empty()) return Config{};
  return Config::parse(o.config_text, o.config_path.empty() ? "<config>" : o.config_path);
}

const std::vector<std::string> kEmitterKeys{"nu21", "gamma", "gamma0", "alpha", "omega", "k_ratio"};
const std::vector<std::string> kCouplingKeys{"c_amp", "psi", "psi_deg", "i_e"};
const std::vector<std::string> kGridKeys{"start", "stop", "points"};
const std::vector<std::string> kAcqKeys{"dwell", "averages", "laser_rms", "seed"};
const std::vector<std::string> kFluorKeys{"peak", "background"};
const std::vector<std::string> kPolKeys{"tip_axis_deg",        "tip_ellipticity_deg", "tip_extinction_ratio",
                                        "mol_axis_deg",        "mol_ellipticity_deg", "mol_extinction_ratio",
                                        "mol_handedness",      "mol_phase_deg",       "theta_ref_deg",
                                        "angles",              "theta_start_deg",     "theta_stop_deg"};
const std::vector<std::string> kReportKeys{"lambda_nm", "tau_ns"};

void check_sections(const Config& cfg) {
  static const std::map<std::string, const std::vector<std::string>*> known{
      {"emitter", &kEmitterKeys},       {"coupling", &kCouplingKeys}, {"grid", &kGridKeys},
      {"acquisition", &kAcqKeys},       {"fluorescence", &kFluorKeys}, {"polarization", &kPolKeys},
      {"report", &kReportKeys}};
  for (const auto& [name, sec] : cfg.sections()) {
    const auto it = known.find(name);
    if (it == known.end()) {
      const int line = sec.empty() ? 0 : sec.begin()->second.line;
      throw ConfigError(name, line, "unknown section");
    }
    cfg.require_known(name, *it->second);
  }
}

template <class F>
auto with_field(const std::string& field, F&& f) {
  try {
    return f();
  } catch (const DomainError& e) {
    throw ConfigError(field, 0, e.what());
  }
}

EmitterParams emitter_from(const Config& cfg, const Options& o) {
  EmitterParams p;
  if (o.gamma)
    p.gamma = *o.gamma;
  else
    p.gamma = cfg.number("emitter", "gamma");
  p.nu21 = cfg.number_or("emitter", "nu21", 0.0);
  p.alpha = o.alpha ? *o.alpha : cfg.number_or("emitter", "alpha", 0.25);
  p.omega = cfg.number_or("emitter", "omega", 0.0);
  p.k_ratio = cfg.number_or("emitter", "k_ratio", 1.0);
  if (o.gamma0)
    p.gamma0 = *o.gamma0;
  else if (auto g0 = cfg.find_number("emitter", "gamma0"))
    p.gamma0 = *g0;
  else
    p = EmitterParams::with_unknown_gamma0(p);
  with_field("emitter", [&] {
    p.validate();
    return 0;
  });
  return p;
}

ModalCoupling coupling_from(const Config& cfg) {
  ModalCoupling m;
  m.c_amp = cfg.number("coupling", "c_amp");
  m.i_e = cfg.number("coupling", "i_e");
  if (cfg.has("coupling", "psi") && cfg.has("coupling", "psi_deg"))
    throw ConfigError("coupling.psi", 0, "give either psi or psi_deg, not both");
  if (auto deg = cfg.find_number("coupling", "psi_deg"))
    m.psi = *deg * kDeg;
  else
    m.psi = cfg.number("coupling", "psi");
  m.psi = canonical_phase(m.psi);
  with_field("coupling", [&] {
    m.validate();
    return 0;
  });
  return m;
}

std::vector<double> grid_from(const Config& cfg, const EmitterParams& p) {
  const double start = cfg.number_or("grid", "start", p.nu21 - 10.0 * p.gamma);
  const double stop = cfg.number_or("grid", "stop", p.nu21 + 10.0 * p.gamma);
  const double points = cfg.number_or("grid", "points", 201.0);
  if (!(points >= 1.0) || points != std::floor(points))
    throw ConfigError("grid.points", 0, "must be a positive integer");
  if (points > 1.0 && !(stop > start)) throw ConfigError("grid.stop", 0, "must exceed grid.start");
  return linear_grid(start, stop, static_cast<std::size_t>(points));
}

AcquisitionConfig acquisition_from(const Config& cfg, const Options& o) {
  AcquisitionConfig a;
  a.dwell = cfg.number_or("acquisition", "dwell", a.dwell);
  const double avg = cfg.number_or("acquisition", "averages", a.averages);
  if (!(avg >= 1.0) || avg != std::floor(avg)) throw ConfigError("acquisition.averages", 0, "must be an integer >= 1");
  a.averages = static_cast<int>(avg);
  a.laser_rms = cfg.number_or("acquisition", "laser_rms", a.laser_rms);
  const double seed = cfg.number_or("acquisition", "seed", 1.0);
  if (seed < 0.0 || seed != std::floor(seed)) throw ConfigError("acquisition.seed", 0, "must be a non-negative integer");
  a.seed = o.seed ? *o.seed : static_cast<std::uint64_t>(seed);
  with_field("acquisition", [&] {
    a.validate();
    return 0;
  });
  return a;
}

double ellipticity_from(const Config& cfg, const std::string& prefix, double fallback_deg) {
  const bool has_e = cfg.has("polarization", prefix + "_ellipticity_deg");
  const bool has_r = cfg.has("polarization", prefix + "_extinction_ratio");
  if (has_e && has_r)
    throw ConfigError("polarization." + prefix + "_ellipticity_deg", 0,
                      "give either ellipticity or extinction ratio, not both");
  if (has_r) {
    const double r = cfg.number("polarization", prefix + "_extinction_ratio");
    if (!(r >= 1.0)) throw ConfigError("polarization." + prefix + "_extinction_ratio", 0, "must be >= 1");
    return ellipticity_for_extinction_ratio(r);
  }
  const double deg = cfg.number_or("polarization", prefix + "_ellipticity_deg", fallback_deg);
  if (!(std::abs(deg) <= 45.0))
    throw ConfigError("polarization." + prefix + "_ellipticity_deg", 0, "must lie in [-45, 45] degrees");
  return deg * kDeg;
}

struct JonesPair {
  JonesField tip;
  JonesField mol;
  std::optional<double> theta_ref;
};

JonesPair jones_from(const Config& cfg) {
  JonesPair j;
  const double tip_axis = cfg.number_or("polarization", "tip_axis_deg", 0.0) * kDeg;
  const double tip_eps = ellipticity_from(cfg, "tip", 0.0);
  const double mol_axis = cfg.number_or("polarization", "mol_axis_deg", 20.0) * kDeg;
  double mol_eps = ellipticity_from(cfg, "mol", 0.0);
  const double hand = cfg.number_or("polarization", "mol_handedness", 1.0);
  if (hand != 1.0 && hand != -1.0) throw ConfigError("polarization.mol_handedness", 0, "must be +1 or -1");
  mol_eps *= hand;
  const double mol_phase = cfg.number_or("polarization", "mol_phase_deg", 0.0) * kDeg;
  j.tip = JonesField::from_ellipse(tip_axis, tip_eps);
  j.mol = JonesField::from_ellipse(mol_axis, mol_eps, 1.0, mol_phase);
  if (auto ref = cfg.find_number("polarization", "theta_ref_deg")) j.theta_ref = *ref * kDeg;
  return j;
}

std::string spectrum_text(const Spectrum& s, std::optional<double> theta_deg = std::nullopt) {
  std::ostringstream os;
  csv::write_spectrum(os, s, theta_deg);
  return os.str();
}

void write_manifest(const fs::path& dir, const Options& o, const json& resolved, const std::vector<std::string>& outputs) {
  json m;
  m["tool"] = "molext";
  m["version"] = kVersion;
  m["command"] = o.command;
  m["timestamp"] = utc_timestamp();
  m["seed"] = o.seed ? json(*o.seed) : json(nullptr);
  m["options"] = options_to_json(o);
  m["resolved"] = resolved;
  m["inputs"] = o.inputs;
  m["outputs"] = outputs;
  csv::write_file_atomic(dir / "manifest.json", m.dump(2) + "\n");
}

json emitter_json(const EmitterParams& p) {
  return {{"nu21", p.nu21},     {"gamma", p.gamma}, {"gamma0", p.gamma0},          {"alpha", p.alpha},
          {"omega", p.omega},   {"k_ratio", p.k_ratio}, {"gamma0_assumed", p.gamma0_assumed}};
}

json coupling_json(const ModalCoupling& m) { return {{"c_amp", m.c_amp}, {"psi", m.psi}, {"i_e", m.i_e}}; }

json fit_json(const FitResult& r) {
  json j;
  j["model"] = std::string(fit_model_name(r.model));
  j["converged"] = r.converged;
  j["status"] = r.status;
  j["iterations"] = r.iterations;
  j["residual_rms"] = r.residual_rms;
  j["reduced_chi2"] = r.reduced_chi2;
  j["covariance_singular"] = r.covariance_singular;
  json params = json::array();
  for (const auto& p : r.params)
    params.push_back({{"name", p.name}, {"unit", p.unit}, {"value", p.value}, {"sigma", p.sigma}, {"free", p.free}});
  j["params"] = params;
  json cov = json::array();
  for (Eigen::Index i = 0; i < r.covariance.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index k = 0; k < r.covariance.cols(); ++k) row.push_back(r.covariance(i, k));
    cov.push_back(row);
  }
  j["covariance"] = cov;
  j["covariance_order"] = r.free_names();
  j["warnings"] = r.warnings;
  return j;
}

void print_fit(std::ostream& out, const std::string& title, const FitResult& r) {
  out << title << " (" << fit_model_name(r.model) << ")\n";
  out << "  " << std::left << std::setw(22) << "parameter" << std::setw(26) << "value" << std::setw(26) << "sigma"
      << "unit\n";
  for (const auto& p : r.params) {
    out << "  " << std::setw(22) << p.name << std::setw(26) << csv::format_number(p.value) << std::setw(26)
        << (p.free ? csv::format_number(p.sigma) : std::string("fixed")) << p.unit << '\n';
  }
  out << std::right;
  out << "  residual_rms " << csv::format_number(r.residual_rms) << " cps, reduced chi2 "
      << csv::format_number(r.reduced_chi2) << ", iterations " << r.iterations << ", converged "
      << (r.converged ? "yes" : "no") << " (" << r.status << ")\n";
  for (const auto& w : r.warnings) out << "  warning: " << w << '\n';
}

std::uint64_t derived_seed(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 step keeps derived streams decorrelated
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

// ---------------------------------------------------------------- simulate

int cmd_simulate(const Options& o, std::ostream& out) {
  if (o.config_text.empty()) throw ConfigError("", 0, "simulate needs --config");
  const Config cfg = load_config(o);
  check_sections(cfg);
  const EmitterParams p = emitter_from(cfg, o);
  const ModalCoupling m = coupling_from(cfg);
  const auto grid = grid_from(cfg, p);
  const AcquisitionConfig acq = acquisition_from(cfg, o);
  const auto form = o.saturation ? LineshapeForm::Saturation : LineshapeForm::WeakField;

  Spectrum model = detected_spectrum(p, m, grid, form);
  model.metadata["channel"] = "transmission";
  model.metadata["gamma_mhz"] = csv::format_number(p.gamma);
  model.metadata["alpha"] = csv::format_number(p.alpha);
  model.metadata["gamma0_mhz"] = csv::format_number(p.gamma0);
  AcquisitionConfig acq_t = acq;
  acq_t.seed = derived_seed(acq.seed, 0);
  Spectrum noisy = simulate_counts(model, acq_t);

  const fs::path dir = resolve_out_dir(o);
  std::vector<std::string> outputs{"transmission_model.csv", "transmission.csv"};
  csv::write_file_atomic(dir / "transmission_model.csv", spectrum_text(model));
  csv::write_file_atomic(dir / "transmission.csv", spectrum_text(noisy));

  json resolved{{"emitter", emitter_json(p)},
                {"coupling", coupling_json(m)},
                {"grid", {{"start", grid.front()}, {"stop", grid.back()}, {"points", grid.size()}}},
                {"acquisition",
                 {{"dwell", acq.dwell}, {"averages", acq.averages}, {"laser_rms", acq.laser_rms}, {"seed", acq.seed}}},
                {"lineshape", o.saturation ? "saturation" : "weak_field"}};

  if (cfg.has_section("fluorescence")) {
    const double peak = cfg.number_or("fluorescence", "peak", 4000.0);
    const double bg = cfg.number_or("fluorescence", "background", 0.0);
    if (!(peak >= 0.0)) throw ConfigError("fluorescence.peak", 0, "must be >= 0");
    if (!(bg >= 0.0)) throw ConfigError("fluorescence.background", 0, "must be >= 0");
    const double amp = peak * p.gamma * p.gamma / 4.0;
    Spectrum fm = fluorescence_spectrum(p, amp, grid, bg, form);
    fm.metadata["channel"] = "fluorescence";
    AcquisitionConfig acq_f = acq;
    acq_f.seed = derived_seed(acq.seed, 1);
    Spectrum fn = simulate_counts(fm, acq_f);
    csv::write_file_atomic(dir / "fluorescence_model.csv", spectrum_text(fm));
    csv::write_file_atomic(dir / "fluorescence.csv", spectrum_text(fn));
    outputs.push_back("fluorescence_model.csv");
    outputs.push_back("fluorescence.csv");
    resolved["fluorescence"] = {{"peak", peak}, {"background", bg}, {"amplitude", amp}};
  }

  Options rec = o;
  rec.out_dir = dir.string();
  if (!rec.seed) rec.seed = acq.seed;
  write_manifest(dir, rec, resolved, outputs);

  out << "simulate: wrote " << outputs.size() << " spectra to " << dir.string() << '\n';
  out << "  resonance visibility " << csv::format_number(resonance_visibility(p, m)) << '\n';
  out << "  predicted SNR        " << csv::format_number(snr_estimate(p, m, acq)) << '\n';
  if (p.gamma0_assumed) out << "  warning: gamma0 unknown, assumed gamma0 = gamma\n";
  return kExitOk;
}

// ---------------------------------------------------------------- fit

std::string residuals_text(const Spectrum& data, const std::vector<double>& model, std::optional<double> theta_deg) {
  std::ostringstream os;
  os << "detuning_mhz,intensity_cps,model_cps,residual_cps";
  if (theta_deg) os << ",theta_deg";
  os << '\n';
  for (std::size_t i = 0; i < data.size(); ++i) {
    os << csv::format_number(data.detunings[i]) << ',' << csv::format_number(data.values[i]) << ','
       << csv::format_number(model[i]) << ',' << csv::format_number(data.values[i] - model[i]);
    if (theta_deg) os << ',' << csv::format_number(*theta_deg);
    os << '\n';
  }
  return os.str();
}

int cmd_fit(const Options& o, std::ostream& out) {
  const Config cfg = load_config(o);
  check_sections(cfg);
  const fs::path dir = resolve_out_dir(o);
  json report;
  std::vector<std::string> outputs;
  bool all_converged = true;

  std::optional<double> gamma = o.gamma ? o.gamma : cfg.find_number("emitter", "gamma");
  if (!o.fluorescence.empty()) {
    const Spectrum fl = csv::read_spectrum_file(o.fluorescence);
    const FitResult fr = fit_fluorescence(fl);
    print_fit(out, "fluorescence fit: " + o.fluorescence, fr);
    report["fluorescence"] = fit_json(fr);
    all_converged = all_converged && fr.converged;
    gamma = fr.value("gamma");
    kernels::LorentzTerms t{fr.value("nu21"), fr.value("gamma"), 0.0, 0.0, fr.value("amplitude"), fr.value("background")};
    std::vector<double> model(fl.size());
    kernels::lorentzian(t, fl.detunings, model);
    csv::write_file_atomic(dir / "fluorescence_residuals.csv", residuals_text(fl, model, std::nullopt));
    outputs.push_back("fluorescence_residuals.csv");
  }

  if (!o.inputs.empty()) {
    if (!gamma) throw ConfigError("emitter.gamma", 0, "required: pass --gamma or --fluorescence");
    TransmissionFixed fixed;
    fixed.gamma = *gamma;
    fixed.alpha = o.alpha ? *o.alpha : cfg.number_or("emitter", "alpha", 0.25);
    bool gamma0_assumed = false;
    if (o.gamma0)
      fixed.gamma0 = *o.gamma0;
    else if (auto g0 = cfg.find_number("emitter", "gamma0"))
      fixed.gamma0 = *g0;
    else {
      fixed.gamma0 = fixed.gamma;
      gamma0_assumed = true;
    }
    if (!(fixed.alpha > 0.0 && fixed.alpha <= 1.0)) throw ConfigError("emitter.alpha", 0, "must lie in (0, 1]");
    if (!(fixed.gamma0 > 0.0)) throw ConfigError("emitter.gamma0", 0, "must be > 0");

    if (!o.joint) {
      if (o.inputs.size() != 1) throw ArgumentError("fit: give one transmission file, or --joint for several angles");
      const Spectrum sp = csv::read_spectrum_file(o.inputs.front());
      FitResult tr = fit_transmission(sp, fixed);
      if (gamma0_assumed) tr.warnings.push_back("gamma0 unknown: assumed gamma0 = gamma");
      print_fit(out, "transmission fit: " + o.inputs.front(), tr);
      report["transmission"] = fit_json(tr);
      report["transmission"]["resonance_visibility"] = resonance_visibility(fitted_emitter(tr), fitted_coupling(tr));
      all_converged = all_converged && tr.converged;
      const Spectrum model = detected_spectrum(fitted_emitter(tr), fitted_coupling(tr), sp.detunings);
      csv::write_file_atomic(dir / "residuals.csv", residuals_text(sp, model.values, std::nullopt));
      outputs.push_back("residuals.csv");
    } else {
      std::vector<csv::AngleSpectrum> all;
      for (const auto& path : o.inputs)
        for (auto& g : csv::read_spectra_file(path)) all.push_back(std::move(g));
      const bool need_flags = std::any_of(all.begin(), all.end(), [](const auto& g) { return !g.theta_deg; });
      if (need_flags) {
        if (o.thetas_deg.size() != all.size())
          throw ArgumentError("fit --joint: files without theta_deg need one --theta per spectrum (" +
                              std::to_string(all.size()) + " spectra, " + std::to_string(o.thetas_deg.size()) +
                              " --theta given)");
        for (std::size_t i = 0; i < all.size(); ++i) all[i].theta_deg = o.thetas_deg[i];
      }
      AnalyzerScan scan;
      for (auto& g : all) {
        scan.thetas.push_back(fold_angle(*g.theta_deg * kDeg));
        scan.i_e_vs_theta.push_back(estimate_baseline(g.spectrum).i_e);
        scan.spectra.push_back(std::move(g.spectrum));
      }
      const JonesPair guess = jones_from(cfg);
      JointFitResult jr = joint_fit_polar(scan, guess.tip, guess.mol, fixed);
      if (gamma0_assumed) jr.fit.warnings.push_back("gamma0 unknown: assumed gamma0 = gamma");
      print_fit(out, "joint polarization fit over " + std::to_string(scan.size()) + " angles", jr.fit);
      report["joint"] = fit_json(jr.fit);
      report["joint"]["base_coupling"] = coupling_json(jr.base);
      all_converged = all_converged && jr.fit.converged;

      std::string text;
      for (std::size_t k = 0; k < scan.size(); ++k) {
        const auto eff = effective_coupling(jr.e_tip, jr.e_mol, scan.thetas[k], jr.base, jr.theta_ref);
        EmitterParams p;
        p.nu21 = jr.fit.value("nu21");
        p.gamma = fixed.gamma;
        p.alpha = fixed.alpha;
        p.gamma0 = fixed.gamma0;
        std::vector<double> model(scan.spectra[k].size());
        kernels::transmission(analyzer_terms(p, eff), scan.spectra[k].detunings, model);
        std::string block = residuals_text(scan.spectra[k], model, scan.thetas[k] / kDeg);
        if (k > 0) block.erase(0, block.find('\n') + 1);
        text += block;
      }
      csv::write_file_atomic(dir / "residuals.csv", text);
      outputs.push_back("residuals.csv");
    }
  } else if (o.fluorescence.empty()) {
    throw ArgumentError("fit: no input spectra");
  }

  report["converged"] = all_converged;
  csv::write_file_atomic(dir / "fit.json", report.dump(2) + "\n");
  outputs.push_back("fit.json");
  Options rec = o;
  rec.out_dir = dir.string();
  write_manifest(dir, rec, report, outputs);
  return all_converged ? kExitOk : kExitNotConverged;
}

// ---------------------------------------------------------------- polarscan

int cmd_polarscan(const Options& o, std::ostream& out) {
  if (o.config_text.empty()) throw ConfigError("", 0, "polarscan needs --config");
  const Config cfg = load_config(o);
  check_sections(cfg);
  const EmitterParams p = emitter_from(cfg, o);
  const ModalCoupling base = coupling_from(cfg);
  const auto grid = grid_from(cfg, p);
  const JonesPair jp = jones_from(cfg);
  const auto form = o.saturation ? LineshapeForm::Saturation : LineshapeForm::WeakField;

  std::vector<double> thetas;
  if (!o.thetas_deg.empty()) {
    for (double d : o.thetas_deg) thetas.push_back(d * kDeg);
  } else {
    const double count = cfg.number_or("polarization", "angles", 30.0);
    if (!(count >= 1.0) || count != std::floor(count))
      throw ConfigError("polarization.angles", 0, "must be a positive integer");
    const double a0 = cfg.number_or("polarization", "theta_start_deg", 0.0);
    const double a1 = cfg.number_or("polarization", "theta_stop_deg", 180.0);
    const auto n = static_cast<std::size_t>(count);
    for (std::size_t i = 0; i < n; ++i) thetas.push_back((a0 + (a1 - a0) * static_cast<double>(i) / static_cast<double>(n)) * kDeg);
  }

  AnalyzerScan scan;
  try {
    scan = analyzer_scan(p, base, jp.tip, jp.mol, thetas, grid, jp.theta_ref, form);
  } catch (const DomainError& e) {
    throw ConfigError("polarization", 0, e.what());
  }

  const fs::path dir = resolve_out_dir(o);
  std::vector<std::string> outputs;
  const bool noisy = cfg.has_section("acquisition");
  const AcquisitionConfig acq = acquisition_from(cfg, o);

  std::ostringstream vmap, summary, combined;
  vmap << "theta_deg";
  for (double f : grid) vmap << ',' << csv::format_number(f);
  vmap << '\n';
  summary << "theta_deg,i_e_cps,c_amp_mhz,psi_rad,visibility_resonance,direct_emission,crossed_sum_resonance_cps,"
             "crossed_sum_rel_dev\n";

  // crossed-pair sum S(theta) = I_d(theta) + I_d(theta + pi/2), compared against the first angle
  auto crossed_sum = [&](double theta) {
    std::vector<double> a(grid.size()), b(grid.size());
    kernels::transmission(analyzer_terms(p, effective_coupling(jp.tip, jp.mol, theta, base, jp.theta_ref), form), grid, a);
    kernels::transmission(
        analyzer_terms(p, effective_coupling(jp.tip, jp.mol, theta + 0.5 * kPi, base, jp.theta_ref), form), grid, b);
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
    return a;
  };
  const auto ref_sum = crossed_sum(scan.thetas.front());
  std::size_t res_idx = 0;
  for (std::size_t i = 1; i < grid.size(); ++i)
    if (std::abs(grid[i] - p.nu21) < std::abs(grid[res_idx] - p.nu21)) res_idx = i;

  for (std::size_t k = 0; k < scan.size(); ++k) {
    const double deg = scan.thetas[k] / kDeg;
    Spectrum s = scan.spectra[k];
    s.metadata["theta_deg"] = csv::format_number(deg);
    s.metadata["i_e_cps"] = csv::format_number(scan.i_e_vs_theta[k]);
    if (noisy) {
      AcquisitionConfig a = acq;
      a.seed = derived_seed(acq.seed, 100 + k);
      s = simulate_counts(s, a);
    }
    char name[32];
    std::snprintf(name, sizeof(name), "theta_%03zu.csv", k);
    csv::write_file_atomic(dir / name, spectrum_text(s, deg));
    outputs.emplace_back(name);
    std::string block = spectrum_text(s, deg);
    if (k > 0) {
      // keep a single header in the combined file
      std::istringstream is(block);
      std::string line, rest;
      bool past_header = false;
      while (std::getline(is, line)) {
        if (!past_header) {
          if (!line.empty() && line[0] != '#') past_header = true;
          continue;
        }
        rest += line + '\n';
      }
      block = rest;
    } else {
      std::istringstream is(block);
      std::string line, rest;
      while (std::getline(is, line))
        if (line.empty() || line[0] != '#') rest += line + '\n';
      block = rest;
    }
    combined << block;

    const double ie = scan.i_e_vs_theta[k];
    vmap << csv::format_number(deg);
    for (double v : scan.spectra[k].values)
      vmap << ',' << (scan.direct_emission[k] ? std::string("nan") : csv::format_number((v - ie) / ie));
    vmap << '\n';

    const auto sum = crossed_sum(scan.thetas[k]);
    double dev = 0.0;
    for (std::size_t i = 0; i < sum.size(); ++i) dev = std::max(dev, std::abs(sum[i] - ref_sum[i]) / std::abs(ref_sum[i]));
    const auto& c = scan.couplings[k];
    const double v0 = scan.direct_emission[k] ? NAN : (scan.spectra[k].values[res_idx] - ie) / ie;
    summary << csv::format_number(deg) << ',' << csv::format_number(ie) << ',' << csv::format_number(c.c_amp) << ','
            << csv::format_number(c.psi) << ',' << csv::format_number(v0) << ','
            << (scan.direct_emission[k] ? 1 : 0) << ',' << csv::format_number(sum[res_idx]) << ','
            << csv::format_number(dev) << '\n';
  }
  csv::write_file_atomic(dir / "visibility_map.csv", vmap.str());
  csv::write_file_atomic(dir / "polarscan_summary.csv", summary.str());
  csv::write_file_atomic(dir / "scan.csv", combined.str());
  outputs.insert(outputs.end(), {"visibility_map.csv", "polarscan_summary.csv", "scan.csv"});

  json resolved{{"emitter", emitter_json(p)},
                {"base_coupling", coupling_json(base)},
                {"tip", {{"ex_re", jp.tip.ex.real()}, {"ex_im", jp.tip.ex.imag()}, {"ey_re", jp.tip.ey.real()}, {"ey_im", jp.tip.ey.imag()}}},
                {"mol", {{"ex_re", jp.mol.ex.real()}, {"ex_im", jp.mol.ex.imag()}, {"ey_re", jp.mol.ey.real()}, {"ey_im", jp.mol.ey.imag()}}},
                {"angles", scan.size()},
                {"noisy", noisy}};
  Options rec = o;
  rec.out_dir = dir.string();
  if (noisy && !rec.seed) rec.seed = acq.seed;
  write_manifest(dir, rec, resolved, outputs);
  out << "polarscan: " << scan.size() << " angles x " << grid.size() << " detunings written to " << dir.string() << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------- report

int cmd_report(const Options& o, std::ostream& out) {
  const Config cfg = load_config(o);
  check_sections(cfg);
  auto need = [&](const std::optional<double>& flag, const char* section, const char* key) {
    if (flag) return *flag;
    return cfg.number(section, key);
  };
  const double lambda = need(o.lambda_nm, "report", "lambda_nm");
  const double tau = need(o.tau_ns, "report", "tau_ns");
  const double gamma = need(o.gamma, "emitter", "gamma");
  const double alpha = need(o.alpha, "emitter", "alpha");

  const double sigma_abs = with_field("report.lambda_nm", [&] { return absorption_cross_section(lambda); });
  const double gamma0 = with_field("report.tau_ns", [&] { return linewidth_from_lifetime(tau); });
  EmitterParams p;
  p.gamma = gamma;
  p.gamma0 = gamma0;
  p.alpha = alpha;
  with_field("emitter", [&] {
    p.validate();
    return 0;
  });
  const double enh = enhancement_factor(p);
  const double dip = max_resonance_dip(p, 0.5 * kPi);

  std::optional<ModalCoupling> m;
  if (cfg.has_section("coupling")) {
    m = coupling_from(cfg);
  } else if (o.c_amp && o.i_e) {
    m = ModalCoupling{*o.c_amp, canonical_phase(o.psi.value_or(0.5 * kPi)), *o.i_e};
    with_field("coupling", [&] {
      m->validate();
      return 0;
    });
  }
  std::optional<double> snr, v0;
  const AcquisitionConfig acq = acquisition_from(cfg, o);
  if (m) {
    v0 = resonance_visibility(p, *m);
    snr = snr_estimate(p, *m, acq);
  }

  auto row = [&](const std::string& name, const std::string& value, const std::string& unit) {
    out << "  " << std::left << std::setw(34) << name << std::setw(26) << value << unit << '\n' << std::right;
  };
  out << "report\n";
  row("absorption_cross_section", csv::format_number(sigma_abs), "m^2");
  row("gamma0_from_lifetime", csv::format_number(gamma0), "MHz");
  row("enhancement_factor", csv::format_number(enh), "");
  row("max_resonance_dip", csv::format_number(dip), "");
  row("resonance_visibility", v0 ? csv::format_number(*v0) : "n/a", "");
  row("snr_prediction", snr ? csv::format_number(*snr) : "n/a", "");

  json rep{{"lambda_nm", lambda},
           {"tau_ns", tau},
           {"gamma", gamma},
           {"alpha", alpha},
           {"absorption_cross_section_m2", sigma_abs},
           {"gamma0_mhz", gamma0},
           {"enhancement_factor", enh},
           {"max_resonance_dip", dip},
           {"resonance_visibility", v0 ? json(*v0) : json(nullptr)},
           {"snr_prediction", snr ? json(*snr) : json(nullptr)}};
  const bool to_disk = !o.out_dir.empty() || std::getenv(kOutputDirEnv);
  if (to_disk) {
    const fs::path dir = resolve_out_dir(o);
    csv::write_file_atomic(dir / "report.json", rep.dump(2) + "\n");
    Options rec = o;
    rec.out_dir = dir.string();
    write_manifest(dir, rec, rep, {"report.json"});
  }
  return kExitOk;
}

int dispatch(const Options& o, std::ostream& out) {
  if (o.command == "simulate") return cmd_simulate(o, out);
  if (o.command == "fit") return cmd_fit(o, out);
  if (o.command == "polarscan") return cmd_polarscan(o, out);
  if (o.command == "report") return cmd_report(o, out);
  throw ArgumentError("unknown command '" + o.command + "'");
}

std::string read_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("", 0, "cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

} // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Single-emitter extinction spectroscopy: simulate, fit and analyze transmission spectra"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  Options o;
  std::string manifest_path;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--out", o.out_dir, "Output directory (default: $MOLEXT_OUTPUT_DIR or ./molext_out)");
  };

  auto* sim = app.add_subcommand("simulate", "Generate model and photon-counting spectra from a config");
  sim->add_option("--config", o.config_path, "Run configuration")->required();
  sim->add_option("--seed", o.seed, "Override acquisition.seed");
  sim->add_flag("--saturation", o.saturation, "Use the saturation Lorentzian");
  add_common(sim);

  auto* fit = app.add_subcommand("fit", "Fit transmission (and fluorescence) spectra");
  fit->add_option("inputs", o.inputs, "Transmission spectrum CSV file(s)");
  fit->add_option("--fluorescence", o.fluorescence, "Fluorescence excitation spectrum; its width fixes gamma");
  fit->add_option("--config", o.config_path, "Optional config (emitter constants, Jones guesses)");
  fit->add_option("--gamma", o.gamma, "Homogeneous linewidth, MHz");
  fit->add_option("--alpha", o.alpha, "Debye-Waller factor");
  fit->add_option("--gamma0", o.gamma0, "Radiative linewidth, MHz");
  fit->add_flag("--joint", o.joint, "Joint fit across analyzer angles");
  fit->add_option("--theta", o.thetas_deg, "Analyzer angle per input spectrum, degrees");
  add_common(fit);

  auto* pol = app.add_subcommand("polarscan", "Spectra versus analyzer angle and visibility map");
  pol->add_option("--config", o.config_path, "Run configuration")->required();
  pol->add_option("--theta", o.thetas_deg, "Explicit analyzer angles, degrees");
  pol->add_option("--seed", o.seed, "Override acquisition.seed");
  pol->add_flag("--saturation", o.saturation, "Use the saturation Lorentzian");
  add_common(pol);

  auto* rep = app.add_subcommand("report", "Scalar summary: cross section, radiative width, enhancement, SNR");
  rep->add_option("--config", o.config_path, "Optional config");
  rep->add_option("--lambda-nm", o.lambda_nm, "Transition wavelength, nm");
  rep->add_option("--tau-ns", o.tau_ns, "Excited-state lifetime, ns");
  rep->add_option("--gamma", o.gamma, "Homogeneous linewidth, MHz");
  rep->add_option("--alpha", o.alpha, "Debye-Waller factor");
  rep->add_option("--c-amp", o.c_amp, "Coupling C, MHz (for the SNR prediction)");
  rep->add_option("--psi", o.psi, "Phase psi, rad (default pi/2)");
  rep->add_option("--i-e", o.i_e, "Off-resonant intensity, cps");
  add_common(rep);

  auto* replay = app.add_subcommand("replay", "Re-run the command recorded in a manifest");
  replay->add_option("manifest", manifest_path, "manifest.json")->required();
  replay->add_option("--out", o.out_dir, "Output directory (default: the recorded one)");

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << kVersion << '\n';
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitBadInput;
  }

  try {
    if (replay->parsed()) {
      std::ifstream in(manifest_path);
      if (!in) throw ConfigError("", 0, "cannot open manifest '" + manifest_path + "'");
      const json m = json::parse(in);
      Options rec = options_from_json(m.at("options"));
      if (!o.out_dir.empty()) rec.out_dir = o.out_dir;
      return dispatch(rec, out);
    }
    for (auto* sub : {sim, fit, pol, rep})
      if (sub->parsed()) o.command = sub->get_name();
    if (!o.config_path.empty()) o.config_text = read_text(o.config_path);
    return dispatch(o, out);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitBadInput;
  } catch (const NoPeakError& e) {
    err << "error: " << e.what() << '\n';
    return kExitNoSignal;
  } catch (const LowContrastError& e) {
    err << "error: " << e.what() << '\n';
    return kExitNoSignal;
  } catch (const DegenerateError& e) {
    err << "error: " << e.what() << '\n';
    return kExitBadInput;
  } catch (const ArgumentError& e) {
    err << "error: " << e.what() << '\n';
    return kExitBadInput;
  } catch (const DomainError& e) {
    err << "error: " << e.what() << '\n';
    return kExitBadInput;
  } catch (const json::exception& e) {
    err << "error: malformed manifest: " << e.what() << '\n';
    return kExitBadInput;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

} // namespace molext::cli
