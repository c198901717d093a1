#include "molext/synth.hpp"

#include "molext/csv.hpp"
#include "molext/errors.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace molext {

void AcquisitionConfig::validate() const {
  if (!(dwell > 0.0) || !std::isfinite(dwell)) throw DomainError("acquisition: dwell must be > 0");
  if (averages < 1) throw DomainError("acquisition: averages must be >= 1");
  if (!(laser_rms >= 0.0) || !std::isfinite(laser_rms)) throw DomainError("acquisition: laser_rms must be >= 0");
}

Spectrum simulate_counts(const Spectrum& model, const AcquisitionConfig& acq) {
  acq.validate();
  if (model.values.size() != model.detunings.size()) throw ArgumentError("simulate_counts: length mismatch");
  for (double v : model.values)
    if (!(v >= 0.0) || !std::isfinite(v)) throw DomainError("simulate_counts: model rates must be finite and >= 0");

  const std::size_t n = model.size();
  std::mt19937_64 rng(acq.seed);
  std::normal_distribution<double> laser(0.0, 1.0);
  std::vector<double> sum(n, 0.0), sum2(n, 0.0);
  for (int rep = 0; rep < acq.averages; ++rep) {
    const double factor = std::max(0.0, 1.0 + acq.laser_rms * laser(rng));
    for (std::size_t i = 0; i < n; ++i) {
      const double mean = model.values[i] * acq.dwell * factor;
      double k = 0.0;
      if (mean > 0.0) {
        std::poisson_distribution<long long> counts(mean);
        k = static_cast<double>(counts(rng));
      }
      sum[i] += k;
      sum2[i] += k * k;
    }
  }

  Spectrum out;
  out.detunings = model.detunings;
  out.values.resize(n);
  out.sigma.emplace(n);
  const double navg = static_cast<double>(acq.averages);
  for (std::size_t i = 0; i < n; ++i) {
    const double mean_counts = sum[i] / navg;
    out.values[i] = mean_counts / acq.dwell;
    double se_counts;
    if (acq.averages > 1) {
      const double var = std::max(0.0, (sum2[i] - navg * mean_counts * mean_counts) / (navg - 1.0));
      se_counts = std::sqrt(var / navg);
    } else {
      se_counts = std::sqrt(sum[i]);
    }
    (*out.sigma)[i] = se_counts / acq.dwell;
  }
  out.metadata = model.metadata;
  out.metadata["dwell_s"] = csv::format_number(acq.dwell);
  out.metadata["averages"] = std::to_string(acq.averages);
  out.metadata["laser_rms"] = csv::format_number(acq.laser_rms);
  out.metadata["seed"] = std::to_string(acq.seed);
  return out;
}

double snr_estimate(const EmitterParams& p, const ModalCoupling& m, const AcquisitionConfig& acq) {
  acq.validate();
  const double v0 = resonance_visibility(p, m);
  const double T = acq.exposure();
  const double signal = std::abs(v0) * m.i_e * T;
  const double laser_counts = acq.laser_rms * m.i_e * acq.dwell;
  const double noise = std::sqrt(m.i_e * T + static_cast<double>(acq.averages) * laser_counts * laser_counts);
  return noise > 0.0 ? signal / noise : 0.0;
}

MolecularRates coherent_rate_check(const EmitterParams& p, const ModalCoupling& m) {
  p.validate();
  m.validate();
  const double L0 = 4.0 / (p.gamma * p.gamma);
  const double c2 = m.c_amp * m.c_amp;
  MolecularRates r;
  r.coherent_cps = c2 / p.alpha * L0 * m.i_e;
  r.direct_cps = r.coherent_cps * (p.gamma / p.gamma0);
  r.extinction_cps = 4.0 * m.c_amp / p.gamma * std::sin(m.psi) * m.i_e;
  return r;
}

} // namespace molext
