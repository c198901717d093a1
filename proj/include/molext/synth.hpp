#pragma once

// Synthetic photon-counting data: Poisson counts per pixel, scan averaging,
// and a residual multiplicative laser-intensity fluctuation per scan.

#include "molext/lineshape.hpp"
#include "molext/spectrum.hpp"

#include <cstdint>

namespace molext {

struct AcquisitionConfig {
  double dwell = 0.01;      // s per pixel
  int averages = 20;        // scan repetitions
  double laser_rms = 0.003; // relative intensity noise per scan
  std::uint64_t seed = 1;

  void validate() const;
  double exposure() const { return dwell * static_cast<double>(averages); }
};

// Draws `averages` scans of Poisson counts with mean rate * dwell * (1 + eps_r),
// eps_r ~ N(0, laser_rms^2) once per scan, and returns the averaged rate in
// cps. sigma holds the standard error of that average: the empirical scatter
// across scans when averages > 1, sqrt(counts) / dwell otherwise.
// Deterministic in acq.seed.
Spectrum simulate_counts(const Spectrum& model, const AcquisitionConfig& acq);

// Resonant contrast in accumulated counts over the combined shot and laser
// noise of those counts:
//   |I_d(0) - I_e| T / sqrt(I_e T + N (laser_rms I_e dwell)^2),  T = N dwell.
// The laser term scales with N because the fluctuation is drawn once per scan
// and therefore averages down across scans.
double snr_estimate(const EmitterParams& p, const ModalCoupling& m, const AcquisitionConfig& acq);

struct MolecularRates {
  double direct_cps = 0.0;     // (C^2/alpha)(gamma/gamma0)(4/gamma^2) I_e: total molecular term on resonance
  double coherent_cps = 0.0;   // (C^2/alpha)(4/gamma^2) I_e: the elastically scattered part alone
  double extinction_cps = 0.0; // (4 C / gamma) sin(psi) I_e: interference term on resonance
};

// Molecular count rates at Delta = 0, for comparing direct emission against
// the extinction contrast.
MolecularRates coherent_rate_check(const EmitterParams& p, const ModalCoupling& m);

} // namespace molext
