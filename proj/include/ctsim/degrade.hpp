#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "ctsim/errors.hpp"
#include "ctsim/rng.hpp"
#include "ctsim/sinogram.hpp"

namespace ctsim {

// Photon-budget model for tube-current simulation. n0 is the expected
// transmitted count per detector element at zero attenuation and nominal
// current; dose_factor alpha >= 1 divides the flux.
struct DoseModel {
  double n0 = 1e5;
  double dose_factor = 1.0;
  double counts_floor = 1.0;

  void validate() const {
    if (!(n0 > 0.0)) throw config_error("dose.n0 must be > 0");
    if (!(dose_factor >= 1.0)) throw config_error("dose.dose_factor must be >= 1");
    if (!(counts_floor > 0.0)) throw config_error("dose.counts_floor must be > 0");
  }
};

enum class DegradeMode { current, projections, angle };

inline const char* mode_name(DegradeMode m) {
  switch (m) {
    case DegradeMode::current: return "current";
    case DegradeMode::projections: return "projections";
    default: return "angle";
  }
}

inline DegradeMode mode_from_name(const std::string& s) {
  if (s == "current") return DegradeMode::current;
  if (s == "projections") return DegradeMode::projections;
  if (s == "angle") return DegradeMode::angle;
  throw config_error("unknown degrade mode: " + s +
                     " (expected current|projections|angle)");
}

struct DegradeSpec {
  DegradeMode mode = DegradeMode::current;
  int factor = 1;
  DoseModel dose;   // current mode only
  uint64_t seed = 0;  // current mode only

  void validate() const {
    if (factor != 1 && factor != 4 && factor != 8 && factor != 16)
      throw config_error("degrade.factor must be one of {1, 4, 8, 16}");
    if (mode == DegradeMode::current) dose.validate();
  }
};

namespace detail {
inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}
}  // namespace detail

// Post-log quantum noise: each line integral p gains an independent
// Gaussian perturbation with variance 1 / N where N = n0 * exp(-p) / alpha
// is the expected transmitted count, floored at counts_floor. Draws are
// keyed by (seed, view, detector), so any evaluation order produces the
// same sinogram.
inline Sinogram add_quantum_noise(const Sinogram& sino, const DoseModel& dose,
                                  uint64_t seed) {
  dose.validate();
  const double alpha = dose.dose_factor;
  Sinogram out = sino;
  for (int v = 0; v < sino.geom.n_views; ++v) {
    const double* in = sino.row(v);
    double* o = out.row(v);
    for (int d = 0; d < sino.geom.n_detectors; ++d) {
      const double p = in[d];
      if (!std::isfinite(p))
        throw std::domain_error("add_quantum_noise: non-finite sinogram entry");
      if (p < 0.0)
        throw std::domain_error("add_quantum_noise: negative line integral");
      double counts = dose.n0 * std::exp(-p) / alpha;
      if (counts < dose.counts_floor) counts = dose.counts_floor;
      const double sigma = std::sqrt(1.0 / counts);
      o[d] = p + sigma * rng::normal(rng::hash3(seed, v, d));
    }
  }
  out.provenance.push_back("quantum-noise(alpha=" + detail::format_double(alpha) +
                           ",n0=" + detail::format_double(dose.n0) +
                           ",floor=" + detail::format_double(dose.counts_floor) +
                           ",seed=" + std::to_string(seed) + ")");
  return out;
}

// Keeps views with index i == 0 (mod k): "the first of every k". Surviving
// rows are bit-identical; their angles are preserved exactly by widening
// view_spacing, with the nominal angular_range unchanged.
inline Sinogram reduce_projections(const Sinogram& sino, int k) {
  if (k < 1) throw std::domain_error("reduce_projections: k must be >= 1");
  const int nv = sino.geom.n_views;
  const int kept = (nv + k - 1) / k;
  Sinogram out;
  out.geom = sino.geom;
  out.geom.n_views = kept;
  out.geom.view_spacing = sino.geom.view_spacing * k;
  out.data.resize(static_cast<size_t>(kept) * sino.geom.n_detectors);
  for (int i = 0; i < kept; ++i) {
    const double* src = sino.row(i * k);
    std::copy(src, src + sino.geom.n_detectors, out.row(i));
  }
  out.provenance = sino.provenance;
  out.provenance.push_back("reduce-projections(k=" + std::to_string(k) +
                           ",kept=" + std::to_string(kept) + "/" +
                           std::to_string(nv) + ")");
  return out;
}

// Keeps the first floor(n_views / k) views: a contiguous wedge starting at
// start_angle. Coverage shrinks to angular_range / k; view spacing is
// unchanged.
inline Sinogram limit_angle(const Sinogram& sino, int k) {
  if (k < 1) throw std::domain_error("limit_angle: k must be >= 1");
  const int nv = sino.geom.n_views;
  const int kept = nv / k;
  if (kept == 0)
    throw std::domain_error("limit_angle: floor(n_views/k) is zero");
  Sinogram out;
  out.geom = sino.geom;
  out.geom.n_views = kept;
  out.geom.angular_range = sino.geom.angular_range / k;
  out.data.assign(sino.data.begin(),
                  sino.data.begin() +
                      static_cast<size_t>(kept) * sino.geom.n_detectors);
  out.provenance = sino.provenance;
  out.provenance.push_back("limit-angle(k=" + std::to_string(k) +
                           ",kept=" + std::to_string(kept) + "/" +
                           std::to_string(nv) + ")");
  return out;
}

// Single dispatch entry point. factor == 1 is the identity for the
// selection modes; current mode with factor 1 still injects nominal-dose
// noise.
inline Sinogram apply(const DegradeSpec& spec, const Sinogram& sino) {
  spec.validate();
  switch (spec.mode) {
    case DegradeMode::current: {
      DoseModel d = spec.dose;
      d.dose_factor = static_cast<double>(spec.factor);
      return add_quantum_noise(sino, d, spec.seed);
    }
    case DegradeMode::projections:
      return reduce_projections(sino, spec.factor);
    default:
      return limit_angle(sino, spec.factor);
  }
}

}  // namespace ctsim
