#pragma once

#include <cmath>
#include <complex>
#include <string>
#include <vector>

#include "ctsim/errors.hpp"
#include "ctsim/fft.hpp"
#include "ctsim/image.hpp"
#include "ctsim/sinogram.hpp"

namespace ctsim {

enum class FilterKernel { ramp, ramp_hann };

inline const char* kernel_name(FilterKernel k) {
  return k == FilterKernel::ramp ? "ramp" : "ramp_hann";
}

inline FilterKernel kernel_from_name(const std::string& name) {
  if (name == "ramp") return FilterKernel::ramp;
  if (name == "ramp_hann") return FilterKernel::ramp_hann;
  throw config_error("unknown filter kernel: " + name + " (expected ramp|ramp_hann)");
}

struct FilterSpec {
  FilterKernel kernel = FilterKernel::ramp;
  // Power of two >= 2 * n_detectors; 0 selects the smallest valid length.
  size_t zero_pad_length = 0;

  size_t resolve_pad(int n_detectors) const {
    size_t p = zero_pad_length;
    if (p == 0) p = next_power_of_two(2 * static_cast<size_t>(n_detectors));
    if (!is_power_of_two(p) || p < 2 * static_cast<size_t>(n_detectors))
      throw config_error(
          "filter.zero_pad_length must be a power of two >= 2*n_detectors");
    return p;
  }
};

// Band-limited ramp kernel tap at lag n for detector spacing ds:
//   h[0] = 1/(4 ds^2),  h[n] = -1/(n^2 pi^2 ds^2) for odd n,  0 for even n.
inline double ramp_kernel_tap(int n, double ds) {
  if (n == 0) return 1.0 / (4.0 * ds * ds);
  if (n % 2 == 0) return 0.0;
  const double npi = static_cast<double>(n) * kPi;
  return -1.0 / (npi * npi * ds * ds);
}

namespace detail {
// Frequency response of the zero-padded ramp kernel, optionally apodized by
// a Hann window over the full band.
inline std::vector<std::complex<double>> ramp_frequency_response(
    int n_detectors, double ds, size_t pad, FilterKernel kernel) {
  std::vector<std::complex<double>> h(pad, {0.0, 0.0});
  // Cyclic placement of taps for lags |n| <= n_detectors - 1 makes the
  // circular convolution equal the linear one on the detector support.
  h[0] = ramp_kernel_tap(0, ds);
  for (int n = 1; n < n_detectors; ++n) {
    const double tap = ramp_kernel_tap(n, ds);
    h[n] = tap;
    h[pad - n] = tap;
  }
  fft_inplace(h, false);
  if (kernel == FilterKernel::ramp_hann) {
    for (size_t k = 0; k < pad; ++k) {
      const double w = 0.5 + 0.5 * std::cos(2.0 * kPi * static_cast<double>(k) /
                                            static_cast<double>(pad));
      h[k] *= w;
    }
  }
  return h;
}
}  // namespace detail

// Convolves every sinogram row with the band-limited ramp kernel via
// zero-padded FFT. The result is scaled by detector_spacing so that
// backprojection with the view spacing completes the inversion formula.
inline Sinogram ramp_filter_rows(const Sinogram& sino, const FilterSpec& spec) {
  const int nd = sino.geom.n_detectors;
  if (nd < 2) throw std::domain_error("ramp_filter_rows: n_detectors must be >= 2");
  const size_t pad = spec.resolve_pad(nd);
  const double ds = sino.geom.detector_spacing;
  const auto hf = detail::ramp_frequency_response(nd, ds, pad, spec.kernel);

  Sinogram out = sino;
  std::vector<std::complex<double>> buf(pad);
  for (int v = 0; v < sino.geom.n_views; ++v) {
    const double* in = sino.row(v);
    for (size_t i = 0; i < pad; ++i)
      buf[i] = (i < static_cast<size_t>(nd)) ? std::complex<double>(in[i], 0.0)
                                             : std::complex<double>(0.0, 0.0);
    fft_inplace(buf, false);
    for (size_t i = 0; i < pad; ++i) buf[i] *= hf[i];
    fft_inplace(buf, true);
    double* o = out.row(v);
    for (int i = 0; i < nd; ++i) o[i] = buf[i].real() * ds;
  }
  out.provenance.push_back(std::string("ramp-filter(kernel=") +
                           kernel_name(spec.kernel) + ")");
  return out;
}

// Accumulates, for every pixel, the linearly interpolated filtered value at
// detector coordinate s = x cos(theta) + y sin(theta) over all views (in
// view-index order), scaled by the view angular spacing. Rays falling
// outside the detector array contribute zero.
inline ImageGrid backproject(const Sinogram& filtered, int n_pixels,
                             double field_of_view) {
  if (filtered.geom.n_views < 1)
    throw std::domain_error("backproject: need at least one view");
  const int nd = filtered.geom.n_detectors;
  const double ds = filtered.geom.detector_spacing;
  const double s0 = filtered.geom.detector_offset(0);
  const int nv = filtered.geom.n_views;

  std::vector<double> cs(nv), sn(nv);
  for (int v = 0; v < nv; ++v) {
    const double a = filtered.geom.view_angle(v);
    cs[v] = std::cos(a);
    sn[v] = std::sin(a);
  }

  ImageGrid img(n_pixels, field_of_view);
  const double dtheta = filtered.geom.view_spacing;
  for (int iy = 0; iy < n_pixels; ++iy) {
    const double y = img.coord(iy);
    for (int ix = 0; ix < n_pixels; ++ix) {
      const double x = img.coord(ix);
      double acc = 0.0;
      for (int v = 0; v < nv; ++v) {
        const double s = x * cs[v] + y * sn[v];
        const double fd = (s - s0) / ds;
        const int d0 = static_cast<int>(std::floor(fd));
        if (d0 < -1 || d0 > nd - 1) continue;
        const double w = fd - d0;
        const double* row = filtered.row(v);
        double val = 0.0;
        if (d0 >= 0) val += (1.0 - w) * row[d0];
        if (d0 + 1 < nd) val += w * row[d0 + 1];
        acc += val;
      }
      img.at(ix, iy) = acc * dtheta;
    }
  }
  img.provenance = filtered.provenance;
  img.provenance.push_back("backproject(n_pixels=" + std::to_string(n_pixels) + ")");
  return img;
}

// Filtered back projection. Degraded sinograms are reconstructed as-is, so
// sparse-view and limited-angle artifacts appear naturally.
inline ImageGrid fbp(const Sinogram& sino, int n_pixels, double field_of_view,
                     const FilterSpec& spec) {
  return backproject(ramp_filter_rows(sino, spec), n_pixels, field_of_view);
}

}  // namespace ctsim
