#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <json.hpp>

#include "ctsim/container_io.hpp"
#include "ctsim/errors.hpp"
#include "ctsim/version.hpp"

namespace ctsim {

inline constexpr double kPi = 3.14159265358979323846;

// Parallel-beam acquisition geometry. Views are equi-angular at
// view_spacing radians apart starting at start_angle; angular_range records
// the nominal coverage. For a freshly constructed geometry
// view_spacing == angular_range / n_views; projection-subsampling operators
// widen view_spacing while keeping the surviving view angles exact.
struct ScanGeometry {
  int n_views = 0;
  int n_detectors = 0;
  double angular_range = kPi;     // radians, (0, pi]
  double start_angle = 0.0;       // radians
  double detector_spacing = 0.0;  // cm
  double view_spacing = 0.0;      // radians between consecutive views

  static ScanGeometry uniform(int n_views, double angular_range,
                              double start_angle, int n_detectors,
                              double detector_spacing) {
    ScanGeometry g;
    g.n_views = n_views;
    g.n_detectors = n_detectors;
    g.angular_range = angular_range;
    g.start_angle = start_angle;
    g.detector_spacing = detector_spacing;
    g.view_spacing = angular_range / n_views;
    g.validate();
    return g;
  }

  void validate() const {
    if (n_views < 1) throw config_error("geometry.n_views must be >= 1");
    if (n_detectors < 2) throw config_error("geometry.n_detectors must be >= 2");
    if (!(detector_spacing > 0.0))
      throw config_error("geometry.detector_spacing must be > 0");
    if (!(angular_range > 0.0) || angular_range > kPi + 1e-12)
      throw config_error("geometry.angular_range must be in (0, pi]");
    if (!(view_spacing > 0.0))
      throw config_error("geometry.view_spacing must be > 0");
  }

  double view_angle(int i) const { return start_angle + i * view_spacing; }
  // Signed offset (cm) of detector j from the array center.
  double detector_offset(int j) const {
    return (j - 0.5 * (n_detectors - 1)) * detector_spacing;
  }
  // Half-width of the detector array coverage.
  double half_extent() const { return 0.5 * n_detectors * detector_spacing; }
};

// Projection-domain data: one row of line integrals per view. Entries are
// dimensionless (integral of 1/cm attenuation over cm path). The provenance
// list is append-only and records every operation applied.
struct Sinogram {
  ScanGeometry geom;
  std::vector<double> data;  // row-major, data[view * n_detectors + det]
  std::vector<std::string> provenance;

  Sinogram() = default;
  explicit Sinogram(const ScanGeometry& g)
      : geom(g),
        data(static_cast<size_t>(g.n_views) * g.n_detectors, 0.0) {}

  double& at(int view, int det) {
    return data[static_cast<size_t>(view) * geom.n_detectors + det];
  }
  double at(int view, int det) const {
    return data[static_cast<size_t>(view) * geom.n_detectors + det];
  }
  const double* row(int view) const {
    return data.data() + static_cast<size_t>(view) * geom.n_detectors;
  }
  double* row(int view) {
    return data.data() + static_cast<size_t>(view) * geom.n_detectors;
  }
};

inline constexpr char kSinogramMagic[9] = "CTSINO01";

inline std::string encode_sinogram(const Sinogram& s) {
  nlohmann::json header{{"format_version", kFormatVersion},
                        {"n_views", s.geom.n_views},
                        {"n_detectors", s.geom.n_detectors},
                        {"angular_range", s.geom.angular_range},
                        {"start_angle", s.geom.start_angle},
                        {"detector_spacing", s.geom.detector_spacing},
                        {"view_spacing", s.geom.view_spacing},
                        {"provenance", s.provenance}};
  return io::encode_container(kSinogramMagic, header, s.data);
}

inline void save_sinogram(const std::string& path, const Sinogram& s) {
  io::write_file(path, encode_sinogram(s));
}

inline Sinogram decode_sinogram(const std::string& bytes,
                                const std::string& origin) {
  auto c = io::decode_container(kSinogramMagic, bytes, origin);
  Sinogram s;
  try {
    s.geom.n_views = c.header.at("n_views").get<int>();
    s.geom.n_detectors = c.header.at("n_detectors").get<int>();
    s.geom.angular_range = c.header.at("angular_range").get<double>();
    s.geom.start_angle = c.header.at("start_angle").get<double>();
    s.geom.detector_spacing = c.header.at("detector_spacing").get<double>();
    s.geom.view_spacing = c.header.at("view_spacing").get<double>();
    s.provenance = c.header.value("provenance", std::vector<std::string>{});
  } catch (const nlohmann::json::exception& e) {
    throw data_error("bad sinogram header in " + origin + ": " + e.what());
  }
  s.geom.validate();
  if (c.payload.size() !=
      static_cast<size_t>(s.geom.n_views) * s.geom.n_detectors)
    throw data_error("sinogram payload size mismatch in " + origin);
  s.data = std::move(c.payload);
  return s;
}

inline Sinogram load_sinogram(const std::string& path) {
  return decode_sinogram(io::read_file(path), path);
}

}  // namespace ctsim
