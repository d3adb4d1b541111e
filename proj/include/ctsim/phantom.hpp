#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ctsim/errors.hpp"
#include "ctsim/image.hpp"
#include "ctsim/rng.hpp"
#include "ctsim/version.hpp"

namespace ctsim {

// Attenuation ellipse. Contributions are additive: the value at a point is
// the sum of attenuation_delta over all ellipses containing it.
struct Ellipse {
  double center_x = 0.0;       // cm
  double center_y = 0.0;       // cm
  double semi_axis_a = 1.0;    // cm, > 0
  double semi_axis_b = 1.0;    // cm, > 0
  double rotation = 0.0;       // radians, [0, pi)
  double attenuation_delta = 0.0;  // 1/cm, additive

  bool contains(double x, double y) const {
    const double dx = x - center_x;
    const double dy = y - center_y;
    const double c = std::cos(rotation);
    const double s = std::sin(rotation);
    const double u = dx * c + dy * s;
    const double v = -dx * s + dy * c;
    const double ra = u / semi_axis_a;
    const double rb = v / semi_axis_b;
    return ra * ra + rb * rb <= 1.0;
  }
};

enum class Label { normal, abnormal };

inline const char* label_name(Label l) {
  return l == Label::abnormal ? "abnormal" : "normal";
}

// A synthetic patient: a head-like stack of ellipses plus the ground-truth
// binary label. label == abnormal exactly when lesion_index is present.
struct Phantom {
  std::vector<Ellipse> ellipses;
  Label label = Label::normal;
  std::optional<size_t> lesion_index;
  uint64_t seed = 0;

  const Ellipse* lesion() const {
    return lesion_index ? &ellipses[*lesion_index] : nullptr;
  }
};

struct Range {
  double lo = 0.0;
  double hi = 0.0;
  double sample(double u01) const { return lo + (hi - lo) * u01; }
};

// Randomized head model: an outer skull ellipse (bone), an inner brain
// ellipse that brings the interior back to water, and an optional lesion
// ellipse of signed contrast placed fully inside the brain.
struct PhantomSpec {
  double field_of_view = 25.0;  // cm
  double mu_water = 0.19;       // 1/cm
  double mu_bone = 0.38;        // 1/cm
  Range head_semi_axis_a{7.4, 8.2};    // cm
  Range head_semi_axis_b{9.4, 10.2};   // cm
  Range head_center_jitter{-0.4, 0.4};  // cm, applied to both axes
  Range head_rotation_jitter{-0.12, 0.12};  // radians
  Range skull_thickness{0.4, 0.7};   // cm
  double lesion_probability = 0.5522;
  Range lesion_contrast{0.01, 0.05};  // 1/cm magnitude; sign drawn separately
  Range lesion_radius{0.8, 1.8};      // cm, each lesion semi-axis
  double lesion_margin = 0.15;        // cm clearance inside the brain ellipse

  void validate() const {
    auto check_range = [](const Range& r, const char* name) {
      if (!(r.lo <= r.hi))
        throw config_error(std::string("phantom.") + name +
                           ": range must satisfy min <= max");
    };
    if (!(field_of_view > 0.0))
      throw config_error("phantom.field_of_view must be > 0");
    if (!(mu_water > 0.0)) throw config_error("phantom.mu_water must be > 0");
    if (!(mu_bone > 0.0)) throw config_error("phantom.mu_bone must be > 0");
    check_range(head_semi_axis_a, "head_semi_axis_a");
    check_range(head_semi_axis_b, "head_semi_axis_b");
    check_range(head_center_jitter, "head_center_jitter");
    check_range(head_rotation_jitter, "head_rotation_jitter");
    check_range(skull_thickness, "skull_thickness");
    check_range(lesion_contrast, "lesion_contrast");
    check_range(lesion_radius, "lesion_radius");
    if (!(head_semi_axis_a.lo > 0.0) || !(head_semi_axis_b.lo > 0.0))
      throw config_error("phantom.head_semi_axis ranges must be positive");
    if (lesion_probability < 0.0 || lesion_probability > 1.0)
      throw config_error("phantom.lesion_probability must be in [0, 1]");
    if (!(lesion_radius.lo > 0.0))
      throw config_error("phantom.lesion_radius must be positive");
    if (!(skull_thickness.lo > 0.0))
      throw config_error("phantom.skull_thickness must be positive");
    if (skull_thickness.hi >= head_semi_axis_a.lo)
      throw config_error("phantom.skull_thickness must be below head_semi_axis_a");
    if (lesion_radius.hi + lesion_margin >=
        head_semi_axis_a.lo - skull_thickness.hi)
      throw config_error("phantom.lesion_radius too large for the brain interior");
    if (lesion_contrast.hi > mu_water)
      throw config_error("phantom.lesion_contrast exceeds mu_water (negative attenuation)");
  }
};

namespace detail {
// Fixed substream ids; sampling stays reproducible regardless of which
// draws a particular phantom consumes.
enum PhantomStream : uint64_t {
  kHeadA = 0, kHeadB, kHeadCx, kHeadCy, kHeadRot, kSkullT, kLabelCoin,
  kLesA, kLesB, kLesRot, kLesMag, kLesSign, kLesPosR, kLesPosPhi
};

inline double draw(const uint64_t seed, PhantomStream st, const Range& r) {
  return r.sample(rng::u01(rng::hash2(seed ^ 0x43A5B8F1D0C9E27BULL, st)));
}
inline double draw01(const uint64_t seed, PhantomStream st) {
  return rng::u01(rng::hash2(seed ^ 0x43A5B8F1D0C9E27BULL, st));
}
}  // namespace detail

inline Phantom sample_phantom(const PhantomSpec& spec, uint64_t seed) {
  spec.validate();
  using namespace detail;

  const double a = draw(seed, kHeadA, spec.head_semi_axis_a);
  const double b = draw(seed, kHeadB, spec.head_semi_axis_b);
  const double cx = draw(seed, kHeadCx, spec.head_center_jitter);
  const double cy = draw(seed, kHeadCy, spec.head_center_jitter);
  double rot = draw(seed, kHeadRot, spec.head_rotation_jitter);
  if (rot < 0.0) rot += kPi;
  const double t = draw(seed, kSkullT, spec.skull_thickness);

  Phantom ph;
  ph.seed = seed;
  // Outer skull ellipse carries full bone attenuation; the inner ellipse
  // subtracts back down to water so the interior reads as brain.
  ph.ellipses.push_back({cx, cy, a, b, rot, spec.mu_bone});
  ph.ellipses.push_back({cx, cy, a - t, b - t, rot, spec.mu_water - spec.mu_bone});

  if (detail::draw01(seed, kLabelCoin) < spec.lesion_probability) {
    const double la = draw(seed, kLesA, spec.lesion_radius);
    const double lb = draw(seed, kLesB, spec.lesion_radius);
    double lrot = draw(seed, kLesRot, {0.0, kPi});
    if (lrot >= kPi) lrot = 0.0;
    const double mag = draw(seed, kLesMag, spec.lesion_contrast);
    const double delta = detail::draw01(seed, kLesSign) < 0.5 ? -mag : mag;
    // Place the lesion center inside the brain ellipse shrunk by the lesion
    // circumradius plus margin; this guarantees containment because the
    // shrink distance stays below the brain's minimum radius of curvature.
    const double rmax = std::max(la, lb);
    const double ea = (a - t) - rmax - spec.lesion_margin;
    const double eb = (b - t) - rmax - spec.lesion_margin;
    const double rr = std::sqrt(detail::draw01(seed, kLesPosR));
    const double phi = 2.0 * kPi * detail::draw01(seed, kLesPosPhi);
    const double px = rr * std::cos(phi) * ea;
    const double py = rr * std::sin(phi) * eb;
    const double c = std::cos(rot), s = std::sin(rot);
    ph.ellipses.push_back({cx + px * c - py * s, cy + px * s + py * c,
                           la, lb, lrot, delta});
    ph.label = Label::abnormal;
    ph.lesion_index = ph.ellipses.size() - 1;
  }
  return ph;
}

// Point-sampled rasterization at pixel centers.
inline ImageGrid rasterize(const Phantom& phantom, int n_pixels,
                           double field_of_view) {
  if (n_pixels < 8) throw std::domain_error("rasterize: n_pixels must be >= 8");
  if (!(field_of_view > 0.0))
    throw std::domain_error("rasterize: field_of_view must be > 0");
  ImageGrid img(n_pixels, field_of_view);
  for (int iy = 0; iy < n_pixels; ++iy) {
    const double y = img.coord(iy);
    for (int ix = 0; ix < n_pixels; ++ix) {
      const double x = img.coord(ix);
      double mu = 0.0;
      for (const auto& e : phantom.ellipses)
        if (e.contains(x, y)) mu += e.attenuation_delta;
      img.at(ix, iy) = mu;
    }
  }
  img.provenance.push_back("rasterize(n_pixels=" + std::to_string(n_pixels) + ")");
  return img;
}

// HU = 1000 * (mu - mu_water) / mu_water. Water is 0 HU, air -1000 HU.
inline double attenuation_to_hu(double mu, double mu_water) {
  if (!(mu_water > 0.0))
    throw std::domain_error("attenuation_to_hu: mu_water must be > 0");
  return 1000.0 * (mu - mu_water) / mu_water;
}

inline double hu_to_attenuation(double hu, double mu_water) {
  if (!(mu_water > 0.0))
    throw std::domain_error("hu_to_attenuation: mu_water must be > 0");
  return mu_water * (1.0 + hu / 1000.0);
}

inline nlohmann::json phantom_to_json(const Phantom& ph) {
  nlohmann::json ells = nlohmann::json::array();
  for (const auto& e : ph.ellipses)
    ells.push_back({{"center_x", e.center_x},
                    {"center_y", e.center_y},
                    {"semi_axis_a", e.semi_axis_a},
                    {"semi_axis_b", e.semi_axis_b},
                    {"rotation", e.rotation},
                    {"attenuation_delta", e.attenuation_delta}});
  nlohmann::json j{{"format_version", kFormatVersion},
                   {"seed", ph.seed},
                   {"label", label_name(ph.label)},
                   {"ellipses", std::move(ells)}};
  if (ph.lesion_index)
    j["lesion_index"] = *ph.lesion_index;
  else
    j["lesion_index"] = nullptr;
  return j;
}

inline Phantom phantom_from_json(const nlohmann::json& j) {
  Phantom ph;
  try {
    ph.seed = j.at("seed").get<uint64_t>();
    const std::string label = j.at("label").get<std::string>();
    if (label == "abnormal")
      ph.label = Label::abnormal;
    else if (label == "normal")
      ph.label = Label::normal;
    else
      throw data_error("phantom label must be normal|abnormal, got " + label);
    if (!j.at("lesion_index").is_null())
      ph.lesion_index = j.at("lesion_index").get<size_t>();
    for (const auto& je : j.at("ellipses")) {
      Ellipse e;
      e.center_x = je.at("center_x").get<double>();
      e.center_y = je.at("center_y").get<double>();
      e.semi_axis_a = je.at("semi_axis_a").get<double>();
      e.semi_axis_b = je.at("semi_axis_b").get<double>();
      e.rotation = je.at("rotation").get<double>();
      e.attenuation_delta = je.at("attenuation_delta").get<double>();
      ph.ellipses.push_back(e);
    }
  } catch (const nlohmann::json::exception& e) {
    throw data_error(std::string("bad phantom json: ") + e.what());
  }
  if ((ph.label == Label::abnormal) != ph.lesion_index.has_value())
    throw data_error("phantom label/lesion_index mismatch");
  if (ph.lesion_index && *ph.lesion_index >= ph.ellipses.size())
    throw data_error("phantom lesion_index out of range");
  return ph;
}

inline void save_phantom(const std::string& path, const Phantom& ph) {
  io::write_file(path, phantom_to_json(ph).dump(2) + "\n");
}

inline Phantom load_phantom(const std::string& path) {
  try {
    return phantom_from_json(nlohmann::json::parse(io::read_file(path)));
  } catch (const nlohmann::json::exception& e) {
    throw data_error("cannot parse phantom " + path + ": " + e.what());
  }
}

}  // namespace ctsim
