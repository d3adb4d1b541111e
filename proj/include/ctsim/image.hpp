#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <json.hpp>

#include "ctsim/container_io.hpp"
#include "ctsim/errors.hpp"
#include "ctsim/version.hpp"

namespace ctsim {

// Square 2D scalar field of linear attenuation values (1/cm) on a pixel
// grid covering field_of_view x field_of_view centimeters, centered on the
// origin. Row-major storage, data[iy * n + ix]; iy grows with +y.
struct ImageGrid {
  int n_pixels = 0;
  double field_of_view = 0.0;  // cm
  std::vector<double> data;
  std::vector<std::string> provenance;

  ImageGrid() = default;
  ImageGrid(int n, double fov)
      : n_pixels(n), field_of_view(fov), data(static_cast<size_t>(n) * n, 0.0) {}

  double pixel_size() const { return field_of_view / n_pixels; }
  // Center coordinate of pixel column/row i.
  double coord(int i) const {
    return (i + 0.5 - 0.5 * n_pixels) * pixel_size();
  }

  double& at(int ix, int iy) { return data[static_cast<size_t>(iy) * n_pixels + ix]; }
  double at(int ix, int iy) const { return data[static_cast<size_t>(iy) * n_pixels + ix]; }
};

inline constexpr char kImageMagic[9] = "CTIMGG01";

inline std::string encode_image(const ImageGrid& img) {
  nlohmann::json header{{"format_version", kFormatVersion},
                        {"n_pixels", img.n_pixels},
                        {"field_of_view", img.field_of_view},
                        {"provenance", img.provenance}};
  return io::encode_container(kImageMagic, header, img.data);
}

inline void save_image(const std::string& path, const ImageGrid& img) {
  io::write_file(path, encode_image(img));
}

inline ImageGrid decode_image(const std::string& bytes, const std::string& origin) {
  auto c = io::decode_container(kImageMagic, bytes, origin);
  ImageGrid img;
  try {
    img.n_pixels = c.header.at("n_pixels").get<int>();
    img.field_of_view = c.header.at("field_of_view").get<double>();
    img.provenance = c.header.value("provenance", std::vector<std::string>{});
  } catch (const nlohmann::json::exception& e) {
    throw data_error("bad image header in " + origin + ": " + e.what());
  }
  if (img.n_pixels <= 0 ||
      c.payload.size() != static_cast<size_t>(img.n_pixels) * img.n_pixels)
    throw data_error("image payload size mismatch in " + origin);
  img.data = std::move(c.payload);
  return img;
}

inline ImageGrid load_image(const std::string& path) {
  return decode_image(io::read_file(path), path);
}

}  // namespace ctsim
