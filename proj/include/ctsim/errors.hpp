#pragma once

#include <stdexcept>
#include <string>

namespace ctsim {

// Invalid configuration supplied by the caller (bad spec field, bad flag).
// CLI exit code 2.
class config_error : public std::runtime_error {
 public:
  explicit config_error(const std::string& what) : std::runtime_error(what) {}
};

// A phantom (or image support) extends beyond the detector field of view.
// Projection would silently truncate, so we refuse instead.
class truncation_error : public config_error {
 public:
  explicit truncation_error(const std::string& what) : config_error(what) {}
};

// Missing or corrupt on-disk state (manifest entries, container files).
// CLI exit code 3.
class data_error : public std::runtime_error {
 public:
  explicit data_error(const std::string& what) : std::runtime_error(what) {}
};

// A metric that has no defined value on the given input (e.g. AUROC on a
// single-class label set). Raised as a typed error, never returned as NaN.
// CLI exit code 4.
class undefined_metric_error : public std::runtime_error {
 public:
  explicit undefined_metric_error(const std::string& what)
      : std::runtime_error(what) {}
};

}  // namespace ctsim
