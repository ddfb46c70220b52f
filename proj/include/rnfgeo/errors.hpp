#pragma once

#include <stdexcept>
#include <string>

namespace rnfgeo {

// Quadrature failed to converge, a fit is not a clean power law, or a
// numerical result left its admissible range.
class numeric_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A power spectrum with negative entries beyond quadrature noise.
class spectrum_error : public numeric_error {
public:
    using numeric_error::numeric_error;
};

// A kernel-level quantity was requested for a class where it does not exist
// (κ'(1) of a fractal-class kernel, a CRI on the class boundary).
class classification_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Invalid experiment configuration. `field()` names the offending key.
class config_error : public std::runtime_error {
public:
    config_error(std::string field, const std::string& what)
        : std::runtime_error(field + ": " + what), field_(std::move(field)) {}

    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

}  // namespace rnfgeo
