#pragma once

#include <complex>
#include <limits>
#include <span>
#include <vector>

namespace tweezerlab {

using Complex = std::complex<double>;

enum class Polarization { S, P };

// One homogeneous film. The first and last layers of a stack are the
// semi-infinite incidence and exit media and carry kSemiInfinite.
struct Layer {
    static constexpr double kSemiInfinite = std::numeric_limits<double>::infinity();

    Complex index{1.0, 0.0};
    double thickness = kSemiInfinite;  // meters
};

// Ordered list of layers, incidence side first.
//
// Invariants (checked on construction): at least two layers, exactly the
// outer two are semi-infinite, boundary media are lossless, Im(n) >= 0.
// Interior layers may have zero thickness (they are then optically inert).
class LayerStack {
public:
    explicit LayerStack(std::vector<Layer> layers);

    [[nodiscard]] const std::vector<Layer>& layers() const { return layers_; }
    [[nodiscard]] std::size_t size() const { return layers_.size(); }
    [[nodiscard]] double incidence_index() const { return layers_.front().index.real(); }
    [[nodiscard]] double exit_index() const { return layers_.back().index.real(); }

    // Same films seen from the exit side.
    [[nodiscard]] LayerStack reversed() const;

private:
    std::vector<Layer> layers_;
};

struct MaterialIndices {
    double silica = 1.45;
    double silicon_nitride = 2.00;
};

// vacuum | SiO2 (2 um) | Si3N4 (550 nm) | vacuum, optionally with the 360 nm
// Si3N4 device layer on top.
LayerStack membrane_stack(const MaterialIndices& indices = {}, bool with_top_layer = false);

struct InterfaceCoefficients {
    Complex r;
    Complex t;
};

// Single-interface Fresnel amplitude coefficients for a wave incident from
// medium n1 (real) onto n2 at angle theta.
//
// Sign convention: r is the ratio of reflected to incident tangential electric
// field, so both polarizations give r = (n1 - n2) / (n1 + n2) at normal
// incidence (negative for a denser second medium) and r_s(0) == r_p(0).
// t is the ratio of the full electric-field amplitudes. Time dependence is
// exp(-i omega t); a forward wave accumulates phase exp(+i k z).
InterfaceCoefficients fresnel_interface(Complex n1, Complex n2, double theta, Polarization pol);

struct PlaneWaveResponse {
    Complex r;
    Complex t;
    double R = 0;
    double T = 0;
    Polarization polarization = Polarization::S;
    double angle = 0;       // radians, in the incidence medium
    double wavelength = 0;  // meters, vacuum
    bool evanescent_exit = false;  // total internal reflection into the exit medium
};

// Transfer-matrix response of the stack. The phase of r is referenced to the
// first interface, with the same convention as fresnel_interface().
PlaneWaveResponse stack_response(const LayerStack& stack, double wavelength, double theta,
                                 Polarization pol);

std::vector<PlaneWaveResponse> reflectance_spectrum(const LayerStack& stack, double wavelength,
                                                    std::span<const double> thetas,
                                                    Polarization pol);

}  // namespace tweezerlab
