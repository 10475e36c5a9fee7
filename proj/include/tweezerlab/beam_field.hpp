#pragma once

#include <complex>
#include <optional>
#include <span>
#include <vector>

#include "tweezerlab/layered_optics.hpp"

namespace tweezerlab {

enum class BeamDirection { TopDown, BottomUp };

struct BeamSpec {
    double wavelength = 935e-9;       // m
    double power = 5e-3;              // W
    double waist = 1.2e-6;            // 1/e^2 intensity radius at focus, m
    double numerical_aperture = 0.35;
    BeamDirection direction = BeamDirection::TopDown;
    double frequency_offset = 0;      // Hz
    double phase_offset = 0;          // rad

    void validate() const;
};

// Everything needed to evaluate the trapping field above the stack.
//
// z is measured upward from the top surface of the stack. focus_offset is the
// height of the tweezer focus (0 = focused on the surface). relative_phase is
// the bottom-beam phase in cycles; increasing it moves the fringes away from
// the surface by lambda/2 per cycle. Zero means the bottom beam interferes
// constructively with the reflected tweezer beam at the first stationary
// lattice maximum ("in-phase"); 0.5 is "out-of-phase".
// reflection_scale multiplies the reflected amplitude (waveguide surrogate).
struct TrapConfiguration {
    BeamSpec top_beam{};
    std::optional<BeamSpec> bottom_beam;
    LayerStack stack = membrane_stack();
    double focus_offset = 0;
    double relative_phase = 0;
    double reflection_scale = 1.0;
};

// Membrane defaults: 5 mW tweezer; with_bottom adds the 84 mW, 7 um bottom beam.
TrapConfiguration membrane_configuration(bool with_bottom = false, double relative_phase = 0);

// Planar stand-in for the waveguide: the membrane stack with the reflected
// amplitude scaled by sqrt(R_w / R_m), R_m taken at normal incidence.
TrapConfiguration waveguide_surrogate(TrapConfiguration config, double waveguide_reflectance = 0.03);

// Canonical phase in [0, 1).
double canonical_phase(double cycles);

struct FocusOptions {
    double tolerance = 1e-6;      // relative, against the focal amplitude
    double max_radius = 8e-6;     // extent of the region the rule must resolve
    double max_defocus = 30e-6;
    int min_order = 16;
    int max_order = 2048;
};

// One plane-wave component of the focused beam.
struct AngularNode {
    double sin_theta;
    double cos_theta;
    double amplitude;  // quadrature weight times pupil and normalization
};

// Scalar angular-spectrum model of a beam focused through an aperture of
// numerical aperture NA, travelling toward -z:
//
//   E(rho, z) = C sum_j g(s_j) s_j cos_j w_j J0(k rho s_j) exp(-i k cos_j z)
//
// with s = sin(theta) and a Gaussian pupil g(s) = exp(-(s/s0)^2) truncated at
// NA. s0 is solved so that the focal 1/e^2 intensity radius equals the waist;
// C fixes the transverse power integral to the beam power (exact by Parseval).
// |E|^2 is an intensity in W/m^2. z is relative to the focus.
class FocusedBeam {
public:
    explicit FocusedBeam(const BeamSpec& spec, const FocusOptions& options = {});

    [[nodiscard]] Complex field(double rho, double z) const;
    [[nodiscard]] double intensity(double rho, double z) const { return std::norm(field(rho, z)); }

    [[nodiscard]] const BeamSpec& spec() const { return spec_; }
    [[nodiscard]] double wavenumber() const { return k_; }
    [[nodiscard]] double pupil_width() const { return pupil_width_; }
    [[nodiscard]] int quadrature_order() const { return static_cast<int>(nodes_.size()); }
    [[nodiscard]] double achieved_tolerance() const { return achieved_tolerance_; }
    [[nodiscard]] std::span<const AngularNode> nodes() const { return nodes_; }

private:
    BeamSpec spec_;
    double k_ = 0;
    double pupil_width_ = 0;
    double achieved_tolerance_ = 0;
    std::vector<AngularNode> nodes_;
};

// Per-point decomposition of the field above the stack.
struct FieldComponents {
    Complex incident;
    Complex reflected;
    Complex bottom;

    [[nodiscard]] Complex total() const { return incident + reflected + bottom; }
};

// Incident focused tweezer + its angle-resolved reflection from the stack
// (r averaged over S and P per component) + the bottom beam transmitted
// through the stack as a collimated Gaussian scaled by t(0).
class TrapField {
public:
    explicit TrapField(const TrapConfiguration& config, const FocusOptions& options = {});

    [[nodiscard]] FieldComponents components(double rho, double z) const;
    [[nodiscard]] Complex field(double rho, double z) const { return components(rho, z).total(); }
    [[nodiscard]] double intensity(double rho, double z) const { return std::norm(field(rho, z)); }

    [[nodiscard]] const TrapConfiguration& config() const { return config_; }
    [[nodiscard]] const FocusedBeam& beam() const { return beam_; }

    // Compact per-node weights so grid kernels can evaluate many points
    // without re-deriving the reflection:
    //   incident  = sum_j incident_weight[j]  J0(k rho s_j) exp(-i k c_j z)
    //   reflected = sum_j reflected_weight[j] J0(k rho s_j) exp(+i k c_j z)
    [[nodiscard]] std::span<const Complex> incident_weights() const { return incident_w_; }
    [[nodiscard]] std::span<const Complex> reflected_weights() const { return reflected_w_; }

    // Bottom-beam parameters: E_b = amplitude * exp(-rho^2/w^2) * exp(i k_b z).
    [[nodiscard]] bool has_bottom() const { return config_.bottom_beam.has_value(); }
    [[nodiscard]] Complex bottom_amplitude() const { return bottom_amp_; }
    [[nodiscard]] double bottom_waist() const { return bottom_waist_; }
    [[nodiscard]] double bottom_wavenumber() const { return bottom_k_; }

    // Height of the first on-axis maximum of |incident + reflected|^2.
    [[nodiscard]] double first_stationary_maximum() const { return first_max_; }

private:
    TrapConfiguration config_;
    FocusedBeam beam_;
    std::vector<Complex> incident_w_;
    std::vector<Complex> reflected_w_;
    Complex bottom_amp_{0, 0};
    double bottom_waist_ = 0;
    double bottom_k_ = 0;
    double first_max_ = 0;
};

// Focal-plane 1/e^2 intensity radius of a beam (diagnostic).
double focal_radius(const FocusedBeam& beam);

// Sampled |E(0, 0, z)|^2 on n_samples evenly spaced points of [z_min, z_max].
struct LineCut {
    std::vector<double> z;
    std::vector<double> value;
};
LineCut axial_line_cut(const TrapField& field, double z_min, double z_max, int n_samples);

}  // namespace tweezerlab
