#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tweezerlab/beam_field.hpp"
#include "tweezerlab/constants.hpp"

namespace tweezerlab {

// Two-parameter Casimir-Polder surface model U = -C4 / (z^3 (z + lambda_bar)).
struct SurfaceMaterial {
    std::string name = "SiO2";
    double c4_over_h = 158.0;   // Hz um^4
    double lambda_bar = 136e-9; // m

    static SurfaceMaterial silica() { return {"SiO2", 158.0, 136e-9}; }
    static SurfaceMaterial silicon_nitride() { return {"Si3N4", 267.0, 136e-9}; }
    static SurfaceMaterial by_name(const std::string& name);
};

// Joules; throws for z <= 0.
double casimir_polder(double z, const SurfaceMaterial& material,
                      const PhysicalConstants& constants = {});

// dU/dz in J/m.
double casimir_polder_gradient(double z, const SurfaceMaterial& material,
                               const PhysicalConstants& constants = {});

// Light shift U = -alpha I / (2 eps0 c), joules.
inline double dipole_potential(double intensity, const PhysicalConstants& constants)
{
    return constants.light_shift_per_intensity() * intensity;
}

// Potential as a function of cylindrical position (rho, z).
using PotentialFunction = std::function<double(double rho, double z)>;

// Direct (quadrature-level) evaluation of dipole + Casimir-Polder potential.
class TrapPotential {
public:
    TrapPotential(const TrapField& field, PhysicalConstants constants, SurfaceMaterial material);

    [[nodiscard]] double operator()(double rho, double z) const;
    [[nodiscard]] double dipole(double rho, double z) const;
    [[nodiscard]] PotentialFunction function() const;

    [[nodiscard]] const PhysicalConstants& constants() const { return constants_; }
    [[nodiscard]] const SurfaceMaterial& material() const { return material_; }
    [[nodiscard]] const TrapField& field() const { return *field_; }

private:
    const TrapField* field_;
    PhysicalConstants constants_;
    SurfaceMaterial material_;
};

struct TrapSite {
    int index = 0;            // 1 = closest to the surface
    double z = 0;             // m
    double depth = 0;         // J, axial escape barrier
    double potential = 0;     // J, value at the minimum
    double axial_frequency = 0;                 // Hz
    std::optional<double> radial_frequency;     // Hz, empty when not radially trapped
    double eta_axial_sq = 0;
    std::optional<double> eta_radial_sq;

    [[nodiscard]] bool radially_trapped() const { return radial_frequency.has_value(); }
};

struct SiteSearchOptions {
    double min_depth_kelvin = 1e-6;   // minima shallower than k_B x this are ignored
    double axial_step = 0;            // finite-difference step; 0 -> lambda_t / 400
    double radial_step = 20e-9;
};

// Local minima of a sampled axial line-cut U(0, z), refined and characterized
// with the full potential. Depth is the lower of the two nearest axial
// barriers. Trap frequencies come from central second differences. Empty
// result is valid.
std::vector<TrapSite> find_sites(std::span<const double> z, std::span<const double> potential,
                                 const PotentialFunction& evaluate,
                                 const PhysicalConstants& constants,
                                 const SiteSearchOptions& options = {});

// eta^2 = E_R / (h f); throws for f <= 0.
double lamb_dicke(double frequency, const PhysicalConstants& constants);

struct AxialProfile {
    std::vector<double> z;
    std::vector<double> potential;
};

// U(0, z) sampled on n evenly spaced points of [z_min, z_max].
AxialProfile axial_potential(const TrapPotential& potential, double z_min, double z_max, int n);

// Sites of the on-axis line-cut on [z_min, z_max] at step <= lambda_t / 40.
std::vector<TrapSite> characterize_sites(const TrapPotential& potential, double z_min, double z_max,
                                         const SiteSearchOptions& options = {});

struct CalibrationResult {
    double polarizability = 0;   // C m^2 / V
    double deepest_depth = 0;    // J
    int deepest_index = 0;
};

// Polarizability for which the deepest site of `config` has the target depth.
CalibrationResult calibrate_polarizability(const TrapConfiguration& config,
                                           PhysicalConstants constants,
                                           const SurfaceMaterial& material,
                                           double target_depth_kelvin = 3e-3,
                                           double z_max = 4e-6);

}  // namespace tweezerlab
