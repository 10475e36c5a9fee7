#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <vector>

#include "tweezerlab/beam_field.hpp"
#include "tweezerlab/constants.hpp"
#include "tweezerlab/parallel.hpp"
#include "tweezerlab/trap_potential.hpp"

namespace tweezerlab {

struct GridAxis {
    double min = 0;
    double max = 0;
    int count = 0;

    [[nodiscard]] double step() const { return (max - min) / (count - 1); }
    [[nodiscard]] double at(int i) const { return min + step() * i; }
    void validate(const char* name) const;
};

// Sampled complex field on a cylindrical (rho, z) grid; row-major, one row
// per z value.
struct FieldGrid {
    GridAxis rho;
    GridAxis z;
    std::vector<Complex> values;

    [[nodiscard]] Complex at(int i_rho, int i_z) const { return values[static_cast<std::size_t>(i_z) * rho.count + i_rho]; }
    [[nodiscard]] double intensity(int i_rho, int i_z) const { return std::norm(at(i_rho, i_z)); }
};

namespace kernels {

// Reference implementation, one point after another.
FieldGrid sample_field_serial(const TrapField& field, const GridAxis& rho, const GridAxis& z);

// OpenMP over z rows; identical arithmetic per point, so results are
// bitwise equal to the serial kernel for any worker count.
FieldGrid sample_field_parallel(const TrapField& field, const GridAxis& rho, const GridAxis& z);

}  // namespace kernels

FieldGrid sample_field(const TrapField& field, const GridAxis& rho, const GridAxis& z,
                       Execution execution = Execution::Parallel);

// Little-endian dump: "TWZF", uint32 version (1), uint64 n_rho, uint64 n_z,
// float64 rho[n_rho], float64 z[n_z], float64 |E|^2[n_z][n_rho].
void write_intensity_dump(std::ostream& os, const FieldGrid& grid);

// Tabulated dipole potential on a (rho, z) grid plus the analytic
// Casimir-Polder term. Cubic Hermite interpolation in both directions with
// node derivatives from central differences (mirror symmetry at rho = 0),
// so value and gradient are continuous.
class PotentialMap {
public:
    struct Sample {
        double value;
        double d_rho;
        double d_z;
    };

    PotentialMap(GridAxis rho, GridAxis z, std::vector<double> dipole,
                 PhysicalConstants constants, std::optional<SurfaceMaterial> surface);

    [[nodiscard]] Sample sample(double rho, double z) const;
    [[nodiscard]] double value(double rho, double z) const { return sample(rho, z).value; }

    // Cartesian helpers used by the integrator.
    [[nodiscard]] double value(const std::array<double, 3>& r) const;
    [[nodiscard]] std::array<double, 3> gradient(const std::array<double, 3>& r) const;

    [[nodiscard]] const GridAxis& rho_axis() const { return rho_; }
    [[nodiscard]] const GridAxis& z_axis() const { return z_; }
    [[nodiscard]] double dipole_at(int i_rho, int i_z) const { return nodes_[index(i_rho, i_z)][0]; }
    [[nodiscard]] const PhysicalConstants& constants() const { return constants_; }
    [[nodiscard]] const std::optional<SurfaceMaterial>& surface() const { return surface_; }
    [[nodiscard]] PotentialFunction function() const;

private:
    [[nodiscard]] std::size_t index(int i_rho, int i_z) const { return static_cast<std::size_t>(i_z) * rho_.count + i_rho; }
    Sample sample_dipole(double rho, double z) const;

    GridAxis rho_;
    GridAxis z_;
    // Per node: f, f_rho * h_rho, f_z * h_z, f_rho_z * h_rho * h_z
    std::vector<std::array<double, 4>> nodes_;
    PhysicalConstants constants_;
    std::optional<SurfaceMaterial> surface_;
};

// Light shift of a sampled field, no surface term.
PotentialMap dipole_potential(const FieldGrid& field, const PhysicalConstants& constants);

// Dipole + Casimir-Polder; the map consumed by site finding and the MC.
PotentialMap total_potential(const TrapField& field, const PhysicalConstants& constants,
                             const SurfaceMaterial& material, const GridAxis& rho,
                             const GridAxis& z, Execution execution = Execution::Parallel);

}  // namespace tweezerlab
