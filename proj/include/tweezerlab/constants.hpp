#pragma once

#include <numbers>

namespace tweezerlab {

namespace si {
inline constexpr double planck = 6.62607015e-34;        // J s
inline constexpr double boltzmann = 1.380649e-23;       // J/K
inline constexpr double speed_of_light = 299792458.0;   // m/s
inline constexpr double vacuum_permittivity = 8.8541878128e-12;
inline constexpr double atomic_mass_unit = 1.66053906660e-27;
}  // namespace si

// Physical inputs shared by the trap, Monte Carlo and imaging models.
// `polarizability` is the scalar ground-state polarizability in C m^2/V; the
// default is replaced by calibrate_polarizability() in most workflows.
struct PhysicalConstants {
    double h = si::planck;
    double k_B = si::boltzmann;
    double mass = 132.905451933 * si::atomic_mass_unit;  // 133Cs
    double atomic_wavelength = 852e-9;                    // D2 line
    double trap_wavelength = 935e-9;                      // magic wavelength
    double polarizability = 4.0e-38;

    // E_R = h^2 / (2 lambda_a^2 m)
    [[nodiscard]] double recoil_energy() const
    {
        return h * h / (2.0 * atomic_wavelength * atomic_wavelength * mass);
    }

    // Single-photon recoil velocity h / (lambda_a m).
    [[nodiscard]] double recoil_velocity() const { return h / (atomic_wavelength * mass); }

    // U = -alpha I / (2 eps0 c); this is the coefficient multiplying I.
    [[nodiscard]] double light_shift_per_intensity() const
    {
        return -polarizability / (2.0 * si::vacuum_permittivity * si::speed_of_light);
    }

    [[nodiscard]] double joules_to_millikelvin(double energy) const { return energy / k_B * 1e3; }
    [[nodiscard]] double joules_to_hertz(double energy) const { return energy / h; }
};

}  // namespace tweezerlab
