#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "tweezerlab/constants.hpp"
#include "tweezerlab/quadrature.hpp"

namespace tweezerlab {

struct CameraModel {
    double electrons_per_count = 3;
    double em_gain = 30;
    double quantum_efficiency = 0.5;
    double optics_transmittance = 0.15;
    double collection_fraction = 0.03;
    double pixel_pitch = 800e-9;   // object-plane pixel size, m
    double exposure = 30e-3;       // s
    int counting_pixels = 6;       // counting area is counting_pixels^2

    void validate() const;
    // Overall counts per scattered photon.
    [[nodiscard]] double counts_per_photon() const;
};

// N_p = counts adc / (G QE T Omega) and its inverse.
double photons_from_counts(double counts, const CameraModel& camera);
double counts_from_photons(double photons, const CameraModel& camera);

// dT = (2/3) N_p E_R / k_B, kelvin.
double recoil_heating(double photons, const PhysicalConstants& constants);

// Scalar paraxial point-spread function with defocus,
//   h(v, u) = 2 int_0^1 J0(v p) exp(-i u p^2 / 2) p dp,
// v = k NA r, u = k NA^2 dz. Normalized so int_0^inf |h|^2 v dv = 2 for any u.
class DefocusPsf {
public:
    explicit DefocusPsf(double numerical_aperture = 0.35, double wavelength = 852e-9);

    [[nodiscard]] double intensity(double r, double defocus) const;
    // Fraction of the emitted image-plane power falling in a centered square
    // of half-side `half_side` (object-plane units).
    [[nodiscard]] double square_fraction(double half_side, double defocus) const;
    // Same for a disk; used to check normalization.
    [[nodiscard]] double disk_fraction(double radius, double defocus) const;

    [[nodiscard]] double numerical_aperture() const { return na_; }
    [[nodiscard]] double wavelength() const { return wavelength_; }

private:
    [[nodiscard]] double v_of(double r) const;
    [[nodiscard]] double u_of(double dz) const;
    [[nodiscard]] double radial_integral(double v_lo, double v_hi, double u, bool square, double v_half) const;

    [[nodiscard]] double h_squared(double v, double u) const;

    double na_;
    double wavelength_;
    // Pupil rules of increasing order; the smallest one resolving the
    // oscillation of J0(v p) exp(-i u p^2 / 2) is used.
    std::vector<QuadratureRule> pupil_rules_;
};

// Expected counts in the counting area from an atom at height atom_z above a
// surface placed at the image focus. The image dipole at -atom_z adds
// incoherently with weight R. `photons` is the number scattered in the exposure.
struct DefocusedCounts {
    double counts;          // in the counting area
    double total_counts;    // reaching the camera, atom + image, any position
    double capture_fraction;
};
DefocusedCounts defocused_counts(double atom_z, const CameraModel& camera, double reflectance,
                                 double photons, const DefocusPsf& psf = DefocusPsf{});

// Composite-Gaussian histogram model. occurrences[n] is P_n (shots with n
// atoms); widths follow sigma_0 = w_bg / sqrt 2, sigma_n = w sqrt(n I_a + I_bg) / sqrt 2.
struct CompositeGaussianParams {
    std::vector<double> occurrences;  // n = 0..n_max
    double background = 0;            // I_bg
    double background_width = 0;      // w_bg
    double atom_counts = 0;           // I_a
    double atom_width = 0;            // w

    [[nodiscard]] int n_max() const { return static_cast<int>(occurrences.size()) - 1; }
    [[nodiscard]] double mean(int n) const;
    [[nodiscard]] double sigma(int n) const;
    // C(I): occurrences per unit count.
    [[nodiscard]] double density(double counts) const;
    void validate() const;
};

struct CountHistogram {
    std::vector<double> edges;              // counts, strictly increasing
    std::vector<std::int64_t> occurrences;  // one per bin
    std::int64_t n_shots = 0;

    [[nodiscard]] std::size_t bins() const { return occurrences.size(); }
    [[nodiscard]] double center(std::size_t i) const { return 0.5 * (edges[i] + edges[i + 1]); }
    [[nodiscard]] double width(std::size_t i) const { return edges[i + 1] - edges[i]; }
    void validate() const;
};

// Uniform binning of raw samples over [lo, hi); samples outside are dropped,
// so n_shots counts only binned samples.
CountHistogram bin_counts(std::span<const double> samples, double lo, double hi, double bin_width);

// Occupancy law for synthetic data: explicit P(n) or Poisson(nbar), the
// latter optionally truncated to n <= max_atoms and renormalized.
struct OccupancyLaw {
    std::vector<double> probabilities;  // used when non-empty
    double poisson_mean = 0;
    int max_atoms = -1;                 // < 0: untruncated

    static OccupancyLaw poisson(double mean, int max_atoms = -1) { return {{}, mean, max_atoms}; }
    static OccupancyLaw explicit_law(std::vector<double> p) { return {std::move(p), 0, -1}; }
    int draw(std::mt19937_64& rng) const;
};

struct SynthSpec {
    double background = 221;
    double background_width = 138;
    double atom_counts = 853;
    double atom_width = 8.4;
    OccupancyLaw occupancy = OccupancyLaw::poisson(1.0, 3);  // support of the default n_max = 3 fit
    int n_shots = 800;
    double bin_width = 25;
    std::uint64_t seed = 1;
};

struct SynthResult {
    CountHistogram histogram;
    std::vector<int> atoms;       // occupancy drawn per shot
    std::vector<double> counts;   // raw count per shot
};

// Per shot: n from the occupancy law, then counts ~ Normal(n I_a + I_bg, sigma_n).
SynthResult synth_histogram(const SynthSpec& spec);

}  // namespace tweezerlab
