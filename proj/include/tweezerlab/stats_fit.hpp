#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "tweezerlab/imaging_model.hpp"
#include "tweezerlab/nlls.hpp"
#include "tweezerlab/parallel.hpp"

namespace tweezerlab {

// ---- histogram fits -------------------------------------------------------

struct BackgroundFit {
    double background = 0;          // I_bg
    double background_width = 0;    // w_bg
    double background_occurrence = 0;  // fitted P_0
    double p_atom = 0;              // P(n >= 1) = 1 - P_0 / n_shots
    double p_atom_error = 0;
    double cut = 0;                 // bins with centers <= cut were fitted
    NllsResult fit;
};

// Single Gaussian fitted to the low-count region: bins up to the first local
// minimum of the smoothed histogram after its mode (falling below half the
// mode height), or mode + 2 w_bg when there is none. `cut` overrides this.
BackgroundFit fit_background(const CountHistogram& histogram, std::optional<double> cut = std::nullopt);

struct OccupancyStats {
    std::vector<double> probabilities;  // P(n), sums to 1
    double mean = 0;
    double variance = 0;

    [[nodiscard]] double fano() const { return mean > 0 ? variance / mean : 0.0; }
};

// Normalizes non-negative weights (e.g. fitted P_n) into an occupancy law.
OccupancyStats occupancy_from(std::span<const double> weights);

struct PoissonFit {
    double mean = 0;             // ML Poisson mean, truncated at n_max
    double log_likelihood = 0;   // per shot
    double fano = 0;             // variance / mean of the input law
    double fano_error = 0;       // delta-method standard error; 0 without n_shots
    bool sub_poissonian = false;
    // variance / variance of the fitted truncated Poisson law. Truncation alone
    // pulls fano below 1 (Poisson(1) cut at n = 3 gives 0.86); this ratio does not.
    double dispersion_ratio = 0;
};

// ML fit of a Poisson law truncated to the support of `occupancy`. With
// n_shots > 0 the sub-Poissonian flag needs fano + 2 fano_error < 1, otherwise
// fano < 1. A law concentrated on one n returns that n.
PoissonFit fit_poisson(const OccupancyStats& occupancy, double n_shots = 0);

struct CompositeFit {
    CompositeGaussianParams params;
    Eigen::VectorXd errors;  // P_0..P_nmax, I_bg, w_bg, I_a, w
    OccupancyStats occupancy;
    PoissonFit poisson;
    BackgroundFit background;
    double initial_atom_counts = 0;
    NllsResult fit;

    // Integral of C(I) over all counts (= sum of P_n).
    [[nodiscard]] double model_total() const;
};

// Composite-Gaussian fit with Poisson-deviance residuals on each bin,
// expected occurrences = bin width x C(bin center). Initial values come from
// fit_background and the first significant smoothed peak above background.
// A background-only histogram fits with empty atom peaks; otherwise throws
// ComputationError when no atom peak can be found.
CompositeFit fit_composite_gaussian(const CountHistogram& histogram, int n_max = 3);

// ---- counts versus transport distance ------------------------------------

// I(z) = A exp(-z / zeta) for z > 0, 0 otherwise.
struct ExponentialModel {
    double amplitude = 0;
    double decay_length = 0;  // m

    [[nodiscard]] double operator()(double z) const
    {
        return z > 0 ? amplitude * std::exp(-z / decay_length) : 0.0;
    }
};

struct ExponentialFit {
    ExponentialModel model;
    NllsResult fit;
};

ExponentialFit fit_exponential_counts(std::span<const double> z, std::span<const double> counts);

struct TransportData {
    std::vector<double> displacement;  // final conveyor displacement dz_f (m), <= 0
    std::vector<double> counts;        // mean counts
    std::vector<double> errors;        // optional per-point sigma; empty = unweighted
};

struct TransportFitOptions {
    double trap_wavelength = 935e-9;
    double background = 0;      // I_bg added to every model point
    int n_configs = 100;
    std::uint64_t seed = 1;
    double nbar_guess = 1.0;
    double z_max_guess = 5e-6;
    Execution execution = Execution::Parallel;
};

struct EnsembleEstimate {
    std::vector<double> mean;
    std::vector<double> error_of_mean;
};

// Expected counts I_bg + nbar <sum over occupied sites>, with sites
// z_i = i lambda/2 uniform on i = 1..z_max/(lambda/2). The top site enters with
// its fractional weight, which keeps the model continuous in z_max.
double transport_expectation(const ExponentialModel& model, double nbar, double z_max, double displacement,
                             double trap_wavelength, double background);

namespace kernels {

// Average over n_configs random configurations {n ~ Poisson(nbar); n sites
// uniform on 1..i_max}. Configuration c draws from its own stream (seed, c).
EnsembleEstimate transport_ensemble_serial(const ExponentialModel& model, double nbar, double z_max,
                                           std::span<const double> displacement, double trap_wavelength,
                                           double background, int n_configs, std::uint64_t seed);
EnsembleEstimate transport_ensemble_parallel(const ExponentialModel& model, double nbar, double z_max,
                                             std::span<const double> displacement, double trap_wavelength,
                                             double background, int n_configs, std::uint64_t seed);

}  // namespace kernels

EnsembleEstimate transport_ensemble(const ExponentialModel& model, double nbar, double z_max,
                                    std::span<const double> displacement, double trap_wavelength,
                                    double background, int n_configs, std::uint64_t seed,
                                    Execution execution = Execution::Parallel);

int site_index_limit(double z_max, double trap_wavelength);

struct TransportFitResult {
    double nbar = 0;
    double z_max = 0;
    int i_max = 0;          // round(z_max / (lambda/2))
    double nbar_error = 0;
    double z_max_error = 0;
    double residual_norm = 0;
    EnsembleEstimate ensemble;  // at the fitted parameters, per data point
    NllsResult fit;
};

// Least squares over (nbar, z_max) against the expectation model, then the
// configuration ensemble at the optimum for the reported mean and band.
TransportFitResult fit_transport_ensemble(const TransportData& data, const ExponentialModel& model,
                                          const TransportFitOptions& options = {});

}  // namespace tweezerlab
