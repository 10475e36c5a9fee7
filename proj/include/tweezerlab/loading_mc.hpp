#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "tweezerlab/constants.hpp"
#include "tweezerlab/parallel.hpp"
#include "tweezerlab/potential_map.hpp"
#include "tweezerlab/trap_potential.hpp"

namespace tweezerlab {

// Doppler cooling as linear damping plus isotropic recoil kicks of h/lambda_a.
struct CoolingModel {
    double damping_coefficient = 2e3 * PhysicalConstants{}.mass;  // beta, kg/s
    double scattering_rate = 1e5;                                  // Hz
};

// Atoms enter the box |x|, |y| <= box_width/2, 0 <= z <= box_height from the
// top face or the four sides; the bottom face is the surface.
struct MCConfig {
    double box_width = 10e-6;
    double box_height = 20e-6;
    int n_trajectories = 10000;
    double temperature = 20e-6;  // K
    double duration = 1e-3;      // s
    double dt = 0.5e-6;          // s, halved automatically if the traps demand it
    CoolingModel cooling{};
    std::uint64_t seed = 1;
    double blowup_factor = 100;  // kinetic energy above this x (|U_min| + k_B T) is flagged

    void validate() const;
};

struct AtomState {
    std::array<double, 3> position{};  // m
    std::array<double, 3> velocity{};  // m/s
};

enum class Outcome : std::uint8_t { Bound, Escaped, Adsorbed, Flagged };

const char* to_string(Outcome outcome);

struct TrajectoryResult {
    Outcome outcome = Outcome::Escaped;
    int site = 0;  // 1-based site index for bound atoms, 0 otherwise
    double final_z = 0;
};

struct LoadingReport {
    int n_trajectories = 0;
    int bound = 0;
    int escaped = 0;
    int adsorbed = 0;
    int flagged = 0;
    std::vector<int> site_counts;  // site i at [i - 1]
    double dt_used = 0;
    std::uint64_t seed = 0;
    std::vector<TrajectoryResult> trajectories;

    [[nodiscard]] double fraction(int count) const { return static_cast<double>(count) / n_trajectories; }
    [[nodiscard]] double p_tot() const { return fraction(bound); }
    [[nodiscard]] std::vector<double> site_histogram() const;
    // Share of bound atoms in the first site; 0 when nothing is bound.
    [[nodiscard]] double first_site_share() const;
};

using Rng = std::mt19937_64;

// Independent stream for trajectory `index`; depends only on (seed, index).
Rng trajectory_rng(std::uint64_t seed, std::uint64_t index);

// Entry state on a face chosen in proportion to its area (uniform inward
// flux), normal speed flux-weighted, tangential components thermal.
AtomState sample_entry(Rng& rng, const MCConfig& config, const PhysicalConstants& constants);

// Force field and cooling seen by one trajectory.
class Langevin {
public:
    Langevin(const PotentialMap& potential, const CoolingModel& cooling, double dt);

    // Advance one step: damped velocity Verlet, then the recoil kicks whose
    // Poisson event times fall inside the step. `next_kick` is the running
    // event clock (absolute time), `t` the time at the start of the step.
    void step(AtomState& state, double t, double& next_kick, Rng& rng) const;

    [[nodiscard]] double energy(const AtomState& state) const;
    [[nodiscard]] double dt() const { return dt_; }
    [[nodiscard]] const PotentialMap& potential() const { return *potential_; }

private:
    const PotentialMap* potential_;
    double dt_;
    double mass_;
    double half_damping_;   // exp(-beta dt / 2m)
    double rate_;
    double kick_;           // h / (lambda_a m)
};

// Height of the on-axis barrier between the surface and the first site.
// Below it the potential falls monotonically to the surface, so an atom
// moving inward there is counted as adsorbed; this keeps the integrator out of
// the singular Casimir-Polder core. 0 when there is no surface or no barrier.
double surface_barrier_height(const PotentialMap& potential);

// Largest dt = config.dt / 2^k with dt <= 1 / (20 f_max).
double stable_time_step(double requested, double max_axial_frequency);

namespace kernels {

// Run every trajectory in order on the calling thread.
std::vector<TrajectoryResult> run_trajectories_serial(const MCConfig& config, const PotentialMap& potential,
                                                      std::span<const double> site_z, double dt);

// Same trajectories distributed over OpenMP workers; each trajectory owns
// its RNG stream and result slot, so the output is bitwise equal to serial.
std::vector<TrajectoryResult> run_trajectories_parallel(const MCConfig& config, const PotentialMap& potential,
                                                        std::span<const double> site_z, double dt);

}  // namespace kernels

// Monte Carlo loading into the sites of `potential`. Bound: E < 0, inside the
// box and above the surface at the end; assigned to the nearest site in z.
// Adsorbed: reached z <= 0, or moving inward below surface_barrier_height().
LoadingReport run_loading(const MCConfig& config, const PotentialMap& potential,
                          std::span<const TrapSite> sites, Execution execution = Execution::Parallel);

// N_a = rho0 A v t.
double flux_atom_estimate(double density, double area, double mean_speed, double time);

}  // namespace tweezerlab
