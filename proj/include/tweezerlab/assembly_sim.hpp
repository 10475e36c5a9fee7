#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "tweezerlab/loading_mc.hpp"
#include "tweezerlab/trap_potential.hpp"

namespace tweezerlab {

// One tone per tweezer; the bottom beam visits them in order and runs the
// conveyor on the tweezer it is resonant with.
struct AssemblyPlan {
    std::vector<double> tones;          // nu_i, Hz
    double axial_frequency = 638e3;     // f_a at the deepest site, Hz
    double resonance_ratio = 10;        // spacing >= ratio f_a, conveyor detuning <= f_a / ratio
    double transport_budget = 5e-3;     // tau_max per tweezer, s
    double ramp_time = 0.5e-3;          // trapezoid ramp, s
    double switch_time = 0.1e-6;        // tone jump, s
    double lifetime = 0.9;              // trap lifetime, s (inf: no decay, 0: immediate)
    double detection_latency = 0;       // s
    double probe_drop_threshold = 0.7;  // detect when D >= threshold D_max
    double max_drop = 0.7;              // D_max
    double evanescent_scale = 1;        // lambda_evan = scale lambda_a / (2 pi)
    double trap_wavelength = 935e-9;
    double atomic_wavelength = 852e-9;

    // Evenly spaced tones starting at `first`.
    static AssemblyPlan uniform(int m, double first = 80e6, double spacing = 10e6);

    [[nodiscard]] int size() const { return static_cast<int>(tones.size()); }
    [[nodiscard]] double evanescent_length() const;
    // Probe transmission drop D(z) = D_max exp(-2 z / lambda_evan).
    [[nodiscard]] double probe_drop(double z) const;
    // Height at which the drop first reaches the threshold, capped at lambda_a.
    [[nodiscard]] double detection_height() const;
    void validate() const;
};

struct Segment {
    int tweezer = 0;
    double start = 0;  // conveyor on
    double end = 0;    // conveyor off; the switch to the next tone follows
    double tone = 0;
};

struct Schedule {
    std::vector<Segment> segments;
    double switch_time = 0;
    [[nodiscard]] double total_duration() const;
    // nu_b(t) as (t, nu) breakpoints: flat on each segment, linear across switches.
    [[nodiscard]] std::vector<std::pair<double, double>> bottom_frequency() const;
    void validate() const;  // ordered, non-overlapping
};

// Nominal schedule with every tweezer granted the full budget, or with the
// given per-tweezer durations (each in (0, tau_max]).
Schedule plan_schedule(const AssemblyPlan& plan, std::span<const double> durations = {});

enum class SiteOutcome : std::uint8_t { Assembled, LostInTransport, Decayed, InitiallyEmpty };

const char* to_string(SiteOutcome outcome);

enum class EventKind : std::uint8_t { ConveyorOn, ConveyorOff, Detected, Parked, Lost, Decayed, ToneSwitch };

const char* to_string(EventKind kind);

struct AssemblyEvent {
    double t = 0;
    int tweezer = 0;
    EventKind kind = EventKind::ConveyorOn;
};

struct AssemblyReport {
    std::vector<SiteOutcome> outcomes;
    std::vector<double> initial_z;        // NaN for empty tweezers
    std::vector<double> park_time;        // NaN unless parked
    std::vector<double> park_z;           // NaN unless parked
    std::vector<double> hold_detuning;    // conveyor plateau per tweezer, Hz (negative = downward)
    std::vector<double> closed_form_survival;  // exp(-(t_end - t_park) / lifetime), NaN unless parked
    Schedule schedule;
    std::vector<AssemblyEvent> events;
    double duration = 0;
    int resonance_violations = 0;         // segments whose plateau exceeds f_a / ratio

    [[nodiscard]] int count(SiteOutcome outcome) const;
    [[nodiscard]] int parked() const;
    // Mean closed-form survival over parked atoms; NaN when none parked.
    [[nodiscard]] double mean_closed_form_survival() const;
};

// Draws per-tweezer initial heights: a uniformly chosen loading trajectory
// puts an atom at its bound site, otherwise the tweezer is empty.
class OccupancySampler {
public:
    OccupancySampler(const LoadingReport& loading, std::span<const TrapSite> sites);
    // Fixed occupation probability with every atom at height z.
    OccupancySampler(double probability, double z);

    [[nodiscard]] std::vector<std::optional<double>> draw(int m, Rng& rng) const;

private:
    std::vector<double> site_z_;       // per loading trajectory, NaN when unbound
    double probability_ = 0;
    double z_ = 0;
};

// Event-driven run. Decay is exponential with the plan lifetime from t = 0
// for every atom; the conveyor runs a trapezoid sized to bring the atom to the
// surface exactly at tau_max and halts detection_latency after the probe drop
// reaches the threshold. Empty, decayed and lost tweezers use the full budget.
AssemblyReport simulate_assembly(const AssemblyPlan& plan, const std::vector<std::optional<double>>& initial_z,
                                 std::uint64_t seed);
AssemblyReport simulate_assembly(const AssemblyPlan& plan, const OccupancySampler& occupancy, std::uint64_t seed);

// Throws std::logic_error when two conveyors overlap in the event log.
void check_single_conveyor(const AssemblyReport& report);

struct SiteSurvival {
    int parked = 0;
    int survived = 0;
    double mc = 0;           // survived / parked
    double closed_form = 0;  // mean exp(-(t_end - t_park) / lifetime) over parked runs
    double sigma = 0;        // binomial error of mc given the closed-form probabilities
    [[nodiscard]] double z_score() const { return sigma > 0 ? (mc - closed_form) / sigma : 0.0; }
};

struct SurvivalSummary {
    std::vector<SiteSurvival> sites;
    SiteSurvival pooled;
    double expected_assembled = 0;  // mean over runs of sum of closed-form survival
};

// Survival of parked atoms over many independent runs of the same plan.
SurvivalSummary survival_summary(std::span<const AssemblyReport> reports, const AssemblyPlan& plan);

}  // namespace tweezerlab
