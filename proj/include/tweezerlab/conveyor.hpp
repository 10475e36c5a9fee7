#pragma once

#include <span>
#include <vector>

namespace tweezerlab {

// Piecewise-linear bottom-beam detuning, breakpoints (t [s], dnu [Hz]).
class DetuningProfile {
public:
    struct Breakpoint {
        double t;
        double detuning;
    };

    explicit DetuningProfile(std::vector<Breakpoint> breakpoints);

    // Ramp 0 -> hold_detuning in `ramp`, hold for `hold`, ramp back to 0.
    static DetuningProfile trapezoid(double hold_detuning, double hold, double ramp = 1e-3);

    [[nodiscard]] const std::vector<Breakpoint>& breakpoints() const { return points_; }
    [[nodiscard]] double start() const { return points_.front().t; }
    [[nodiscard]] double end() const { return points_.back().t; }
    [[nodiscard]] double detuning(double t) const;

    // Accumulated phase int_{start}^{t} dnu dt' in cycles, exact.
    [[nodiscard]] double phase(double t) const;

private:
    std::vector<Breakpoint> points_;
    std::vector<double> cumulative_;  // phase at each breakpoint
};

struct TransportSamples {
    std::vector<double> t;
    std::vector<double> detuning;
    std::vector<double> displacement;  // m, positive = away from the surface
    double final_displacement = 0;
};

// dz(t) = (lambda_t / 2) int_0^t dnu(t') dt', sampled at n evenly spaced
// times across the profile (n >= 2).
TransportSamples transport_kinematics(const DetuningProfile& profile, double trap_wavelength,
                                      int n_samples = 201);

}  // namespace tweezerlab
