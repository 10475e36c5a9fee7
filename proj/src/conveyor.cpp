#include "tweezerlab/conveyor.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace tweezerlab {

DetuningProfile::DetuningProfile(std::vector<Breakpoint> breakpoints) : points_(std::move(breakpoints))
{
    if (points_.size() < 2)
        throw std::invalid_argument("detuning profile needs at least two breakpoints");
    for (std::size_t i = 0; i < points_.size(); ++i) {
        if (!std::isfinite(points_[i].t) || !std::isfinite(points_[i].detuning))
            throw std::invalid_argument("detuning profile breakpoints must be finite");
        if (i > 0 && !(points_[i].t > points_[i - 1].t))
            throw std::invalid_argument("detuning profile times must be strictly increasing");
    }
    cumulative_.resize(points_.size());
    cumulative_[0] = 0;
    for (std::size_t i = 1; i < points_.size(); ++i) {
        const double dt = points_[i].t - points_[i - 1].t;
        cumulative_[i] = cumulative_[i - 1] + 0.5 * (points_[i].detuning + points_[i - 1].detuning) * dt;
    }
}

DetuningProfile DetuningProfile::trapezoid(double hold_detuning, double hold, double ramp)
{
    if (!(ramp > 0) || !(hold >= 0))
        throw std::invalid_argument("trapezoid: ramp must be > 0 and hold >= 0");
    std::vector<Breakpoint> p{{0.0, 0.0}, {ramp, hold_detuning}};
    if (hold > 0)
        p.push_back({ramp + hold, hold_detuning});
    p.push_back({2 * ramp + hold, 0.0});
    return DetuningProfile(std::move(p));
}

double DetuningProfile::detuning(double t) const
{
    if (t <= points_.front().t)
        return points_.front().detuning;
    if (t >= points_.back().t)
        return points_.back().detuning;
    auto it = std::upper_bound(points_.begin(), points_.end(), t,
                               [](double v, const Breakpoint& b) { return v < b.t; });
    const Breakpoint& b = *it;
    const Breakpoint& a = *(it - 1);
    return a.detuning + (b.detuning - a.detuning) * (t - a.t) / (b.t - a.t);
}

double DetuningProfile::phase(double t) const
{
    if (t <= points_.front().t)
        return 0.0;
    if (t >= points_.back().t)
        return cumulative_.back() + points_.back().detuning * (t - points_.back().t);
    auto it = std::upper_bound(points_.begin(), points_.end(), t,
                               [](double v, const Breakpoint& b) { return v < b.t; });
    const std::size_t i = static_cast<std::size_t>(it - points_.begin()) - 1;
    const Breakpoint& a = points_[i];
    const double dt = t - a.t;
    const double slope = (points_[i + 1].detuning - a.detuning) / (points_[i + 1].t - a.t);
    return cumulative_[i] + a.detuning * dt + 0.5 * slope * dt * dt;
}

TransportSamples transport_kinematics(const DetuningProfile& profile, double trap_wavelength,
                                      int n_samples)
{
    if (n_samples < 2)
        throw std::invalid_argument("transport_kinematics: n_samples must be >= 2");
    if (!(trap_wavelength > 0))
        throw std::invalid_argument("transport_kinematics: wavelength must be > 0");
    TransportSamples out;
    const double t0 = profile.start(), t1 = profile.end();
    for (int i = 0; i < n_samples; ++i) {
        const double t = i + 1 == n_samples ? t1 : t0 + (t1 - t0) * i / (n_samples - 1);
        out.t.push_back(t);
        out.detuning.push_back(profile.detuning(t));
        out.displacement.push_back(0.5 * trap_wavelength * profile.phase(t));
    }
    out.final_displacement = 0.5 * trap_wavelength * profile.phase(t1);
    return out;
}

}  // namespace tweezerlab
