#include "tweezerlab/assembly_sim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

#include <boost/math/tools/roots.hpp>

#include "tweezerlab/conveyor.hpp"

namespace tweezerlab {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void require(bool ok, const std::string& message)
{
    if (!ok)
        throw std::invalid_argument("assembly plan: " + message);
}

}  // namespace

AssemblyPlan AssemblyPlan::uniform(int m, double first, double spacing)
{
    if (m < 1)
        throw std::invalid_argument("assembly plan: need at least one tweezer");
    AssemblyPlan p;
    for (int i = 0; i < m; ++i)
        p.tones.push_back(first + spacing * i);
    return p;
}

double AssemblyPlan::evanescent_length() const
{
    return evanescent_scale * atomic_wavelength / (2 * std::numbers::pi);
}

double AssemblyPlan::probe_drop(double z) const
{
    return max_drop * std::exp(-2 * std::max(z, 0.0) / evanescent_length());
}

double AssemblyPlan::detection_height() const
{
    return std::min(atomic_wavelength, -0.5 * evanescent_length() * std::log(probe_drop_threshold));
}

void AssemblyPlan::validate() const
{
    require(!tones.empty(), "need at least one tone");
    for (double t : tones)
        require(std::isfinite(t), "tones must be finite");
    require(axial_frequency > 0 && std::isfinite(axial_frequency), "axial_frequency must be > 0");
    require(resonance_ratio >= 1, "resonance_ratio must be >= 1");
    for (std::size_t i = 1; i < tones.size(); ++i)
        require(std::abs(tones[i] - tones[i - 1]) >= resonance_ratio * axial_frequency,
                "tone spacing between tweezers " + std::to_string(i - 1) + " and " + std::to_string(i) +
                    " is below resonance_ratio x f_a");
    require(transport_budget > 0 && std::isfinite(transport_budget), "transport_budget must be > 0");
    require(ramp_time > 0 && 2 * ramp_time <= transport_budget, "ramp_time must satisfy 0 < 2 ramp <= tau_max");
    require(switch_time >= 0 && switch_time * resonance_ratio * axial_frequency <= 1,
            "switch_time must be >= 0 and <= 1 / (resonance_ratio f_a)");
    require(lifetime >= 0, "lifetime must be >= 0");
    require(detection_latency >= 0 && std::isfinite(detection_latency), "detection_latency must be >= 0");
    require(probe_drop_threshold > 0 && probe_drop_threshold < 1, "probe_drop_threshold must lie in (0, 1)");
    require(max_drop > 0 && max_drop <= 1, "max_drop must lie in (0, 1]");
    require(evanescent_scale > 0, "evanescent_scale must be > 0");
    require(trap_wavelength > 0 && atomic_wavelength > 0, "wavelengths must be > 0");
}

double Schedule::total_duration() const { return segments.empty() ? 0.0 : segments.back().end; }

std::vector<std::pair<double, double>> Schedule::bottom_frequency() const
{
    std::vector<std::pair<double, double>> out;
    for (const auto& s : segments) {
        out.emplace_back(s.start, s.tone);
        out.emplace_back(s.end, s.tone);
    }
    return out;
}

void Schedule::validate() const
{
    for (std::size_t i = 0; i < segments.size(); ++i) {
        if (!(segments[i].end > segments[i].start))
            throw std::logic_error("schedule segment " + std::to_string(i) + " is empty");
        if (i > 0 && segments[i].start < segments[i - 1].end + switch_time * (1 - 1e-12))
            throw std::logic_error("schedule segments " + std::to_string(i - 1) + " and " + std::to_string(i) +
                                   " overlap");
    }
}

Schedule plan_schedule(const AssemblyPlan& plan, std::span<const double> durations)
{
    plan.validate();
    if (!durations.empty() && durations.size() != plan.tones.size())
        throw std::invalid_argument("plan_schedule: one duration per tweezer required");
    Schedule s;
    s.switch_time = plan.switch_time;
    double t = 0;
    for (int i = 0; i < plan.size(); ++i) {
        const double d = durations.empty() ? plan.transport_budget : durations[i];
        if (!(d > 0 && d <= plan.transport_budget * (1 + 1e-12)))
            throw std::invalid_argument("plan_schedule: durations must lie in (0, tau_max]");
        if (i > 0)
            t += plan.switch_time;
        s.segments.push_back({i, t, t + d, plan.tones[i]});
        t += d;
    }
    s.validate();
    return s;
}

const char* to_string(SiteOutcome outcome)
{
    switch (outcome) {
    case SiteOutcome::Assembled: return "assembled";
    case SiteOutcome::LostInTransport: return "lost-in-transport";
    case SiteOutcome::Decayed: return "decayed";
    case SiteOutcome::InitiallyEmpty: return "initially-empty";
    }
    return "unknown";
}

const char* to_string(EventKind kind)
{
    switch (kind) {
    case EventKind::ConveyorOn: return "conveyor_on";
    case EventKind::ConveyorOff: return "conveyor_off";
    case EventKind::Detected: return "detected";
    case EventKind::Parked: return "parked";
    case EventKind::Lost: return "lost";
    case EventKind::Decayed: return "decayed";
    case EventKind::ToneSwitch: return "tone_switch";
    }
    return "unknown";
}

int AssemblyReport::count(SiteOutcome outcome) const
{
    return static_cast<int>(std::count(outcomes.begin(), outcomes.end(), outcome));
}

int AssemblyReport::parked() const
{
    return static_cast<int>(std::count_if(park_time.begin(), park_time.end(), [](double t) { return !std::isnan(t); }));
}

double AssemblyReport::mean_closed_form_survival() const
{
    double sum = 0;
    int n = 0;
    for (double s : closed_form_survival)
        if (!std::isnan(s)) {
            sum += s;
            ++n;
        }
    return n > 0 ? sum / n : kNaN;
}

OccupancySampler::OccupancySampler(const LoadingReport& loading, std::span<const TrapSite> sites)
{
    if (loading.trajectories.empty())
        throw std::invalid_argument("occupancy sampler: loading report has no trajectories");
    site_z_.reserve(loading.trajectories.size());
    for (const auto& tr : loading.trajectories) {
        if (tr.outcome == Outcome::Bound) {
            if (tr.site < 1 || tr.site > static_cast<int>(sites.size()))
                throw std::invalid_argument("occupancy sampler: bound trajectory refers to unknown site " +
                                            std::to_string(tr.site));
            site_z_.push_back(sites[tr.site - 1].z);
        }
        else {
            site_z_.push_back(kNaN);
        }
    }
}

OccupancySampler::OccupancySampler(double probability, double z) : probability_(probability), z_(z)
{
    if (!(probability >= 0 && probability <= 1))
        throw std::invalid_argument("occupancy sampler: probability must lie in [0, 1]");
    if (!(z > 0))
        throw std::invalid_argument("occupancy sampler: atom height must be > 0");
}

std::vector<std::optional<double>> OccupancySampler::draw(int m, Rng& rng) const
{
    std::vector<std::optional<double>> out(m);
    if (site_z_.empty()) {
        std::bernoulli_distribution occupied(probability_);
        for (auto& z : out)
            if (occupied(rng))
                z = z_;
        return out;
    }
    std::uniform_int_distribution<std::size_t> pick(0, site_z_.size() - 1);
    for (auto& z : out) {
        const double v = site_z_[pick(rng)];
        if (!std::isnan(v))
            z = v;
    }
    return out;
}

AssemblyReport simulate_assembly(const AssemblyPlan& plan, const std::vector<std::optional<double>>& initial_z,
                                 std::uint64_t seed)
{
    plan.validate();
    const int m = plan.size();
    if (static_cast<int>(initial_z.size()) != m)
        throw std::invalid_argument("simulate_assembly: need one initial entry per tweezer");
    for (const auto& z : initial_z)
        if (z && !(*z > 0 && std::isfinite(*z)))
            throw std::invalid_argument("simulate_assembly: initial heights must be > 0");

    Rng rng = trajectory_rng(seed, 0);
    std::vector<double> decay(m, std::numeric_limits<double>::infinity());
    for (int i = 0; i < m; ++i) {
        if (!initial_z[i])
            continue;
        if (plan.lifetime == 0)
            decay[i] = 0;
        else if (std::isfinite(plan.lifetime))
            decay[i] = std::exponential_distribution<double>(1 / plan.lifetime)(rng);
    }

    AssemblyReport r;
    r.outcomes.assign(m, SiteOutcome::InitiallyEmpty);
    r.initial_z.assign(m, kNaN);
    r.park_time.assign(m, kNaN);
    r.park_z.assign(m, kNaN);
    r.hold_detuning.assign(m, kNaN);
    r.closed_form_survival.assign(m, kNaN);
    auto log = [&](double t, int i, EventKind k) { r.events.push_back({t, i, k}); };

    const double tau = plan.transport_budget;
    const double half = 0.5 * plan.trap_wavelength;
    const double z_det = plan.detection_height();
    std::vector<double> durations(m, tau);
    double t = 0;
    for (int i = 0; i < m; ++i) {
        if (i > 0)
            t += plan.switch_time;
        const double start = t;
        log(start, i, EventKind::ConveyorOn);
        if (initial_z[i]) {
            const double z0 = *initial_z[i];
            r.initial_z[i] = z0;
            // Plateau chosen so the trapezoid ends exactly at the surface.
            const double hold = -z0 / (half * (tau - plan.ramp_time));
            r.hold_detuning[i] = hold;
            if (std::abs(hold) * plan.resonance_ratio > plan.axial_frequency)
                ++r.resonance_violations;
            if (decay[i] <= start) {
                r.outcomes[i] = SiteOutcome::Decayed;
                log(decay[i], i, EventKind::Decayed);
            }
            else {
                const auto profile = DetuningProfile::trapezoid(hold, tau - 2 * plan.ramp_time, plan.ramp_time);
                auto height = [&](double s) { return z0 + half * profile.phase(s); };
                double s_det = 0;
                if (z0 > z_det) {
                    boost::uintmax_t iters = 200;
                    auto [a, b] = boost::math::tools::bisect([&](double s) { return height(s) - z_det; }, 0.0, tau,
                                                             boost::math::tools::eps_tolerance<double>(52), iters);
                    s_det = b;  // first bracket end at or below z_det
                }
                const double t_det = start + s_det;
                // The conveyor runs for at least one nanosecond even when the atom starts detected.
                const double t_halt = std::max(t_det + plan.detection_latency, start + 1e-9);
                const double t_surface = start + tau;
                if (decay[i] <= t_det) {
                    r.outcomes[i] = SiteOutcome::Decayed;
                    log(decay[i], i, EventKind::Decayed);
                }
                else if (t_halt >= t_surface) {
                    log(t_det, i, EventKind::Detected);
                    if (decay[i] <= t_surface) {
                        r.outcomes[i] = SiteOutcome::Decayed;
                        log(decay[i], i, EventKind::Decayed);
                    }
                    else {
                        r.outcomes[i] = SiteOutcome::LostInTransport;
                        log(t_surface, i, EventKind::Lost);
                    }
                }
                else {
                    log(t_det, i, EventKind::Detected);
                    durations[i] = t_halt - start;
                    if (decay[i] <= t_halt) {
                        r.outcomes[i] = SiteOutcome::Decayed;
                        log(decay[i], i, EventKind::Decayed);
                    }
                    else {
                        r.park_time[i] = t_halt;
                        r.park_z[i] = height(t_halt - start);
                        log(t_halt, i, EventKind::Parked);
                    }
                }
            }
        }
        t = start + durations[i];
        log(t, i, EventKind::ConveyorOff);
        if (i + 1 < m)
            log(t, i, EventKind::ToneSwitch);
    }
    r.schedule = plan_schedule(plan, durations);
    r.duration = r.schedule.total_duration();

    for (int i = 0; i < m; ++i) {
        if (std::isnan(r.park_time[i]))
            continue;
        const double remaining = r.duration - r.park_time[i];
        r.closed_form_survival[i] = plan.lifetime == 0 ? 0.0 : std::exp(-remaining / plan.lifetime);
        if (decay[i] <= r.duration) {
            r.outcomes[i] = SiteOutcome::Decayed;
            log(decay[i], i, EventKind::Decayed);
        }
        else {
            r.outcomes[i] = SiteOutcome::Assembled;
        }
    }
    std::stable_sort(r.events.begin(), r.events.end(),
                     [](const AssemblyEvent& a, const AssemblyEvent& b) { return a.t < b.t; });
    check_single_conveyor(r);
    return r;
}

AssemblyReport simulate_assembly(const AssemblyPlan& plan, const OccupancySampler& occupancy, std::uint64_t seed)
{
    plan.validate();
    Rng rng = trajectory_rng(seed, 1);
    return simulate_assembly(plan, occupancy.draw(plan.size(), rng), seed);
}

void check_single_conveyor(const AssemblyReport& report)
{
    int active = -1;
    for (const auto& e : report.events) {
        if (e.kind == EventKind::ConveyorOn) {
            if (active >= 0)
                throw std::logic_error("conveyor " + std::to_string(e.tweezer) + " switched on at t = " +
                                       std::to_string(e.t) + " while conveyor " + std::to_string(active) +
                                       " is active");
            active = e.tweezer;
        }
        else if (e.kind == EventKind::ConveyorOff) {
            if (active != e.tweezer)
                throw std::logic_error("conveyor " + std::to_string(e.tweezer) + " switched off while not active");
            active = -1;
        }
    }
    if (active >= 0)
        throw std::logic_error("conveyor " + std::to_string(active) + " still active at the end of the run");
}

SurvivalSummary survival_summary(std::span<const AssemblyReport> reports, const AssemblyPlan& plan)
{
    plan.validate();
    const int m = plan.size();
    SurvivalSummary out;
    out.sites.resize(m);
    std::vector<double> sum_p(m, 0.0), sum_var(m, 0.0);
    double pooled_p = 0, pooled_var = 0;
    for (const auto& r : reports) {
        if (static_cast<int>(r.outcomes.size()) != m)
            throw std::invalid_argument("survival_summary: report size differs from the plan");
        double expected = 0;
        for (int i = 0; i < m; ++i) {
            if (std::isnan(r.park_time[i]))
                continue;
            const double p = r.closed_form_survival[i];
            expected += p;
            auto& s = out.sites[i];
            ++s.parked;
            ++out.pooled.parked;
            if (r.outcomes[i] == SiteOutcome::Assembled) {
                ++s.survived;
                ++out.pooled.survived;
            }
            sum_p[i] += p;
            sum_var[i] += p * (1 - p);
            pooled_p += p;
            pooled_var += p * (1 - p);
        }
        out.expected_assembled += expected;
    }
    if (!reports.empty())
        out.expected_assembled /= static_cast<double>(reports.size());
    auto finish = [](SiteSurvival& s, double p, double var) {
        if (s.parked == 0)
            return;
        s.mc = static_cast<double>(s.survived) / s.parked;
        s.closed_form = p / s.parked;
        s.sigma = std::sqrt(var) / s.parked;
    };
    for (int i = 0; i < m; ++i)
        finish(out.sites[i], sum_p[i], sum_var[i]);
    finish(out.pooled, pooled_p, pooled_var);
    return out;
}

}  // namespace tweezerlab
