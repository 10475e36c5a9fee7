#include "tweezerlab/loading_mc.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace tweezerlab {

namespace {

std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

double uniform(Rng& rng)
{
    return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

bool inside_box(const AtomState& s, const MCConfig& c)
{
    const double half = 0.5 * c.box_width;
    return std::abs(s.position[0]) <= half && std::abs(s.position[1]) <= half &&
           s.position[2] <= c.box_height;
}

bool finite_state(const AtomState& s)
{
    for (int i = 0; i < 3; ++i)
        if (!std::isfinite(s.position[i]) || !std::isfinite(s.velocity[i]))
            return false;
    return true;
}

int nearest_site(std::span<const double> site_z, double z)
{
    int best = 0;
    double dist = INFINITY;
    for (std::size_t i = 0; i < site_z.size(); ++i) {
        const double d = std::abs(site_z[i] - z);
        if (d < dist) {
            dist = d;
            best = static_cast<int>(i) + 1;
        }
    }
    return best;
}

struct RunContext {
    const MCConfig& config;
    Langevin dynamics;
    std::span<const double> site_z;
    PhysicalConstants constants;
    double blowup_energy;
    double capture_height;
    long steps;
};

TrajectoryResult run_one(const RunContext& ctx, std::uint64_t index)
{
    Rng rng = trajectory_rng(ctx.config.seed, index);
    AtomState s = sample_entry(rng, ctx.config, ctx.constants);
    const double rate = ctx.config.cooling.scattering_rate;
    double next_kick = rate > 0 ? std::exponential_distribution<double>(rate)(rng) : INFINITY;
    const double dt = ctx.dynamics.dt();

    TrajectoryResult out;
    for (long n = 0; n < ctx.steps; ++n) {
        ctx.dynamics.step(s, n * dt, next_kick, rng);
        if (!finite_state(s)) {
            out.outcome = Outcome::Flagged;
            out.final_z = std::isfinite(s.position[2]) ? s.position[2] : 0.0;
            return out;
        }
        if (s.position[2] <= 0 || (s.position[2] < ctx.capture_height && s.velocity[2] < 0)) {
            out.outcome = Outcome::Adsorbed;
            out.final_z = s.position[2];
            return out;
        }
        if (!inside_box(s, ctx.config)) {
            out.outcome = Outcome::Escaped;
            out.final_z = s.position[2];
            return out;
        }
        if (ctx.dynamics.energy(s) > ctx.blowup_energy) {
            out.outcome = Outcome::Flagged;
            out.final_z = s.position[2];
            return out;
        }
    }
    out.final_z = s.position[2];
    if (ctx.dynamics.energy(s) < 0) {
        out.outcome = Outcome::Bound;
        out.site = nearest_site(ctx.site_z, s.position[2]);
    }
    else {
        out.outcome = Outcome::Escaped;
    }
    return out;
}

}  // namespace

double surface_barrier_height(const PotentialMap& potential)
{
    if (!potential.surface())
        return 0.0;
    constexpr double step = 1e-9;
    double prev = potential.value(0.0, step);
    for (double z = 2 * step; z < 1e-6; z += step) {
        const double u = potential.value(0.0, z);
        if (u < prev)
            return z - step;
        prev = u;
    }
    return 0.0;
}

namespace {

RunContext make_context(const MCConfig& config, const PotentialMap& potential,
                        std::span<const double> site_z, double dt)
{
    config.validate();
    double u_min = 0;
    for (int iz = 0; iz < potential.z_axis().count; ++iz)
        for (int ir = 0; ir < potential.rho_axis().count; ++ir)
            u_min = std::min(u_min, potential.dipole_at(ir, iz));
    const PhysicalConstants& c = potential.constants();
    const double scale = std::abs(u_min) + c.k_B * config.temperature;
    return RunContext{config,
                      Langevin(potential, config.cooling, dt),
                      site_z,
                      c,
                      config.blowup_factor * scale,
                      surface_barrier_height(potential),
                      std::lround(config.duration / dt)};
}

}  // namespace

void MCConfig::validate() const
{
    auto positive = [](double v, const char* name) {
        if (!(v > 0) || !std::isfinite(v))
            throw std::invalid_argument(std::string("MCConfig: ") + name + " must be > 0");
    };
    positive(box_width, "box_width");
    positive(box_height, "box_height");
    positive(temperature, "temperature");
    positive(duration, "duration");
    positive(dt, "dt");
    positive(blowup_factor, "blowup_factor");
    if (n_trajectories <= 0)
        throw std::invalid_argument("MCConfig: n_trajectories must be > 0");
    if (!(cooling.damping_coefficient >= 0) || !(cooling.scattering_rate >= 0))
        throw std::invalid_argument("MCConfig: cooling parameters must be >= 0");
}

const char* to_string(Outcome outcome)
{
    switch (outcome) {
    case Outcome::Bound: return "bound";
    case Outcome::Escaped: return "escaped";
    case Outcome::Adsorbed: return "adsorbed";
    case Outcome::Flagged: return "flagged";
    }
    return "unknown";
}

std::vector<double> LoadingReport::site_histogram() const
{
    std::vector<double> p(site_counts.size());
    for (std::size_t i = 0; i < p.size(); ++i)
        p[i] = fraction(site_counts[i]);
    return p;
}

double LoadingReport::first_site_share() const
{
    if (bound == 0 || site_counts.empty())
        return 0.0;
    return static_cast<double>(site_counts[0]) / bound;
}

Rng trajectory_rng(std::uint64_t seed, std::uint64_t index)
{
    std::seed_seq seq{static_cast<std::uint32_t>(splitmix64(seed)),
                      static_cast<std::uint32_t>(splitmix64(seed) >> 32),
                      static_cast<std::uint32_t>(splitmix64(seed ^ splitmix64(index))),
                      static_cast<std::uint32_t>(splitmix64(seed ^ splitmix64(index)) >> 32)};
    return Rng(seq);
}

AtomState sample_entry(Rng& rng, const MCConfig& config, const PhysicalConstants& constants)
{
    const double sigma = std::sqrt(constants.k_B * config.temperature / constants.mass);
    std::normal_distribution<double> thermal(0.0, sigma);
    const double w = config.box_width, h = config.box_height, half = 0.5 * w;
    const double top_area = w * w, side_area = w * h;

    AtomState s;
    // Flux-weighted normal speed: p(v) ~ v exp(-v^2 / 2 sigma^2).
    const double v_normal = sigma * std::sqrt(-2.0 * std::log1p(-uniform(rng)));
    const double pick = uniform(rng) * (top_area + 4 * side_area);
    const double a = uniform(rng), b = uniform(rng);
    if (pick < top_area) {
        s.position = {(a - 0.5) * w, (b - 0.5) * w, h};
        s.velocity = {thermal(rng), thermal(rng), -v_normal};
        return s;
    }
    const int face = std::min(3, static_cast<int>((pick - top_area) / side_area));
    const double along = (a - 0.5) * w, z = b * h;
    const double t1 = thermal(rng), t2 = thermal(rng);
    switch (face) {
    case 0: s.position = {half, along, z}; s.velocity = {-v_normal, t1, t2}; break;
    case 1: s.position = {-half, along, z}; s.velocity = {v_normal, t1, t2}; break;
    case 2: s.position = {along, half, z}; s.velocity = {t1, -v_normal, t2}; break;
    default: s.position = {along, -half, z}; s.velocity = {t1, v_normal, t2}; break;
    }
    return s;
}

Langevin::Langevin(const PotentialMap& potential, const CoolingModel& cooling, double dt)
    : potential_(&potential),
      dt_(dt),
      mass_(potential.constants().mass),
      half_damping_(std::exp(-cooling.damping_coefficient / potential.constants().mass * dt / 2)),
      rate_(cooling.scattering_rate),
      kick_(potential.constants().recoil_velocity())
{
    if (!(dt > 0))
        throw std::invalid_argument("Langevin: dt must be > 0");
}

void Langevin::step(AtomState& s, double t, double& next_kick, Rng& rng) const
{
    auto& r = s.position;
    auto& v = s.velocity;
    const double half = 0.5 * dt_ / mass_;
    auto g = potential_->gradient(r);
    for (int i = 0; i < 3; ++i)
        v[i] = v[i] * half_damping_ - g[i] * half;
    for (int i = 0; i < 3; ++i)
        r[i] += v[i] * dt_;
    if (r[2] <= 0)
        return;  // adsorbed; the caller stops here
    g = potential_->gradient(r);
    for (int i = 0; i < 3; ++i)
        v[i] = (v[i] - g[i] * half) * half_damping_;

    const double t_end = t + dt_;
    while (next_kick <= t_end) {
        const double cz = 2 * uniform(rng) - 1;
        const double phi = 2 * std::numbers::pi * uniform(rng);
        const double sz = std::sqrt(std::max(0.0, 1 - cz * cz));
        v[0] += kick_ * sz * std::cos(phi);
        v[1] += kick_ * sz * std::sin(phi);
        v[2] += kick_ * cz;
        next_kick += std::exponential_distribution<double>(rate_)(rng);
    }
}

double Langevin::energy(const AtomState& s) const
{
    const auto& v = s.velocity;
    return 0.5 * mass_ * (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]) + potential_->value(s.position);
}

double stable_time_step(double requested, double max_axial_frequency)
{
    if (!(requested > 0))
        throw std::invalid_argument("time step must be > 0");
    if (!(max_axial_frequency > 0))
        return requested;
    const double limit = 1.0 / (20 * max_axial_frequency);
    double dt = requested;
    while (dt > limit)
        dt *= 0.5;
    return dt;
}

namespace kernels {

std::vector<TrajectoryResult> run_trajectories_serial(const MCConfig& config, const PotentialMap& potential,
                                                      std::span<const double> site_z, double dt)
{
    const RunContext ctx = make_context(config, potential, site_z, dt);
    std::vector<TrajectoryResult> out(config.n_trajectories);
    for (int i = 0; i < config.n_trajectories; ++i)
        out[i] = run_one(ctx, static_cast<std::uint64_t>(i));
    return out;
}

std::vector<TrajectoryResult> run_trajectories_parallel(const MCConfig& config, const PotentialMap& potential,
                                                        std::span<const double> site_z, double dt)
{
    const RunContext ctx = make_context(config, potential, site_z, dt);
    std::vector<TrajectoryResult> out(config.n_trajectories);
    const int n = config.n_trajectories;
#pragma omp parallel for schedule(dynamic, 16) num_threads(worker_count())
    for (int i = 0; i < n; ++i)
        out[i] = run_one(ctx, static_cast<std::uint64_t>(i));
    return out;
}

}  // namespace kernels

LoadingReport run_loading(const MCConfig& config, const PotentialMap& potential,
                          std::span<const TrapSite> sites, Execution execution)
{
    config.validate();
    std::vector<double> site_z;
    double f_max = 0;
    for (const auto& s : sites) {
        site_z.push_back(s.z);
        f_max = std::max(f_max, s.axial_frequency);
    }
    const double dt = stable_time_step(config.dt, f_max);

    LoadingReport report;
    report.n_trajectories = config.n_trajectories;
    report.seed = config.seed;
    report.dt_used = dt;
    report.site_counts.assign(sites.size(), 0);
    report.trajectories = execution == Execution::Serial
                              ? kernels::run_trajectories_serial(config, potential, site_z, dt)
                              : kernels::run_trajectories_parallel(config, potential, site_z, dt);
    for (const auto& t : report.trajectories) {
        switch (t.outcome) {
        case Outcome::Bound:
            ++report.bound;
            if (t.site > 0)
                ++report.site_counts[t.site - 1];
            break;
        case Outcome::Escaped: ++report.escaped; break;
        case Outcome::Adsorbed: ++report.adsorbed; break;
        case Outcome::Flagged: ++report.flagged; break;
        }
    }
    return report;
}

double flux_atom_estimate(double density, double area, double mean_speed, double time)
{
    if (density < 0 || area < 0 || mean_speed < 0 || time < 0)
        throw std::invalid_argument("flux_atom_estimate: inputs must be >= 0");
    return density * area * mean_speed * time;
}

}  // namespace tweezerlab
