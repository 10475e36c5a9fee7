#include "doctest.h"
#include "approx.hpp"

#include <cmath>
#include <cstring>
#include <numbers>

#include "tweezerlab/loading_mc.hpp"
#include "tweezerlab/parallel.hpp"

using namespace tweezerlab;

namespace {

constexpr double kPi = std::numbers::pi;

PhysicalConstants calibrated()
{
    PhysicalConstants c;
    c.polarizability = 5.0e-38;
    return c;
}

PotentialMap flat_map()
{
    const GridAxis rho{0, 10e-6, 3}, z{-1, 1, 3};
    return PotentialMap(rho, z, std::vector<double>(9, 0.0), PhysicalConstants{}, std::nullopt);
}

struct Lattice {
    TrapField field;
    PotentialMap map;
    std::vector<TrapSite> sites;
};

Lattice lattice(const TrapConfiguration& cfg, int n_rho = 151, int n_z = 1001)
{
    const PhysicalConstants c = calibrated();
    TrapField field(cfg);
    PotentialMap map = total_potential(field, c, SurfaceMaterial::silica(), GridAxis{0, 7.5e-6, n_rho},
                                       GridAxis{0, 20e-6, n_z});
    const TrapPotential U(field, c, SurfaceMaterial::silica());
    auto sites = characterize_sites(U, 20e-9, 19.9e-6);
    return {std::move(field), std::move(map), std::move(sites)};
}

MCConfig small_config(int n)
{
    MCConfig mc;
    mc.n_trajectories = n;
    mc.duration = 0.5e-3;
    mc.seed = 11;
    return mc;
}

bool same(const TrajectoryResult& a, const TrajectoryResult& b)
{
    return a.outcome == b.outcome && a.site == b.site && std::memcmp(&a.final_z, &b.final_z, sizeof(double)) == 0;
}

}  // namespace

TEST_CASE("entry sampling: inward velocity, face positions and flux-weighted speed")
{
    const PhysicalConstants c;
    MCConfig mc;
    Rng rng = trajectory_rng(3, 0);
    const int n = 100000;
    double speed = 0;
    int top = 0;
    for (int i = 0; i < n; ++i) {
        const AtomState s = sample_entry(rng, mc, c);
        const auto& r = s.position;
        const auto& v = s.velocity;
        speed += std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
        const double half = mc.box_width / 2;
        if (r[2] == mc.box_height) {
            ++top;
            CHECK_FALSE(v[2] >= 0);
        }
        else if (r[0] == half)
            CHECK_FALSE(v[0] >= 0);
        else if (r[0] == -half)
            CHECK_FALSE(v[0] <= 0);
        else if (r[1] == half)
            CHECK_FALSE(v[1] >= 0);
        else if (r[1] == -half)
            CHECK_FALSE(v[1] <= 0);
        else
            FAIL("entry point is not on an open face");
    }
    // flux weighting raises the mean speed to (3 pi / 8) sqrt(8 k T / pi m)
    const double vbar = std::sqrt(8 * c.k_B * mc.temperature / (kPi * c.mass));
    CHECK(speed / n == rel(3 * kPi / 8 * vbar).epsilon(0.05));
    // face choice in proportion to area: top / total = w^2 / (w^2 + 4 w h)
    const double p_top = 1.0 / (1 + 4 * mc.box_height / mc.box_width);
    CHECK(static_cast<double>(top) / n == rel(p_top).epsilon(0.05));
}

TEST_CASE("entry sampling: rms velocity doubles when the temperature quadruples")
{
    const PhysicalConstants c;
    auto rms = [&](double T) {
        MCConfig mc;
        mc.temperature = T;
        Rng rng = trajectory_rng(5, 1);
        double sum = 0;
        const int n = 50000;
        for (int i = 0; i < n; ++i) {
            const auto v = sample_entry(rng, mc, c).velocity;
            sum += v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
        }
        return std::sqrt(sum / n);
    };
    CHECK(rms(80e-6) / rms(20e-6) == rel(2.0).epsilon(0.03));
}

TEST_CASE("integrator: energy conserved in the deepest site without cooling")
{
    const PhysicalConstants c = calibrated();
    const TrapField field(membrane_configuration(false));
    const PotentialMap map = total_potential(field, c, SurfaceMaterial::silica(), GridAxis{0, 2e-6, 401},
                                             GridAxis{0.3e-6, 1.2e-6, 1801});
    const TrapPotential U(field, c, SurfaceMaterial::silica());
    const auto sites = characterize_sites(U, 20e-9, 2e-6);
    const TrapSite* deepest = &sites.front();
    for (const auto& s : sites)
        if (s.depth > deepest->depth)
            deepest = &s;
    CoolingModel none{0.0, 0.0};
    const double dt = stable_time_step(0.5e-6, deepest->axial_frequency) / 4;
    const Langevin L(map, none, dt);
    AtomState s;
    s.position = {15e-9, 0, deepest->z + 20e-9};
    const double e0 = L.energy(s);
    double worst = 0, next = INFINITY;
    Rng rng(1);
    const long steps = std::lround(1e-3 / dt);
    for (long n = 0; n < steps; ++n) {
        L.step(s, n * dt, next, rng);
        worst = std::max(worst, std::abs(L.energy(s) - e0));
    }
    CHECK(worst / deepest->depth < 1e-4);
}

TEST_CASE("integrator: free damped motion decays exponentially")
{
    const PotentialMap map = flat_map();
    const PhysicalConstants c;
    CoolingModel cool{2e3 * c.mass, 0.0};
    const double dt = 0.5e-6;
    const Langevin L(map, cool, dt);
    AtomState s;
    s.position = {0, 0, 0.5};
    s.velocity = {0.01, -0.02, 0.03};
    double next = INFINITY;
    Rng rng(1);
    const int steps = 2000;
    for (int n = 0; n < steps; ++n)
        L.step(s, n * dt, next, rng);
    const double f = std::exp(-2e3 * steps * dt);
    CHECK(s.velocity[0] == rel(0.01 * f).epsilon(0.01));
    CHECK(s.velocity[1] == rel(-0.02 * f).epsilon(0.01));
    CHECK(s.velocity[2] == rel(0.03 * f).epsilon(0.01));
}

TEST_CASE("integrator: recoil kicks diffuse the velocity at the expected rate")
{
    const PotentialMap map = flat_map();
    const PhysicalConstants c;
    const double rate = 1e5;
    CoolingModel cool{0.0, rate};
    const double dt = 1e-6, T = 1e-3;
    const Langevin L(map, cool, dt);
    const int n = 10000;
    double var = 0;
    for (int k = 0; k < n; ++k) {
        Rng rng = trajectory_rng(9, k);
        AtomState s;
        s.position = {0, 0, 0.5};  // the integrator stops at z <= 0
        double next = std::exponential_distribution<double>(rate)(rng);
        for (int i = 0; i < 1000; ++i)
            L.step(s, i * dt, next, rng);
        var += s.velocity[0] * s.velocity[0];
    }
    var /= n;
    const double kick = c.h / (c.atomic_wavelength * c.mass);
    CHECK(var / T == rel(rate * kick * kick / 3).epsilon(0.1));
}

TEST_CASE("stable time step halves until the deepest trap is resolved")
{
    CHECK(stable_time_step(0.5e-6, 0) == 0.5e-6);
    CHECK(stable_time_step(0.5e-6, 1e4) == 0.5e-6);
    const double dt = stable_time_step(0.5e-6, 638e3);
    CHECK(dt <= 1 / (20 * 638e3));
    CHECK(dt > 0.5 / (20 * 638e3));
    CHECK_THROWS_AS(stable_time_step(0, 1), std::invalid_argument);
}

TEST_CASE("config validation")
{
    MCConfig mc;
    CHECK_NOTHROW(mc.validate());
    mc.n_trajectories = 0;
    CHECK_THROWS_AS(mc.validate(), std::invalid_argument);
    mc = MCConfig{};
    mc.temperature = -1;
    CHECK_THROWS_AS(mc.validate(), std::invalid_argument);
    mc = MCConfig{};
    mc.cooling.scattering_rate = -1;
    CHECK_THROWS_AS(mc.validate(), std::invalid_argument);
}

TEST_CASE("loading: outcomes partition, histogram sums to P_tot, determinism across workers")
{
    const Lattice L = lattice(membrane_configuration(true, 0.0));
    const MCConfig mc = small_config(400);
    const LoadingReport serial = run_loading(mc, L.map, L.sites, Execution::Serial);
    CHECK(serial.bound + serial.escaped + serial.adsorbed + serial.flagged == mc.n_trajectories);
    const auto h = serial.site_histogram();
    double sum = 0;
    for (double p : h)
        sum += p;
    CHECK(sum == rel(serial.p_tot()).epsilon(1e-12));
    CHECK(serial.fraction(serial.bound) + serial.fraction(serial.escaped) + serial.fraction(serial.adsorbed) +
              serial.fraction(serial.flagged) ==
          rel(1.0).epsilon(1e-12));
    CHECK(serial.bound > 0);

    const int saved = worker_count();
    for (int w : {1, 3, 8}) {
        set_worker_count(w);
        const LoadingReport par = run_loading(mc, L.map, L.sites, Execution::Parallel);
        REQUIRE(par.trajectories.size() == serial.trajectories.size());
        bool identical = true;
        for (std::size_t i = 0; i < par.trajectories.size(); ++i)
            identical = identical && same(par.trajectories[i], serial.trajectories[i]);
        CHECK(identical);
        CHECK(par.site_counts == serial.site_counts);
    }
    set_worker_count(saved);
}

TEST_CASE("loading: zero tweezer power captures nothing")
{
    TrapConfiguration cfg = membrane_configuration(false);
    cfg.top_beam.power = 0;
    const Lattice L = lattice(cfg, 31, 201);
    const LoadingReport r = run_loading(small_config(300), L.map, L.sites);
    CHECK(L.sites.empty());
    CHECK(r.bound == 0);
    CHECK(r.p_tot() == 0.0);
    CHECK(r.escaped + r.adsorbed + r.flagged == 300);
}

TEST_CASE("loading: doubling the tweezer power does not lower the capture probability")
{
    TrapConfiguration cfg = waveguide_surrogate(membrane_configuration(false));
    const Lattice a = lattice(cfg);
    cfg.top_beam.power *= 2;
    const Lattice b = lattice(cfg);
    const MCConfig mc = small_config(1500);
    const double pa = run_loading(mc, a.map, a.sites).p_tot();
    const double pb = run_loading(mc, b.map, b.sites).p_tot();
    const double sigma = std::sqrt(pa * (1 - pa) / mc.n_trajectories + pb * (1 - pb) / mc.n_trajectories);
    CHECK(pb >= pa - 2 * sigma);
}

TEST_CASE("surface barrier sits below the first site")
{
    const Lattice L = lattice(membrane_configuration(false), 31, 2001);
    const double zb = surface_barrier_height(L.map);
    REQUIRE(!L.sites.empty());
    CHECK(zb > 0);
    CHECK(zb < L.sites.front().z);
    CHECK(surface_barrier_height(flat_map()) == 0.0);
}

TEST_CASE("trajectory streams depend only on seed and index")
{
    Rng a = trajectory_rng(7, 42), b = trajectory_rng(7, 42), c = trajectory_rng(7, 43), d = trajectory_rng(8, 42);
    const auto x = a();
    CHECK(x == b());
    CHECK(x != c());
    CHECK(x != d());
}

TEST_CASE("flux estimate")
{
    const double n = flux_atom_estimate(3.5e9 * 1e6, 100e-12, 0.03, 10e-3);
    CHECK(n == rel(105.0).epsilon(1e-12));
    CHECK(flux_atom_estimate(0, 1, 1, 1) == 0.0);
    CHECK(flux_atom_estimate(3.5e15, 1e-10, 0.03, 20e-3) == rel(2 * n).epsilon(1e-12));
    CHECK_THROWS_AS(flux_atom_estimate(-1, 1, 1, 1), std::invalid_argument);
}
