#include "doctest.h"
#include "approx.hpp"

#include <cmath>
#include <cstring>
#include <numbers>

#include "tweezerlab/conveyor.hpp"
#include "tweezerlab/parallel.hpp"
#include "tweezerlab/potential_map.hpp"
#include "tweezerlab/trap_potential.hpp"

using namespace tweezerlab;

namespace {

constexpr double kPi = std::numbers::pi;

PhysicalConstants calibrated()
{
    PhysicalConstants c;
    c.polarizability = 5.0e-38;
    return c;
}

std::vector<TrapSite> sites_of(const TrapConfiguration& cfg, const PhysicalConstants& c, double z_max = 4e-6)
{
    const TrapField field(cfg);
    const TrapPotential U(field, c, SurfaceMaterial::silica());
    return characterize_sites(U, 20e-9, z_max);
}

// Phase of the upward wave relative to the incident one on the axis. Lattice
// sites sit where it is a multiple of 2 pi.
double fringe_phase(const TrapField& field, double z)
{
    const FieldComponents f = field.components(0, z);
    return std::arg((f.reflected + f.bottom) / f.incident);
}

// Standing-wave period at z from the on-axis gradient of the fringe phase.
double fringe_period(const TrapField& field, double z)
{
    const double h = 1e-9;
    const double d = std::remainder(fringe_phase(field, z + h) - fringe_phase(field, z - h), 2 * kPi) / (2 * h);
    return 2 * kPi / std::abs(d);
}

}  // namespace

TEST_CASE("casimir-polder: closed-form value for silicon nitride at 200 nm")
{
    const PhysicalConstants c;
    const double u = casimir_polder(200e-9, SurfaceMaterial::silicon_nitride(), c) / c.h;
    const double oracle = -267.0 / (0.2 * 0.2 * 0.2 * (0.2 + 0.136));
    CHECK(u == rel(oracle).epsilon(1e-12));
    CHECK(u == rel(-99330).epsilon(1e-4));
}

TEST_CASE("casimir-polder: decay, material ratio and domain")
{
    const auto si = SurfaceMaterial::silicon_nitride(), ox = SurfaceMaterial::silica();
    CHECK(casimir_polder(20e-6, si) / casimir_polder(0.2e-6, si) < 1e-5);
    for (double z : {50e-9, 200e-9, 3e-6})
        CHECK(casimir_polder(z, ox) / casimir_polder(z, si) == rel(158.0 / 267.0).epsilon(1e-15));
    CHECK_THROWS_AS(casimir_polder(0.0, si), std::invalid_argument);
    CHECK_THROWS_AS(casimir_polder(-1e-9, si), std::invalid_argument);
    double prev = casimir_polder(30e-9, si);
    for (double z = 40e-9; z < 5e-6; z += 10e-9) {
        const double u = casimir_polder(z, si);
        CHECK(u < 0);
        CHECK(u > prev);
        prev = u;
    }
}

TEST_CASE("casimir-polder: gradient matches a central difference")
{
    const auto m = SurfaceMaterial::silica();
    for (double z : {80e-9, 300e-9, 2e-6}) {
        const double h = z * 1e-5;
        const double fd = (casimir_polder(z + h, m) - casimir_polder(z - h, m)) / (2 * h);
        CHECK(casimir_polder_gradient(z, m) == rel(fd).epsilon(1e-7));
    }
}

TEST_CASE("surface material lookup")
{
    CHECK(SurfaceMaterial::by_name("Si3N4").c4_over_h == 267.0);
    CHECK(SurfaceMaterial::by_name("SiO2").c4_over_h == 158.0);
    CHECK_THROWS_AS(SurfaceMaterial::by_name("gold"), std::invalid_argument);
}

TEST_CASE("dipole potential: zero field, sign and power linearity")
{
    const PhysicalConstants c = calibrated();
    CHECK(dipole_potential(0.0, c) == 0.0);
    CHECK(dipole_potential(1e9, c) < 0);
    CHECK(dipole_potential(2e9, c) == rel(2 * dipole_potential(1e9, c)).epsilon(1e-15));

    TrapConfiguration cfg = membrane_configuration(false);
    const auto a = sites_of(cfg, c, 2e-6);
    cfg.top_beam.power *= 2;
    TrapField f2(cfg);
    const TrapPotential U2(f2, c, SurfaceMaterial::silica());
    cfg.top_beam.power /= 2;
    TrapField f1(cfg);
    const TrapPotential U1(f1, c, SurfaceMaterial::silica());
    for (double z : {0.3e-6, 0.9e-6, 1.5e-6})
        CHECK(U2.dipole(0, z) == rel(2 * U1.dipole(0, z)).epsilon(1e-13));
    REQUIRE(!a.empty());
}

TEST_CASE("plane-wave standing-wave estimate is of order 2-3 mK")
{
    const PhysicalConstants c = calibrated();
    const double I = 2 * 5e-3 / (kPi * 1.2e-6 * 1.2e-6);
    const double depth = -dipole_potential(I * std::pow(1 + std::sqrt(0.3), 2), c);
    const double mk = c.joules_to_millikelvin(depth);
    CHECK(mk > 1.5);
    CHECK(mk < 4.5);
}

TEST_CASE("find_sites: pure standing wave matches the harmonic formula")
{
    const PhysicalConstants c;
    const double lambda = c.trap_wavelength, k = 2 * kPi / lambda;
    const double U0 = c.k_B * 1e-3;
    PotentialFunction U = [&](double rho, double z) {
        const double s = std::sin(k * z);
        return -U0 * (1 - s * s) * std::exp(-2 * rho * rho / (1e-6 * 1e-6));
    };
    std::vector<double> z, u;
    for (int i = 0; i <= 400; ++i) {
        z.push_back(0.1e-6 + 2e-6 * i / 400);
        u.push_back(U(0, z.back()));
    }
    const auto sites = find_sites(z, u, U, c);
    REQUIRE(sites.size() >= 4);
    const double f_oracle = k / (2 * kPi) * std::sqrt(2 * U0 / c.mass);
    for (const auto& s : sites) {
        CHECK(s.axial_frequency == rel(f_oracle).epsilon(0.01));
        // a barrier beyond the sampled range is only known at the range edge
        if (s.z + lambda / 4 < z.back())
            CHECK(s.depth == rel(U0).epsilon(1e-6));
        else
            CHECK(s.depth <= U0);
        CHECK(std::abs(std::remainder(s.z, lambda / 2)) < 1e-3 * lambda);
        REQUIRE(s.radially_trapped());
        // U ~ -U0 (1 - 2 rho^2 / w^2): f_r = sqrt(4 U0 / (m w^2)) / 2 pi
        CHECK(*s.radial_frequency == rel(std::sqrt(4 * U0 / (c.mass * 1e-12)) / (2 * kPi)).epsilon(0.01));
    }
    for (std::size_t i = 0; i < sites.size(); ++i)
        CHECK(sites[i].index == static_cast<int>(i) + 1);
}

TEST_CASE("find_sites: no minima without a tweezer, empty result is valid")
{
    const PhysicalConstants c = calibrated();
    PotentialFunction U = [&](double, double z) { return casimir_polder(z, SurfaceMaterial::silica(), c); };
    std::vector<double> z, u;
    for (int i = 0; i < 500; ++i) {
        z.push_back(30e-9 + 20e-9 * i);
        u.push_back(U(0, z.back()));
    }
    CHECK(find_sites(z, u, U, c).empty());

    TrapConfiguration cfg = membrane_configuration(false);
    cfg.top_beam.power = 0;
    CHECK(sites_of(cfg, c).empty());
}

TEST_CASE("lamb-dicke parameter")
{
    const PhysicalConstants c;
    const double fr = c.recoil_energy() / c.h;
    CHECK(fr == rel(2067).epsilon(1e-3));
    CHECK(lamb_dicke(fr, c) == rel(1.0).epsilon(1e-14));
    CHECK(lamb_dicke(900e3, c) == rel(fr / 900e3).epsilon(1e-14));
    CHECK(lamb_dicke(900e3, c) == rel(2.30e-3).epsilon(3e-3));
    CHECK(lamb_dicke(2e5, c) == rel(0.5 * lamb_dicke(1e5, c)).epsilon(1e-14));
    CHECK_THROWS_AS(lamb_dicke(0.0, c), std::invalid_argument);
    CHECK_THROWS_AS(lamb_dicke(-5.0, c), std::invalid_argument);
}

TEST_CASE("membrane lattice: first site, spacing and Lamb-Dicke consistency")
{
    const PhysicalConstants c = calibrated();
    const auto sites = sites_of(membrane_configuration(false), c);
    REQUIRE(sites.size() >= 6);
    CHECK(sites[0].z > 150e-9);
    CHECK(sites[0].z < 250e-9);
    CHECK(sites[0].depth > 0);  // survives Casimir-Polder
    const TrapField field(membrane_configuration(false));
    for (std::size_t i = 1; i < 6; ++i) {
        const double spacing = sites[i].z - sites[i - 1].z;
        CHECK(spacing == rel(fringe_period(field, 0.5 * (sites[i].z + sites[i - 1].z))).epsilon(1e-2));
        // the Gouy phase of a 1.2 um waist stretches the lattice beyond lambda / 2
        CHECK(spacing > c.trap_wavelength / 2);
    }
    for (const auto& s : sites) {
        CHECK(s.eta_axial_sq == lamb_dicke(s.axial_frequency, c));
        if (s.radial_frequency)
            CHECK(*s.eta_radial_sq == lamb_dicke(*s.radial_frequency, c));
    }
}

TEST_CASE("trap frequencies converge under step halving")
{
    const PhysicalConstants c = calibrated();
    const TrapField field(membrane_configuration(false));
    const TrapPotential U(field, c, SurfaceMaterial::silica());
    SiteSearchOptions a, b;
    a.axial_step = c.trap_wavelength / 200;
    a.radial_step = 40e-9;
    b.axial_step = a.axial_step / 2;
    b.radial_step = a.radial_step / 2;
    const auto sa = characterize_sites(U, 20e-9, 2e-6, a);
    const auto sb = characterize_sites(U, 20e-9, 2e-6, b);
    REQUIRE(sa.size() == sb.size());
    for (std::size_t i = 0; i < sa.size(); ++i) {
        CHECK(sb[i].axial_frequency == rel(sa[i].axial_frequency).epsilon(5e-3));
        REQUIRE(sa[i].radial_frequency);
        CHECK(*sb[i].radial_frequency == rel(*sa[i].radial_frequency).epsilon(5e-3));
    }
}

TEST_CASE("site characterization is invariant under translating the origin")
{
    const PhysicalConstants c;
    const double k = 2 * kPi / c.trap_wavelength, U0 = c.k_B * 2e-3, shift = 3.7e-6;
    auto make = [&](double offset) {
        PotentialFunction U = [=](double rho, double z) {
            const double zz = z - offset;
            return -U0 * std::exp(-zz * zz / (4e-12)) * std::pow(std::cos(k * zz), 2) * std::exp(-2 * rho * rho / 1e-12);
        };
        std::vector<double> z, u;
        for (int i = 0; i <= 800; ++i) {
            z.push_back(offset - 2e-6 + 4e-6 * i / 800);
            u.push_back(U(0, z.back()));
        }
        return find_sites(z, u, U, c);
    };
    const auto a = make(0.0), b = make(shift);
    REQUIRE(a.size() == b.size());
    REQUIRE(!a.empty());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(std::abs(b[i].z - shift - a[i].z) < 1e-11);
        CHECK(b[i].depth == rel(a[i].depth).epsilon(1e-6));
        CHECK(b[i].axial_frequency == rel(a[i].axial_frequency).epsilon(1e-4));
    }
}

TEST_CASE("conveyor: with the bottom beam alone the sites move lambda/2 per cycle")
{
    const PhysicalConstants c = calibrated();
    const double delta = 0.1;
    TrapConfiguration ca = membrane_configuration(true, 0.2), cb = membrane_configuration(true, 0.2 + delta);
    ca.reflection_scale = cb.reflection_scale = 0;
    const auto a = sites_of(ca, c, 3e-6), b = sites_of(cb, c, 3e-6);
    const TrapField fa(ca);
    int matched = 0;
    for (const auto& s : a) {
        if (s.z < 0.6e-6)
            continue;  // Casimir-Polder distorts the surface-bound site
        const double expected = fringe_period(fa, s.z) * delta;
        for (const auto& t : b)
            if (std::abs(t.z - s.z - expected) < c.trap_wavelength / 8) {
                CHECK(t.z - s.z == rel(expected).epsilon(0.02));
                CHECK(expected == rel(c.trap_wavelength / 2 * delta).epsilon(0.03));
                ++matched;
            }
    }
    CHECK(matched >= 3);
    const auto profile = DetuningProfile({{0, delta / 1e-3}, {1e-3, delta / 1e-3}});
    CHECK(transport_kinematics(profile, c.trap_wavelength).final_displacement ==
          rel(c.trap_wavelength / 2 * delta).epsilon(1e-12));
}

TEST_CASE("conveyor: with the membrane reflection the sites follow the upward-wave phase")
{
    const PhysicalConstants c = calibrated();
    const double delta = 0.1;
    const TrapConfiguration ca = membrane_configuration(true, 0.2), cb = membrane_configuration(true, 0.2 + delta);
    const auto a = sites_of(ca, c, 3e-6), b = sites_of(cb, c, 3e-6);
    const TrapField fa(ca), fb(cb);
    int matched = 0;
    for (const auto& s : a) {
        if (s.z < 0.6e-6)
            continue;
        // the reflected wave does not move, so the step is a fraction of delta
        const double dpsi = std::remainder(fringe_phase(fb, s.z) - fringe_phase(fa, s.z), 2 * kPi);
        const double expected = std::abs(dpsi) / (2 * kPi) * fringe_period(fa, s.z);
        for (const auto& t : b)
            if (std::abs(t.z - s.z - expected) < c.trap_wavelength / 8) {
                CHECK(t.z - s.z == rel(expected).epsilon(0.05));
                CHECK(t.z - s.z < c.trap_wavelength / 2 * delta);
                ++matched;
            }
    }
    CHECK(matched >= 3);
}

TEST_CASE("far from the surface and focus the potential vanishes")
{
    const PhysicalConstants c = calibrated();
    const TrapField field(membrane_configuration(false));
    const TrapPotential U(field, c, SurfaceMaterial::silica());
    const auto sites = characterize_sites(U, 20e-9, 2e-6);
    double deepest = 0;
    for (const auto& s : sites)
        deepest = std::min(deepest, s.potential);
    CHECK(std::abs(U(20e-6, 0.5e-6)) < 1e-3 * std::abs(deepest));
}

TEST_CASE("calibration reaches the target depth")
{
    const PhysicalConstants c;
    const auto r = calibrate_polarizability(membrane_configuration(false), c, SurfaceMaterial::silica(), 3e-3);
    CHECK(c.joules_to_millikelvin(r.deepest_depth) == rel(3.0).epsilon(1e-6));
    CHECK(r.polarizability == rel(5.0e-38).epsilon(0.01));
    CHECK_THROWS_AS(calibrate_polarizability(membrane_configuration(false), c, SurfaceMaterial::silica(), 0.0),
                    std::invalid_argument);
}

TEST_CASE("transport kinematics: trapezoid area, zero detuning and antisymmetry")
{
    const double lambda = 935e-9;
    const auto up = transport_kinematics(DetuningProfile::trapezoid(1000, 1e-3, 1e-3), lambda);
    CHECK(up.final_displacement == rel(lambda / 2 * 1000 * 2e-3).epsilon(1e-12));
    CHECK(up.final_displacement == rel(935e-9).epsilon(1e-12));
    const auto down = transport_kinematics(DetuningProfile::trapezoid(-1000, 1e-3, 1e-3), lambda);
    CHECK(down.final_displacement == -up.final_displacement);
    for (std::size_t i = 0; i < up.t.size(); ++i)
        CHECK(down.displacement[i] == -up.displacement[i]);
    const auto zero = transport_kinematics(DetuningProfile::trapezoid(0, 2e-3), lambda);
    CHECK(zero.final_displacement == 0.0);
    // the ramp is quadratic in time: at half the ramp a quarter of its area
    const DetuningProfile p = DetuningProfile::trapezoid(1000, 1e-3, 1e-3);
    CHECK(p.phase(0.5e-3) == rel(0.25 * 0.5 * 1000 * 1e-3).epsilon(1e-14));
    CHECK(p.detuning(1.5e-3) == 1000);
    CHECK(p.detuning(0.5e-3) == rel(500));
}

TEST_CASE("detuning profile validation")
{
    CHECK_THROWS_AS(DetuningProfile({{0, 0}}), std::invalid_argument);
    CHECK_THROWS_AS(DetuningProfile({{0, 0}, {0, 1}}), std::invalid_argument);
    CHECK_THROWS_AS(DetuningProfile::trapezoid(1, 1e-3, 0), std::invalid_argument);
    CHECK_THROWS_AS(transport_kinematics(DetuningProfile::trapezoid(1, 1e-3), 935e-9, 1), std::invalid_argument);
}

TEST_CASE("potential map: interpolation follows the direct potential")
{
    const PhysicalConstants c = calibrated();
    const TrapField field(membrane_configuration(false));
    const TrapPotential U(field, c, SurfaceMaterial::silica());
    const GridAxis rho{0, 3e-6, 121}, z{0, 6e-6, 1201};
    const PotentialMap map = total_potential(field, c, SurfaceMaterial::silica(), rho, z);
    const double scale = c.k_B * 3e-3;
    for (double r : {0.0, 0.33e-6, 1.01e-6})
        for (double zz : {0.2337e-6, 0.5e-6, 1.1e-6, 4.4e-6}) {
            CHECK(std::abs(map.value(r, zz) - U(r, zz)) < 2e-3 * scale);
            const double h = 1e-12;  // well inside one 5 nm cell
            const double fd = (map.value(r, zz + h) - map.value(r, zz - h)) / (2 * h);
            CHECK(map.sample(r, zz).d_z == rel(fd).epsilon(1e-4).scale(scale / 1e-6));
        }
}

TEST_CASE("potential map: parallel fill is bitwise equal to serial")
{
    const PhysicalConstants c = calibrated();
    const TrapField field(membrane_configuration(true, 0.1));
    const GridAxis rho{0, 2e-6, 21}, z{0, 3e-6, 151};
    const PotentialMap s = total_potential(field, c, SurfaceMaterial::silica(), rho, z, Execution::Serial);
    const int saved = worker_count();
    set_worker_count(4);
    const PotentialMap p = total_potential(field, c, SurfaceMaterial::silica(), rho, z, Execution::Parallel);
    set_worker_count(saved);
    for (int i = 0; i < z.count; ++i)
        for (int j = 0; j < rho.count; ++j)
        {
            const double a = s.dipole_at(j, i), b = p.dipole_at(j, i);
            CHECK(std::memcmp(&a, &b, sizeof(double)) == 0);
        }
}

TEST_CASE("grid axis validation")
{
    CHECK_THROWS_AS((GridAxis{0, 1, 1}.validate("z")), std::invalid_argument);
    CHECK_THROWS_AS((GridAxis{1, 0, 5}.validate("z")), std::invalid_argument);
    CHECK_NOTHROW((GridAxis{0, 1, 2}.validate("z")));
}
