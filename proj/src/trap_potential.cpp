#include "tweezerlab/trap_potential.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "line_minimum.hpp"
#include <boost/math/tools/roots.hpp>

#include "tweezerlab/errors.hpp"

namespace tweezerlab {

namespace {

constexpr double kMicron = 1e-6;

double frequency_from_curvature(double curvature, double mass)
{
    return std::sqrt(curvature / mass) / (2 * std::numbers::pi);
}

// Highest point reached walking from a minimum toward one end of the cut,
// stopping at the first local maximum. Refined on the evaluator.
double nearest_barrier(std::span<const double> z, std::span<const double> u, std::size_t i_min,
                       int direction, const PotentialFunction& evaluate)
{
    std::size_t j = i_min;
    const std::size_t last = u.size() - 1;
    for (;;) {
        if ((direction < 0 && j == 0) || (direction > 0 && j == last))
            return u[j];
        const std::size_t next = direction < 0 ? j - 1 : j + 1;
        if (u[next] < u[j])
            break;
        j = next;
    }
    // j is a sampled local maximum; refine between its neighbours.
    if (j == 0 || j == last)
        return u[j];
    auto neg = [&](double zz) { return -evaluate(0.0, zz); };
    auto res = detail::line_minimum(neg, z[j - 1], z[j + 1]);
    return std::max(u[j], -res.second);
}

}  // namespace

SurfaceMaterial SurfaceMaterial::by_name(const std::string& name)
{
    if (name == "SiO2")
        return silica();
    if (name == "Si3N4")
        return silicon_nitride();
    throw std::invalid_argument("unknown surface material '" + name + "' (expected SiO2 or Si3N4)");
}

double casimir_polder(double z, const SurfaceMaterial& material, const PhysicalConstants& constants)
{
    if (!(z > 0) || !std::isfinite(z))
        throw std::invalid_argument("casimir_polder: z must be > 0");
    const double zu = z / kMicron;
    const double lu = material.lambda_bar / kMicron;
    return -constants.h * material.c4_over_h / (zu * zu * zu * (zu + lu));
}

double casimir_polder_gradient(double z, const SurfaceMaterial& material,
                               const PhysicalConstants& constants)
{
    if (!(z > 0) || !std::isfinite(z))
        throw std::invalid_argument("casimir_polder_gradient: z must be > 0");
    const double zu = z / kMicron;
    const double lu = material.lambda_bar / kMicron;
    // d/dz [-C / (z^4 + l z^3)] = C (4 z^3 + 3 l z^2) / (z^4 + l z^3)^2
    const double d = zu * zu * zu * (zu + lu);
    const double du = constants.h * material.c4_over_h * (4 * zu * zu * zu + 3 * lu * zu * zu) / (d * d);
    return du / kMicron;
}

TrapPotential::TrapPotential(const TrapField& field, PhysicalConstants constants,
                             SurfaceMaterial material)
    : field_(&field), constants_(constants), material_(std::move(material))
{
}

double TrapPotential::dipole(double rho, double z) const
{
    return dipole_potential(field_->intensity(rho, z), constants_);
}

double TrapPotential::operator()(double rho, double z) const
{
    return dipole(rho, z) + casimir_polder(z, material_, constants_);
}

PotentialFunction TrapPotential::function() const
{
    return [this](double rho, double z) { return (*this)(rho, z); };
}

std::vector<TrapSite> find_sites(std::span<const double> z, std::span<const double> u,
                                 const PotentialFunction& evaluate,
                                 const PhysicalConstants& constants,
                                 const SiteSearchOptions& options)
{
    if (z.size() != u.size())
        throw std::invalid_argument("find_sites: z and potential sizes differ");
    std::vector<TrapSite> sites;
    if (z.size() < 3)
        return sites;

    const double threshold = -constants.k_B * options.min_depth_kelvin;
    const double h_a = options.axial_step > 0 ? options.axial_step : constants.trap_wavelength / 400;
    const double h_r = options.radial_step;
    const double e_r = constants.recoil_energy();

    for (std::size_t i = 1; i + 1 < u.size(); ++i) {
        if (!(u[i] < u[i - 1] && u[i] <= u[i + 1] && u[i] < threshold))
            continue;
        auto along = [&](double zz) { return evaluate(0.0, zz); };
        auto res = detail::line_minimum(along, z[i - 1], z[i + 1]);
        TrapSite site;
        site.z = res.first;
        site.potential = std::min(res.second, u[i]);
        if (res.second > u[i]) {
            site.z = z[i];
            site.potential = u[i];
        }
        const double left = nearest_barrier(z, u, i, -1, evaluate);
        const double right = nearest_barrier(z, u, i, +1, evaluate);
        site.depth = std::min(left, right) - site.potential;

        const double u0 = evaluate(0.0, site.z);
        const double curv_a = (evaluate(0.0, site.z + h_a) - 2 * u0 + evaluate(0.0, site.z - h_a)) / (h_a * h_a);
        const double curv_r = 2 * (evaluate(h_r, site.z) - u0) / (h_r * h_r);
        if (!(curv_a > 0))
            continue;
        site.axial_frequency = frequency_from_curvature(curv_a, constants.mass);
        site.eta_axial_sq = e_r / (constants.h * site.axial_frequency);
        if (curv_r > 0) {
            site.radial_frequency = frequency_from_curvature(curv_r, constants.mass);
            site.eta_radial_sq = e_r / (constants.h * *site.radial_frequency);
        }
        sites.push_back(site);
    }
    for (std::size_t k = 0; k < sites.size(); ++k)
        sites[k].index = static_cast<int>(k) + 1;
    return sites;
}

double lamb_dicke(double frequency, const PhysicalConstants& constants)
{
    if (!(frequency > 0) || !std::isfinite(frequency))
        throw std::invalid_argument("lamb_dicke: frequency must be > 0");
    return constants.recoil_energy() / (constants.h * frequency);
}

AxialProfile axial_potential(const TrapPotential& potential, double z_min, double z_max, int n)
{
    if (n < 2 || !(z_max > z_min) || !(z_min > 0))
        throw std::invalid_argument("axial_potential: need 0 < z_min < z_max and n >= 2");
    AxialProfile p;
    p.z.resize(n);
    p.potential.resize(n);
    for (int i = 0; i < n; ++i) {
        p.z[i] = z_min + (z_max - z_min) * i / (n - 1);
        p.potential[i] = potential(0.0, p.z[i]);
    }
    return p;
}

std::vector<TrapSite> characterize_sites(const TrapPotential& potential, double z_min, double z_max,
                                         const SiteSearchOptions& options)
{
    const double step = potential.constants().trap_wavelength / 40;
    const int n = static_cast<int>(std::ceil((z_max - z_min) / step)) + 1;
    AxialProfile p = axial_potential(potential, z_min, z_max, n);
    return find_sites(p.z, p.potential, potential.function(), potential.constants(), options);
}

CalibrationResult calibrate_polarizability(const TrapConfiguration& config,
                                           PhysicalConstants constants,
                                           const SurfaceMaterial& material,
                                           double target_depth_kelvin, double z_max)
{
    if (!(target_depth_kelvin > 0))
        throw std::invalid_argument("calibration target depth must be > 0");
    TrapField field(config);
    const double z_min = 20e-9;
    const double step = constants.trap_wavelength / 80;
    const int n = static_cast<int>(std::ceil((z_max - z_min) / step)) + 1;
    std::vector<double> z(n), intensity(n), cp(n);
    for (int i = 0; i < n; ++i) {
        z[i] = z_min + (z_max - z_min) * i / (n - 1);
        intensity[i] = field.intensity(0.0, z[i]);
        cp[i] = casimir_polder(z[i], material, constants);
    }
    if (*std::max_element(intensity.begin(), intensity.end()) <= 0)
        throw ComputationError("calibration: field is identically zero");

    auto deepest = [&](double alpha, CalibrationResult* out) {
        PhysicalConstants c = constants;
        c.polarizability = alpha;
        std::vector<double> u(n);
        for (int i = 0; i < n; ++i)
            u[i] = dipole_potential(intensity[i], c) + cp[i];
        PotentialFunction eval = [&](double rho, double zz) {
            return dipole_potential(field.intensity(rho, zz), c) + casimir_polder(zz, material, c);
        };
        SiteSearchOptions opts;
        opts.min_depth_kelvin = 0;
        auto sites = find_sites(z, u, eval, c, opts);
        double best = 0;
        int idx = 0;
        for (const auto& s : sites)
            if (s.depth > best) {
                best = s.depth;
                idx = s.index;
            }
        if (out) {
            out->polarizability = alpha;
            out->deepest_depth = best;
            out->deepest_index = idx;
        }
        return best;
    };

    const double target = target_depth_kelvin * constants.k_B;
    // Depth is very nearly linear in alpha; bracket around the linear guess.
    const double alpha0 = 4e-38;
    const double d0 = deepest(alpha0, nullptr);
    if (d0 <= 0)
        throw ComputationError("calibration: no trap site found");
    double guess = alpha0 * target / d0;
    double lo = 0.8 * guess, hi = 1.25 * guess;
    auto f = [&](double a) { return deepest(a, nullptr) - target; };
    while (f(lo) > 0)
        lo *= 0.8;
    while (f(hi) < 0)
        hi *= 1.25;
    boost::uintmax_t iters = 100;
    auto tol = boost::math::tools::eps_tolerance<double>(48);
    auto [a, b] = boost::math::tools::toms748_solve(f, lo, hi, tol, iters);
    CalibrationResult result;
    deepest(0.5 * (a + b), &result);
    return result;
}

}  // namespace tweezerlab
