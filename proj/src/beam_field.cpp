#include "tweezerlab/beam_field.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "line_minimum.hpp"
#include <boost/math/tools/roots.hpp>

#include "tweezerlab/errors.hpp"
#include "tweezerlab/quadrature.hpp"

namespace tweezerlab {

namespace {

constexpr double kPi = std::numbers::pi;

double bessel_j0(double x) { return x == 0.0 ? 1.0 : std::cyl_bessel_j(0.0, x); }

// Pupil-weighted nodes for a given pupil width and order, unnormalized.
std::vector<AngularNode> make_nodes(double na, double pupil_width, int order)
{
    const double theta_max = std::asin(na);
    QuadratureRule rule = gauss_legendre(order, 0.0, theta_max);
    std::vector<AngularNode> nodes(rule.size());
    for (std::size_t j = 0; j < rule.size(); ++j) {
        const double s = std::sin(rule.nodes[j]);
        const double c = std::cos(rule.nodes[j]);
        const double g = std::exp(-(s / pupil_width) * (s / pupil_width));
        // s ds = sin(theta) cos(theta) d(theta)
        nodes[j] = {s, c, g * s * c * rule.weights[j]};
    }
    return nodes;
}

Complex sum_field(std::span<const AngularNode> nodes, double k, double rho, double z)
{
    Complex acc{0, 0};
    for (const auto& n : nodes) {
        const double j0 = bessel_j0(k * rho * n.sin_theta);
        const double phase = -k * n.cos_theta * z;
        acc += n.amplitude * j0 * Complex(std::cos(phase), std::sin(phase));
    }
    return acc;
}

double focal_radius_of(std::span<const AngularNode> nodes, double k, double na)
{
    const double i0 = std::norm(sum_field(nodes, k, 0, 0));
    if (i0 == 0)
        return 0;
    const double target = std::exp(-2.0);
    auto ratio = [&](double r) { return std::norm(sum_field(nodes, k, r, 0)) / i0 - target; };
    const double step = 0.05 * (2 * kPi / k) / na;
    double lo = 0, hi = step;
    while (ratio(hi) > 0) {
        lo = hi;
        hi += step;
        if (hi > 1e4 * step)
            throw ComputationError("focal_radius: no 1/e^2 crossing found");
    }
    boost::uintmax_t iters = 100;
    auto tol = boost::math::tools::eps_tolerance<double>(40);
    auto [a, b] = boost::math::tools::toms748_solve(ratio, lo, hi, tol, iters);
    return 0.5 * (a + b);
}

}  // namespace

void BeamSpec::validate() const
{
    if (!(wavelength > 0) || !std::isfinite(wavelength))
        throw std::invalid_argument("beam wavelength must be positive");
    if (!(power >= 0) || !std::isfinite(power))
        throw std::invalid_argument("beam power must be >= 0");
    if (!(waist > 0) || !std::isfinite(waist))
        throw std::invalid_argument("beam waist must be positive");
    if (!(numerical_aperture > 0 && numerical_aperture < 1))
        throw std::invalid_argument("numerical aperture must lie in (0, 1)");
    if (!std::isfinite(frequency_offset) || !std::isfinite(phase_offset))
        throw std::invalid_argument("beam offsets must be finite");
}

double canonical_phase(double cycles)
{
    double p = std::fmod(cycles, 1.0);
    if (p < 0)
        p += 1.0;
    return p >= 1.0 ? 0.0 : p;
}

TrapConfiguration membrane_configuration(bool with_bottom, double relative_phase)
{
    TrapConfiguration config;
    config.relative_phase = canonical_phase(relative_phase);
    if (with_bottom) {
        BeamSpec bottom;
        bottom.power = 84e-3;
        bottom.waist = 7e-6;
        bottom.numerical_aperture = 0.05;
        bottom.direction = BeamDirection::BottomUp;
        config.bottom_beam = bottom;
    }
    return config;
}

TrapConfiguration waveguide_surrogate(TrapConfiguration config, double waveguide_reflectance)
{
    if (!(waveguide_reflectance >= 0))
        throw std::invalid_argument("waveguide reflectance must be >= 0");
    const double membrane_r =
        stack_response(config.stack, config.top_beam.wavelength, 0.0, Polarization::S).R;
    if (membrane_r <= 0)
        throw std::invalid_argument("waveguide surrogate needs a reflecting stack");
    config.reflection_scale = std::sqrt(waveguide_reflectance / membrane_r);
    return config;
}

FocusedBeam::FocusedBeam(const BeamSpec& spec, const FocusOptions& options) : spec_(spec)
{
    spec_.validate();
    k_ = 2 * kPi / spec_.wavelength;
    const double na = spec_.numerical_aperture;

    // Pupil width from the waist. Wider pupils focus tighter; the uniform
    // (untruncated) pupil is the diffraction limit.
    constexpr int kSolveOrder = 160;
    auto radius_for = [&](double s0) {
        return focal_radius_of(make_nodes(na, s0, kSolveOrder), k_, na);
    };
    const double s_hi = 1e3;
    const double r_min = radius_for(s_hi);
    if (spec_.waist < r_min * (1 - 1e-9))
        throw std::invalid_argument("waist " + std::to_string(spec_.waist) +
                                    " m is below the diffraction limit " + std::to_string(r_min) +
                                    " m for this numerical aperture");
    double s_lo = 0.25 * spec_.wavelength / (kPi * spec_.waist);
    while (radius_for(s_lo) < spec_.waist)
        s_lo *= 0.5;
    if (spec_.waist <= r_min) {
        pupil_width_ = s_hi;
    }
    else {
        boost::uintmax_t iters = 200;
        auto tol = boost::math::tools::eps_tolerance<double>(45);
        auto f = [&](double s0) { return radius_for(s0) - spec_.waist; };
        auto [a, b] = boost::math::tools::toms748_solve(f, s_lo, s_hi, tol, iters);
        pupil_width_ = 0.5 * (a + b);
    }

    // Order from a doubling convergence check over the region of interest.
    std::vector<std::pair<double, double>> probes;
    for (double r : {0.0, 0.5 * options.max_radius, options.max_radius})
        for (double z : {0.0, 0.5 * options.max_defocus, options.max_defocus, -options.max_defocus})
            probes.emplace_back(r, z);

    int order = options.min_order;
    std::vector<AngularNode> current = make_nodes(na, pupil_width_, order);
    for (;;) {
        std::vector<AngularNode> finer = make_nodes(na, pupil_width_, 2 * order);
        const double scale = std::abs(sum_field(finer, k_, 0, 0));
        double err = 0;
        for (auto [r, z] : probes)
            err = std::max(err, std::abs(sum_field(current, k_, r, z) - sum_field(finer, k_, r, z)));
        achieved_tolerance_ = err / scale;
        current = std::move(finer);
        order *= 2;
        if (achieved_tolerance_ < options.tolerance)
            break;
        if (order >= options.max_order)
            throw ComputationError("focused beam quadrature did not converge: achieved " +
                                   std::to_string(achieved_tolerance_) + " relative");
    }

    // Power normalization: P = (2 pi / k^2) C^2 int_0^NA g(s)^2 s ds.
    const double s0 = pupil_width_;
    const double pupil_integral = 0.25 * s0 * s0 * (1.0 - std::exp(-2.0 * na * na / (s0 * s0)));
    const double c = std::sqrt(spec_.power * k_ * k_ / (2 * kPi * pupil_integral));
    for (auto& n : current)
        n.amplitude *= c;
    nodes_ = std::move(current);
}

Complex FocusedBeam::field(double rho, double z) const { return sum_field(nodes_, k_, rho, z); }

double focal_radius(const FocusedBeam& beam)
{
    return focal_radius_of(beam.nodes(), beam.wavenumber(), beam.spec().numerical_aperture);
}

TrapField::TrapField(const TrapConfiguration& config, const FocusOptions& options)
    : config_(config), beam_(config.top_beam, options)
{
    if (config_.top_beam.direction != BeamDirection::TopDown)
        throw std::invalid_argument("top beam must be directed top-down");
    if (!(config_.reflection_scale >= 0) || !std::isfinite(config_.reflection_scale))
        throw std::invalid_argument("reflection_scale must be >= 0");
    if (!std::isfinite(config_.focus_offset) || !std::isfinite(config_.relative_phase))
        throw std::invalid_argument("focus_offset and relative_phase must be finite");

    const double k = beam_.wavenumber();
    const double zf = config_.focus_offset;
    const double lambda = config_.top_beam.wavelength;
    for (const auto& n : beam_.nodes()) {
        const double theta = std::asin(n.sin_theta);
        const Complex rs = stack_response(config_.stack, lambda, theta, Polarization::S).r;
        const Complex rp = stack_response(config_.stack, lambda, theta, Polarization::P).r;
        const Complex r = 0.5 * (rs + rp) * config_.reflection_scale;
        const double ph = k * n.cos_theta * zf;
        const Complex shift(std::cos(ph), std::sin(ph));
        incident_w_.push_back(n.amplitude * shift);
        reflected_w_.push_back(n.amplitude * r * shift);
    }

    // First maximum of the stationary (incident + reflected) on-axis pattern.
    auto stationary = [&](double z) {
        Complex acc{0, 0};
        for (std::size_t j = 0; j < incident_w_.size(); ++j) {
            const double ph = k * beam_.nodes()[j].cos_theta * z;
            const Complex e(std::cos(ph), std::sin(ph));
            acc += incident_w_[j] * std::conj(e) + reflected_w_[j] * e;
        }
        return acc;
    };
    {
        const int n_scan = 256;
        const double span = 0.55 * lambda;
        double best_z = 0, best = -1;
        for (int i = 0; i <= n_scan; ++i) {
            const double z = span * i / n_scan;
            const double v = std::norm(stationary(z));
            if (v > best) {
                best = v;
                best_z = z;
            }
        }
        const double h = span / n_scan;
        auto neg = [&](double z) { return -std::norm(stationary(z)); };
        auto res = detail::line_minimum(neg, std::max(0.0, best_z - h), best_z + h);
        first_max_ = res.first;
    }

    if (config_.bottom_beam) {
        const BeamSpec& b = *config_.bottom_beam;
        b.validate();
        if (b.direction != BeamDirection::BottomUp)
            throw std::invalid_argument("bottom beam must be directed bottom-up");
        bottom_waist_ = b.waist;
        bottom_k_ = 2 * kPi / b.wavelength;
        const Complex t_up = stack_response(config_.stack.reversed(), b.wavelength, 0.0, Polarization::S).t;
        const double a0 = std::sqrt(2.0 * b.power / (kPi * b.waist * b.waist));
        // Reference phase: constructive with the reflected beam at first_max_.
        Complex refl{0, 0};
        for (std::size_t j = 0; j < reflected_w_.size(); ++j) {
            const double ph = k * beam_.nodes()[j].cos_theta * first_max_;
            refl += reflected_w_[j] * Complex(std::cos(ph), std::sin(ph));
        }
        const double ref_phase = std::arg(refl) - std::arg(t_up) - bottom_k_ * first_max_;
        const double phase = ref_phase - 2 * kPi * config_.relative_phase + b.phase_offset;
        bottom_amp_ = a0 * t_up * Complex(std::cos(phase), std::sin(phase));
    }
}

FieldComponents TrapField::components(double rho, double z) const
{
    const double k = beam_.wavenumber();
    FieldComponents out;
    const auto nodes = beam_.nodes();
    for (std::size_t j = 0; j < nodes.size(); ++j) {
        const double j0 = bessel_j0(k * rho * nodes[j].sin_theta);
        const double ph = k * nodes[j].cos_theta * z;
        const Complex e(std::cos(ph), std::sin(ph));
        out.incident += incident_w_[j] * j0 * std::conj(e);
        out.reflected += reflected_w_[j] * j0 * e;
    }
    if (has_bottom()) {
        const double ph = bottom_k_ * z;
        out.bottom = bottom_amp_ * std::exp(-rho * rho / (bottom_waist_ * bottom_waist_)) *
                     Complex(std::cos(ph), std::sin(ph));
    }
    return out;
}

LineCut axial_line_cut(const TrapField& field, double z_min, double z_max, int n_samples)
{
    if (n_samples < 2 || !(z_max > z_min))
        throw std::invalid_argument("axial_line_cut: need n_samples >= 2 and z_max > z_min");
    LineCut cut;
    cut.z.resize(n_samples);
    cut.value.resize(n_samples);
    for (int i = 0; i < n_samples; ++i) {
        const double z = z_min + (z_max - z_min) * i / (n_samples - 1);
        cut.z[i] = z;
        cut.value[i] = field.intensity(0.0, z);
    }
    return cut;
}

}  // namespace tweezerlab
