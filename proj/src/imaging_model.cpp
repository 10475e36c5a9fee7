#include "tweezerlab/imaging_model.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>
#include <string>

#include "tweezerlab/quadrature.hpp"

namespace tweezerlab {

namespace {

void require_positive(double v, const char* name)
{
    if (!(v > 0) || !std::isfinite(v))
        throw std::invalid_argument(std::string(name) + " must be > 0");
}

void require_fraction(double v, const char* name)
{
    if (!(v > 0 && v <= 1))
        throw std::invalid_argument(std::string(name) + " must lie in (0, 1]");
}

// Panels of at most this width in v, each with a fixed Gauss rule.
constexpr double kPanel = 1.0;
constexpr int kPanelOrder = 16;

}  // namespace

void CameraModel::validate() const
{
    require_positive(electrons_per_count, "electrons_per_count");
    require_positive(em_gain, "em_gain");
    require_fraction(quantum_efficiency, "quantum_efficiency");
    require_fraction(optics_transmittance, "optics_transmittance");
    require_fraction(collection_fraction, "collection_fraction");
    require_positive(pixel_pitch, "pixel_pitch");
    require_positive(exposure, "exposure");
    if (counting_pixels <= 0)
        throw std::invalid_argument("counting_pixels must be > 0");
}

double CameraModel::counts_per_photon() const
{
    return em_gain * quantum_efficiency * optics_transmittance * collection_fraction / electrons_per_count;
}

double photons_from_counts(double counts, const CameraModel& camera)
{
    camera.validate();
    if (!(counts >= 0))
        throw std::invalid_argument("counts must be >= 0");
    return counts * camera.electrons_per_count /
           (camera.em_gain * camera.quantum_efficiency * camera.optics_transmittance * camera.collection_fraction);
}

double counts_from_photons(double photons, const CameraModel& camera)
{
    camera.validate();
    if (!(photons >= 0))
        throw std::invalid_argument("photons must be >= 0");
    return photons * camera.em_gain * camera.quantum_efficiency * camera.optics_transmittance *
           camera.collection_fraction / camera.electrons_per_count;
}

double recoil_heating(double photons, const PhysicalConstants& constants)
{
    if (!(photons >= 0))
        throw std::invalid_argument("photons must be >= 0");
    return 2.0 / 3.0 * photons * constants.recoil_energy() / constants.k_B;
}

DefocusPsf::DefocusPsf(double numerical_aperture, double wavelength)
    : na_(numerical_aperture), wavelength_(wavelength)
{
    require_fraction(numerical_aperture, "numerical_aperture");
    require_positive(wavelength, "wavelength");
    for (int order = 48; order <= 1536; order *= 2)
        pupil_rules_.push_back(gauss_legendre(order, 0.0, 1.0));
}

double DefocusPsf::v_of(double r) const { return 2 * std::numbers::pi / wavelength_ * na_ * r; }

double DefocusPsf::u_of(double dz) const { return 2 * std::numbers::pi / wavelength_ * na_ * na_ * dz; }

double DefocusPsf::h_squared(double v, double u) const
{
    // About one node per radian of phase plus a margin.
    const double needed = 32 + 1.5 * (std::abs(v) + 0.5 * std::abs(u));
    const QuadratureRule* rule = &pupil_rules_.back();
    for (const auto& r : pupil_rules_)
        if (static_cast<double>(r.size()) >= needed) {
            rule = &r;
            break;
        }
    std::complex<double> acc{0, 0};
    for (std::size_t j = 0; j < rule->size(); ++j) {
        const double p = rule->nodes[j];
        const double j0 = v == 0 ? 1.0 : std::cyl_bessel_j(0.0, v * p);
        acc += rule->weights[j] * j0 * p * std::polar(1.0, -0.5 * u * p * p);
    }
    return std::norm(2.0 * acc);
}

double DefocusPsf::intensity(double r, double defocus) const
{
    return h_squared(v_of(r), u_of(defocus));
}

double DefocusPsf::radial_integral(double v_lo, double v_hi, double u, bool square, double v_half) const
{
    // Integrates |h|^2 v w(v) over [v_lo, v_hi], w = angular share of the
    // circle of radius v inside the square (1 for the disk).
    if (!(v_hi > v_lo))
        return 0.0;
    const int panels = std::max(1, static_cast<int>(std::ceil((v_hi - v_lo) / kPanel)));
    const QuadratureRule unit = gauss_legendre(kPanelOrder, 0.0, 1.0);
    const bool corner = square && v_lo >= v_half;
    double total = 0;
    for (int p = 0; p < panels; ++p) {
        const double a = v_lo + (v_hi - v_lo) * p / panels;
        const double b = v_lo + (v_hi - v_lo) * (p + 1) / panels;
        for (std::size_t j = 0; j < unit.size(); ++j) {
            double v, jac;
            if (corner) {
                // v = a + (b - a) s^2 removes the square-root edge of arccos at v_half.
                const double s = unit.nodes[j];
                v = a + (b - a) * s * s;
                jac = 2 * (b - a) * s;
            }
            else {
                v = a + (b - a) * unit.nodes[j];
                jac = b - a;
            }
            double w = 1.0;
            if (corner && v > v_half)
                w = 1.0 - 4.0 / std::numbers::pi * std::acos(std::min(1.0, v_half / v));
            total += unit.weights[j] * jac * w * v * h_squared(v, u);
        }
    }
    return total;
}

double DefocusPsf::square_fraction(double half_side, double defocus) const
{
    require_positive(half_side, "half_side");
    const double u = u_of(defocus);
    const double va = v_of(half_side);
    return 0.5 * (radial_integral(0.0, va, u, true, va) + radial_integral(va, va * std::numbers::sqrt2, u, true, va));
}

double DefocusPsf::disk_fraction(double radius, double defocus) const
{
    require_positive(radius, "radius");
    return 0.5 * radial_integral(0.0, v_of(radius), u_of(defocus), false, 0.0);
}

DefocusedCounts defocused_counts(double atom_z, const CameraModel& camera, double reflectance,
                                 double photons, const DefocusPsf& psf)
{
    if (!(atom_z >= 0))
        throw std::invalid_argument("atom_z must be >= 0");
    if (!(reflectance >= 0 && reflectance <= 1))
        throw std::invalid_argument("reflectance must lie in [0, 1]");
    const double half_side = 0.5 * camera.counting_pixels * camera.pixel_pitch;
    const double direct = counts_from_photons(photons, camera);
    // The image dipole sits at -atom_z, i.e. the same defocus magnitude.
    const double fraction = psf.square_fraction(half_side, atom_z);
    const double image_fraction = reflectance > 0 ? psf.square_fraction(half_side, -atom_z) : 0.0;
    DefocusedCounts out;
    out.total_counts = direct * (1 + reflectance);
    out.counts = direct * (fraction + reflectance * image_fraction);
    out.capture_fraction = out.total_counts > 0 ? out.counts / out.total_counts : fraction;
    return out;
}

double CompositeGaussianParams::mean(int n) const { return n * atom_counts + background; }

double CompositeGaussianParams::sigma(int n) const
{
    if (n == 0)
        return background_width / std::numbers::sqrt2;
    return atom_width * std::sqrt(n * atom_counts + background) / std::numbers::sqrt2;
}

double CompositeGaussianParams::density(double counts) const
{
    const double inv_sqrt_pi = 1.0 / std::sqrt(std::numbers::pi);
    double c = 0;
    for (int n = 0; n <= n_max(); ++n) {
        const double width = n == 0 ? background_width : atom_width * std::sqrt(n * atom_counts + background);
        const double d = (counts - mean(n)) / width;
        c += occurrences[n] / width * std::exp(-d * d);
    }
    return inv_sqrt_pi * c;
}

void CompositeGaussianParams::validate() const
{
    if (occurrences.empty())
        throw std::invalid_argument("composite model needs at least P_0");
    for (double p : occurrences)
        if (!(p >= 0))
            throw std::invalid_argument("occurrences must be >= 0");
    require_positive(background_width, "w_bg");
    if (n_max() > 0) {
        require_positive(atom_counts, "I_a");
        require_positive(atom_width, "w");
        if (!(background > -atom_counts))
            throw std::invalid_argument("n I_a + I_bg must stay positive");
    }
}

void CountHistogram::validate() const
{
    if (edges.size() != occurrences.size() + 1 || occurrences.empty())
        throw std::invalid_argument("histogram needs bins + 1 edges");
    for (std::size_t i = 1; i < edges.size(); ++i)
        if (!(edges[i] > edges[i - 1]))
            throw std::invalid_argument("histogram edges must be strictly increasing");
    std::int64_t total = 0;
    for (auto o : occurrences) {
        if (o < 0)
            throw std::invalid_argument("histogram occurrences must be >= 0");
        total += o;
    }
    if (total != n_shots)
        throw std::invalid_argument("histogram occurrences must sum to n_shots");
}

CountHistogram bin_counts(std::span<const double> samples, double lo, double hi, double bin_width)
{
    require_positive(bin_width, "bin_width");
    if (!(hi > lo))
        throw std::invalid_argument("bin range must have hi > lo");
    const auto n_bins = static_cast<std::size_t>(std::ceil((hi - lo) / bin_width - 1e-9));
    CountHistogram h;
    h.edges.resize(n_bins + 1);
    for (std::size_t i = 0; i <= n_bins; ++i)
        h.edges[i] = lo + bin_width * static_cast<double>(i);
    h.occurrences.assign(n_bins, 0);
    for (double s : samples) {
        if (!(s >= lo) || !(s < h.edges.back()))
            continue;
        const auto i = std::min(n_bins - 1, static_cast<std::size_t>((s - lo) / bin_width));
        ++h.occurrences[i];
        ++h.n_shots;
    }
    return h;
}

int OccupancyLaw::draw(std::mt19937_64& rng) const
{
    if (probabilities.empty() && max_atoms < 0)
        return std::poisson_distribution<int>(poisson_mean)(rng);
    std::vector<double> p = probabilities;
    if (p.empty()) {
        double term = 1;
        for (int n = 0; n <= max_atoms; ++n) {
            if (n > 0)
                term *= poisson_mean / n;
            p.push_back(term);
        }
    }
    std::discrete_distribution<int> d(p.begin(), p.end());
    return d(rng);
}

SynthResult synth_histogram(const SynthSpec& spec)
{
    if (spec.n_shots <= 0)
        throw std::invalid_argument("n_shots must be > 0");
    if (spec.occupancy.probabilities.empty() && !(spec.occupancy.poisson_mean >= 0))
        throw std::invalid_argument("Poisson mean must be >= 0");
    CompositeGaussianParams model{{1.0, 1.0}, spec.background, spec.background_width, spec.atom_counts,
                                  spec.atom_width};
    model.validate();

    std::mt19937_64 rng(spec.seed);
    SynthResult out;
    out.atoms.resize(spec.n_shots);
    out.counts.resize(spec.n_shots);
    for (int i = 0; i < spec.n_shots; ++i) {
        const int n = spec.occupancy.draw(rng);
        out.atoms[i] = n;
        out.counts[i] = std::normal_distribution<double>(model.mean(n), model.sigma(n))(rng);
    }
    const auto [lo_it, hi_it] = std::minmax_element(out.counts.begin(), out.counts.end());
    const double lo = std::floor(*lo_it / spec.bin_width) * spec.bin_width;
    const double hi = (std::floor(*hi_it / spec.bin_width) + 1) * spec.bin_width;
    out.histogram = bin_counts(out.counts, lo, hi, spec.bin_width);
    return out;
}

}  // namespace tweezerlab
