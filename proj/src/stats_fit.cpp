#include "tweezerlab/stats_fit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>

#include <boost/math/tools/roots.hpp>

#include "tweezerlab/errors.hpp"
#include "tweezerlab/loading_mc.hpp"

namespace tweezerlab {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::vector<double> smoothed(const CountHistogram& h, int half_window)
{
    const int n = static_cast<int>(h.bins());
    std::vector<double> s(n);
    for (int i = 0; i < n; ++i) {
        double acc = 0;
        int cnt = 0;
        for (int j = std::max(0, i - half_window); j <= std::min(n - 1, i + half_window); ++j) {
            acc += static_cast<double>(h.occurrences[j]);
            ++cnt;
        }
        s[i] = acc / cnt;
    }
    return s;
}

// Signed square root of the Poisson deviance of one bin.
double deviance_residual(double observed, double expected)
{
    expected = std::max(expected, 1e-300);
    double d = 2 * (expected - observed);
    if (observed > 0)
        d += 2 * observed * std::log(observed / expected);
    d = std::max(d, 0.0);
    return observed >= expected ? std::sqrt(d) : -std::sqrt(d);
}

double gaussian_bin(double occurrence, double mean, double width, double center, double bin)
{
    const double d = (center - mean) / width;
    return bin * occurrence / (std::sqrt(std::numbers::pi) * width) * std::exp(-d * d);
}

// Half width at half maximum of the smoothed peak at index i, in counts.
double half_width(const std::vector<double>& s, const CountHistogram& h, std::size_t i)
{
    const double half = 0.5 * s[i];
    std::size_t l = i, r = i;
    while (l > 0 && s[l] > half)
        --l;
    while (r + 1 < s.size() && s[r] > half)
        ++r;
    return 0.5 * (h.center(r) - h.center(l));
}

struct Moments {
    double mean = 0, m2 = 0, m3 = 0, m4 = 0;
};

Moments central_moments(std::span<const double> p)
{
    Moments m;
    for (std::size_t n = 0; n < p.size(); ++n)
        m.mean += n * p[n];
    for (std::size_t n = 0; n < p.size(); ++n) {
        const double d = n - m.mean;
        m.m2 += d * d * p[n];
        m.m3 += d * d * d * p[n];
        m.m4 += d * d * d * d * p[n];
    }
    return m;
}

// Mean of Poisson(lambda) restricted to 0..n_max.
double truncated_mean(double lambda, int n_max)
{
    double term = 1, z = 1, first = 0;
    for (int n = 1; n <= n_max; ++n) {
        term *= lambda / n;
        z += term;
        first += n * term;
    }
    return first / z;
}

}  // namespace

BackgroundFit fit_background(const CountHistogram& h, std::optional<double> cut)
{
    h.validate();
    if (h.n_shots <= 0)
        throw ComputationError("fit_background: empty histogram");
    const auto s = smoothed(h, 2);
    // Background mode: the lowest-count smoothed maximum reaching 30% of the
    // tallest, so heavily loaded histograms still start from the n = 0 peak.
    const double tallest = *std::max_element(s.begin(), s.end());
    std::size_t mode = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        const bool left = i == 0 || s[i] >= s[i - 1];
        const bool right = i + 1 == s.size() || s[i] >= s[i + 1];
        if (left && right && s[i] >= 0.3 * tallest) {
            mode = i;
            break;
        }
    }
    const double bw = h.width(mode);
    const double w_est = std::max(bw, half_width(s, h, mode) / std::sqrt(std::log(2.0)));

    BackgroundFit out;
    if (cut) {
        out.cut = *cut;
    }
    else {
        out.cut = h.center(mode) + 2 * w_est;
        for (std::size_t i = mode + 1; i + 1 < s.size(); ++i)
            if (s[i] <= s[i - 1] && s[i] < s[i + 1] && s[i] < 0.5 * s[mode]) {
                out.cut = h.center(i);
                break;
            }
    }
    std::vector<std::size_t> bins;
    for (std::size_t i = 0; i < h.bins(); ++i)
        if (h.center(i) <= out.cut)
            bins.push_back(i);
    if (bins.size() < 4)
        throw ComputationError("fit_background: fewer than 4 bins below the background cut");

    // Parameters: P_0, I_bg, w_bg.
    auto residual = [&](const Eigen::VectorXd& p, Eigen::VectorXd& r) {
        for (std::size_t k = 0; k < bins.size(); ++k) {
            const std::size_t i = bins[k];
            r[k] = deviance_residual(static_cast<double>(h.occurrences[i]),
                                     gaussian_bin(p[0], p[1], p[2], h.center(i), h.width(i)));
        }
    };
    Eigen::VectorXd p0(3), lo(3), hi(3);
    p0 << static_cast<double>(h.n_shots) * 0.5, h.center(mode), w_est;
    lo << 0, h.edges.front(), 1e-3 * bw;
    hi << 10.0 * h.n_shots, h.edges.back(), h.edges.back() - h.edges.front();
    // Start P_0 from the peak height: height = bw P_0 / (sqrt(pi) w).
    p0[0] = std::clamp(s[mode] * std::sqrt(std::numbers::pi) * w_est / bw, 1.0, hi[0]);
    out.fit = nlls_fit(residual, static_cast<int>(bins.size()), p0, lo, hi);
    out.background_occurrence = out.fit.params[0];
    out.background = out.fit.params[1];
    out.background_width = out.fit.params[2];
    out.p_atom = 1.0 - out.background_occurrence / static_cast<double>(h.n_shots);
    out.p_atom_error = std::sqrt(std::max(0.0, out.fit.covariance(0, 0))) / static_cast<double>(h.n_shots);
    return out;
}

OccupancyStats occupancy_from(std::span<const double> weights)
{
    if (weights.empty())
        throw std::invalid_argument("occupancy needs at least one weight");
    double total = 0;
    for (double w : weights) {
        if (!(w >= 0))
            throw std::invalid_argument("occupancy weights must be >= 0");
        total += w;
    }
    if (!(total > 0))
        throw std::invalid_argument("occupancy weights sum to zero");
    OccupancyStats o;
    o.probabilities.resize(weights.size());
    for (std::size_t n = 0; n < weights.size(); ++n)
        o.probabilities[n] = weights[n] / total;
    const Moments m = central_moments(o.probabilities);
    o.mean = m.mean;
    o.variance = m.m2;
    return o;
}

PoissonFit fit_poisson(const OccupancyStats& occ, double n_shots)
{
    const auto& p = occ.probabilities;
    if (p.empty())
        throw std::invalid_argument("fit_poisson: empty occupancy");
    const double sum = std::accumulate(p.begin(), p.end(), 0.0);
    if (std::abs(sum - 1) > 1e-9)
        throw std::invalid_argument("fit_poisson: P(n) must sum to 1");
    const int n_max = static_cast<int>(p.size()) - 1;
    const Moments m = central_moments(p);

    PoissonFit out;
    out.fano = m.mean > 0 ? m.m2 / m.mean : 0.0;
    if (m.m2 <= 1e-15 || n_max == 0) {
        out.mean = m.mean;  // all mass at one n
    }
    else {
        // Truncated-Poisson ML: the model mean equals the sample mean.
        auto f = [&](double lambda) { return truncated_mean(lambda, n_max) - m.mean; };
        double hi = std::max(1.0, 2 * m.mean);
        while (f(hi) < 0)
            hi *= 2;
        boost::uintmax_t iters = 200;
        auto [a, b] = boost::math::tools::toms748_solve(f, 0.0, hi, boost::math::tools::eps_tolerance<double>(50), iters);
        out.mean = 0.5 * (a + b);
    }
    // Per-shot log likelihood of the truncated law, and its variance.
    if (out.mean > 0) {
        std::vector<double> q(n_max + 1);
        double z = 0, term = 1;
        for (int n = 0; n <= n_max; ++n) {
            if (n > 0)
                term *= out.mean / n;
            q[n] = term;
            z += term;
        }
        for (int n = 0; n <= n_max; ++n) {
            q[n] /= z;
            if (p[n] > 0)
                out.log_likelihood += p[n] * (n * std::log(out.mean) - std::lgamma(n + 1.0) - std::log(z));
        }
        const double model_variance = central_moments(q).m2;
        out.dispersion_ratio = model_variance > 0 ? m.m2 / model_variance : 0.0;
    }
    if (n_shots > 0 && m.mean > 0) {
        const double F = out.fano;
        const double var_s2 = (m.m4 - m.m2 * m.m2) / n_shots;
        const double var_m = m.m2 / n_shots;
        const double cov = m.m3 / n_shots;
        const double v = var_s2 / (m.mean * m.mean) + F * F * var_m / (m.mean * m.mean) - 2 * F * cov / (m.mean * m.mean);
        out.fano_error = std::sqrt(std::max(0.0, v));
        out.sub_poissonian = F + 2 * out.fano_error < 1;
    }
    else {
        out.sub_poissonian = m.mean > 0 && out.fano < 1 - 1e-9;
    }
    return out;
}

double CompositeFit::model_total() const
{
    return std::accumulate(params.occurrences.begin(), params.occurrences.end(), 0.0);
}

CompositeFit fit_composite_gaussian(const CountHistogram& h, int n_max)
{
    if (n_max < 1)
        throw std::invalid_argument("fit_composite_gaussian: n_max must be >= 1");
    CompositeFit out;
    out.background = fit_background(h);
    const double i_bg = out.background.background, w_bg = out.background.background_width;
    const double sigma0 = w_bg / std::numbers::sqrt2;

    // First smoothed maximum above the background peak reaching half the
    // tallest one there. Smoothing over about half a background width keeps
    // shot noise in sparse tails from posing as peaks.
    const int window = std::max(2, static_cast<int>(std::lround(0.5 * sigma0 / h.width(0))));
    const auto s = smoothed(h, window);
    std::size_t start = 0;
    while (start < h.bins() && h.center(start) <= std::max(out.background.cut, i_bg + 3 * sigma0))
        ++start;
    double tallest = 0;
    for (std::size_t i = start; i < h.bins(); ++i)
        tallest = std::max(tallest, s[i]);
    std::size_t peak = h.bins();
    for (std::size_t i = start; i < h.bins(); ++i) {
        const bool left = i == 0 || s[i] >= s[i - 1];
        const bool right = i + 1 == h.bins() || s[i] > s[i + 1];
        if (left && right && s[i] >= 0.5 * tallest && s[i] > 0) {
            peak = i;
            break;
        }
    }
    const bool found = peak < h.bins() && tallest >= 2;
    // Without an atom peak the histogram must be background only; the atom
    // peaks then start beyond the data and their occurrences fit to ~0.
    const bool empty = out.background.p_atom <
                       3 * std::max(out.background.p_atom_error, 1.0 / static_cast<double>(h.n_shots));
    if (!found && !empty)
        throw ComputationError("fit_composite_gaussian: no atom peak found above background (I_bg = " +
                               std::to_string(i_bg) + ", P(n>=1) = " + std::to_string(out.background.p_atom) +
                               ", searched from " + std::to_string(h.center(std::min(start, h.bins() - 1))) + ")");
    const double i_a0 = found ? h.center(peak) - i_bg : h.edges.back() + 4 * sigma0 - i_bg;
    if (!(i_a0 > 0))
        throw ComputationError("fit_composite_gaussian: atom peak below background");
    out.initial_atom_counts = i_a0;
    const double sigma1 =
        found ? std::max(half_width(s, h, peak) / std::sqrt(2 * std::log(2.0)), h.width(peak)) : sigma0;
    const double w0 = std::numbers::sqrt2 * sigma1 / std::sqrt(i_a0 + i_bg);

    const double shots = static_cast<double>(h.n_shots);
    const double p_zero = std::clamp(out.background.background_occurrence, 0.0, shots);
    const double nbar0 = std::max(0.05, -std::log(std::max(p_zero, 0.5) / shots));

    const int np = n_max + 5;
    Eigen::VectorXd p(np), lo(np), hi(np);
    double term = std::exp(-nbar0);
    double tail = 0;
    for (int n = 1; n <= n_max; ++n) {
        term *= nbar0 / n;
        tail += term;
    }
    term = std::exp(-nbar0);
    for (int n = 0; n <= n_max; ++n) {
        if (n > 0)
            term *= nbar0 / n;
        p[n] = n == 0 ? p_zero : std::max(1e-3, (shots - p_zero) * term / std::max(tail, 1e-12));
        lo[n] = 0;
        hi[n] = 10 * shots;
    }
    const double bw = h.width(0);
    p[n_max + 1] = i_bg;
    p[n_max + 2] = w_bg;
    p[n_max + 3] = i_a0;
    p[n_max + 4] = w0;
    lo[n_max + 1] = h.edges.front();
    hi[n_max + 1] = h.edges.back();
    lo[n_max + 2] = 1e-3 * bw;
    hi[n_max + 2] = h.edges.back() - h.edges.front();
    lo[n_max + 3] = bw;
    hi[n_max + 3] = h.edges.back() - h.edges.front();
    lo[n_max + 4] = 1e-6;
    hi[n_max + 4] = 1e6;
    if (!found) {
        // I_a and w are not identifiable without atom peaks; hold them.
        lo[n_max + 3] = hi[n_max + 3] = p[n_max + 3];
        lo[n_max + 4] = hi[n_max + 4] = p[n_max + 4];
    }
    for (int j = 0; j < np; ++j)
        p[j] = std::clamp(p[j], lo[j], hi[j]);

    auto unpack = [n_max](const Eigen::VectorXd& v) {
        CompositeGaussianParams c;
        c.occurrences.assign(v.data(), v.data() + n_max + 1);
        c.background = v[n_max + 1];
        c.background_width = v[n_max + 2];
        c.atom_counts = v[n_max + 3];
        c.atom_width = v[n_max + 4];
        return c;
    };
    // One residual per bin plus one for the model mass outside the binned
    // range, where no shots were observed.
    const double a = h.edges.front(), b = h.edges.back();
    auto residual = [&](const Eigen::VectorXd& v, Eigen::VectorXd& r) {
        const CompositeGaussianParams c = unpack(v);
        for (std::size_t i = 0; i < h.bins(); ++i)
            r[static_cast<Eigen::Index>(i)] =
                deviance_residual(static_cast<double>(h.occurrences[i]), h.width(i) * c.density(h.center(i)));
        double outside = 0;
        for (int n = 0; n <= n_max; ++n) {
            const double width = std::numbers::sqrt2 * c.sigma(n);
            const double inside = 0.5 * (std::erf((b - c.mean(n)) / width) - std::erf((a - c.mean(n)) / width));
            outside += c.occurrences[n] * std::max(0.0, 1 - inside);
        }
        r[static_cast<Eigen::Index>(h.bins())] = deviance_residual(0.0, outside);
    };
    out.fit = nlls_fit(residual, static_cast<int>(h.bins()) + 1, p, lo, hi);
    out.params = unpack(out.fit.params);
    out.errors = out.fit.standard_errors();
    out.occupancy = occupancy_from(out.params.occurrences);
    out.poisson = fit_poisson(out.occupancy, shots);
    return out;
}

ExponentialFit fit_exponential_counts(std::span<const double> z, std::span<const double> counts)
{
    if (z.size() != counts.size())
        throw std::invalid_argument("fit_exponential_counts: z and counts differ in length");
    if (z.size() < 3)
        throw std::invalid_argument("fit_exponential_counts: need at least 3 points");
    for (std::size_t i = 0; i < z.size(); ++i) {
        if (!(z[i] >= 0) || !std::isfinite(z[i]))
            throw std::invalid_argument("fit_exponential_counts: z must be >= 0");
        if (!(counts[i] > 0) || !std::isfinite(counts[i]))
            throw std::invalid_argument("fit_exponential_counts: counts must be > 0");
    }
    // Log-linear start, z in micrometers inside the fit.
    const double n = static_cast<double>(z.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < z.size(); ++i) {
        const double x = z[i] * 1e6, y = std::log(counts[i]);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    const double denom = n * sxx - sx * sx;
    double slope = denom != 0 ? (n * sxy - sx * sy) / denom : -1.0;
    if (!(slope < 0))
        slope = -1e-3;
    const double intercept = (sy - slope * sx) / n;

    auto residual = [&](const Eigen::VectorXd& p, Eigen::VectorXd& r) {
        for (std::size_t i = 0; i < z.size(); ++i)
            r[static_cast<Eigen::Index>(i)] = p[0] * std::exp(-z[i] * 1e6 / p[1]) - counts[i];
    };
    Eigen::VectorXd p0(2), lo(2), hi(2);
    p0 << std::exp(intercept), -1.0 / slope;
    lo << 0, 1e-6;
    hi << kInf, kInf;
    ExponentialFit out;
    out.fit = nlls_fit(residual, static_cast<int>(z.size()), p0, lo, hi);
    out.model.amplitude = out.fit.params[0];
    out.model.decay_length = out.fit.params[1] * 1e-6;
    return out;
}

int site_index_limit(double z_max, double trap_wavelength)
{
    return static_cast<int>(std::lround(z_max / (0.5 * trap_wavelength)));
}

double transport_expectation(const ExponentialModel& model, double nbar, double z_max, double dz,
                             double lambda, double background)
{
    if (!(nbar >= 0) || !(z_max > 0))
        throw std::invalid_argument("transport_expectation: need nbar >= 0 and z_max > 0");
    const double spacing = 0.5 * lambda;
    const double x = z_max / spacing;
    const int full = static_cast<int>(std::floor(x));
    double sum = 0;
    for (int i = 1; i <= full; ++i)
        sum += model(i * spacing + dz);
    sum += (x - full) * model((full + 1) * spacing + dz);
    return background + nbar * sum / x;
}

namespace {

// Per-configuration sums, one row per configuration.
void ensemble_row(const ExponentialModel& model, double nbar, int i_max, std::span<const double> dz,
                  double spacing, std::uint64_t seed, int c, double* row)
{
    Rng rng = trajectory_rng(seed, static_cast<std::uint64_t>(c));
    const int n = nbar > 0 ? std::poisson_distribution<int>(nbar)(rng) : 0;
    std::uniform_int_distribution<int> site(1, i_max);
    std::vector<int> sites(n);
    for (int k = 0; k < n; ++k)
        sites[k] = site(rng);
    for (std::size_t j = 0; j < dz.size(); ++j) {
        double acc = 0;
        for (int i : sites)
            acc += model(i * spacing + dz[j]);
        row[j] = acc;
    }
}

EnsembleEstimate summarize(const std::vector<double>& rows, int n_configs, std::size_t n_points, double background)
{
    EnsembleEstimate e;
    e.mean.assign(n_points, 0.0);
    e.error_of_mean.assign(n_points, 0.0);
    for (std::size_t j = 0; j < n_points; ++j) {
        double sum = 0;
        for (int c = 0; c < n_configs; ++c)
            sum += rows[static_cast<std::size_t>(c) * n_points + j];
        const double mean = sum / n_configs;
        double ss = 0;
        for (int c = 0; c < n_configs; ++c) {
            const double d = rows[static_cast<std::size_t>(c) * n_points + j] - mean;
            ss += d * d;
        }
        e.mean[j] = background + mean;
        e.error_of_mean[j] = n_configs > 1 ? std::sqrt(ss / (n_configs - 1) / n_configs) : 0.0;
    }
    return e;
}

void check_ensemble_args(double nbar, double z_max, double lambda, int n_configs)
{
    if (!(nbar >= 0) || !(z_max > 0) || !(lambda > 0) || n_configs <= 0)
        throw std::invalid_argument("transport ensemble: need nbar >= 0, z_max > 0, n_configs > 0");
}

}  // namespace

namespace kernels {

EnsembleEstimate transport_ensemble_serial(const ExponentialModel& model, double nbar, double z_max,
                                           std::span<const double> dz, double lambda, double background,
                                           int n_configs, std::uint64_t seed)
{
    check_ensemble_args(nbar, z_max, lambda, n_configs);
    const int i_max = std::max(1, site_index_limit(z_max, lambda));
    std::vector<double> rows(static_cast<std::size_t>(n_configs) * dz.size());
    for (int c = 0; c < n_configs; ++c)
        ensemble_row(model, nbar, i_max, dz, 0.5 * lambda, seed, c, &rows[static_cast<std::size_t>(c) * dz.size()]);
    return summarize(rows, n_configs, dz.size(), background);
}

EnsembleEstimate transport_ensemble_parallel(const ExponentialModel& model, double nbar, double z_max,
                                             std::span<const double> dz, double lambda, double background,
                                             int n_configs, std::uint64_t seed)
{
    check_ensemble_args(nbar, z_max, lambda, n_configs);
    const int i_max = std::max(1, site_index_limit(z_max, lambda));
    std::vector<double> rows(static_cast<std::size_t>(n_configs) * dz.size());
#pragma omp parallel for schedule(static) num_threads(worker_count())
    for (int c = 0; c < n_configs; ++c)
        ensemble_row(model, nbar, i_max, dz, 0.5 * lambda, seed, c, &rows[static_cast<std::size_t>(c) * dz.size()]);
    return summarize(rows, n_configs, dz.size(), background);
}

}  // namespace kernels

EnsembleEstimate transport_ensemble(const ExponentialModel& model, double nbar, double z_max,
                                    std::span<const double> dz, double lambda, double background,
                                    int n_configs, std::uint64_t seed, Execution execution)
{
    return execution == Execution::Serial
               ? kernels::transport_ensemble_serial(model, nbar, z_max, dz, lambda, background, n_configs, seed)
               : kernels::transport_ensemble_parallel(model, nbar, z_max, dz, lambda, background, n_configs, seed);
}

TransportFitResult fit_transport_ensemble(const TransportData& data, const ExponentialModel& model,
                                          const TransportFitOptions& opt)
{
    const std::size_t m = data.displacement.size();
    if (m < 3 || data.counts.size() != m)
        throw std::invalid_argument("fit_transport_ensemble: need >= 3 points with matching counts");
    if (!data.errors.empty() && data.errors.size() != m)
        throw std::invalid_argument("fit_transport_ensemble: errors must match the data length");
    for (std::size_t i = 0; i < m; ++i) {
        if (!(data.displacement[i] <= 0) || !std::isfinite(data.counts[i]))
            throw std::invalid_argument("fit_transport_ensemble: data must be on the downward branch (dz_f <= 0)");
        if (!data.errors.empty() && !(data.errors[i] > 0))
            throw std::invalid_argument("fit_transport_ensemble: errors must be > 0");
    }
    if (!(model.amplitude > 0) || !(model.decay_length > 0))
        throw std::invalid_argument("fit_transport_ensemble: invalid I(z) model");

    const double lambda = opt.trap_wavelength;
    // Parameters: nbar, z_max in micrometers.
    auto residual = [&](const Eigen::VectorXd& p, Eigen::VectorXd& r) {
        for (std::size_t i = 0; i < m; ++i) {
            const double mu = transport_expectation(model, p[0], p[1] * 1e-6, data.displacement[i], lambda,
                                                    opt.background);
            const double sigma = data.errors.empty() ? 1.0 : data.errors[i];
            r[static_cast<Eigen::Index>(i)] = (mu - data.counts[i]) / sigma;
        }
    };
    Eigen::VectorXd p0(2), lo(2), hi(2);
    const double spacing_um = 0.5 * lambda * 1e6;
    p0 << opt.nbar_guess, opt.z_max_guess * 1e6;
    lo << 0, spacing_um;
    hi << 1e3, 1e3;
    p0 = p0.cwiseMax(lo).cwiseMin(hi);

    TransportFitResult out;
    out.fit = nlls_fit(residual, static_cast<int>(m), p0, lo, hi);
    out.nbar = out.fit.params[0];
    out.z_max = out.fit.params[1] * 1e-6;
    const Eigen::VectorXd se = out.fit.standard_errors();
    out.nbar_error = se[0];
    out.z_max_error = se[1] * 1e-6;
    out.i_max = site_index_limit(out.z_max, lambda);
    out.residual_norm = out.fit.residual_norm();
    out.ensemble = transport_ensemble(model, out.nbar, out.z_max, data.displacement, lambda, opt.background,
                                      opt.n_configs, opt.seed, opt.execution);
    return out;
}

}  // namespace tweezerlab
