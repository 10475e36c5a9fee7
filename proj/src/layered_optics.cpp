#include "tweezerlab/layered_optics.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace tweezerlab {

namespace {

bool finite(Complex z) { return std::isfinite(z.real()) && std::isfinite(z.imag()); }

// cos(theta_j) in layer j from Snell's law, branch chosen so the wave decays
// (or propagates) into the layer: Im(n cos) >= 0, and Re(n cos) >= 0 when lossless.
Complex layer_cosine(Complex n, Complex transverse)
{
    Complex s = transverse / n;
    Complex c = std::sqrt(Complex(1.0) - s * s);
    Complex q = n * c;
    if (q.imag() < 0 || (q.imag() == 0 && q.real() < 0))
        c = -c;
    return c;
}

Complex admittance(Complex n, Complex cosine, Polarization pol)
{
    return pol == Polarization::S ? n * cosine : n / cosine;
}

void check_angle(double theta)
{
    if (!std::isfinite(theta) || theta < 0 || theta >= std::numbers::pi / 2)
        throw std::invalid_argument("incidence angle must lie in [0, pi/2)");
}

}  // namespace

LayerStack::LayerStack(std::vector<Layer> layers) : layers_(std::move(layers))
{
    if (layers_.size() < 2)
        throw std::invalid_argument("LayerStack needs at least two layers");
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        const Layer& l = layers_[i];
        const bool boundary = i == 0 || i + 1 == layers_.size();
        if (!finite(l.index) || l.index.real() <= 0)
            throw std::invalid_argument("layer " + std::to_string(i) + ": invalid refractive index");
        if (l.index.imag() < 0)
            throw std::invalid_argument("layer " + std::to_string(i) + ": Im(n) must be >= 0");
        if (boundary) {
            if (!std::isinf(l.thickness))
                throw std::invalid_argument("boundary layers must be semi-infinite");
            if (l.index.imag() != 0)
                throw std::invalid_argument("boundary media must be lossless");
        }
        else if (!std::isfinite(l.thickness) || l.thickness < 0) {
            throw std::invalid_argument("layer " + std::to_string(i) +
                                        ": interior thickness must be finite and >= 0");
        }
    }
}

LayerStack LayerStack::reversed() const
{
    return LayerStack(std::vector<Layer>(layers_.rbegin(), layers_.rend()));
}

LayerStack membrane_stack(const MaterialIndices& indices, bool with_top_layer)
{
    std::vector<Layer> layers;
    layers.push_back({1.0, Layer::kSemiInfinite});
    if (with_top_layer)
        layers.push_back({indices.silicon_nitride, 360e-9});
    layers.push_back({indices.silica, 2e-6});
    layers.push_back({indices.silicon_nitride, 550e-9});
    layers.push_back({1.0, Layer::kSemiInfinite});
    return LayerStack(std::move(layers));
}

InterfaceCoefficients fresnel_interface(Complex n1, Complex n2, double theta, Polarization pol)
{
    if (!finite(n1) || !finite(n2))
        throw std::invalid_argument("fresnel_interface: non-finite index");
    if (n1.imag() != 0 || n1.real() <= 0)
        throw std::invalid_argument("fresnel_interface: incidence medium must be real and positive");
    check_angle(theta);

    const Complex transverse = n1 * std::sin(theta);
    const Complex c1 = std::cos(theta);
    const Complex c2 = layer_cosine(n2, transverse);
    const Complex y1 = admittance(n1, c1, pol);
    const Complex y2 = admittance(n2, c2, pol);
    InterfaceCoefficients out;
    out.r = (y1 - y2) / (y1 + y2);
    Complex t_tangential = 2.0 * y1 / (y1 + y2);
    out.t = pol == Polarization::S ? t_tangential : t_tangential * c1 / c2;
    return out;
}

PlaneWaveResponse stack_response(const LayerStack& stack, double wavelength, double theta,
                                 Polarization pol)
{
    if (!std::isfinite(wavelength) || wavelength <= 0)
        throw std::invalid_argument("stack_response: wavelength must be positive");
    check_angle(theta);

    const auto& layers = stack.layers();
    const Complex n_in = layers.front().index;
    const Complex transverse = n_in * std::sin(theta);
    const double k0 = 2.0 * std::numbers::pi / wavelength;

    const Complex c_in = std::cos(theta);
    const Complex y_in = admittance(n_in, c_in, pol);
    const Complex c_out = layer_cosine(layers.back().index, transverse);
    const Complex y_out = admittance(layers.back().index, c_out, pol);

    // Characteristic matrix product, (B, C) = M (1, y_out).
    Complex m00 = 1, m01 = 0, m10 = 0, m11 = 1;
    for (std::size_t j = 1; j + 1 < layers.size(); ++j) {
        const Complex n = layers[j].index;
        const Complex c = layer_cosine(n, transverse);
        const Complex y = admittance(n, c, pol);
        const Complex delta = k0 * n * c * layers[j].thickness;
        const Complex cd = std::cos(delta);
        const Complex sd = std::sin(delta);
        const Complex a00 = cd, a01 = Complex(0, -1) * sd / y;
        const Complex a10 = Complex(0, -1) * y * sd, a11 = cd;
        const Complex b00 = m00 * a00 + m01 * a10;
        const Complex b01 = m00 * a01 + m01 * a11;
        const Complex b10 = m10 * a00 + m11 * a10;
        const Complex b11 = m10 * a01 + m11 * a11;
        m00 = b00, m01 = b01, m10 = b10, m11 = b11;
    }
    const Complex B = m00 + m01 * y_out;
    const Complex C = m10 + m11 * y_out;
    const Complex denom = y_in * B + C;

    PlaneWaveResponse out;
    out.polarization = pol;
    out.angle = theta;
    out.wavelength = wavelength;
    out.r = (y_in * B - C) / denom;
    const Complex t_tangential = 2.0 * y_in / denom;
    out.t = pol == Polarization::S ? t_tangential : t_tangential * c_in / c_out;
    out.R = std::norm(out.r);

    // Exit wave is evanescent when n_out cos_out is purely imaginary.
    const Complex q_out = layers.back().index * c_out;
    out.evanescent_exit = std::abs(q_out.real()) < 1e-14 * std::abs(q_out);
    out.T = out.evanescent_exit ? 0.0
                                : 4.0 * y_in.real() * y_out.real() / std::norm(denom);
    return out;
}

std::vector<PlaneWaveResponse> reflectance_spectrum(const LayerStack& stack, double wavelength,
                                                    std::span<const double> thetas,
                                                    Polarization pol)
{
    for (std::size_t i = 1; i < thetas.size(); ++i)
        if (!(thetas[i] > thetas[i - 1]))
            throw std::invalid_argument("reflectance_spectrum: theta grid must be increasing");
    std::vector<PlaneWaveResponse> out;
    out.reserve(thetas.size());
    for (double theta : thetas)
        out.push_back(stack_response(stack, wavelength, theta, pol));
    return out;
}

}  // namespace tweezerlab
