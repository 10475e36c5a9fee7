#include "tweezerlab/quadrature.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace tweezerlab {

QuadratureRule gauss_legendre(int order, double a, double b)
{
    if (order < 1)
        throw std::invalid_argument("gauss_legendre: order must be >= 1");

    QuadratureRule rule;
    rule.nodes.resize(order);
    rule.weights.resize(order);
    const unsigned n = static_cast<unsigned>(order);
    const double half = 0.5 * (b - a);
    const double mid = 0.5 * (b + a);

    // Roots are symmetric; Newton from the Tricomi initial guess.
    for (unsigned i = 0; i < (n + 1) / 2; ++i) {
        double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
        double dp = 0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = x;
            for (unsigned k = 2; k <= n; ++k) {
                double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            double pn = n == 1 ? x : p1;
            double pnm1 = n == 1 ? 1.0 : p0;
            dp = n * (x * pn - pnm1) / (x * x - 1.0);
            double dx = pn / dp;
            x -= dx;
            if (std::abs(dx) < 1e-16)
                break;
        }
        double w = 2.0 / ((1.0 - x * x) * dp * dp);
        rule.nodes[i] = mid - half * x;
        rule.nodes[n - 1 - i] = mid + half * x;
        rule.weights[i] = half * w;
        rule.weights[n - 1 - i] = half * w;
    }
    return rule;
}

}  // namespace tweezerlab
