#pragma once

#include <vector>

namespace tweezerlab {

struct QuadratureRule {
    std::vector<double> nodes;
    std::vector<double> weights;

    [[nodiscard]] std::size_t size() const { return nodes.size(); }
};

// Gauss-Legendre rule of the given order mapped onto [a, b].
QuadratureRule gauss_legendre(int order, double a, double b);

}  // namespace tweezerlab
