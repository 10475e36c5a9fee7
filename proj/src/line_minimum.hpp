#pragma once

#include <utility>

#include <boost/math/tools/minima.hpp>

namespace tweezerlab::detail {

// Brent minimum of f on [a, b] (meters). Boost's stopping rule has an absolute
// term of ~1e-8 in the argument's units, so the search runs in nanometers.
template <class F>
std::pair<double, double> line_minimum(F&& f, double a, double b)
{
    constexpr double nm = 1e-9;
    auto scaled = [&](double x) { return f(x * nm); };
    auto r = boost::math::tools::brent_find_minima(scaled, a / nm, b / nm, 40);
    return {r.first * nm, r.second};
}

}  // namespace tweezerlab::detail
