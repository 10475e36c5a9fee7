#include "tweezerlab/nlls.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace tweezerlab {

namespace {

Eigen::MatrixXd jacobian(const ResidualFunction& residual, const Eigen::VectorXd& p, int m,
                         const Eigen::VectorXd& lower, const Eigen::VectorXd& upper, int& evaluations)
{
    const int n = static_cast<int>(p.size());
    Eigen::MatrixXd J(m, n);
    Eigen::VectorXd rp(m), rm(m);
    const double eps = std::cbrt(std::numeric_limits<double>::epsilon());
    for (int j = 0; j < n; ++j) {
        const double h = eps * std::max(std::abs(p[j]), 1e-3 * std::max(1.0, std::abs(p[j])) + eps);
        Eigen::VectorXd a = p, b = p;
        a[j] = std::min(upper[j], p[j] + h);
        b[j] = std::max(lower[j], p[j] - h);
        if (a[j] == b[j]) {
            J.col(j).setZero();
            continue;
        }
        residual(a, rp);
        residual(b, rm);
        evaluations += 2;
        J.col(j) = (rp - rm) / (a[j] - b[j]);
    }
    return J;
}

double half_norm(const Eigen::VectorXd& r) { return 0.5 * r.squaredNorm(); }

bool finite(const Eigen::VectorXd& v) { return v.allFinite(); }

}  // namespace

const char* to_string(NllsStatus status)
{
    switch (status) {
    case NllsStatus::Converged: return "converged";
    case NllsStatus::MaxIterations: return "max_iterations";
    case NllsStatus::Failed: return "failed";
    }
    return "unknown";
}

double NllsResult::residual_norm() const { return std::sqrt(2 * cost); }

Eigen::VectorXd NllsResult::standard_errors() const { return covariance.diagonal().cwiseMax(0.0).cwiseSqrt(); }

NllsResult nlls_fit(const ResidualFunction& residual, int m, Eigen::VectorXd p, Eigen::VectorXd lower,
                    Eigen::VectorXd upper, const NllsOptions& opt)
{
    const int n = static_cast<int>(p.size());
    if (n == 0 || m <= 0)
        throw std::invalid_argument("nlls_fit: need at least one parameter and one residual");
    if (lower.size() != n || upper.size() != n)
        throw std::invalid_argument("nlls_fit: bound sizes differ from the parameter count");
    for (int j = 0; j < n; ++j)
        if (!(lower[j] <= p[j] && p[j] <= upper[j]))
            throw std::invalid_argument("nlls_fit: initial parameter " + std::to_string(j) + " outside its bounds");

    NllsResult out;
    Eigen::VectorXd r(m);
    residual(p, r);
    out.evaluations = 1;
    if (!finite(r)) {
        out.params = p;
        out.status = NllsStatus::Failed;
        out.message = "non-finite residual at the initial point";
        out.covariance = Eigen::MatrixXd::Constant(n, n, std::numeric_limits<double>::quiet_NaN());
        return out;
    }
    double cost = half_norm(r);
    double lambda = opt.initial_damping;
    Eigen::MatrixXd J = jacobian(residual, p, m, lower, upper, out.evaluations);
    out.status = NllsStatus::MaxIterations;
    out.message = "iteration limit reached; returning best point";

    for (int it = 0; it < opt.max_iterations; ++it) {
        out.iterations = it + 1;
        const Eigen::MatrixXd A = J.transpose() * J;
        const Eigen::VectorXd g = J.transpose() * r;
        if (g.lpNorm<Eigen::Infinity>() <= opt.gradient_tolerance * std::max(1.0, cost) || cost == 0) {
            out.status = NllsStatus::Converged;
            out.message = "gradient below tolerance";
            break;
        }
        Eigen::VectorXd scale = A.diagonal();
        for (int j = 0; j < n; ++j)
            scale[j] = std::max(scale[j], 1e-12 * std::max(1.0, scale.maxCoeff()));

        bool accepted = false;
        bool small_step = false;
        for (int tries = 0; tries < 60; ++tries) {
            Eigen::MatrixXd M = A;
            M.diagonal() += lambda * scale;
            const Eigen::VectorXd delta = M.ldlt().solve(-g);
            Eigen::VectorXd trial = (p + delta).cwiseMax(lower).cwiseMin(upper);
            const Eigen::VectorXd step = trial - p;
            if (step.norm() <= opt.step_tolerance * (p.norm() + opt.step_tolerance)) {
                small_step = true;
                break;
            }
            Eigen::VectorXd rt(m);
            residual(trial, rt);
            ++out.evaluations;
            const double ct = finite(rt) ? half_norm(rt) : std::numeric_limits<double>::infinity();
            if (ct < cost) {
                const double relative = (cost - ct) / std::max(cost, std::numeric_limits<double>::min());
                p = trial;
                r = rt;
                cost = ct;
                out.accepted_costs.push_back(cost);
                lambda = std::max(lambda / 3, 1e-15);
                accepted = true;
                if (relative < opt.cost_tolerance)
                    small_step = true;
                break;
            }
            lambda *= 4;
        }
        if (!accepted || small_step) {
            out.status = NllsStatus::Converged;
            out.message = accepted ? "cost decrease below tolerance" : "step below tolerance";
            if (accepted)
                J = jacobian(residual, p, m, lower, upper, out.evaluations);
            break;
        }
        J = jacobian(residual, p, m, lower, upper, out.evaluations);
    }

    out.params = p;
    out.cost = cost;
    const Eigen::MatrixXd A = J.transpose() * J;
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const Eigen::VectorXd sv = svd.singularValues();
    const double smax = sv.size() ? sv[0] : 0.0;
    const double smin = sv.size() ? sv[sv.size() - 1] : 0.0;
    out.condition_number = smin > 0 ? smax / smin : std::numeric_limits<double>::infinity();
    out.ill_conditioned = !(out.condition_number < opt.condition_limit);
    Eigen::VectorXd inv = Eigen::VectorXd::Zero(sv.size());
    for (int i = 0; i < sv.size(); ++i)
        if (sv[i] > smax / opt.condition_limit)
            inv[i] = 1.0 / sv[i];
    const double dof = std::max(1, m - n);
    const double s2 = 2 * cost / dof;
    out.covariance = s2 * svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
    return out;
}

NllsResult nlls_fit(const ResidualFunction& residual, int n_residuals, const Eigen::VectorXd& initial,
                    const NllsOptions& options)
{
    const auto n = initial.size();
    const double inf = std::numeric_limits<double>::infinity();
    return nlls_fit(residual, n_residuals, initial, Eigen::VectorXd::Constant(n, -inf),
                    Eigen::VectorXd::Constant(n, inf), options);
}

}  // namespace tweezerlab
