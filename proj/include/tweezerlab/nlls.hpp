#pragma once

#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace tweezerlab {

// r(p): fills residuals (size fixed by the caller).
using ResidualFunction = std::function<void(const Eigen::VectorXd& params, Eigen::VectorXd& residuals)>;

struct NllsOptions {
    int max_iterations = 500;
    double cost_tolerance = 1e-15;     // relative cost decrease that counts as converged
    double step_tolerance = 1e-12;     // relative parameter step
    double gradient_tolerance = 1e-14; // max |J^T r| relative to cost scale
    double initial_damping = 1e-3;
    double condition_limit = 1e12;     // J^T J condition number above which we flag
};

enum class NllsStatus { Converged, MaxIterations, Failed };

const char* to_string(NllsStatus status);

struct NllsResult {
    Eigen::VectorXd params;
    Eigen::MatrixXd covariance;   // s^2 (J^T J)^+ with s^2 = 2 cost / (m - n)
    double cost = 0;              // 0.5 |r|^2
    int iterations = 0;
    int evaluations = 0;
    NllsStatus status = NllsStatus::Failed;
    bool ill_conditioned = false;
    double condition_number = 0;
    std::vector<double> accepted_costs;  // after each accepted step
    std::string message;

    [[nodiscard]] bool converged() const { return status == NllsStatus::Converged; }
    [[nodiscard]] double residual_norm() const;
    [[nodiscard]] Eigen::VectorXd standard_errors() const;
};

// Bounded Levenberg-Marquardt. Bounds are enforced by projecting trial steps;
// the Jacobian comes from central differences. The initial point must lie
// inside [lower, upper]. Never throws for non-convergence: status and
// message say what happened and params hold the best point seen.
NllsResult nlls_fit(const ResidualFunction& residual, int n_residuals, Eigen::VectorXd initial,
                    Eigen::VectorXd lower, Eigen::VectorXd upper, const NllsOptions& options = {});

// Unbounded convenience overload.
NllsResult nlls_fit(const ResidualFunction& residual, int n_residuals, const Eigen::VectorXd& initial,
                    const NllsOptions& options = {});

}  // namespace tweezerlab
