#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCore>

namespace headswap {

struct BoxLlsOptions
{
    int max_iterations = 200;
    /// Convergence on the scaled optimality measure max_i |v_i g_i|.
    double tolerance = 1e-13;
    /// Added to the diagonal of A^T A; zero requires full column rank.
    double ridge = 0.0;
};

struct BoxLlsResult
{
    Eigen::VectorXd x;
    int iterations = 0;
    bool converged = false;
    /// Largest |gradient| over coordinates not resting on a bound.
    double free_gradient = 0.0;
};

/**
 * Minimizes ||A x - b||^2 subject to lower <= x <= upper.
 *
 * Reflective Newton iteration: affine scaling by the distance to the bound the
 * gradient points at, a Newton step on the scaled system and a line search
 * along the piecewise path that reflects off bounds it meets. Iterates stay
 * strictly interior; once a stable active set emerges an exact reduced Newton
 * solve is tried and accepted when it satisfies the KKT conditions.
 * Infinite bounds are allowed. Throws std::invalid_argument when lower > upper.
 */
BoxLlsResult solve_box_lls(const Eigen::SparseMatrix<double>& A, const Eigen::VectorXd& b,
                           const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                           const BoxLlsOptions& options = {});

BoxLlsResult solve_box_lls(const Eigen::MatrixXd& A, const Eigen::VectorXd& b, const Eigen::VectorXd& lower,
                           const Eigen::VectorXd& upper, const BoxLlsOptions& options = {});

/// Same solver in quadratic form: minimize 0.5 x^T H x - g^T x on the box.
BoxLlsResult solve_box_qp(const Eigen::SparseMatrix<double>& H, const Eigen::VectorXd& g,
                          const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                          const BoxLlsOptions& options = {});

} // namespace headswap
