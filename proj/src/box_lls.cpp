#include "headswap/box_lls.hpp"

#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

namespace headswap {

namespace {

using SpMat = Eigen::SparseMatrix<double>;
constexpr double kInf = std::numeric_limits<double>::infinity();

SpMat selection(const std::vector<int>& idx, Eigen::Index n)
{
    SpMat P(n, static_cast<Eigen::Index>(idx.size()));
    std::vector<Eigen::Triplet<double>> t;
    t.reserve(idx.size());
    for (std::size_t k = 0; k < idx.size(); ++k)
        t.emplace_back(idx[k], static_cast<int>(k), 1.0);
    P.setFromTriplets(t.begin(), t.end());
    return P;
}

double objective(const SpMat& H, const Eigen::VectorXd& g, const Eigen::VectorXd& x)
{
    return 0.5 * x.dot(H * x) - g.dot(x);
}

class ReflectiveNewton
{
public:
    ReflectiveNewton(const SpMat& H, const Eigen::VectorXd& g, const Eigen::VectorXd& lo, const Eigen::VectorXd& hi,
                     const BoxLlsOptions& opt)
        : H_(H), g_(g), lo_(lo), hi_(hi), opt_(opt), n_(g.size())
    {
        scale_ = std::max(1.0, g_.lpNorm<Eigen::Infinity>());
    }

    BoxLlsResult run()
    {
        BoxLlsResult res;

        Eigen::SimplicialLDLT<SpMat> full(H_);
        if (full.info() != Eigen::Success)
            throw std::invalid_argument("box least squares: normal matrix is not positive definite");
        Eigen::VectorXd x = full.solve(g_);
        if (strictly_inside(x))
        {
            res.x = x;
            res.converged = true;
            res.free_gradient = (H_ * x - g_).lpNorm<Eigen::Infinity>();
            return res;
        }
        x = pull_inside(x);

        std::vector<signed char> prev_state;
        for (int it = 0; it < opt_.max_iterations; ++it)
        {
            res.iterations = it + 1;
            const Eigen::VectorXd grad = H_ * x - g_;

            Eigen::VectorXd v(n_), c(n_);
            std::vector<signed char> state(n_, 0);
            double measure = 0.0;
            for (Eigen::Index i = 0; i < n_; ++i)
            {
                if (grad(i) < 0.0 && hi_(i) < kInf)
                {
                    v(i) = hi_(i) - x(i);
                    c(i) = -grad(i);
                    if (v(i) <= active_tol(i))
                        state[i] = 1;
                }
                else if (grad(i) >= 0.0 && lo_(i) > -kInf)
                {
                    v(i) = x(i) - lo_(i);
                    c(i) = grad(i);
                    if (v(i) <= active_tol(i) && grad(i) > 0.0)
                        state[i] = -1;
                }
                else
                {
                    v(i) = 1.0;
                    c(i) = 0.0;
                }
                measure = std::max(measure, std::abs(v(i) * grad(i)));
            }

            const bool stable = state == prev_state;
            prev_state = state;
            if (stable || measure <= opt_.tolerance * scale_)
            {
                if (auto exact = crossover(state))
                {
                    res.x = *exact;
                    res.converged = true;
                    break;
                }
            }
            if (measure <= opt_.tolerance * scale_)
            {
                res.x = x;
                res.converged = true;
                break;
            }

            const Eigen::VectorXd d = v.cwiseSqrt();
            SpMat M = d.asDiagonal() * H_ * d.asDiagonal();
            const double jitter = 1e-14 * std::max(1.0, M.diagonal().maxCoeff());
            for (Eigen::Index i = 0; i < n_; ++i)
                M.coeffRef(i, i) += c(i) + jitter;
            Eigen::SimplicialLDLT<SpMat> solver(M);
            if (solver.info() != Eigen::Success)
                break;
            const Eigen::VectorXd scaled = solver.solve(-(d.cwiseProduct(grad)));
            const Eigen::VectorXd step = d.cwiseProduct(scaled);

            const double theta = std::max(0.95, 1.0 - measure / scale_);
            Eigen::VectorXd next = reflective_search(x, step, theta);
            if (objective(H_, g_, next) > objective(H_, g_, x))
                break;
            if ((next - x).lpNorm<Eigen::Infinity>() == 0.0)
            {
                res.x = x;
                break;
            }
            x = std::move(next);
            res.x = x;
        }
        if (res.x.size() == 0)
            res.x = x;
        res.free_gradient = free_gradient(res.x);
        return res;
    }

private:
    double width(Eigen::Index i) const
    {
        if (lo_(i) > -kInf && hi_(i) < kInf)
            return hi_(i) - lo_(i);
        const double b = lo_(i) > -kInf ? lo_(i) : hi_(i);
        return 1.0 + std::abs(b);
    }

    double active_tol(Eigen::Index i) const { return 1e-3 * width(i); }

    bool strictly_inside(const Eigen::VectorXd& x) const
    {
        return ((x - lo_).array() > 0.0).all() && ((hi_ - x).array() > 0.0).all();
    }

    Eigen::VectorXd pull_inside(Eigen::VectorXd x) const
    {
        for (Eigen::Index i = 0; i < n_; ++i)
        {
            const double margin = 0.05 * width(i);
            if (lo_(i) > -kInf && hi_(i) < kInf)
                x(i) = std::clamp(x(i), lo_(i) + margin, hi_(i) - margin);
            else if (lo_(i) > -kInf)
                x(i) = std::max(x(i), lo_(i) + margin);
            else if (hi_(i) < kInf)
                x(i) = std::min(x(i), hi_(i) - margin);
        }
        return x;
    }

    // Minimizes the quadratic along x + t*step, reflecting the direction off
    // each bound the path meets. Candidate points are kept strictly interior
    // by stopping a fraction theta short of any boundary.
    Eigen::VectorXd reflective_search(const Eigen::VectorXd& x, Eigen::VectorXd dir, double theta) const
    {
        Eigen::VectorXd pos = x;
        Eigen::VectorXd best = x;
        double best_val = objective(H_, g_, x);
        constexpr int kSegments = 4;
        for (int seg = 0; seg < kSegments; ++seg)
        {
            double reach = kInf;
            for (Eigen::Index i = 0; i < n_; ++i)
            {
                if (dir(i) > 0.0 && hi_(i) < kInf)
                    reach = std::min(reach, (hi_(i) - pos(i)) / dir(i));
                else if (dir(i) < 0.0 && lo_(i) > -kInf)
                    reach = std::min(reach, (lo_(i) - pos(i)) / dir(i));
            }
            const Eigen::VectorXd Hd = H_ * dir;
            const double slope = (H_ * pos - g_).dot(dir);
            const double curv = dir.dot(Hd);
            if (!(slope < 0.0))
                break;
            const double t_min = curv > 0.0 ? -slope / curv : kInf;
            if (t_min < reach)
            {
                const Eigen::VectorXd cand = pos + t_min * dir;
                const double val = objective(H_, g_, cand);
                if (val < best_val)
                {
                    best = cand;
                    best_val = val;
                }
                break;
            }
            if (!(reach < kInf))
                break;
            const Eigen::VectorXd cand = pos + theta * reach * dir;
            const double val = objective(H_, g_, cand);
            if (val < best_val)
            {
                best = cand;
                best_val = val;
            }
            pos += reach * dir;
            for (Eigen::Index i = 0; i < n_; ++i)
            {
                const bool at_hi = hi_(i) < kInf && dir(i) > 0.0 && pos(i) >= hi_(i) - 1e-15 * width(i);
                const bool at_lo = lo_(i) > -kInf && dir(i) < 0.0 && pos(i) <= lo_(i) + 1e-15 * width(i);
                if (at_hi || at_lo)
                {
                    pos(i) = at_hi ? hi_(i) : lo_(i);
                    dir(i) = -dir(i);
                }
            }
        }
        return best;
    }

    // Exact solve with the estimated active set pinned to its bounds.
    std::optional<Eigen::VectorXd> crossover(const std::vector<signed char>& state) const
    {
        std::vector<int> free_idx, act_idx;
        Eigen::VectorXd x = Eigen::VectorXd::Zero(n_);
        for (Eigen::Index i = 0; i < n_; ++i)
        {
            if (state[i] == 0)
                free_idx.push_back(static_cast<int>(i));
            else
            {
                act_idx.push_back(static_cast<int>(i));
                x(i) = state[i] > 0 ? hi_(i) : lo_(i);
            }
        }
        if (!free_idx.empty())
        {
            const SpMat P = selection(free_idx, n_);
            const SpMat Hff = P.transpose() * H_ * P;
            const Eigen::VectorXd rhs = P.transpose() * (g_ - H_ * x);
            Eigen::SimplicialLDLT<SpMat> solver(Hff);
            if (solver.info() != Eigen::Success)
                return std::nullopt;
            const Eigen::VectorXd xf = solver.solve(rhs);
            for (std::size_t k = 0; k < free_idx.size(); ++k)
            {
                const int i = free_idx[k];
                if (xf(k) < lo_(i) || xf(k) > hi_(i))
                    return std::nullopt;
                x(i) = xf(k);
            }
        }
        const Eigen::VectorXd grad = H_ * x - g_;
        const double tol = 1e-12 * scale_;
        for (int i : act_idx)
        {
            if (state[i] < 0 && grad(i) < -tol)
                return std::nullopt;
            if (state[i] > 0 && grad(i) > tol)
                return std::nullopt;
        }
        return x;
    }

    double free_gradient(const Eigen::VectorXd& x) const
    {
        const Eigen::VectorXd grad = H_ * x - g_;
        double worst = 0.0;
        for (Eigen::Index i = 0; i < n_; ++i)
        {
            const bool on_lo = x(i) <= lo_(i);
            const bool on_hi = x(i) >= hi_(i);
            if (!on_lo && !on_hi)
                worst = std::max(worst, std::abs(grad(i)));
        }
        return worst;
    }

    const SpMat& H_;
    const Eigen::VectorXd& g_;
    const Eigen::VectorXd& lo_;
    const Eigen::VectorXd& hi_;
    const BoxLlsOptions& opt_;
    Eigen::Index n_;
    double scale_ = 1.0;
};

} // namespace

BoxLlsResult solve_box_qp(const SpMat& H, const Eigen::VectorXd& g, const Eigen::VectorXd& lower,
                          const Eigen::VectorXd& upper, const BoxLlsOptions& options)
{
    const Eigen::Index n = g.size();
    if (H.rows() != n || H.cols() != n || lower.size() != n || upper.size() != n)
        throw std::invalid_argument("dimension mismatch in box-constrained solve");
    if ((lower.array() > upper.array()).any())
        throw std::invalid_argument("infeasible box: lower bound exceeds upper bound");

    std::vector<int> free_idx;
    Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
    for (Eigen::Index i = 0; i < n; ++i)
    {
        if (lower(i) == upper(i))
            x(i) = lower(i);
        else
            free_idx.push_back(static_cast<int>(i));
    }

    BoxLlsResult res;
    if (free_idx.empty())
    {
        res.x = x;
        res.converged = true;
        return res;
    }

    SpMat Hr;
    Eigen::VectorXd gr, lo, hi;
    const bool reduced = free_idx.size() != static_cast<std::size_t>(n);
    if (reduced)
    {
        const SpMat P = selection(free_idx, n);
        Hr = P.transpose() * H * P;
        gr = P.transpose() * (g - H * x);
        lo = P.transpose() * lower;
        hi = P.transpose() * upper;
    }
    else
    {
        Hr = H;
        gr = g;
        lo = lower;
        hi = upper;
    }
    if (options.ridge > 0.0)
        for (Eigen::Index i = 0; i < Hr.rows(); ++i)
            Hr.coeffRef(i, i) += options.ridge;

    BoxLlsResult inner = ReflectiveNewton(Hr, gr, lo, hi, options).run();
    for (std::size_t k = 0; k < free_idx.size(); ++k)
        x(free_idx[k]) = inner.x(static_cast<Eigen::Index>(k));
    inner.x = std::move(x);
    return inner;
}

BoxLlsResult solve_box_lls(const SpMat& A, const Eigen::VectorXd& b, const Eigen::VectorXd& lower,
                           const Eigen::VectorXd& upper, const BoxLlsOptions& options)
{
    if (A.rows() != b.size())
        throw std::invalid_argument("dimension mismatch: A rows vs b");
    const SpMat At = A.transpose();
    const SpMat H = At * A;
    const Eigen::VectorXd g = At * b;
    return solve_box_qp(H, g, lower, upper, options);
}

BoxLlsResult solve_box_lls(const Eigen::MatrixXd& A, const Eigen::VectorXd& b, const Eigen::VectorXd& lower,
                           const Eigen::VectorXd& upper, const BoxLlsOptions& options)
{
    return solve_box_lls(SpMat(A.sparseView(0.0, 0.0)), b, lower, upper, options);
}

} // namespace headswap
