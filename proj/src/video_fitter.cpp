#include "headswap/video_fitter.hpp"

#include "headswap/parallel.hpp"

#include <Eigen/SparseCore>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace headswap {

namespace {

void check_dims(const ShapeBasis& basis, const std::vector<SopCamera>& cameras, const Eigen::VectorXd& identity,
                const Eigen::MatrixXd& expressions, const std::vector<Landmarks2D>& landmarks)
{
    const auto T = static_cast<Eigen::Index>(landmarks.size());
    if (identity.size() != basis.num_identity() || expressions.cols() != basis.num_expression() ||
        expressions.rows() != T || static_cast<Eigen::Index>(cameras.size()) != T)
        throw std::invalid_argument("dimension mismatch between fit parameters and landmark sequence");
    for (const auto& lm : landmarks)
        if (lm.points.rows() != kNumLandmarks)
            throw std::invalid_argument("each frame must carry 68 landmarks");
}

double frame_sq_error(const ShapeBasis& basis, const SopCamera& cam, const Eigen::VectorXd& identity,
                      const Eigen::VectorXd& expression, const Landmarks2D& lm)
{
    const Eigen::VectorXd shape = synthesize_vector(basis, identity, expression);
    return reprojection_sq_error(cam, lm.points, landmark_points(basis, shape));
}

} // namespace

double landmark_term(const ShapeBasis& basis, const std::vector<SopCamera>& cameras,
                     const Eigen::VectorXd& identity, const Eigen::MatrixXd& expressions,
                     const std::vector<Landmarks2D>& landmarks)
{
    check_dims(basis, cameras, identity, expressions, landmarks);
    const auto T = landmarks.size();
    if (T == 0)
        return 0.0;
    double sum = 0.0;
    for (std::size_t t = 0; t < T; ++t)
        sum += frame_sq_error(basis, cameras[t], identity, expressions.row(static_cast<Eigen::Index>(t)).transpose(),
                              landmarks[t]);
    return sum / (static_cast<double>(kNumLandmarks) * static_cast<double>(T));
}

double prior_term(const Eigen::VectorXd& identity, const Eigen::MatrixXd& expressions,
                  const Eigen::VectorXd& sigma_id, const Eigen::VectorXd& sigma_exp)
{
    if (identity.size() != sigma_id.size() || expressions.cols() != sigma_exp.size())
        throw std::invalid_argument("dimension mismatch between coefficients and sigmas");
    double e = identity.cwiseQuotient(sigma_id).squaredNorm();
    if (expressions.rows() > 0)
    {
        const Eigen::MatrixXd scaled = expressions * sigma_exp.cwiseInverse().asDiagonal();
        e += scaled.squaredNorm() / static_cast<double>(expressions.rows());
    }
    return e;
}

double smoothness_term(const Eigen::MatrixXd& expressions)
{
    double e = 0.0;
    for (Eigen::Index t = 1; t + 1 < expressions.rows(); ++t)
        e += (expressions.row(t + 1) - 2.0 * expressions.row(t) + expressions.row(t - 1)).squaredNorm();
    return e;
}

EnergyTerms energy_terms(const ShapeBasis& basis, const std::vector<SopCamera>& cameras,
                         const Eigen::VectorXd& identity, const Eigen::MatrixXd& expressions,
                         const std::vector<Landmarks2D>& landmarks)
{
    return {landmark_term(basis, cameras, identity, expressions, landmarks),
            prior_term(identity, expressions, basis.sigma_id, basis.sigma_exp), smoothness_term(expressions)};
}

double weighted_energy(const EnergyTerms& terms, const EnergyWeights& w)
{
    return w.landmark * terms.landmark + w.prior * terms.prior + w.smoothness * terms.smoothness;
}

namespace {

struct ShapeSystem
{
    Eigen::SparseMatrix<double> A;
    Eigen::VectorXd b;
    Eigen::VectorXd lower, upper;
};

// Linear least-squares system in x = [identity; expression_0; ...; expression_{T-1}]
// whose squared residual equals the weighted energy for fixed cameras.
//
// With `linearize_at` set, six columns per frame are appended for a camera
// increment (left rotation increment, translation xy, scale) linearized at the
// given shape parameters, plus `camera_damping` rows on those increments.
struct Linearization
{
    const Eigen::VectorXd* identity;
    const Eigen::MatrixXd* expressions;
    double camera_damping;
};

ShapeSystem build_shape_system(const ShapeBasis& basis, const std::vector<SopCamera>& cameras,
                               const std::vector<Landmarks2D>& landmarks, const FitOptions& opt,
                               const Linearization* linearize_at = nullptr)
{
    const int T = static_cast<int>(landmarks.size());
    const int ni = basis.num_identity();
    const int ne = basis.num_expression();
    const int shape_cols = ni + T * ne;
    const int cols = shape_cols + (linearize_at ? 6 * T : 0);
    const int lm_rows = 2 * kNumLandmarks * T;
    const int prior_rows = opt.weights.prior > 0.0 ? shape_cols : 0;
    const int smooth_rows = opt.weights.smoothness > 0.0 && T >= 3 ? (T - 2) * ne : 0;
    const int damping_rows = linearize_at && linearize_at->camera_damping > 0.0 ? 6 * T : 0;
    const int rows = lm_rows + prior_rows + smooth_rows + damping_rows;

    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<std::size_t>(lm_rows) * (ni + ne) + prior_rows + 3 * smooth_rows);
    ShapeSystem sys;
    sys.b = Eigen::VectorXd::Zero(rows);

    const double c_lm = std::sqrt(opt.weights.landmark / (static_cast<double>(kNumLandmarks) * T));
    const Eigen::VectorXd mean = basis.mean_shape();
    for (int t = 0; t < T; ++t)
    {
        const SopCamera& cam = cameras[static_cast<std::size_t>(t)];
        const Eigen::Matrix3d R = cam.rotation_matrix();
        const Eigen::Matrix<double, 2, 3> P = cam.scale * R.topRows<2>();
        Matrix3Xr current;
        if (linearize_at)
            current = landmark_points(basis, synthesize_vector(basis, *linearize_at->identity,
                                                               linearize_at->expressions->row(t).transpose()));
        for (int k = 0; k < kNumLandmarks; ++k)
        {
            const int v = basis.landmark_indices[static_cast<std::size_t>(k)];
            const Eigen::MatrixXd Bid = P * basis.U_id.middleRows(3 * v, 3);
            const Eigen::MatrixXd Bexp = P * basis.U_exp.middleRows(3 * v, 3);
            const Eigen::Vector2d base = P * mean.segment<3>(3 * v) + cam.translation.head<2>();
            for (int a = 0; a < 2; ++a)
            {
                const int row = 2 * (t * kNumLandmarks + k) + a;
                for (int j = 0; j < ni; ++j)
                    trip.emplace_back(row, j, c_lm * Bid(a, j));
                for (int j = 0; j < ne; ++j)
                    trip.emplace_back(row, ni + t * ne + j, c_lm * Bexp(a, j));
                sys.b(row) = c_lm * (landmarks[static_cast<std::size_t>(t)].points(k, a) - base(a));
            }
            if (linearize_at)
            {
                const Eigen::Vector3d w = R * current.row(k).transpose();
                Eigen::Matrix<double, 2, 6> J;
                J << 0.0, cam.scale * w.z(), -cam.scale * w.y(), 1.0, 0.0, w.x(),
                    -cam.scale * w.z(), 0.0, cam.scale * w.x(), 0.0, 1.0, w.y();
                for (int a = 0; a < 2; ++a)
                    for (int j = 0; j < 6; ++j)
                        trip.emplace_back(2 * (t * kNumLandmarks + k) + a, shape_cols + 6 * t + j, c_lm * J(a, j));
            }
        }
    }

    int row = lm_rows;
    if (prior_rows > 0)
    {
        const double c_id = std::sqrt(opt.weights.prior);
        const double c_exp = std::sqrt(opt.weights.prior / T);
        for (int j = 0; j < ni; ++j)
            trip.emplace_back(row++, j, c_id / basis.sigma_id(j));
        for (int t = 0; t < T; ++t)
            for (int j = 0; j < ne; ++j)
                trip.emplace_back(row++, ni + t * ne + j, c_exp / basis.sigma_exp(j));
    }
    if (smooth_rows > 0)
    {
        const double c_sm = std::sqrt(opt.weights.smoothness);
        for (int t = 1; t + 1 < T; ++t)
            for (int j = 0; j < ne; ++j)
            {
                trip.emplace_back(row, ni + (t - 1) * ne + j, c_sm);
                trip.emplace_back(row, ni + t * ne + j, -2.0 * c_sm);
                trip.emplace_back(row, ni + (t + 1) * ne + j, c_sm);
                ++row;
            }
    }
    if (damping_rows > 0)
    {
        const double c_d = std::sqrt(linearize_at->camera_damping);
        for (int j = 0; j < 6 * T; ++j)
            trip.emplace_back(row++, shape_cols + j, c_d);
    }

    sys.A.resize(rows, cols);
    sys.A.setFromTriplets(trip.begin(), trip.end());

    sys.lower = Eigen::VectorXd::Constant(cols, -std::numeric_limits<double>::infinity());
    sys.upper = Eigen::VectorXd::Constant(cols, std::numeric_limits<double>::infinity());
    for (int j = 0; j < ni; ++j)
    {
        sys.upper(j) = opt.box.k_id * basis.sigma_id(j);
        sys.lower(j) = -sys.upper(j);
    }
    for (int t = 0; t < T; ++t)
        for (int j = 0; j < ne; ++j)
        {
            sys.upper(ni + t * ne + j) = opt.box.k_exp * basis.sigma_exp(j);
            sys.lower(ni + t * ne + j) = -sys.upper(ni + t * ne + j);
        }
    return sys;
}

} // namespace

FitResult fit_video(const ShapeBasis& basis, const std::vector<Landmarks2D>& landmarks, const FitOptions& opt)
{
    const int T = static_cast<int>(landmarks.size());
    if (T < 1)
        throw std::invalid_argument("fit_video needs at least one frame");
    for (const auto& lm : landmarks)
        if (lm.points.rows() != kNumLandmarks || !lm.points.allFinite())
            throw std::invalid_argument("each frame must carry 68 finite landmarks");
    const auto& w = opt.weights;
    if (w.landmark < 0 || w.prior < 0 || w.smoothness < 0 || w.landmark + w.prior + w.smoothness == 0.0)
        throw std::invalid_argument("energy weights must be non-negative and not all zero");
    if (!(opt.box.k_id > 0) || !(opt.box.k_exp > 0))
        throw std::invalid_argument("box half-widths must be positive");

    const int ni = basis.num_identity();
    const int ne = basis.num_expression();
    FitResult fit;
    fit.identity = Eigen::VectorXd::Zero(ni);
    fit.expressions = Eigen::MatrixXd::Zero(T, ne);
    fit.cameras.resize(static_cast<std::size_t>(T));

    const Matrix3Xr mean_landmarks = landmark_points(basis, basis.mean_shape());
    parallel_for(T, opt.threads, [&](int t) {
        const auto& pts = landmarks[static_cast<std::size_t>(t)].points;
        const SopCamera init = estimate_pose(pts, mean_landmarks).camera;
        fit.cameras[static_cast<std::size_t>(t)] = refine_pose(init, pts, mean_landmarks);
    });

    auto energy_of = [&](const FitResult& f) {
        return weighted_energy(energy_terms(basis, f.cameras, f.identity, f.expressions, landmarks), w);
    };
    double energy = energy_of(fit);
    fit.energy_trace.push_back(energy);

    BoxLlsOptions solver_opt;
    for (int outer = 0; outer < opt.max_outer_iterations; ++outer)
    {
        const double before = energy;

        // Shape block: exact box-constrained minimizer for the fixed cameras.
        const ShapeSystem sys = build_shape_system(basis, fit.cameras, landmarks, opt);
        const BoxLlsResult sol = solve_box_lls(sys.A, sys.b, sys.lower, sys.upper, solver_opt);
        FitResult trial = fit;
        trial.identity = sol.x.head(ni);
        for (int t = 0; t < T; ++t)
            trial.expressions.row(t) = sol.x.segment(ni + t * ne, ne).transpose();
        const double shape_energy = energy_of(trial);
        if (shape_energy <= energy)
        {
            fit = std::move(trial);
            energy = shape_energy;
        }

        // Joint Gauss-Newton step over shape and linearized camera increments.
        // Alternation alone contracts slowly along directions where a shape
        // change mimics a pose change; this step removes that coupling.
        const double cam_scale2 = std::pow(fit.cameras.front().scale, 2) * w.landmark / (kNumLandmarks * T);
        for (double damping : {0.0, 1e-8, 1e-5, 1e-2, 1.0})
        {
            const Linearization lin{&fit.identity, &fit.expressions, damping * cam_scale2};
            const ShapeSystem joint = build_shape_system(basis, fit.cameras, landmarks, opt, &lin);
            BoxLlsResult js;
            try
            {
                js = solve_box_lls(joint.A, joint.b, joint.lower, joint.upper, solver_opt);
            }
            catch (const std::invalid_argument&)
            {
                continue;
            }
            FitResult cand = fit;
            const int shape_cols = ni + T * ne;
            cand.identity = js.x.head(ni);
            for (int t = 0; t < T; ++t)
            {
                cand.expressions.row(t) = js.x.segment(ni + t * ne, ne).transpose();
                const Eigen::Matrix<double, 6, 1> d = js.x.segment<6>(shape_cols + 6 * t);
                SopCamera& cam = cand.cameras[static_cast<std::size_t>(t)];
                cam.rotation = axis_angle_from_rotation(rotation_from_axis_angle(d.head<3>()) * cam.rotation_matrix());
                cam.translation.head<2>() += d.segment<2>(3);
                cam.scale += d(5);
            }
            if (std::any_of(cand.cameras.begin(), cand.cameras.end(), [](const SopCamera& c) { return !(c.scale > 0); }))
                continue;
            const double cand_energy = energy_of(cand);
            if (cand_energy <= energy)
            {
                fit = std::move(cand);
                energy = cand_energy;
                break;
            }
        }

        // Camera block: closed-form re-estimate and refinement per frame,
        // keeping whichever camera reprojects best.
        parallel_for(T, opt.threads, [&](int t) {
            const auto ts = static_cast<std::size_t>(t);
            const Eigen::VectorXd shape = synthesize_vector(basis, fit.identity, fit.expressions.row(t).transpose());
            const Matrix3Xr model = landmark_points(basis, shape);
            const auto& pts = landmarks[ts].points;
            SopCamera best = fit.cameras[ts];
            double best_err = reprojection_sq_error(best, pts, model);
            for (const SopCamera& start : {estimate_pose(pts, model).camera, fit.cameras[ts]})
            {
                const SopCamera cand = refine_pose(start, pts, model);
                const double err = reprojection_sq_error(cand, pts, model);
                if (err < best_err)
                {
                    best = cand;
                    best_err = err;
                }
            }
            fit.cameras[ts] = best;
        });
        energy = energy_of(fit);
        fit.energy_trace.push_back(energy);

        if (before <= 0.0 || (before - energy) / before < opt.relative_tolerance)
            break;
    }

    fit.terms = energy_terms(basis, fit.cameras, fit.identity, fit.expressions, landmarks);
    fit.final_energy = weighted_energy(fit.terms, w);
    return fit;
}

} // namespace headswap
