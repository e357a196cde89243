#include "headswap/sop_camera.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/Geometry>
#include <Eigen/SVD>

#include <cmath>
#include <stdexcept>

namespace headswap {

Eigen::Matrix3d rotation_from_axis_angle(const Eigen::Vector3d& axis_angle)
{
    const double angle = axis_angle.norm();
    if (angle == 0.0)
        return Eigen::Matrix3d::Identity();
    return Eigen::AngleAxisd(angle, axis_angle / angle).toRotationMatrix();
}

Eigen::Vector3d axis_angle_from_rotation(const Eigen::Matrix3d& rotation)
{
    const Eigen::AngleAxisd aa(rotation);
    return aa.angle() * aa.axis();
}

Eigen::Matrix3d SopCamera::rotation_matrix() const { return rotation_from_axis_angle(rotation); }

bool operator==(const SopCamera& a, const SopCamera& b)
{
    return a.rotation == b.rotation && a.translation == b.translation && a.scale == b.scale;
}

Points2 project(const SopCamera& cam, const Matrix3Xr& vertices)
{
    if (!(cam.scale > 0.0))
        throw std::invalid_argument("camera scale must be positive");
    const Eigen::Matrix<double, 2, 3> top = cam.rotation_matrix().topRows<2>();
    Points2 out(vertices.rows(), 2);
    for (Eigen::Index i = 0; i < vertices.rows(); ++i)
    {
        const Eigen::Vector2d p = cam.scale * (top * vertices.row(i).transpose()) + cam.translation.head<2>();
        out.row(i) = p.transpose();
    }
    return out;
}

Eigen::VectorXd camera_depth(const SopCamera& cam, const Matrix3Xr& vertices)
{
    const Eigen::RowVector3d third = cam.rotation_matrix().row(2);
    return vertices * third.transpose();
}

double reprojection_sq_error(const SopCamera& cam, const Points2& image_points, const Matrix3Xr& model_points)
{
    return (project(cam, model_points) - image_points).squaredNorm();
}

PoseEstimate estimate_pose(const Points2& image_points, const Matrix3Xr& model_points)
{
    const Eigen::Index n = image_points.rows();
    if (n != model_points.rows() || n < 4)
        throw std::invalid_argument("dimension mismatch: need >= 4 matching 2D/3D points");

    const Eigen::RowVector2d c2 = image_points.colwise().mean();
    const Eigen::RowVector3d c3 = model_points.colwise().mean();
    const Eigen::Matrix<double, 2, Eigen::Dynamic> x = (image_points.rowwise() - c2).transpose();
    const Eigen::Matrix<double, 3, Eigen::Dynamic> X = (model_points.rowwise() - c3).transpose();

    const Eigen::Matrix2d cov2 = x * x.transpose();
    const Eigen::Vector2d ev2 = Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d>(cov2).eigenvalues();
    if (!(ev2(0) > 1e-12 * std::max(ev2(1), 1e-300)))
        throw std::invalid_argument("degenerate configuration: landmarks are collinear");
    const Eigen::Matrix3d cov3 = X * X.transpose();
    const Eigen::Vector3d ev3 = Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d>(cov3).eigenvalues();
    if (!(ev3(0) > 1e-12 * std::max(ev3(2), 1e-300)))
        throw std::invalid_argument("degenerate configuration: model points are planar");

    // Least-squares affine block A (2x3) with A X = x.
    const Eigen::Matrix<double, 2, 3> affine = cov3.ldlt().solve(X * x.transpose()).transpose();

    Eigen::JacobiSVD<Eigen::Matrix<double, 2, 3>> svd(affine, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const Eigen::Vector2d sv = svd.singularValues();
    if (!(sv(1) > 1e-12 * sv(0)))
        throw std::invalid_argument("degenerate configuration: rank-deficient affine fit");
    const Eigen::Matrix<double, 2, 3> top = svd.matrixU() * svd.matrixV().leftCols<2>().transpose();

    Eigen::Matrix3d R;
    R.row(0) = top.row(0);
    R.row(1) = top.row(1);
    R.row(2) = top.row(0).cross(top.row(1));

    PoseEstimate est;
    est.camera.scale = 0.5 * (sv(0) + sv(1));
    est.camera.rotation = axis_angle_from_rotation(R);
    est.camera.translation.head<2>() = c2.transpose() - est.camera.scale * (top * c3.transpose());
    est.camera.translation.z() = 0.0;
    est.rms_residual = std::sqrt(reprojection_sq_error(est.camera, image_points, model_points) / n);
    return est;
}

SopCamera refine_pose(const SopCamera& initial, const Points2& image_points, const Matrix3Xr& model_points,
                      int max_iterations)
{
    SopCamera cam = initial;
    double cost = reprojection_sq_error(cam, image_points, model_points);
    double damping = 1e-6;
    const Eigen::Index n = model_points.rows();

    for (int it = 0; it < max_iterations && cost > 0.0; ++it)
    {
        const Eigen::Matrix3d R = cam.rotation_matrix();
        Eigen::Matrix<double, 6, 6> JtJ = Eigen::Matrix<double, 6, 6>::Zero();
        Eigen::Matrix<double, 6, 1> Jtr = Eigen::Matrix<double, 6, 1>::Zero();
        for (Eigen::Index k = 0; k < n; ++k)
        {
            const Eigen::Vector3d w = R * model_points.row(k).transpose();
            const Eigen::Vector2d r = cam.scale * w.head<2>() + cam.translation.head<2>() -
                                      image_points.row(k).transpose();
            // Columns: left-multiplied rotation increment (3), translation (2), scale (1).
            Eigen::Matrix<double, 2, 6> J;
            J << 0.0, cam.scale * w.z(), -cam.scale * w.y(), 1.0, 0.0, w.x(),
                -cam.scale * w.z(), 0.0, cam.scale * w.x(), 0.0, 1.0, w.y();
            JtJ.noalias() += J.transpose() * J;
            Jtr.noalias() += J.transpose() * r;
        }

        bool improved = false;
        for (int attempt = 0; attempt < 8 && !improved; ++attempt)
        {
            Eigen::Matrix<double, 6, 6> H = JtJ;
            H.diagonal() += damping * JtJ.diagonal().cwiseMax(1e-12);
            const Eigen::Matrix<double, 6, 1> step = -H.ldlt().solve(Jtr);

            SopCamera trial = cam;
            trial.rotation = axis_angle_from_rotation(rotation_from_axis_angle(step.head<3>()) * R);
            trial.translation.head<2>() += step.segment<2>(3);
            trial.scale += step(5);
            if (trial.scale > 0.0)
            {
                const double trial_cost = reprojection_sq_error(trial, image_points, model_points);
                if (trial_cost <= cost)
                {
                    improved = trial_cost < cost;
                    const double rel = (cost - trial_cost) / cost;
                    cam = trial;
                    cost = trial_cost;
                    damping = std::max(damping * 0.1, 1e-12);
                    if (!improved || rel < 1e-15)
                        return cam;
                    break;
                }
            }
            damping *= 10.0;
        }
        if (!improved)
            break;
    }
    return cam;
}

} // namespace headswap
