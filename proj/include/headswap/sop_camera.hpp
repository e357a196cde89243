#pragma once

#include "headswap/morphable_model.hpp"

#include <Eigen/Core>

#include <optional>

namespace headswap {

/**
 * Scaled orthographic camera with 7 degrees of freedom: axis-angle rotation,
 * translation (z carried but never used by the projection) and scale.
 */
struct SopCamera
{
    Eigen::Vector3d rotation = Eigen::Vector3d::Zero();
    Eigen::Vector3d translation = Eigen::Vector3d::Zero();
    double scale = 1.0;

    Eigen::Matrix3d rotation_matrix() const;
};

bool operator==(const SopCamera& a, const SopCamera& b);

using Points2 = Eigen::Matrix<double, Eigen::Dynamic, 2, Eigen::RowMajor>;

struct Landmarks2D
{
    Points2 points; // 68 x 2, pixels
    std::optional<Eigen::VectorXd> confidence;
};

Eigen::Matrix3d rotation_from_axis_angle(const Eigen::Vector3d& axis_angle);
Eigen::Vector3d axis_angle_from_rotation(const Eigen::Matrix3d& rotation);

/// p = scale * (R v)_xy + t_xy for every row of `vertices`.
Points2 project(const SopCamera& cam, const Matrix3Xr& vertices);

/// Camera-space depth (z after rotation) of every vertex.
Eigen::VectorXd camera_depth(const SopCamera& cam, const Matrix3Xr& vertices);

struct PoseEstimate
{
    SopCamera camera;
    double rms_residual = 0.0; // pixels
};

/**
 * Closed-form weak-perspective pose from 2D-3D correspondences.
 *
 * Solves the centred affine factorization for the 2x3 block of sR, snaps it to
 * the nearest scaled rotation through an SVD and reads the translation off the
 * centroids. Throws std::invalid_argument for collinear image points or planar
 * model points.
 */
PoseEstimate estimate_pose(const Points2& image_points, const Matrix3Xr& model_points);

/**
 * Gauss-Newton refinement of `initial` on the reprojection error, with steps
 * only accepted when the squared error does not increase.
 */
SopCamera refine_pose(const SopCamera& initial, const Points2& image_points, const Matrix3Xr& model_points,
                      int max_iterations = 10);

double reprojection_sq_error(const SopCamera& cam, const Points2& image_points, const Matrix3Xr& model_points);

} // namespace headswap
