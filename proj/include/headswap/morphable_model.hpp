#pragma once

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace headswap {

inline constexpr int kNumLandmarks = 68;

using Triangle = std::array<int, 3>;
using Matrix3Xr = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;

/**
 * Linear face model: shape = mean_id + mean_exp + U_id * s_id + U_exp * s_exp.
 *
 * Vertex k occupies rows 3k..3k+2 of every 3N-vector. The basis is immutable
 * once constructed through make_basis() or load_model(), both of which run
 * validate().
 */
struct ShapeBasis
{
    Eigen::VectorXd mean_id;
    Eigen::VectorXd mean_exp;
    Eigen::MatrixXd U_id;
    Eigen::MatrixXd U_exp;
    Eigen::VectorXd sigma_id;
    Eigen::VectorXd sigma_exp;
    std::vector<Triangle> topology;
    std::vector<int> landmark_indices;

    int num_vertices() const { return static_cast<int>(mean_id.size() / 3); }
    int num_identity() const { return static_cast<int>(U_id.cols()); }
    int num_expression() const { return static_cast<int>(U_exp.cols()); }
    Eigen::VectorXd mean_shape() const { return mean_id + mean_exp; }

    /// Throws std::invalid_argument describing the first violated invariant.
    void validate(double orthonormality_tol = 1e-6) const;
};

struct ShapeParams
{
    Eigen::VectorXd identity;
    Eigen::VectorXd expression;
};

struct Mesh
{
    Matrix3Xr vertices; // N x 3
    std::vector<Triangle> topology;
};

/// Mean face with every axis min-max scaled to [0, 1].
struct NormalizedMeanFace
{
    Matrix3Xr coords;
};

Mesh synthesize_shape(const ShapeBasis& basis, const ShapeParams& params);

/// Flat 3N shape vector for the given coefficients.
Eigen::VectorXd synthesize_vector(const ShapeBasis& basis, const Eigen::VectorXd& identity,
                                  const Eigen::VectorXd& expression);

NormalizedMeanFace normalized_mean_face(const ShapeBasis& basis);

/// Rows of the 3N-vector belonging to landmark vertices, as a 68 x 3 matrix.
Matrix3Xr landmark_points(const ShapeBasis& basis, const Eigen::VectorXd& shape);

ShapeBasis load_model(const std::filesystem::path& path);
void save_model(const ShapeBasis& basis, const std::filesystem::path& path);

/// Serializes without validating; decode_model() validates.
std::vector<std::uint8_t> encode_model(const ShapeBasis& basis);
ShapeBasis decode_model(std::span<const std::uint8_t> bytes);

struct SyntheticModelOptions
{
    int grid = 40;            // vertices per side of the face grid
    int n_id = 30;
    int n_exp = 20;
    double face_width = 2.0;  // object units
    double sigma_id_scale = 0.04;
    double sigma_exp_scale = 0.03;
    std::uint64_t seed = 7;
};

/**
 * Procedural face-like model: a curved height field with a nose bump, random
 * orthonormal identity/expression bases (QR of Gaussian matrices) and 68
 * landmarks laid out in the usual jaw/brow/nose/eye/mouth order.
 *
 * Object frame: x right, y down, z away from the viewer, so an identity
 * rotation renders an upright frontal face in image coordinates.
 */
ShapeBasis make_synthetic_basis(const SyntheticModelOptions& options = {});

} // namespace headswap
