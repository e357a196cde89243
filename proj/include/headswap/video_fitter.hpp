#pragma once

#include "headswap/box_lls.hpp"
#include "headswap/morphable_model.hpp"
#include "headswap/sop_camera.hpp"

#include <Eigen/Core>

#include <vector>

namespace headswap {

struct EnergyWeights
{
    double landmark = 1.0;
    double prior = 0.05;
    double smoothness = 0.5;
};

/// Box half-widths in units of the per-mode standard deviation.
struct BoxConstraints
{
    double k_id = 3.0;
    double k_exp = 3.0;
};

struct EnergyTerms
{
    double landmark = 0.0;
    double prior = 0.0;
    double smoothness = 0.0;
};

struct FitResult
{
    Eigen::VectorXd identity;       // shared by every frame
    Eigen::MatrixXd expressions;    // T x n_exp
    std::vector<SopCamera> cameras; // T
    double final_energy = 0.0;
    EnergyTerms terms;
    /// Total energy after initialization and after every outer iteration.
    std::vector<double> energy_trace;

    int num_frames() const { return static_cast<int>(cameras.size()); }
};

struct FitOptions
{
    EnergyWeights weights;
    BoxConstraints box;
    int max_outer_iterations = 20;
    double relative_tolerance = 1e-6;
    int threads = 1;
};

/// (1 / 68T) * sum over frames and landmarks of squared reprojection error.
double landmark_term(const ShapeBasis& basis, const std::vector<SopCamera>& cameras,
                     const Eigen::VectorXd& identity, const Eigen::MatrixXd& expressions,
                     const std::vector<Landmarks2D>& landmarks);

double prior_term(const Eigen::VectorXd& identity, const Eigen::MatrixXd& expressions,
                  const Eigen::VectorXd& sigma_id, const Eigen::VectorXd& sigma_exp);

/// Sum of squared second temporal differences; zero for fewer than 3 frames.
double smoothness_term(const Eigen::MatrixXd& expressions);

EnergyTerms energy_terms(const ShapeBasis& basis, const std::vector<SopCamera>& cameras,
                         const Eigen::VectorXd& identity, const Eigen::MatrixXd& expressions,
                         const std::vector<Landmarks2D>& landmarks);

double weighted_energy(const EnergyTerms& terms, const EnergyWeights& weights);

/**
 * Alternates closed-form camera estimation with the box-constrained linear
 * solve for identity (shared) and per-frame expression coefficients.
 *
 * Every block update is only accepted when it does not increase the total
 * energy, so the recorded trace is non-increasing.
 */
FitResult fit_video(const ShapeBasis& basis, const std::vector<Landmarks2D>& landmarks,
                    const FitOptions& options = {});

} // namespace headswap
