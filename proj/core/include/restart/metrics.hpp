#pragma once

#include <vector>

#include <Eigen/Core>

#include "restart/rng.hpp"

namespace restart {

// Upper tail of the standard normal, Q(a) = Pr(Z >= a) = erfc(a / sqrt(2)) / 2.
double gaussian_tail_q(double a);

// Per-iteration collision mass of the restart coupling when the coupled
// states stay within distance b: lambda = 2 Q(b / (2 sqrt(t_max^2 - t_min^2))).
double contraction_factor_lambda(double b, double t_min, double t_max);

// Exact minimum-weight perfect matching on the Euclidean cost matrix
// c_ij = ||a_i - b_j||, solved with shortest augmenting paths (the
// Jonker-Volgenant scheme); returns the row-to-column assignment.
std::vector<int> min_cost_assignment(const Eigen::MatrixXd& cost);

// 1-Wasserstein distance between equal-size point clouds:
// (1/n) min_pi sum_i ||a_i - b_pi(i)||.
double w1_assignment(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

struct CouplingOutcome {
    Eigen::VectorXd x_next;
    Eigen::VectorXd y_next;
    bool collided = false;
};

// One step of the maximal coupling of N(x, sigma^2 I) and N(y, sigma^2 I):
// the noise component orthogonal to x - y is shared, the parallel component
// uses the accept/reflect coupling of two translated 1-d Gaussians.  On
// acceptance the outputs are identical; the collision probability is
// 2 Q(||x - y|| / (2 sigma)).
CouplingOutcome maximal_coupling_step(const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                                      double sigma, RngStream& rng);

} // namespace restart
