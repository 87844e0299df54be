#pragma once

#include <vector>

#include "prunekit/integrate.hpp"
#include "prunekit/rng.hpp"

namespace prunekit {

// Two-objective convex test problem: L_i(x) = 1/2 (x - b_i)^T A_i (x - b_i)
// with A_i symmetric positive definite. The summed objective has gradient
// Lipschitz constant lambda_max(A_1 + A_2); any step size at or below its
// reciprocal must never increase the summed loss under a sound multi-loss
// update rule.
struct QuadraticToy {
    std::size_t dim = 0;
    std::vector<double> a1, a2;  // dim x dim, row-major, SPD
    std::vector<double> b1, b2;  // per-objective minima
    std::vector<double> x;       // iterate
    double lipschitz = 0.0;      // lambda_max(A1 + A2), slightly conservative
};

// Random instance: A_i = M^T M + 0.1 I with standard normal M, minima and the
// start point drawn from N(0, 4). The stored Lipschitz constant is a safe
// overestimate of the true one (power-iteration value divided by 0.9), so
// 1/lipschitz is a valid step size.
QuadraticToy make_quadratic_toy(Rng& rng, std::size_t dim);

double toy_total_loss(const QuadraticToy& toy);
std::vector<Grad> toy_gradients(const QuadraticToy& toy);

// One conflict-aware update: enumerate-project + integrate, then
// x -= lr * combined.
void toy_step(QuadraticToy& toy, double lr, const IntegrationConfig& cfg);

}  // namespace prunekit
