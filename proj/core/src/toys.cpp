#include "prunekit/toys.hpp"

#include <cmath>
#include <stdexcept>

#include "prunekit/ops.hpp"

namespace prunekit {

namespace {

// y = A x for a row-major dim x dim matrix.
std::vector<double> matvec(const std::vector<double>& a, const std::vector<double>& x) {
    const std::size_t d = x.size();
    std::vector<double> y(d, 0.0);
    for (std::size_t i = 0; i < d; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < d; ++j) s += a[i * d + j] * x[j];
        y[i] = s;
    }
    return y;
}

// Largest eigenvalue of a symmetric PSD matrix by power iteration. The
// Rayleigh quotient only ever underestimates, so callers wanting a safe
// ceiling must add their own margin.
double power_iteration_lambda_max(const std::vector<double>& a, std::size_t d) {
    std::vector<double> v(d, 1.0 / std::sqrt(static_cast<double>(d)));
    double lambda = 0.0;
    for (int it = 0; it < 300; ++it) {
        std::vector<double> w = matvec(a, v);
        const double n = l2_norm(w);
        if (n == 0.0) return 0.0;
        for (auto& x : w) x /= n;
        v = std::move(w);
        lambda = dot(v, matvec(a, v));
    }
    return lambda;
}

}  // namespace

QuadraticToy make_quadratic_toy(Rng& rng, std::size_t dim) {
    if (dim == 0) throw std::invalid_argument("make_quadratic_toy: dim must be positive");
    QuadraticToy toy;
    toy.dim = dim;
    auto make_spd = [&](std::vector<double>& a) {
        std::vector<double> m(dim * dim);
        for (auto& v : m) v = rng.normal();
        a.assign(dim * dim, 0.0);
        for (std::size_t i = 0; i < dim; ++i) {
            for (std::size_t j = 0; j < dim; ++j) {
                double s = 0.0;
                for (std::size_t k = 0; k < dim; ++k) s += m[k * dim + i] * m[k * dim + j];
                a[i * dim + j] = s;
            }
            a[i * dim + i] += 0.1;
        }
    };
    make_spd(toy.a1);
    make_spd(toy.a2);
    toy.b1.resize(dim);
    toy.b2.resize(dim);
    toy.x.resize(dim);
    for (auto& v : toy.b1) v = 2.0 * rng.normal();
    for (auto& v : toy.b2) v = 2.0 * rng.normal();
    for (auto& v : toy.x) v = 2.0 * rng.normal();
    std::vector<double> sum_a(dim * dim);
    for (std::size_t i = 0; i < sum_a.size(); ++i) sum_a[i] = toy.a1[i] + toy.a2[i];
    toy.lipschitz = power_iteration_lambda_max(sum_a, dim) / 0.9;
    return toy;
}

double toy_total_loss(const QuadraticToy& toy) {
    double total = 0.0;
    const auto quad = [&](const std::vector<double>& a, const std::vector<double>& b) {
        std::vector<double> r(toy.dim);
        for (std::size_t i = 0; i < toy.dim; ++i) r[i] = toy.x[i] - b[i];
        return 0.5 * dot(r, matvec(a, r));
    };
    total += quad(toy.a1, toy.b1);
    total += quad(toy.a2, toy.b2);
    return total;
}

std::vector<Grad> toy_gradients(const QuadraticToy& toy) {
    const auto grad = [&](const std::vector<double>& a, const std::vector<double>& b) {
        std::vector<double> r(toy.dim);
        for (std::size_t i = 0; i < toy.dim; ++i) r[i] = toy.x[i] - b[i];
        return matvec(a, r);
    };
    return {grad(toy.a1, toy.b1), grad(toy.a2, toy.b2)};
}

void toy_step(QuadraticToy& toy, double lr, const IntegrationConfig& cfg) {
    const Grad combined = integrate_gradients(toy_gradients(toy), cfg);
    for (std::size_t i = 0; i < toy.dim; ++i) toy.x[i] -= lr * combined[i];
}

}  // namespace prunekit
