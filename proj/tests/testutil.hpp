// Shared test fixtures and independent oracles. Everything here is
// deliberately written without reusing the library's computational paths so
// the two sides of each check stay independent.
#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "ebme/branch.hpp"
#include "ebme/model.hpp"

namespace testutil {

using ebme::Complex;
using ebme::Matrix;
using ebme::RealVector;
using ebme::Vector;

inline Matrix random_hermitian(Eigen::Index n, std::mt19937_64& rng, double scale = 1.0) {
    std::normal_distribution<double> nd(0.0, scale);
    Matrix a(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        a(i, i) = nd(rng);
        for (Eigen::Index j = i + 1; j < n; ++j) {
            a(i, j) = Complex(nd(rng), nd(rng)) / std::sqrt(2.0);
            a(j, i) = std::conj(a(i, j));
        }
    }
    return a;
}

inline Vector random_unit_vector(Eigen::Index n, std::mt19937_64& rng) {
    std::normal_distribution<double> nd;
    Vector v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = Complex(nd(rng), nd(rng));
    return v / v.norm();
}

// Taylor-series propagator with scaling and squaring; independent of any
// spectral decomposition.
inline Matrix series_exponential(const Matrix& h, double t) {
    const double norm = h.cwiseAbs().rowwise().sum().maxCoeff() * std::abs(t);
    int squarings = 0;
    double scale = 1.0;
    while (norm * scale > 0.5) {
        scale *= 0.5;
        ++squarings;
    }
    const Matrix a = Complex(0.0, -t * scale) * h;
    Matrix result = Matrix::Identity(h.rows(), h.cols());
    Matrix term = result;
    for (int k = 1; k <= 24; ++k) {
        term = (term * a) / static_cast<double>(k);
        result += term;
    }
    for (int s = 0; s < squarings; ++s) result = result * result;
    return result;
}

// Partial trace of |psi><psi| over the environment, (alpha, i) ordering with
// alpha slow, by the explicit double sum.
inline Matrix partial_trace_rdm(const Vector& psi, Eigen::Index d_s) {
    const Eigen::Index d_e = psi.size() / d_s;
    Matrix rho = Matrix::Zero(d_s, d_s);
    for (Eigen::Index a = 0; a < d_s; ++a) {
        for (Eigen::Index b = 0; b < d_s; ++b) {
            Complex acc{0.0, 0.0};
            for (Eigen::Index i = 0; i < d_e; ++i) {
                acc += psi(a * d_e + i) * std::conj(psi(b * d_e + i));
            }
            rho(a, b) = acc;
        }
    }
    return rho;
}

// <phi_beta|O|phi_alpha> by the naive double sum over components.
inline Matrix brute_force_phi_matrix(const ebme::BranchSet& b, const Matrix& o) {
    const Eigen::Index d_s = b.system_dim();
    const Eigen::Index d_e = b.env_dim();
    Matrix out = Matrix::Zero(d_s, d_s);
    for (Eigen::Index alpha = 0; alpha < d_s; ++alpha) {
        for (Eigen::Index beta = 0; beta < d_s; ++beta) {
            Complex acc{0.0, 0.0};
            for (Eigen::Index i = 0; i < d_e; ++i) {
                for (Eigen::Index j = 0; j < d_e; ++j) {
                    acc += std::conj(b.coeffs(j, beta)) * b.coeffs(i, alpha) * o(j, i);
                }
            }
            out(alpha, beta) = acc;
        }
    }
    return out;
}

// Mean nearest-neighbor level-spacing ratio <r> of a sorted spectrum.
inline double mean_spacing_ratio(const RealVector& eigs) {
    double acc = 0.0;
    Eigen::Index count = 0;
    for (Eigen::Index i = 1; i + 1 < eigs.size(); ++i) {
        const double s0 = eigs(i) - eigs(i - 1);
        const double s1 = eigs(i + 1) - eigs(i);
        const double lo = std::min(s0, s1), hi = std::max(s0, s1);
        if (hi > 0.0) {
            acc += lo / hi;
            ++count;
        }
    }
    return acc / static_cast<double>(count);
}

struct RandomModel {
    ebme::TotalModel model;
    ebme::SpectralData env_spectral;
    Matrix h_int_eig;
};

// Small random model: d_S=2, random Hermitian environment operators.
inline RandomModel random_model(Eigen::Index d_e, std::mt19937_64& rng, double coupling = 0.4) {
    RealVector e_s(2);
    std::uniform_real_distribution<double> ud(0.3, 1.2);
    const double gap = ud(rng);
    e_s << -0.5 * gap, 0.5 * gap;
    Matrix h_is = random_hermitian(2, rng, 0.7);

    ebme::EnvironmentOperators env;
    env.h_env = random_hermitian(d_e, rng, 1.0 / std::sqrt(static_cast<double>(d_e)));
    env.h_int_env = random_hermitian(d_e, rng, 1.0 / std::sqrt(static_cast<double>(d_e)));

    RandomModel out;
    out.model = ebme::make_total_model(ebme::make_system(e_s, h_is), env, coupling);
    out.env_spectral = ebme::diagonalize(env.h_env);
    out.h_int_eig = out.env_spectral.eigenvectors.adjoint() * env.h_int_env *
                    out.env_spectral.eigenvectors;
    return out;
}

// Exact rho^S(t) for a random model and product initial state, via the
// working-frame spectrum.
struct ExactTrajectory {
    ebme::BranchSet b0;
    ebme::TotalModel model;
    ebme::SpectralData total_spectral;

    Matrix rho_at(double t) const {
        return ebme::rdm_from_branches(
            ebme::propagate_exact(b0, model, total_spectral, t));
    }
};

inline ExactTrajectory exact_trajectory(const RandomModel& rm, std::mt19937_64& rng) {
    ExactTrajectory traj;
    traj.model = rm.model;
    Vector amps = random_unit_vector(2, rng);
    Vector chi = random_unit_vector(rm.model.env_dim(), rng);
    traj.b0 = ebme::initial_branches(amps, chi);
    traj.total_spectral = ebme::diagonalize(
        ebme::working_hamiltonian(rm.model, rm.env_spectral.eigenvalues, rm.h_int_eig));
    return traj;
}

// Richardson (fourth-order) central differences of a matrix-valued function.
template <typename F>
Matrix richardson_first_derivative(F f, double t, double h) {
    return (8.0 * (f(t + h) - f(t - h)) - (f(t + 2.0 * h) - f(t - 2.0 * h))) / (12.0 * h);
}

template <typename F>
Matrix richardson_second_derivative(F f, double t, double h) {
    return (-(f(t + 2.0 * h) + f(t - 2.0 * h)) + 16.0 * (f(t + h) + f(t - h)) - 30.0 * f(t)) /
           (12.0 * h * h);
}

inline double rel_error(const Matrix& got, const Matrix& want) {
    const double scale = want.cwiseAbs().maxCoeff();
    return (got - want).cwiseAbs().maxCoeff() / (scale > 0.0 ? scale : 1.0);
}

}  // namespace testutil
