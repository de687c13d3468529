#include "ebme/master.hpp"

#include <cmath>
#include <stdexcept>

namespace ebme {

void validate_lindblad_spec(const LindbladSpec& spec) {
    const Eigen::Index d = spec.e_s.size();
    if (d < 1) throw std::invalid_argument("empty Lindblad spec");
    if (spec.h_is.rows() != d || spec.h_is.cols() != d) {
        throw std::invalid_argument("jump operator shape mismatch");
    }
    if (spec.weight_table.rows() != d || spec.weight_table.cols() != d) {
        throw std::invalid_argument("weight table shape mismatch");
    }
    if ((spec.weight_table - spec.weight_table.transpose()).cwiseAbs().maxCoeff() > 1e-12) {
        throw std::invalid_argument("weight table must be symmetric");
    }
    if (spec.weight_table.minCoeff() < 0.0) {
        throw std::invalid_argument("weight table must be nonnegative");
    }
    if (spec.tau < 0.0) throw std::invalid_argument("tau must be nonnegative");
}

WeightTable build_weight_table(const HIe2Diagonal& h_ie2, const EnergyWindow& window,
                               const RealVector& env_eigenvalues) {
    const auto d = static_cast<Eigen::Index>(window.per_branch.size());
    WeightTable table;
    table.values.resize(d, d);
    table.disjoint_pairs.setZero(d, d);
    for (Eigen::Index a = 0; a < d; ++a) {
        for (Eigen::Index b = a; b < d; ++b) {
            const LevelInterval cap =
                intersect_intervals(window.per_branch[a], window.per_branch[b],
                                    env_eigenvalues);
            double center;
            if (cap.valid) {
                center = cap.center();
            } else {
                center = window.hull.center();
                table.disjoint_pairs(a, b) = table.disjoint_pairs(b, a) = 1;
                table.any_disjoint = true;
            }
            const double v = h_ie2.direct_at(center);
            table.values(a, b) = v;
            table.values(b, a) = v;
        }
    }
    return table;
}

Matrix weighted_rdm(const Matrix& rho, const LindbladSpec& spec) {
    if (rho.rows() != spec.e_s.size() || rho.cols() != spec.e_s.size()) {
        throw std::invalid_argument("RDM shape mismatch");
    }
    return spec.tau * spec.weight_table.cast<Complex>().cwiseProduct(rho);
}

Matrix lindblad_rhs(const Matrix& rho, const LindbladSpec& spec) {
    const Matrix weighted = weighted_rdm(rho, spec);
    const Matrix& hs = spec.h_is;
    Matrix out = hs * weighted * hs;
    const Matrix hs2 = hs * hs;
    out -= 0.5 * (weighted * hs2 + hs2 * weighted);
    for (Eigen::Index a = 0; a < rho.rows(); ++a) {
        for (Eigen::Index b = 0; b < rho.cols(); ++b) {
            out(a, b) += imag_unit * (spec.e_s(b) - spec.e_s(a)) * rho(a, b);
        }
    }
    return out;
}

RdmTrajectory integrate_master_equation(const LindbladSpec& spec, const Matrix& rho0,
                                        double t_total, double dt) {
    validate_lindblad_spec(spec);
    if (dt <= 0.0 || t_total < dt) {
        throw std::invalid_argument("integration needs dt > 0 and t_total >= dt");
    }
    const auto steps = static_cast<std::size_t>(std::llround(t_total / dt));

    RdmTrajectory traj;
    traj.times.reserve(steps + 1);
    traj.rho.reserve(steps + 1);
    Matrix rho = 0.5 * (rho0 + rho0.adjoint());
    traj.times.push_back(0.0);
    traj.rho.push_back(rho);
    traj.min_eigenvalue =
        Eigen::SelfAdjointEigenSolver<Matrix>(rho).eigenvalues().minCoeff();
    const double trace0 = rho.trace().real();

    for (std::size_t s = 1; s <= steps; ++s) {
        const Matrix k1 = lindblad_rhs(rho, spec);
        const Matrix k2 = lindblad_rhs(rho + 0.5 * dt * k1, spec);
        const Matrix k3 = lindblad_rhs(rho + 0.5 * dt * k2, spec);
        const Matrix k4 = lindblad_rhs(rho + dt * k3, spec);
        rho += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);

        if (!rho.allFinite()) {
            throw std::runtime_error("master-equation state became non-finite at t=" +
                                     std::to_string(dt * static_cast<double>(s)));
        }
        traj.max_hermiticity_drift =
            std::max(traj.max_hermiticity_drift, hermiticity_defect(rho));
        rho = 0.5 * (rho + rho.adjoint());
        traj.max_trace_drift =
            std::max(traj.max_trace_drift, std::abs(rho.trace().real() - trace0));
        traj.min_eigenvalue =
            std::min(traj.min_eigenvalue,
                     Eigen::SelfAdjointEigenSolver<Matrix>(rho).eigenvalues().minCoeff());
        traj.times.push_back(dt * static_cast<double>(s));
        traj.rho.push_back(rho);
    }
    return traj;
}

DephasingSpec make_dephasing_spec(const Matrix& h_is_eff, double w_f, double f0, double tau) {
    const Eigen::Index d = h_is_eff.rows();
    DephasingSpec spec;
    spec.delta.resize(d, d);
    for (Eigen::Index a = 0; a < d; ++a) {
        for (Eigen::Index b = 0; b < d; ++b) {
            spec.delta(a, b) = h_is_eff(b, b).real() - h_is_eff(a, a).real();
        }
    }
    spec.g = w_f * f0 * f0 * tau;
    if (spec.g < 0.0) throw std::invalid_argument("decoherence coefficient must be nonnegative");
    return spec;
}

double dephasing_rate(const DephasingSpec& spec, Eigen::Index alpha, Eigen::Index beta) {
    if (alpha == beta) {
        throw std::invalid_argument("dephasing rate is defined for distinct levels only");
    }
    const double d = spec.delta(alpha, beta);
    return 0.5 * spec.g * d * d;
}

double rmt_rate(double delta_ab, double f0) { return M_PI * delta_ab * delta_ab * f0 * f0; }

double tau_rmt(double delta_e) {
    if (delta_e <= 0.0) throw std::invalid_argument("spectral span must be positive");
    return 2.0 * M_PI / delta_e;
}

std::vector<Matrix> loschmidt_echo(const RealVector& env_eigenvalues, const RealVector& e_s,
                                   const Matrix& h_is_eff, const Matrix& h_int_eig,
                                   const Vector& env_state, const std::vector<double>& times) {
    const Eigen::Index d_s = e_s.size();
    const Eigen::Index d_e = env_eigenvalues.size();
    if (h_is_eff.rows() != d_s || h_int_eig.rows() != d_e || env_state.size() != d_e) {
        throw std::invalid_argument("loschmidt_echo: dimension mismatch");
    }
    for (Eigen::Index a = 0; a < d_s; ++a) {
        for (Eigen::Index b = 0; b < d_s; ++b) {
            if (a != b && std::abs(h_is_eff(a, b)) > 1e-12) {
                throw std::invalid_argument(
                    "loschmidt_echo requires a diagonal H^IS (nondissipative coupling)");
            }
        }
    }

    // effective Hamiltonians H_alpha = e_alpha + H^E + (H^IS)_aa H^IE
    std::vector<SpectralData> spectra(d_s);
    const Matrix h_env_eig = env_eigenvalues.cast<Complex>().asDiagonal();
    for (Eigen::Index a = 0; a < d_s; ++a) {
        Matrix h = h_env_eig + h_is_eff(a, a).real() * h_int_eig;
        h += e_s(a) * Matrix::Identity(d_e, d_e);
        spectra[a] = diagonalize(h);
    }

    std::vector<Matrix> out;
    out.reserve(times.size());
    Matrix evolved(d_e, d_s);
    for (double t : times) {
        for (Eigen::Index a = 0; a < d_s; ++a) {
            evolved.col(a) = evolve_with_spectrum(spectra[a], env_state, t);
        }
        // E_{alpha beta} = <chi_beta(t) | chi_alpha(t)>
        out.push_back((evolved.adjoint() * evolved).transpose());
    }
    return out;
}

}  // namespace ebme
