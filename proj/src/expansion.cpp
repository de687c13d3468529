#include "ebme/expansion.hpp"

#include <cmath>
#include <stdexcept>

namespace ebme {

namespace {

Matrix energy_diagonal(const TotalModel& m) {
    return m.system.energies.cast<Complex>().asDiagonal();
}

// i [rho, E] has elements i (e_beta - e_alpha) rho_{alpha beta}
Matrix phase_term(const Matrix& rho, const RealVector& e_s) {
    Matrix out = rho;
    for (Eigen::Index a = 0; a < rho.rows(); ++a) {
        for (Eigen::Index b = 0; b < rho.cols(); ++b) {
            out(a, b) *= imag_unit * (e_s(b) - e_s(a));
        }
    }
    return out;
}

Matrix second_phase_term(const Matrix& rho, const RealVector& e_s) {
    Matrix out = rho;
    for (Eigen::Index a = 0; a < rho.rows(); ++a) {
        for (Eigen::Index b = 0; b < rho.cols(); ++b) {
            const double d = e_s(b) - e_s(a);
            out(a, b) *= -0.5 * d * d;
        }
    }
    return out;
}

// linear assemblies taking a phi-matrix to the corresponding G contribution
Matrix assemble_g1_eta2(const Matrix& phi, const Matrix& hs) {
    return imag_unit * (phi * hs - hs * phi);
}

Matrix assemble_g2_eta2(const Matrix& phi, const Matrix& hs, const Matrix& e) {
    return hs * phi * e - 0.5 * hs * e * phi - 0.5 * e * hs * phi +
           e * phi * hs - 0.5 * phi * e * hs - 0.5 * phi * hs * e;
}

Matrix assemble_g2_eta3(const Matrix& phi, const Matrix& hs) {
    return 0.5 * (phi * hs - hs * phi);
}

Matrix assemble_g2_eta4(const Matrix& phi, const Matrix& hs, const Matrix& hs2) {
    return hs * phi * hs - 0.5 * (phi * hs2 + hs2 * phi);
}

}  // namespace

YOperatorSet build_y_operators(const Matrix& h_int_eig, const RealVector& env_eigenvalues) {
    if (h_int_eig.rows() != env_eigenvalues.size()) {
        throw std::invalid_argument("operator/eigenvalue dimension mismatch");
    }
    YOperatorSet ys;
    ys.y2 = h_int_eig;
    const Matrix h_env = env_eigenvalues.cast<Complex>().asDiagonal();
    ys.y3 = h_int_eig * h_env - h_env * h_int_eig;
    ys.y4 = product(h_int_eig, h_int_eig);
    return ys;
}

G1Term g1_term(const BranchSet& b, const TotalModel& m, const YOperatorSet& ys) {
    G1Term g;
    const Matrix rho = rdm_from_branches(b);
    const Matrix hs = m.h_is_eff();
    g.eta1 = phase_term(rho, m.system.energies);
    g.eta2 = assemble_g1_eta2(operator_phi_matrix(b, ys.y2), hs);
    g.total = g.eta1 + g.eta2;
    return g;
}

G2Term g2_term(const BranchSet& b, const TotalModel& m, const YOperatorSet& ys,
               const RealVector& env_eigenvalues) {
    G2Term g;
    const Matrix rho = rdm_from_branches(b);
    const Matrix hs = m.h_is_eff();
    const Matrix hs2 = hs * hs;
    const Matrix e = energy_diagonal(m);

    g.eta[0] = second_phase_term(rho, m.system.energies);
    g.eta[1] = assemble_g2_eta2(operator_phi_matrix(b, ys.y2), hs, e);
    g.eta[2] = assemble_g2_eta3(operator_phi_matrix(b, ys.y3), hs);
    g.eta[3] = assemble_g2_eta4(operator_phi_matrix(b, ys.y4), hs, hs2);
    g.total = g.eta[0] + g.eta[1] + g.eta[2] + g.eta[3];

    // independent route through powers of the working Hamiltonian
    const Matrix v1 = apply_working_hamiltonian(m, env_eigenvalues, ys.y2, b.coeffs);
    const Matrix v2 = apply_working_hamiltonian(m, env_eigenvalues, ys.y2, v1);
    g.direct = (v1.adjoint() * v1).transpose() - 0.5 * (b.coeffs.adjoint() * v2).transpose() -
               0.5 * (v2.adjoint() * b.coeffs).transpose();
    return g;
}

const Matrix& GTermLedger::g(int k, int eta, int l) const {
    if (l < 1 || l > 4) throw std::out_of_range("l must lie in 1..4");
    if (k == 1) {
        if (eta < 1 || eta > 2) throw std::out_of_range("k=1 carries eta in 1..2");
        return g1_parts[eta - 1][l - 1];
    }
    if (k == 2) {
        if (eta < 1 || eta > 4) throw std::out_of_range("k=2 carries eta in 1..4");
        return g2_parts[eta - 1][l - 1];
    }
    throw std::out_of_range("k must be 1 or 2");
}

double GTermLedger::partition_residual() const {
    const Eigen::Index d = g1.rows();
    double worst = 0.0;
    Matrix acc = Matrix::Zero(d, d);
    for (const auto& m : g1_eta) acc += m;
    worst = std::max(worst, max_abs(acc - g1));
    acc.setZero();
    for (const auto& m : g2_eta) acc += m;
    worst = std::max(worst, max_abs(acc - g2));
    for (int eta = 0; eta < 2; ++eta) {
        acc.setZero();
        for (const auto& m : g1_parts[eta]) acc += m;
        worst = std::max(worst, max_abs(acc - g1_eta[eta]));
    }
    for (int eta = 0; eta < 4; ++eta) {
        acc.setZero();
        for (const auto& m : g2_parts[eta]) acc += m;
        worst = std::max(worst, max_abs(acc - g2_eta[eta]));
    }
    return worst;
}

double GTermLedger::conjugation_residual() const {
    return std::max(hermiticity_defect(g1), hermiticity_defect(g2));
}

GTermLedger split_g_terms(const G1Term& g1, const G2Term& g2, const BranchSet& b,
                          const YOperatorSet& ys, const TotalModel& m,
                          const EthStatistics& stats_ie, const DiagonalFit& diag_ie2,
                          const EnergyWindow& window, bool renormalized_h0_zero) {
    if (!window.hull.valid) throw std::invalid_argument("energy window is empty");
    GTermLedger ledger;
    ledger.time = b.time;
    ledger.g1 = g1.total;
    ledger.g2 = g2.total;
    ledger.g1_eta = {g1.eta1, g1.eta2};
    ledger.g2_eta = g2.eta;

    const Eigen::Index d = g1.total.rows();
    const Matrix zero = Matrix::Zero(d, d);
    const Matrix hs = m.h_is_eff();
    const Matrix hs2 = hs * hs;
    const Matrix e = energy_diagonal(m);

    // eta = 1 (Y = identity): the full term is l = 1 by construction
    ledger.g1_parts[0] = {g1.eta1, zero, zero, zero};
    ledger.g2_parts[0] = {g2.eta[0], zero, zero, zero};

    // eta = 2 (Y = H^IE): after renormalization the diagonal function is
    // measured around h0 = 0, so the l = 1 entries vanish identically
    const double h0_ie =
        renormalized_h0_zero ? 0.0 : stats_ie.diag.value_at(window.hull.center());
    const auto phi2 = split_by_eth_parts(b, ys.y2, stats_ie.diag, window, h0_ie);
    for (int l = 0; l < 4; ++l) {
        ledger.g1_parts[1][l] = assemble_g1_eta2(phi2[l], hs);
        ledger.g2_parts[1][l] = assemble_g2_eta2(phi2[l], hs, e);
    }

    // eta = 3 (Y = [H^IE, H^E]): exactly zero diagonal, everything is l = 4
    ledger.g2_parts[2] = {zero, zero, zero, g2.eta[2]};

    // eta = 4 (Y = (H^IE)^2)
    const double h0_ie2 = diag_ie2.value_at(window.hull.center());
    const auto phi4 = split_by_eth_parts(b, ys.y4, diag_ie2, window, h0_ie2);
    for (int l = 0; l < 4; ++l) {
        ledger.g2_parts[3][l] = assemble_g2_eta4(phi4[l], hs, hs2);
    }
    return ledger;
}

Matrix taylor_rdm_step(const GTermLedger& ledger, double tau) {
    if (tau < 0.0) throw std::invalid_argument("tau must be nonnegative");
    return ledger.g1 * tau + ledger.g2 * (tau * tau);
}

PartialSumFit fit_partial_sum_exponent(const std::vector<Complex>& series) {
    const std::size_t m = series.size();
    if (m < 8) throw std::invalid_argument("partial-sum fit needs at least 8 slices");
    PartialSumFit fit;
    const std::size_t marks[4] = {m / 8, m / 4, m / 2, m};
    double xs[4], ys[4];
    Complex acc{0.0, 0.0};
    std::size_t next = 0;
    for (std::size_t i = 0; i < m && next < 4; ++i) {
        acc += series[i];
        while (next < 4 && i + 1 == marks[next]) {
            const double mag = std::abs(acc);
            if (mag <= 0.0) {
                fit.clamped = true;
                return fit;
            }
            xs[next] = std::log(static_cast<double>(marks[next]));
            ys[next] = std::log(mag);
            ++next;
        }
    }
    double mx = 0.0, my = 0.0;
    for (int i = 0; i < 4; ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx *= 0.25;
    my *= 0.25;
    double sxx = 0.0, sxy = 0.0;
    for (int i = 0; i < 4; ++i) {
        sxx += (xs[i] - mx) * (xs[i] - mx);
        sxy += (xs[i] - mx) * (ys[i] - my);
    }
    fit.xi = sxy / sxx;
    if (fit.xi < 0.0 || fit.xi > 1.1) {
        fit.clamped = true;
        fit.xi = std::clamp(fit.xi, 0.0, 1.1);
    }
    return fit;
}

FluctuationReport fluctuation_report(const std::vector<GTermLedger>& ledgers, double tau,
                                     double ratio_threshold) {
    if (ledgers.size() < 16) {
        throw std::invalid_argument("fluctuation report needs at least 16 slices");
    }
    if (tau <= 0.0) throw std::invalid_argument("tau must be positive");

    FluctuationReport rep;
    rep.tau = tau;
    rep.slices = ledgers.size();
    rep.horizon = tau * static_cast<double>(ledgers.size());
    rep.ratio_threshold = ratio_threshold;
    rep.d_s = ledgers.front().g1.rows();
    const auto m_count = static_cast<double>(ledgers.size());

    bool all_ok = true;
    bool all_vacuous = true;
    for (Eigen::Index a = 0; a < rep.d_s; ++a) {
        for (Eigen::Index b = 0; b < rep.d_s; ++b) {
            PairFluctuation pf;
            std::vector<Complex> fluct(ledgers.size());
            Complex mean_fluct{0.0, 0.0}, sum_drift{0.0, 0.0}, sum_slope{0.0, 0.0};
            for (std::size_t s = 0; s < ledgers.size(); ++s) {
                fluct[s] = ledgers[s].g(1, 2, 4)(a, b);
                mean_fluct += fluct[s];
                sum_drift += ledgers[s].g(2, 4, 1)(a, b);
                sum_slope += ledgers[s].g(2, 4, 2)(a, b);
            }
            mean_fluct /= m_count;
            double var = 0.0;
            for (const auto& x : fluct) var += std::norm(x - mean_fluct);
            pf.sigma = std::sqrt(var / m_count);
            pf.kappa = std::abs(sum_drift) / m_count;

            const auto psf = fit_partial_sum_exponent(fluct);
            pf.xi = psf.xi;
            pf.xi_clamped = psf.clamped;

            pf.vacuous = pf.sigma < 1e-14 && pf.kappa < 1e-14;
            if (!pf.vacuous) {
                all_vacuous = false;
                if (pf.sigma < 1e-300) {
                    pf.condition_ratio = 1e30;
                } else {
                    pf.condition_ratio = std::pow(tau, pf.xi) * pf.kappa *
                                         std::pow(rep.horizon, 1.0 - pf.xi) / pf.sigma;
                }
                pf.condition_satisfied = pf.condition_ratio >= ratio_threshold;
                if (!pf.condition_satisfied) all_ok = false;
            }
            const double slope_mag = std::abs(sum_slope);
            pf.drift_vs_slope_ratio =
                slope_mag > 0.0 ? std::min(std::abs(sum_drift) / slope_mag, 1e30) : 1e30;
            rep.pairs.push_back(pf);
        }
    }

    for (const auto& pf : rep.pairs) {
        rep.sigma_max = std::max(rep.sigma_max, pf.sigma);
        rep.kappa_max = std::max(rep.kappa_max, pf.kappa);
        rep.sigma_mean += pf.sigma;
        rep.kappa_mean += pf.kappa;
        rep.xi_mean += pf.xi;
    }
    const auto pair_count = static_cast<double>(rep.pairs.size());
    rep.sigma_mean /= pair_count;
    rep.kappa_mean /= pair_count;
    rep.xi_mean /= pair_count;
    rep.vacuous = all_vacuous;
    rep.condition_all = !all_vacuous && all_ok;
    return rep;
}

}  // namespace ebme
