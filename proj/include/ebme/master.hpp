// The derived Lindblad-form master equation with the weighted RDM, its
// fixed-step integrator, pure-dephasing rates, the RMT reference rates, and
// the Loschmidt-echo exact solution for nondissipative couplings.
#pragma once

#include <vector>

#include "ebme/branch.hpp"

namespace ebme {

struct LindbladSpec {
    RealVector e_s;           // renormalized system energies
    Matrix h_is;              // jump operator (coupling folded in)
    RealMatrix weight_table;  // h^{IE2}_{alpha beta 0}, symmetric nonnegative
    double tau = 0.0;         // slice length entering the weighted RDM
};

void validate_lindblad_spec(const LindbladSpec& spec);

// Entry (alpha, beta) = h^{IE2} interpolated at the center of
// Gamma_alpha  intersect  Gamma_beta. Disjoint windows fall back to the center of
// the union hull and are flagged.
struct WeightTable {
    RealMatrix values;
    Eigen::MatrixXi disjoint_pairs;  // 1 where the fallback was used
    bool any_disjoint = false;
};

WeightTable build_weight_table(const HIe2Diagonal& h_ie2, const EnergyWindow& window,
                               const RealVector& env_eigenvalues);

// rho~_{alpha gamma} = tau * h^{IE2}_{alpha gamma 0} * rho_{alpha gamma}
Matrix weighted_rdm(const Matrix& rho, const LindbladSpec& spec);

// L(rho) = i [rho, H^S] + H^IS rho~ H^IS - (1/2) {rho~, (H^IS)^2}
Matrix lindblad_rhs(const Matrix& rho, const LindbladSpec& spec);

struct RdmTrajectory {
    std::vector<double> times;
    std::vector<Matrix> rho;
    double max_trace_drift = 0.0;
    double max_hermiticity_drift = 0.0;
    double min_eigenvalue = 0.0;  // smallest RDM eigenvalue seen (positivity probe)
};

// Classical fixed-step RK4; re-symmetrizes each step and logs the drift.
RdmTrajectory integrate_master_equation(const LindbladSpec& spec, const Matrix& rho0,
                                        double t_total, double dt);

struct DephasingSpec {
    RealMatrix delta;  // Delta_{alpha beta} = H^IS_{beta beta} - H^IS_{alpha alpha}
    double g = 0.0;    // w_f f0^2 tau
};

DephasingSpec make_dephasing_spec(const Matrix& h_is_eff, double w_f, double f0, double tau);

// (g/2) Delta^2_{alpha beta}; alpha == beta is rejected.
double dephasing_rate(const DephasingSpec& spec, Eigen::Index alpha, Eigen::Index beta);

// pi Delta^2 f0^2 (Fermi-golden-rule echo decay rate)
double rmt_rate(double delta_ab, double f0);

// 2 pi / Delta_E
double tau_rmt(double delta_e);

// Echo amplitudes E_{alpha beta}(t) = <chi| e^{i H_beta t} e^{-i H_alpha t} |chi>
// with H_alpha = e_alpha + H^E + (H^IS_eff)_{alpha alpha} H^IE, all in the H^E
// eigenbasis. rho_{alpha beta}(t) = E_{alpha beta}(t) * rho_{alpha beta}(0) for a
// product initial state. Requires a diagonal H^IS (nondissipative coupling).
std::vector<Matrix> loschmidt_echo(const RealVector& env_eigenvalues, const RealVector& e_s,
                                   const Matrix& h_is_eff, const Matrix& h_int_eig,
                                   const Vector& env_state, const std::vector<double>& times);

}  // namespace ebme
