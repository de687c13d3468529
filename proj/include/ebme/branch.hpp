// Environmental-branch dynamics: exact propagation through the total
// spectrum, RDM assembly, branch-operator matrices <phi_beta|O|phi_alpha>,
// the four-part ETH splitting, energy windows, and lambda-scaling fits.
#pragma once

#include <array>
#include <vector>

#include "ebme/eth.hpp"
#include "ebme/model.hpp"

namespace ebme {

// The d_S environmental branches at one instant, as columns of a d_E x d_S
// coefficient matrix in the H^E eigenbasis. vec(coeffs) is the total state in
// the (alpha, i) product ordering with alpha slow.
struct BranchSet {
    double time = 0.0;
    Matrix coeffs;

    Eigen::Index system_dim() const { return coeffs.cols(); }
    Eigen::Index env_dim() const { return coeffs.rows(); }
    double global_norm2() const { return coeffs.squaredNorm(); }
    Vector flattened() const;
};

BranchSet branches_from_state(const Vector& total_state, Eigen::Index d_s, double t);

// Product initial state: branch alpha = amplitude_alpha * env_state.
BranchSet initial_branches(const Vector& system_amplitudes, const Vector& env_state);

// Uniform-magnitude random-phase superposition of eigenstates within
// [center - width/2, center + width/2].
Vector microcanonical_env_state(const SpectralData& env_spectral, double center, double width,
                                std::uint64_t seed);

// Total Hamiltonian in the working frame (current system eigenbasis tensor
// H^E eigenbasis); its spectral decomposition drives propagate_exact.
Matrix working_hamiltonian(const TotalModel& m, const RealVector& env_eigenvalues,
                           const Matrix& h_int_eig);

// Matrix-free application of the working Hamiltonian to branch coefficients.
Matrix apply_working_hamiltonian(const TotalModel& m, const RealVector& env_eigenvalues,
                                 const Matrix& h_int_eig, const Matrix& coeffs);

BranchSet propagate_exact(const BranchSet& b, const TotalModel& m,
                          const SpectralData& total_spectral, double t1);

// rho^S_{alpha beta} = <phi_beta | phi_alpha>
Matrix rdm_from_branches(const BranchSet& b);
void validate_rdm(const Matrix& rho, double tol = 1e-10);

// entry (alpha, beta) = <phi_beta | O | phi_alpha>
Matrix operator_phi_matrix(const BranchSet& b, const Matrix& o_eig);

// Same with the diagonal of O removed (the l = 4 part).
Matrix offdiag_phi_matrix(const BranchSet& b, const Matrix& o_eig);

struct LevelInterval {
    Eigen::Index lo = 0;
    Eigen::Index hi = -1;
    double e_lo = 0.0;
    double e_hi = 0.0;
    bool valid = false;

    Eigen::Index count() const { return valid ? hi - lo + 1 : 0; }
    double width() const { return valid ? e_hi - e_lo : 0.0; }
    double center() const { return 0.5 * (e_lo + e_hi); }
    bool contains(Eigen::Index i) const { return valid && i >= lo && i <= hi; }
};

// Per-branch window Gamma_alpha (smallest contiguous eigenvalue interval
// holding >= mass of the branch weight) plus the union hull Gamma.
struct EnergyWindow {
    std::vector<LevelInterval> per_branch;
    LevelInterval hull;
    double width = 0.0;          // Delta_Gamma
    Eigen::Index level_count = 0;  // M_Gamma
    double width_ratio = 1.0;    // max/min branch-window width
};

EnergyWindow branch_energy_window(const BranchSet& b, const RealVector& env_eigenvalues,
                                  double mass);
EnergyWindow merge_windows(const EnergyWindow& a, const EnergyWindow& other,
                           const RealVector& env_eigenvalues);
LevelInterval intersect_intervals(const LevelInterval& a, const LevelInterval& b,
                                  const RealVector& env_eigenvalues);

// Four-part ETH splitting of <phi_beta|O|phi_alpha>; parts sum to
// operator_phi_matrix exactly. l=1 uses `h0`, l=2 the diagonal-function
// deviation inside the window, l=3 the diagonal residuals, l=4 the
// offdiagonal elements.
std::array<Matrix, 4> split_by_eth_parts(const BranchSet& b, const Matrix& o_eig,
                                         const DiagonalFit& diag_fit, const EnergyWindow& window,
                                         double h0);
std::array<Matrix, 4> split_by_eth_parts(const BranchSet& b, const Matrix& o_eig,
                                         const EthStatistics& stats, const EnergyWindow& window);

// lambda-scaling fit: |H^{IE(4)}_phi| ~ M_Gamma^(lambda - 1.5). One sample per
// (seed, size); the fit runs per seed across sizes and aggregates.
struct LambdaSample {
    double m_gamma = 0.0;
    double h4_mean_abs = 0.0;
};

struct LambdaFit {
    double lambda = 0.0;
    double stderr_ = 0.0;
    std::vector<double> per_seed;
};

LambdaFit fit_lambda_scaling(const std::vector<std::vector<LambdaSample>>& samples_per_seed);

}  // namespace ebme
