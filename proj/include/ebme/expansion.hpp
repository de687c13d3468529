// Second-order expansion machinery: the Y-operator set, the explicit G^(1)
// and G^(2) terms with their (eta, l) subdivisions, the per-slice Taylor
// step, and the fluctuation-vs-drift comparison.
#pragma once

#include <array>
#include <vector>

#include "ebme/branch.hpp"

namespace ebme {

// The four environment operators entering the k <= 2 expansion, in the H^E
// eigenbasis. Y1 is the identity and stays implicit.
struct YOperatorSet {
    Matrix y2;  // H^IE
    Matrix y3;  // [H^IE, H^E], zero diagonal
    Matrix y4;  // (H^IE)^2
};

YOperatorSet build_y_operators(const Matrix& h_int_eig, const RealVector& env_eigenvalues);

struct G1Term {
    Matrix total;
    Matrix eta1;  // i (e_beta - e_alpha) rho_{alpha beta}
    Matrix eta2;  // i [Phi(Y2), H^IS_eff]
};

G1Term g1_term(const BranchSet& b, const TotalModel& m, const YOperatorSet& ys);

struct G2Term {
    Matrix total;                // eta-sum (decomposed route)
    Matrix direct;               // formal-solution route
    std::array<Matrix, 4> eta;
};

G2Term g2_term(const BranchSet& b, const TotalModel& m, const YOperatorSet& ys,
               const RealVector& env_eigenvalues);

// All G^(k, l)_eta matrices at one time slice. k = 1 carries eta in {1, 2},
// k = 2 carries eta in {1..4}; l runs 1..4 (indices are 0-based in storage).
struct GTermLedger {
    double time = 0.0;
    Matrix g1, g2;
    std::array<Matrix, 2> g1_eta;
    std::array<Matrix, 4> g2_eta;
    std::array<std::array<Matrix, 4>, 2> g1_parts;  // [eta][l]
    std::array<std::array<Matrix, 4>, 4> g2_parts;

    const Matrix& g(int k, int eta, int l) const;
    // largest violation of the eta-sum / l-sum partition identities
    double partition_residual() const;
    double conjugation_residual() const;
};

// Splits both G-terms by routing each <phi|Y|phi> factor through the ETH
// four-part decomposition. `stats_ie` describes the (renormalized) H^IE and
// `stats_ie2` the squared operator. When `renormalized_h0_zero` is set the
// H^IE diagonal function uses h0 = 0 exactly, which zeroes the eta = 2, l = 1
// entries the way the renormalization intends.
GTermLedger split_g_terms(const G1Term& g1, const G2Term& g2, const BranchSet& b,
                          const YOperatorSet& ys, const TotalModel& m,
                          const EthStatistics& stats_ie, const DiagonalFit& diag_ie2,
                          const EnergyWindow& window, bool renormalized_h0_zero);

// Delta rho = G^(1) tau + G^(2) tau^2
Matrix taylor_rdm_step(const GTermLedger& ledger, double tau);

// Least-squares exponent of |sum_{m < M'} x_m| against M' on the partial-sum
// grid {M/8, M/4, M/2, M}.
struct PartialSumFit {
    double xi = 0.0;
    bool clamped = false;
};

PartialSumFit fit_partial_sum_exponent(const std::vector<Complex>& series);

struct PairFluctuation {
    double sigma = 0.0;      // std of G^(1,4)_{alpha beta 2} over slices
    double kappa = 0.0;      // |slice average of G^(2,1)_{alpha beta 4}|
    double xi = 0.0;
    bool xi_clamped = false;
    double condition_ratio = 0.0;  // tau^xi * kappa * T^(1-xi) / sigma
    bool condition_satisfied = false;
    bool vacuous = false;          // both sigma and kappa negligible
    double drift_vs_slope_ratio = 0.0;  // |sum G^(2,1)_4| / |sum G^(2,2)_4|
};

struct FluctuationReport {
    double tau = 0.0;
    double horizon = 0.0;
    std::size_t slices = 0;
    double ratio_threshold = 10.0;
    std::vector<PairFluctuation> pairs;  // row-major over (alpha, beta)
    Eigen::Index d_s = 0;

    double sigma_max = 0.0, sigma_mean = 0.0;
    double kappa_max = 0.0, kappa_mean = 0.0;
    double xi_mean = 0.0;
    bool condition_all = false;
    bool vacuous = false;
};

FluctuationReport fluctuation_report(const std::vector<GTermLedger>& ledgers, double tau,
                                     double ratio_threshold = 10.0);

}  // namespace ebme
