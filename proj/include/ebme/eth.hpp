// ETH statistics of an environment observable in the H^E eigenbasis: diagonal
// function and slope, binned |f(e0,omega)|^2, density of states, bandwidth and
// plateau of the offdiagonal envelope, diagonal-fluctuation factor, and the
// diagonal function of (H^IE)^2.
#pragma once

#include "ebme/linalg.hpp"

namespace ebme {

// Observable expressed in the eigenbasis of a Hermitian operator.
struct ElementTable {
    SpectralData spectral;  // of H^E
    Matrix elements;        // U^dagger O U

    Eigen::Index dim() const { return elements.rows(); }
};

ElementTable matrix_elements_in_eigenbasis(const Matrix& op, const SpectralData& spectral);

// Contiguous level-index window [lo, hi] (inclusive).
struct LevelWindow {
    Eigen::Index lo = 0;
    Eigen::Index hi = -1;
    double e_lo = 0.0;
    double e_hi = 0.0;

    Eigen::Index count() const { return hi - lo + 1; }
    double center() const { return 0.5 * (e_lo + e_hi); }
    double width() const { return e_hi - e_lo; }
    bool contains(Eigen::Index i) const { return i >= lo && i <= hi; }
};

// Central `fraction` of the spectrum by level count.
LevelWindow central_window(const RealVector& eigenvalues, double fraction);

// Moving-average estimate of the diagonal function O(e) over a window, plus
// the least-squares slope across the window.
struct DiagonalFit {
    Eigen::Index lo = 0;   // first level covered
    RealVector energies;   // e_i for levels in [lo, lo+n)
    RealVector values;     // O(e_i) estimates
    double slope0 = 0.0;
    double value_at_center = 0.0;

    // Piecewise-linear interpolation, clamped at the window edges.
    double value_at(double e) const;
    bool covers(Eigen::Index level) const {
        return level >= lo && level < lo + values.size();
    }
};

DiagonalFit fit_diagonal_function(const ElementTable& table, const LevelWindow& window,
                                  Eigen::Index half_width);

// Gaussian-kernel level density sampled on a uniform grid; beta is the
// log-derivative of the density at `beta_at`.
struct DosEstimate {
    RealVector grid;
    RealVector values;
    double smoothing = 0.0;
    double beta = 0.0;
    double beta_at = 0.0;

    double value_at(double e) const;  // linear interpolation, clamped
    double log_derivative_at(double e) const;
};

DosEstimate estimate_density_of_states(const RealVector& eigenvalues, double smoothing_width,
                                       double beta_at);

// Binned |f(e0, omega)|^2 over the analysis window. Cells with fewer than
// `min_samples` pairs are flagged empty.
struct FTable {
    RealVector e0_centers;
    RealVector omega_centers;  // signed, symmetric about 0
    RealMatrix f2;             // e0 bins x omega bins
    Eigen::MatrixXi counts;
    double omega_bin_width = 0.0;
    int min_samples = 20;

    bool populated(Eigen::Index b, Eigen::Index k) const { return counts(b, k) >= min_samples; }
};

FTable extract_offdiagonal_function(const ElementTable& table, const DosEstimate& dos,
                                    const LevelWindow& window, Eigen::Index e0_bins,
                                    double omega_bin_width);

// Plateau height f0 and band half-extent w_f of |f| in |omega|, measured on
// the window-center e0 row. w_f uses a 1/e-of-plateau crossing on the 5-bin
// smoothed profile; if |f| never drops below f0/e the full populated extent is
// returned with `flagged` set. The one-sided convention makes w_f coincide
// with the spectral span Delta_E in the flat (random-matrix) limit.
struct BandProfile {
    double w_f = 0.0;
    double f0 = 0.0;
    bool flagged = false;
};

BandProfile estimate_bandwidth_and_plateau(const FTable& table);

// var(diagonal residuals) / var(near-diagonal offdiagonal elements) over the
// window; `band` bounds |i-j| for the offdiagonal sample.
double diagonal_fluctuation_factor(const ElementTable& table, const LevelWindow& window,
                                   const DiagonalFit& diag_fit, Eigen::Index band = 20);

// Diagonal function of (H^IE)^2 sampled on window levels, by two routes:
// (a) moving-averaged diagonal of the squared operator, and (b) the
// f-table/DOS sum  h(e_i) = sum_j f^2(e0, omega) / rho(e0).
struct HIe2Diagonal {
    RealVector energies;
    RealVector direct;
    RealVector eq_sum;

    double direct_at(double e) const;  // linear interpolation, clamped
};

HIe2Diagonal compute_h_ie2_diagonal(const ElementTable& table, const DosEstimate& dos,
                                    const FTable& f_table, const LevelWindow& window,
                                    Eigen::Index half_width);

struct EthOptions {
    double window_fraction = 0.6;
    Eigen::Index e0_bins = 8;
    double omega_bin_spacings = 20.0;  // omega bin width in mean level spacings
    Eigen::Index movavg_half_width = -1;  // -1 -> max(5, d_E/200)
    double dos_smoothing = -1.0;          // -1 -> spectral spread / 100
    Eigen::Index eta_band = 20;
};

Eigen::Index default_movavg_half_width(Eigen::Index d_e);

// All ETH statistics of one observable, assembled with consistent windows.
struct EthStatistics {
    LevelWindow window;
    DiagonalFit diag;
    DosEstimate dos;
    FTable f_table;
    BandProfile band;
    double eta_diag = 0.0;
    HIe2Diagonal h_ie2;
};

EthStatistics compute_eth_statistics(const ElementTable& table, const EthOptions& options);

}  // namespace ebme
