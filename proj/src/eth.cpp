#include "ebme/eth.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ebme {

namespace {

double interp_clamped(const RealVector& xs, const RealVector& ys, double x) {
    const Eigen::Index n = xs.size();
    if (n == 0) throw std::invalid_argument("interpolation over empty table");
    if (n == 1 || x <= xs(0)) return ys(0);
    if (x >= xs(n - 1)) return ys(n - 1);
    Eigen::Index hi = 1;
    while (hi < n - 1 && xs(hi) < x) ++hi;
    const double x0 = xs(hi - 1), x1 = xs(hi);
    if (x1 <= x0) return ys(hi);
    const double t = (x - x0) / (x1 - x0);
    return (1.0 - t) * ys(hi - 1) + t * ys(hi);
}

double least_squares_slope(const RealVector& xs, const RealVector& ys) {
    const Eigen::Index n = xs.size();
    if (n < 2) return 0.0;
    const double mx = xs.mean();
    const double my = ys.mean();
    double sxx = 0.0, sxy = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        sxx += (xs(i) - mx) * (xs(i) - mx);
        sxy += (xs(i) - mx) * (ys(i) - my);
    }
    return sxx > 0.0 ? sxy / sxx : 0.0;
}

}  // namespace

ElementTable matrix_elements_in_eigenbasis(const Matrix& op, const SpectralData& spectral) {
    if (op.rows() != spectral.dim() || op.cols() != spectral.dim()) {
        throw std::invalid_argument("operator shape does not match spectral data");
    }
    ElementTable t;
    t.spectral = spectral;
    t.elements = product(spectral.eigenvectors.adjoint(), product(op, spectral.eigenvectors));
    return t;
}

LevelWindow central_window(const RealVector& eigenvalues, double fraction) {
    const Eigen::Index n = eigenvalues.size();
    if (n == 0) throw std::invalid_argument("central_window: empty spectrum");
    if (fraction <= 0.0 || fraction > 1.0) {
        throw std::invalid_argument("window fraction must lie in (0, 1]");
    }
    Eigen::Index keep = std::max<Eigen::Index>(1, static_cast<Eigen::Index>(fraction * n));
    LevelWindow w;
    w.lo = (n - keep) / 2;
    w.hi = w.lo + keep - 1;
    w.e_lo = eigenvalues(w.lo);
    w.e_hi = eigenvalues(w.hi);
    return w;
}

double DiagonalFit::value_at(double e) const {
    return interp_clamped(energies, values, e);
}

DiagonalFit fit_diagonal_function(const ElementTable& table, const LevelWindow& window,
                                  Eigen::Index half_width) {
    if (half_width < 0) throw std::invalid_argument("half_width must be nonnegative");
    if (window.count() < 10 * std::max<Eigen::Index>(half_width, 1)) {
        throw std::invalid_argument("window too small for the requested moving average");
    }
    const Eigen::Index n = table.dim();
    DiagonalFit fit;
    fit.lo = window.lo;
    const Eigen::Index m = window.count();
    fit.energies.resize(m);
    fit.values.resize(m);

    for (Eigen::Index k = 0; k < m; ++k) {
        const Eigen::Index i = window.lo + k;
        // centered average over 2w+1 consecutive levels, truncated at the
        // spectrum edges
        const Eigen::Index a = std::max<Eigen::Index>(0, i - half_width);
        const Eigen::Index b = std::min<Eigen::Index>(n - 1, i + half_width);
        double acc = 0.0;
        for (Eigen::Index j = a; j <= b; ++j) acc += table.elements(j, j).real();
        fit.energies(k) = table.spectral.eigenvalues(i);
        fit.values(k) = acc / static_cast<double>(b - a + 1);
    }

    RealVector raw(m);
    for (Eigen::Index k = 0; k < m; ++k) {
        raw(k) = table.elements(window.lo + k, window.lo + k).real();
    }
    fit.slope0 = least_squares_slope(fit.energies, raw);
    fit.value_at_center = fit.value_at(window.center());
    return fit;
}

double DosEstimate::value_at(double e) const { return interp_clamped(grid, values, e); }

double DosEstimate::log_derivative_at(double e) const {
    const double h = 2.0 * smoothing;
    const double up = value_at(e + h);
    const double dn = value_at(e - h);
    if (up <= 0.0 || dn <= 0.0) return 0.0;
    return (std::log(up) - std::log(dn)) / (2.0 * h);
}

DosEstimate estimate_density_of_states(const RealVector& eigenvalues, double smoothing_width,
                                       double beta_at) {
    const Eigen::Index n = eigenvalues.size();
    if (n < 100) throw std::invalid_argument("density of states needs at least 100 levels");
    if (smoothing_width <= 0.0) throw std::invalid_argument("smoothing width must be positive");
    const double lo = eigenvalues(0);
    const double hi = eigenvalues(n - 1);
    if (hi - lo <= smoothing_width) {
        throw std::invalid_argument("smoothing width exceeds the spectral range");
    }

    DosEstimate dos;
    dos.smoothing = smoothing_width;
    const Eigen::Index points = 1024;
    dos.grid.resize(points);
    dos.values.setZero(points);
    const double pad = 5.0 * smoothing_width;
    const double step = (hi - lo + 2.0 * pad) / static_cast<double>(points - 1);
    for (Eigen::Index g = 0; g < points; ++g) dos.grid(g) = lo - pad + step * g;

    const double norm = 1.0 / (smoothing_width * std::sqrt(2.0 * M_PI));
    for (Eigen::Index i = 0; i < n; ++i) {
        // kernel support is effectively +-5 sigma; restrict the grid range
        const double e = eigenvalues(i);
        const auto g0 = static_cast<Eigen::Index>(std::floor((e - pad - (lo - pad)) / step));
        const auto g1 = static_cast<Eigen::Index>(std::ceil((e + pad - (lo - pad)) / step));
        for (Eigen::Index g = std::max<Eigen::Index>(0, g0);
             g <= std::min(points - 1, g1); ++g) {
            const double u = (dos.grid(g) - e) / smoothing_width;
            dos.values(g) += norm * std::exp(-0.5 * u * u);
        }
    }
    dos.beta_at = beta_at;
    dos.beta = dos.log_derivative_at(beta_at);
    return dos;
}

FTable extract_offdiagonal_function(const ElementTable& table, const DosEstimate& dos,
                                    const LevelWindow& window, Eigen::Index e0_bins,
                                    double omega_bin_width) {
    if (window.count() < 2) throw std::invalid_argument("window holds fewer than two levels");
    if (e0_bins < 1 || omega_bin_width <= 0.0) {
        throw std::invalid_argument("invalid f-table binning");
    }
    const Eigen::Index n = table.dim();
    const RealVector& e = table.spectral.eigenvalues;

    // omega spans every pair with midpoint inside the window
    const double spread = e(n - 1) - e(0);
    const auto k_max = static_cast<Eigen::Index>(std::floor(spread / omega_bin_width)) + 1;

    FTable t;
    t.omega_bin_width = omega_bin_width;
    t.e0_centers.resize(e0_bins);
    const double e0_width = window.width() / static_cast<double>(e0_bins);
    for (Eigen::Index b = 0; b < e0_bins; ++b) {
        t.e0_centers(b) = window.e_lo + (b + 0.5) * e0_width;
    }
    t.omega_centers.resize(2 * k_max + 1);
    for (Eigen::Index k = -k_max; k <= k_max; ++k) {
        t.omega_centers(k + k_max) = omega_bin_width * static_cast<double>(k);
    }
    t.f2.setZero(e0_bins, 2 * k_max + 1);
    t.counts.setZero(e0_bins, 2 * k_max + 1);

    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            if (i == j) continue;
            const double e0 = 0.5 * (e(i) + e(j));
            if (e0 < window.e_lo || e0 > window.e_hi) continue;
            auto b = static_cast<Eigen::Index>((e0 - window.e_lo) / e0_width);
            b = std::min(b, e0_bins - 1);
            const double omega = e(i) - e(j);
            const auto k = static_cast<Eigen::Index>(std::llround(omega / omega_bin_width));
            if (k < -k_max || k > k_max) continue;
            t.f2(b, k + k_max) += std::norm(table.elements(i, j));
            t.counts(b, k + k_max) += 1;
        }
    }

    // |f|^2 = rho(e0) * mean |O_ij|^2 per cell
    for (Eigen::Index b = 0; b < e0_bins; ++b) {
        const double rho = dos.value_at(t.e0_centers(b));
        for (Eigen::Index k = 0; k < t.counts.cols(); ++k) {
            if (t.counts(b, k) > 0) t.f2(b, k) *= rho / t.counts(b, k);
        }
    }
    return t;
}

BandProfile estimate_bandwidth_and_plateau(const FTable& table) {
    const Eigen::Index rows = table.f2.rows();
    const Eigen::Index cols = table.f2.cols();
    if (rows == 0 || cols == 0) throw std::invalid_argument("empty f-table");
    const Eigen::Index row = rows / 2;  // window-center e0 bin
    const Eigen::Index k0 = cols / 2;   // omega = 0 bin
    const Eigen::Index k_max = cols - 1 - k0;

    // fold to |omega|, weighting the +-omega cells by their sample counts
    RealVector prof = RealVector::Constant(k_max + 1, -1.0);
    for (Eigen::Index k = 0; k <= k_max; ++k) {
        const Eigen::Index cp = k0 + k, cm = k0 - k;
        long cnt = table.counts(row, cp) + (k > 0 ? table.counts(row, cm) : 0);
        if (cnt < table.min_samples) continue;
        double acc = table.counts(row, cp) * table.f2(row, cp);
        if (k > 0) acc += table.counts(row, cm) * table.f2(row, cm);
        prof(k) = acc / static_cast<double>(cnt);
    }

    Eigen::Index last = -1;
    for (Eigen::Index k = 0; k <= k_max; ++k) {
        if (prof(k) >= 0.0) last = k;
    }
    BandProfile out;
    if (last < 0) {
        out.flagged = true;
        return out;
    }

    // plateau height from the innermost populated bins
    double acc = 0.0;
    int used = 0;
    for (Eigen::Index k = 0; k <= last && used < 5; ++k) {
        if (prof(k) < 0.0) continue;
        acc += prof(k);
        ++used;
    }
    out.f0 = std::sqrt(acc / std::max(used, 1));

    // 5-bin moving average of |f|, skipping empty cells
    RealVector smooth = RealVector::Constant(last + 1, -1.0);
    for (Eigen::Index k = 0; k <= last; ++k) {
        double s = 0.0;
        int c = 0;
        for (Eigen::Index m = std::max<Eigen::Index>(0, k - 2);
             m <= std::min(last, k + 2); ++m) {
            if (prof(m) < 0.0) continue;
            s += std::sqrt(prof(m));
            ++c;
        }
        if (c > 0) smooth(k) = s / c;
    }

    const double threshold = out.f0 / std::exp(1.0);
    for (Eigen::Index k = 0; k <= last; ++k) {
        if (smooth(k) >= 0.0 && smooth(k) < threshold) {
            out.w_f = table.omega_bin_width * static_cast<double>(k);
            return out;
        }
    }
    // no decay detected inside the populated range
    out.w_f = table.omega_bin_width * static_cast<double>(last) + 0.5 * table.omega_bin_width;
    out.flagged = true;
    return out;
}

double diagonal_fluctuation_factor(const ElementTable& table, const LevelWindow& window,
                                   const DiagonalFit& diag_fit, Eigen::Index band) {
    if (window.count() < 4) throw std::invalid_argument("window too small for eta");
    double var_diag = 0.0;
    Eigen::Index n_diag = 0;
    for (Eigen::Index i = window.lo; i <= window.hi; ++i) {
        if (!diag_fit.covers(i)) continue;
        const double r =
            table.elements(i, i).real() - diag_fit.values(i - diag_fit.lo);
        var_diag += r * r;
        ++n_diag;
    }
    if (n_diag == 0) throw std::invalid_argument("diagonal fit does not cover the window");
    var_diag /= static_cast<double>(n_diag);

    if (var_diag == 0.0) return 0.0;

    double var_off = 0.0;
    Eigen::Index n_off = 0;
    for (Eigen::Index i = window.lo; i <= window.hi; ++i) {
        const Eigen::Index jmax = std::min(window.hi, i + band);
        for (Eigen::Index j = i + 1; j <= jmax; ++j) {
            var_off += std::norm(table.elements(i, j));
            ++n_off;
        }
    }
    if (n_off == 0 || var_off == 0.0) {
        throw std::invalid_argument("no offdiagonal elements available for eta");
    }
    return var_diag / (var_off / static_cast<double>(n_off));
}

double HIe2Diagonal::direct_at(double e) const { return interp_clamped(energies, direct, e); }

HIe2Diagonal compute_h_ie2_diagonal(const ElementTable& table, const DosEstimate& dos,
                                    const FTable& f_table, const LevelWindow& window,
                                    Eigen::Index half_width) {
    const Eigen::Index n = table.dim();
    const RealVector& e = table.spectral.eigenvalues;

    // (O^2)_ii = squared row norm for Hermitian O
    RealVector sq(n);
    for (Eigen::Index i = 0; i < n; ++i) sq(i) = table.elements.row(i).squaredNorm();

    const Eigen::Index m = window.count();
    HIe2Diagonal out;
    out.energies.resize(m);
    out.direct.resize(m);
    out.eq_sum.resize(m);

    for (Eigen::Index k = 0; k < m; ++k) {
        const Eigen::Index i = window.lo + k;
        const Eigen::Index a = std::max<Eigen::Index>(0, i - half_width);
        const Eigen::Index b = std::min<Eigen::Index>(n - 1, i + half_width);
        out.energies(k) = e(i);
        out.direct(k) = sq.segment(a, b - a + 1).mean();
    }

    // route (b): h(e_i) = sum_j f^2(e0, omega) / rho(e0), with the sum over j
    // evaluated per omega bin using the level count in that bin
    const Eigen::Index k0 = f_table.omega_centers.size() / 2;
    const double bw = f_table.omega_bin_width;
    const double e0_lo = f_table.e0_centers(0);
    const double e0_step = f_table.e0_centers.size() > 1
                               ? f_table.e0_centers(1) - f_table.e0_centers(0)
                               : 1.0;
    const double* begin = e.data();
    const double* end = e.data() + n;

    for (Eigen::Index s = 0; s < m; ++s) {
        const double ei = out.energies(s);
        double acc = 0.0;
        for (Eigen::Index c = 0; c < f_table.omega_centers.size(); ++c) {
            if (c == k0) continue;  // diagonal excluded from f
            const double omega = f_table.omega_centers(c);
            const double ej_lo = ei - omega - 0.5 * bw;
            const double ej_hi = ei - omega + 0.5 * bw;
            const auto count = std::upper_bound(begin, end, ej_hi) -
                               std::lower_bound(begin, end, ej_lo);
            if (count == 0) continue;
            const double e0 = ei - 0.5 * omega;
            // nearest available e0 row, clamped at the window edges
            auto b = static_cast<Eigen::Index>(std::llround((e0 - e0_lo) / e0_step));
            b = std::clamp<Eigen::Index>(b, 0, f_table.e0_centers.size() - 1);
            if (!f_table.populated(b, c)) continue;
            const double rho = dos.value_at(e0);
            if (rho <= 0.0) continue;
            acc += static_cast<double>(count) * f_table.f2(b, c) / rho;
        }
        out.eq_sum(s) = acc;
    }
    return out;
}

Eigen::Index default_movavg_half_width(Eigen::Index d_e) {
    return std::max<Eigen::Index>(5, d_e / 200);
}

EthStatistics compute_eth_statistics(const ElementTable& table, const EthOptions& options) {
    EthStatistics stats;
    const Eigen::Index n = table.dim();
    stats.window = central_window(table.spectral.eigenvalues, options.window_fraction);

    const Eigen::Index half_width = options.movavg_half_width >= 0
                                        ? options.movavg_half_width
                                        : default_movavg_half_width(n);
    stats.diag = fit_diagonal_function(table, stats.window, half_width);

    const double smoothing = options.dos_smoothing > 0.0
                                 ? options.dos_smoothing
                                 : table.spectral.spread() / 100.0;
    stats.dos =
        estimate_density_of_states(table.spectral.eigenvalues, smoothing, stats.window.center());

    const double mean_spacing = table.spectral.spread() / static_cast<double>(n - 1);
    stats.f_table = extract_offdiagonal_function(table, stats.dos, stats.window, options.e0_bins,
                                                 options.omega_bin_spacings * mean_spacing);
    stats.band = estimate_bandwidth_and_plateau(stats.f_table);
    stats.eta_diag =
        diagonal_fluctuation_factor(table, stats.window, stats.diag, options.eta_band);
    stats.h_ie2 = compute_h_ie2_diagonal(table, stats.dos, stats.f_table, stats.window, half_width);
    return stats;
}

}  // namespace ebme
