#include "ebme/branch.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace ebme {

Vector BranchSet::flattened() const {
    return Eigen::Map<const Vector>(coeffs.data(), coeffs.size());
}

BranchSet branches_from_state(const Vector& total_state, Eigen::Index d_s, double t) {
    if (d_s < 1 || total_state.size() % d_s != 0) {
        throw std::invalid_argument("total state size is not a multiple of the system dimension");
    }
    BranchSet b;
    b.time = t;
    const Eigen::Index d_e = total_state.size() / d_s;
    b.coeffs = Eigen::Map<const Matrix>(total_state.data(), d_e, d_s);
    return b;
}

BranchSet initial_branches(const Vector& system_amplitudes, const Vector& env_state) {
    if (std::abs(system_amplitudes.norm() - 1.0) > 1e-10) {
        throw std::invalid_argument("system amplitudes are not normalized");
    }
    if (std::abs(env_state.norm() - 1.0) > 1e-10) {
        throw std::invalid_argument("environment state is not normalized");
    }
    BranchSet b;
    b.coeffs = env_state * system_amplitudes.transpose();
    return b;
}

Vector microcanonical_env_state(const SpectralData& env_spectral, double center, double width,
                                std::uint64_t seed) {
    const RealVector& e = env_spectral.eigenvalues;
    const double lo = center - 0.5 * width;
    const double hi = center + 0.5 * width;
    const auto first = std::lower_bound(e.data(), e.data() + e.size(), lo) - e.data();
    const auto last = std::upper_bound(e.data(), e.data() + e.size(), hi) - e.data() - 1;
    if (last < first) throw std::invalid_argument("microcanonical window holds no levels");

    const Eigen::Index m = last - first + 1;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> phase(0.0, 2.0 * M_PI);
    Vector state = Vector::Zero(e.size());
    const double amp = 1.0 / std::sqrt(static_cast<double>(m));
    for (Eigen::Index i = first; i <= last; ++i) {
        state(i) = amp * std::exp(Complex(0.0, phase(rng)));
    }
    return state;
}

Matrix working_hamiltonian(const TotalModel& m, const RealVector& env_eigenvalues,
                           const Matrix& h_int_eig) {
    const Eigen::Index ds = m.system_dim();
    const Eigen::Index de = env_eigenvalues.size();
    Matrix h = kron(m.system.energies.cast<Complex>().asDiagonal().toDenseMatrix(),
                    Matrix::Identity(de, de));
    h += kron(Matrix::Identity(ds, ds),
              env_eigenvalues.cast<Complex>().asDiagonal().toDenseMatrix());
    h += m.coupling * kron(m.system.h_is, h_int_eig);
    return h;
}

Matrix apply_working_hamiltonian(const TotalModel& m, const RealVector& env_eigenvalues,
                                 const Matrix& h_int_eig, const Matrix& coeffs) {
    // kron(A, B) vec(C) = vec(B C A^T) with C in the (env x system) layout
    Matrix out = env_eigenvalues.cast<Complex>().asDiagonal() * coeffs;
    out += coeffs * m.system.energies.cast<Complex>().asDiagonal();
    out += m.coupling * (h_int_eig * coeffs) * m.system.h_is.transpose();
    return out;
}

BranchSet propagate_exact(const BranchSet& b, const TotalModel& m,
                          const SpectralData& total_spectral, double t1) {
    if (total_spectral.dim() != m.total_dim() ||
        b.coeffs.rows() * b.coeffs.cols() != m.total_dim()) {
        throw std::invalid_argument("spectral data inconsistent with model dimensions");
    }
    const Vector evolved = evolve_with_spectrum(total_spectral, b.flattened(), t1 - b.time);
    return branches_from_state(evolved, b.system_dim(), t1);
}

Matrix rdm_from_branches(const BranchSet& b) {
    return (b.coeffs.adjoint() * b.coeffs).transpose();
}

void validate_rdm(const Matrix& rho, double tol) {
    if (hermiticity_defect(rho) > tol) throw std::runtime_error("RDM is not Hermitian");
    if (std::abs(rho.trace().real() - 1.0) > tol || std::abs(rho.trace().imag()) > tol) {
        throw std::runtime_error("RDM trace differs from 1");
    }
    Eigen::SelfAdjointEigenSolver<Matrix> solver(rho);
    if (solver.eigenvalues().minCoeff() < -tol) {
        throw std::runtime_error("RDM has a negative eigenvalue");
    }
}

Matrix operator_phi_matrix(const BranchSet& b, const Matrix& o_eig) {
    if (o_eig.rows() != b.env_dim() || o_eig.cols() != b.env_dim()) {
        throw std::invalid_argument("operator dimension does not match the branches");
    }
    return (b.coeffs.adjoint() * (o_eig * b.coeffs)).transpose();
}

namespace {

// phi-matrix of a diagonal operator, O(d_E d_S^2)
Matrix diagonal_phi_matrix(const BranchSet& b, const RealVector& diag) {
    return (b.coeffs.adjoint() * (diag.cast<Complex>().asDiagonal() * b.coeffs)).transpose();
}

}  // namespace

Matrix offdiag_phi_matrix(const BranchSet& b, const Matrix& o_eig) {
    return operator_phi_matrix(b, o_eig) -
           diagonal_phi_matrix(b, o_eig.diagonal().real());
}

EnergyWindow branch_energy_window(const BranchSet& b, const RealVector& env_eigenvalues,
                                  double mass) {
    if (mass <= 0.0 || mass > 1.0) throw std::invalid_argument("window mass must lie in (0, 1]");
    if (env_eigenvalues.size() != b.env_dim()) {
        throw std::invalid_argument("eigenvalue list does not match the branch dimension");
    }
    const Eigen::Index n = b.env_dim();
    EnergyWindow w;
    w.per_branch.resize(b.system_dim());

    for (Eigen::Index a = 0; a < b.system_dim(); ++a) {
        const RealVector weight = b.coeffs.col(a).cwiseAbs2();
        const double total = weight.sum();
        LevelInterval iv;
        if (total <= 1e-300) {
            w.per_branch[a] = iv;  // zero-norm branch, flagged invalid
            continue;
        }
        // tiny slack so mass = 1 survives accumulation roundoff
        const double target = mass * total * (1.0 - 1e-12);
        // two-pointer scan for the narrowest contiguous interval holding the
        // target weight
        Eigen::Index best_lo = 0, best_hi = n - 1;
        double best_width = env_eigenvalues(n - 1) - env_eigenvalues(0);
        bool found = false;
        Eigen::Index lo = 0;
        double acc = 0.0;
        for (Eigen::Index hi = 0; hi < n; ++hi) {
            acc += weight(hi);
            while (acc - weight(lo) >= target && lo < hi) {
                acc -= weight(lo);
                ++lo;
            }
            if (acc >= target) {
                const double width = env_eigenvalues(hi) - env_eigenvalues(lo);
                if (!found || width < best_width) {
                    best_lo = lo;
                    best_hi = hi;
                    best_width = width;
                    found = true;
                }
            }
        }
        iv.valid = found;
        iv.lo = best_lo;
        iv.hi = best_hi;
        iv.e_lo = env_eigenvalues(best_lo);
        iv.e_hi = env_eigenvalues(best_hi);
        w.per_branch[a] = iv;
    }

    // union hull over valid branch windows
    bool any = false;
    Eigen::Index lo = 0, hi = 0;
    double wmin = 0.0, wmax = 0.0;
    for (const auto& iv : w.per_branch) {
        if (!iv.valid) continue;
        if (!any) {
            lo = iv.lo;
            hi = iv.hi;
            wmin = wmax = iv.width();
            any = true;
        } else {
            lo = std::min(lo, iv.lo);
            hi = std::max(hi, iv.hi);
            wmin = std::min(wmin, iv.width());
            wmax = std::max(wmax, iv.width());
        }
    }
    if (!any) throw std::runtime_error("all branches have zero norm");
    w.hull.valid = true;
    w.hull.lo = lo;
    w.hull.hi = hi;
    w.hull.e_lo = env_eigenvalues(lo);
    w.hull.e_hi = env_eigenvalues(hi);
    w.width = w.hull.width();
    w.level_count = w.hull.count();
    w.width_ratio = wmin > 0.0 ? wmax / wmin : 1.0;
    return w;
}

EnergyWindow merge_windows(const EnergyWindow& a, const EnergyWindow& other,
                           const RealVector& env_eigenvalues) {
    if (a.per_branch.size() != other.per_branch.size()) {
        throw std::invalid_argument("windows describe different branch counts");
    }
    EnergyWindow w = a;
    for (std::size_t i = 0; i < w.per_branch.size(); ++i) {
        const auto& x = other.per_branch[i];
        auto& y = w.per_branch[i];
        if (!x.valid) continue;
        if (!y.valid) {
            y = x;
            continue;
        }
        y.lo = std::min(y.lo, x.lo);
        y.hi = std::max(y.hi, x.hi);
        y.e_lo = env_eigenvalues(y.lo);
        y.e_hi = env_eigenvalues(y.hi);
    }
    double wmin = 0.0, wmax = 0.0;
    bool any = false;
    Eigen::Index lo = 0, hi = 0;
    for (const auto& iv : w.per_branch) {
        if (!iv.valid) continue;
        if (!any) {
            lo = iv.lo;
            hi = iv.hi;
            wmin = wmax = iv.width();
            any = true;
        } else {
            lo = std::min(lo, iv.lo);
            hi = std::max(hi, iv.hi);
            wmin = std::min(wmin, iv.width());
            wmax = std::max(wmax, iv.width());
        }
    }
    w.hull.lo = lo;
    w.hull.hi = hi;
    w.hull.e_lo = env_eigenvalues(lo);
    w.hull.e_hi = env_eigenvalues(hi);
    w.hull.valid = any;
    w.width = w.hull.width();
    w.level_count = w.hull.count();
    w.width_ratio = wmin > 0.0 ? wmax / wmin : 1.0;
    return w;
}

LevelInterval intersect_intervals(const LevelInterval& a, const LevelInterval& b,
                                  const RealVector& env_eigenvalues) {
    LevelInterval iv;
    if (!a.valid || !b.valid) return iv;
    iv.lo = std::max(a.lo, b.lo);
    iv.hi = std::min(a.hi, b.hi);
    if (iv.lo > iv.hi) return iv;
    iv.e_lo = env_eigenvalues(iv.lo);
    iv.e_hi = env_eigenvalues(iv.hi);
    iv.valid = true;
    return iv;
}

std::array<Matrix, 4> split_by_eth_parts(const BranchSet& b, const Matrix& o_eig,
                                         const DiagonalFit& diag_fit, const EnergyWindow& window,
                                         double h0) {
    const Eigen::Index n = b.env_dim();
    if (o_eig.rows() != n) throw std::invalid_argument("operator/branch dimension mismatch");

    // Per-level split of the diagonal: O_ii = h0 + d2_i + d3_i with d2 the
    // diagonal-function deviation inside the window and d3 the residual.
    // The decomposition is exact by construction, so the four parts always
    // reassemble the full phi-matrix.
    RealVector d2 = RealVector::Zero(n);
    RealVector d3(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double oii = o_eig(i, i).real();
        if (window.hull.valid && window.hull.contains(i) && diag_fit.covers(i)) {
            d2(i) = diag_fit.values(i - diag_fit.lo) - h0;
        }
        d3(i) = oii - h0 - d2(i);
    }

    std::array<Matrix, 4> parts;
    parts[0] = h0 * rdm_from_branches(b);
    parts[1] = diagonal_phi_matrix(b, d2);
    parts[2] = diagonal_phi_matrix(b, d3);
    parts[3] = offdiag_phi_matrix(b, o_eig);
    return parts;
}

std::array<Matrix, 4> split_by_eth_parts(const BranchSet& b, const Matrix& o_eig,
                                         const EthStatistics& stats, const EnergyWindow& window) {
    if (!window.hull.valid) throw std::invalid_argument("energy window is empty");
    const double h0 = stats.diag.value_at(window.hull.center());
    return split_by_eth_parts(b, o_eig, stats.diag, window, h0);
}

namespace {

double regression_slope(const std::vector<double>& xs, const std::vector<double>& ys) {
    const auto n = static_cast<double>(xs.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sxx += (xs[i] - mx) * (xs[i] - mx);
        sxy += (xs[i] - mx) * (ys[i] - my);
    }
    if (sxx <= 0.0) throw std::invalid_argument("degenerate abscissa in scaling fit");
    return sxy / sxx;
}

}  // namespace

LambdaFit fit_lambda_scaling(const std::vector<std::vector<LambdaSample>>& samples_per_seed) {
    if (samples_per_seed.empty()) throw std::invalid_argument("no lambda samples");
    LambdaFit fit;
    for (const auto& seed_samples : samples_per_seed) {
        if (seed_samples.size() < 3) {
            throw std::invalid_argument("lambda fit needs at least 3 environment sizes");
        }
        std::vector<double> xs, ys;
        for (const auto& s : seed_samples) {
            if (s.m_gamma <= 0.0 || s.h4_mean_abs <= 0.0) {
                throw std::invalid_argument("lambda samples must be positive");
            }
            xs.push_back(std::log(s.m_gamma));
            ys.push_back(std::log(s.h4_mean_abs));
        }
        fit.per_seed.push_back(regression_slope(xs, ys) + 1.5);
    }
    double mean = 0.0;
    for (double v : fit.per_seed) mean += v;
    mean /= static_cast<double>(fit.per_seed.size());
    double var = 0.0;
    for (double v : fit.per_seed) var += (v - mean) * (v - mean);
    fit.lambda = mean;
    if (fit.per_seed.size() > 1) {
        var /= static_cast<double>(fit.per_seed.size() - 1);
        fit.stderr_ = std::sqrt(var / static_cast<double>(fit.per_seed.size()));
    }
    return fit;
}

}  // namespace ebme
