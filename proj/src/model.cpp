#include "ebme/model.hpp"

#include <random>
#include <stdexcept>
#include <string>

namespace ebme {

namespace {

bool is_ascending(const RealVector& v) {
    for (Eigen::Index i = 1; i < v.size(); ++i) {
        if (v(i) < v(i - 1)) return false;
    }
    return true;
}

Eigen::Index chain_length_for(Eigen::Index d_e) {
    Eigen::Index len = 0;
    Eigen::Index d = 1;
    while (d < d_e) {
        d *= 2;
        ++len;
    }
    if (d != d_e) {
        throw std::invalid_argument("spin chain dimension must be a power of 2, got " +
                                    std::to_string(d_e));
    }
    return len;
}

// Symmetric Gaussian matrix filled in a fixed traversal order so results are
// reproducible for a given seed.
Matrix goe_matrix(Eigen::Index n, double variance, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> offdiag(0.0, std::sqrt(variance));
    std::normal_distribution<double> diag(0.0, std::sqrt(2.0 * variance));
    RealMatrix a(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        a(i, i) = diag(rng);
        for (Eigen::Index j = i + 1; j < n; ++j) {
            const double v = offdiag(rng);
            a(i, j) = v;
            a(j, i) = v;
        }
    }
    return a.cast<Complex>();
}

}  // namespace

SystemSpec make_system(const RealVector& energies, const Matrix& h_is) {
    SystemSpec s;
    s.energies = energies;
    s.h_is = h_is;
    s.basis = Matrix::Identity(energies.size(), energies.size());
    validate_system(s);
    return s;
}

void validate_system(const SystemSpec& s) {
    if (s.dim() < 1) throw std::invalid_argument("system dimension must be positive");
    if (!is_ascending(s.energies)) throw std::invalid_argument("system energies must be ascending");
    if (s.h_is.rows() != s.dim() || s.h_is.cols() != s.dim()) {
        throw std::invalid_argument("H^IS shape does not match system dimension");
    }
    require_hermitian(s.h_is, 1e-12, "H^IS");
    if (s.basis.rows() != s.dim() || s.basis.cols() != s.dim()) {
        throw std::invalid_argument("system basis shape mismatch");
    }
}

EnvironmentOperators build_spin_chain_environment(const EnvironmentSpec& spec) {
    if (spec.kind != EnvironmentKind::SpinChain) {
        throw std::invalid_argument("environment spec is not a spin chain");
    }
    if (spec.dim < 2) throw std::invalid_argument("environment dimension must be >= 2");
    const Eigen::Index len = chain_length_for(spec.dim);
    const Eigen::Index d = spec.dim;
    const auto& p = spec.chain;

    // sigma_z eigenvalue of site k in computational state s (set bit -> +1)
    auto sz = [](Eigen::Index state, Eigen::Index k) {
        return ((state >> k) & 1) ? 1.0 : -1.0;
    };

    RealMatrix h = RealMatrix::Zero(d, d);
    for (Eigen::Index s = 0; s < d; ++s) {
        double diag = p.edge * sz(s, 0);
        for (Eigen::Index k = 0; k + 1 < len; ++k) diag += p.j * sz(s, k) * sz(s, k + 1);
        for (Eigen::Index k = 0; k < len; ++k) diag += p.h * sz(s, k);
        h(s, s) = diag;
        for (Eigen::Index k = 0; k < len; ++k) {
            const Eigen::Index flipped = s ^ (Eigen::Index(1) << k);
            h(flipped, s) += p.g;
        }
    }

    Eigen::Index site = p.site >= 0 ? p.site : len / 2;
    if (site >= len) throw std::invalid_argument("chain interaction site out of range");
    RealMatrix h_int = RealMatrix::Zero(d, d);
    for (Eigen::Index s = 0; s < d; ++s) h_int(s, s) = sz(s, site);

    return {h.cast<Complex>(), h_int.cast<Complex>()};
}

EnvironmentOperators build_goe_environment(const EnvironmentSpec& spec) {
    if (spec.kind != EnvironmentKind::Goe) {
        throw std::invalid_argument("environment spec is not GOE");
    }
    if (spec.dim < 2) throw std::invalid_argument("environment dimension must be >= 2");
    double variance = spec.goe.variance;
    if (variance < 0.0) variance = 1.0 / static_cast<double>(spec.dim);
    if (variance <= 0.0) throw std::invalid_argument("GOE variance must be positive");

    EnvironmentOperators out;
    out.h_env = goe_matrix(spec.dim, variance, derive_seed(spec.seed, "goe-env"));
    out.h_int_env = goe_matrix(spec.dim, variance, derive_seed(spec.seed, "goe-int"));
    return out;
}

EnvironmentOperators build_explicit_environment(const Matrix& h_env, const Matrix& h_int_env) {
    if (h_env.rows() != h_int_env.rows() || h_env.cols() != h_int_env.cols()) {
        throw std::invalid_argument("explicit environment operators must share a shape");
    }
    require_hermitian(h_env, 1e-12, "H^E");
    require_hermitian(h_int_env, 1e-12, "H^IE");
    return {h_env, h_int_env};
}

TotalModel make_total_model(const SystemSpec& system, const EnvironmentOperators& env,
                            double coupling) {
    TotalModel m;
    m.system = system;
    m.h_env = env.h_env;
    m.h_int_env = env.h_int_env;
    m.coupling = coupling;
    validate_total_model(m);
    return m;
}

void validate_total_model(const TotalModel& m) {
    validate_system(m.system);
    if (m.h_env.rows() != m.h_env.cols() || m.h_env.rows() < 2) {
        throw std::invalid_argument("H^E must be square with dimension >= 2");
    }
    if (m.h_int_env.rows() != m.h_env.rows() || m.h_int_env.cols() != m.h_env.cols()) {
        throw std::invalid_argument("H^IE shape does not match H^E");
    }
    require_hermitian(m.h_env, 1e-12, "H^E");
    require_hermitian(m.h_int_env, 1e-12, "H^IE");
}

Matrix assemble_total_hamiltonian(const TotalModel& m) {
    validate_total_model(m);
    const Eigen::Index ds = m.system_dim();
    const Eigen::Index de = m.env_dim();
    const Matrix ident_env = Matrix::Identity(de, de);
    const Matrix ident_sys = Matrix::Identity(ds, ds);

    // Express the system pieces in the physical basis so the assembled matrix
    // is invariant under renormalization's basis rotation.
    const Matrix h_s_phys =
        m.system.basis * m.system.energies.cast<Complex>().asDiagonal() * m.system.basis.adjoint();
    const Matrix h_is_phys = m.system.basis * m.system.h_is * m.system.basis.adjoint();

    return kron(h_s_phys, ident_env) + kron(ident_sys, m.h_env) +
           m.coupling * kron(h_is_phys, m.h_int_env);
}

TotalModel renormalize(const TotalModel& m, double h0) {
    if (m.renormalized) {
        throw std::logic_error("model is already renormalized");
    }
    validate_total_model(m);

    TotalModel out = m;
    out.h_int_env = m.h_int_env - h0 * Matrix::Identity(m.env_dim(), m.env_dim());
    out.h0_ie = h0;
    out.renormalized = true;

    // H^S_rn = H^S + coupling*h0*H^IS, re-diagonalized; |alpha> become its
    // eigenstates, so H^IS and the basis map rotate along.
    Matrix h_s_rn = m.system.energies.cast<Complex>().asDiagonal();
    h_s_rn += (m.coupling * h0) * m.system.h_is;
    const SpectralData spec = diagonalize(h_s_rn);
    out.system.energies = spec.eigenvalues;
    out.system.h_is = spec.eigenvectors.adjoint() * m.system.h_is * spec.eigenvectors;
    out.system.basis = m.system.basis * spec.eigenvectors;
    return out;
}

}  // namespace ebme
