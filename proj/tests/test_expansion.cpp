#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "ebme/expansion.hpp"
#include "testutil.hpp"

using namespace ebme;

namespace {

YOperatorSet y_ops(const testutil::RandomModel& rm) {
    return build_y_operators(rm.h_int_eig, rm.env_spectral.eigenvalues);
}

// Small renormalized GOE setup with the statistics needed by split_g_terms.
struct SplitFixture {
    TotalModel model;
    SpectralData env_spectral;
    Matrix h_int_eig;
    EthStatistics stats;
    DiagonalFit diag_ie2;
    YOperatorSet ys;
    BranchSet branches;
    EnergyWindow window;
};

SplitFixture make_split_fixture(double coupling, std::uint64_t seed) {
    EnvironmentSpec spec;
    spec.kind = EnvironmentKind::Goe;
    spec.dim = 256;
    spec.seed = seed;
    const auto env = build_goe_environment(spec);
    RealVector e_s(2);
    e_s << -0.45, 0.45;
    Matrix h_is(2, 2);
    h_is << 0.4, Complex(0.5, 0.1), Complex(0.5, -0.1), -0.2;

    SplitFixture f;
    f.model = make_total_model(make_system(e_s, h_is), env, coupling);
    f.env_spectral = diagonalize(env.h_env);
    ElementTable raw;
    raw.spectral = f.env_spectral;
    raw.elements =
        f.env_spectral.eigenvectors.adjoint() * env.h_int_env * f.env_spectral.eigenvectors;

    EthOptions opts;
    const LevelWindow w60 = central_window(f.env_spectral.eigenvalues, opts.window_fraction);
    const DiagonalFit pre = fit_diagonal_function(raw, w60, default_movavg_half_width(spec.dim));
    const double h0 = pre.value_at(w60.center());
    f.model = renormalize(f.model, h0);
    f.h_int_eig = raw.elements - h0 * Matrix::Identity(spec.dim, spec.dim);

    ElementTable table;
    table.spectral = f.env_spectral;
    table.elements = f.h_int_eig;
    f.stats = compute_eth_statistics(table, opts);
    f.diag_ie2.lo = f.stats.window.lo;
    f.diag_ie2.energies = f.stats.h_ie2.energies;
    f.diag_ie2.values = f.stats.h_ie2.direct;
    f.diag_ie2.value_at_center = f.diag_ie2.value_at(f.stats.window.center());
    f.ys = build_y_operators(f.h_int_eig, f.env_spectral.eigenvalues);

    const Vector chi =
        microcanonical_env_state(f.env_spectral, f.stats.window.center(), 0.5, seed + 1);
    Vector amps(2);
    amps << std::sqrt(0.6), std::sqrt(0.4);
    const BranchSet b0 = initial_branches(amps, chi);
    const SpectralData total =
        diagonalize(working_hamiltonian(f.model, f.env_spectral.eigenvalues, f.h_int_eig));
    f.branches = propagate_exact(b0, f.model, total, 1.2);
    f.window = branch_energy_window(f.branches, f.env_spectral.eigenvalues, 0.99);
    return f;
}

GTermLedger ledger_of(const SplitFixture& f, const BranchSet& b) {
    const G1Term g1 = g1_term(b, f.model, f.ys);
    const G2Term g2 = g2_term(b, f.model, f.ys, f.env_spectral.eigenvalues);
    return split_g_terms(g1, g2, b, f.ys, f.model, f.stats, f.diag_ie2, f.window, true);
}

}  // namespace

TEST_CASE("Y operators: commutator structure") {
    std::mt19937_64 rng(51);
    const auto rm = testutil::random_model(24, rng);
    const YOperatorSet ys = y_ops(rm);

    // diagonal of [H^IE, H^E] vanishes identically
    CHECK(ys.y3.diagonal().cwiseAbs().maxCoeff() == 0.0);

    // elementwise form (e_j - e_i) O_ij
    Matrix want(24, 24);
    for (Eigen::Index i = 0; i < 24; ++i) {
        for (Eigen::Index j = 0; j < 24; ++j) {
            want(i, j) = (rm.env_spectral.eigenvalues(j) - rm.env_spectral.eigenvalues(i)) *
                         rm.h_int_eig(i, j);
        }
    }
    CHECK(max_abs(ys.y3 - want) <= 1e-10);

    // Y4 is Hermitian positive semidefinite
    CHECK(hermiticity_defect(ys.y4) <= 1e-12);
    Eigen::SelfAdjointEigenSolver<Matrix> solver(ys.y4);
    CHECK(solver.eigenvalues().minCoeff() >= -1e-12);

    // an interaction commuting with H^E has Y3 = 0
    const Matrix f_of_h = rm.env_spectral.eigenvalues.array().sin().matrix().cast<Complex>()
                              .asDiagonal();
    const YOperatorSet commuting = build_y_operators(f_of_h, rm.env_spectral.eigenvalues);
    CHECK(max_abs(commuting.y3) == 0.0);
}

TEST_CASE("G1: decoupled limit and conjugation symmetry") {
    std::mt19937_64 rng(52);
    const auto rm0 = testutil::random_model(10, rng, 0.0);
    auto traj0 = testutil::exact_trajectory(rm0, rng);
    const G1Term g0 = g1_term(traj0.b0, rm0.model, y_ops(rm0));
    const Matrix rho = rdm_from_branches(traj0.b0);
    for (Eigen::Index a = 0; a < 2; ++a) {
        for (Eigen::Index b = 0; b < 2; ++b) {
            const Complex want = imag_unit *
                                 (rm0.model.system.energies(b) - rm0.model.system.energies(a)) *
                                 rho(a, b);
            CHECK(std::abs(g0.total(a, b) - want) <= 1e-14);
        }
    }

    const auto rm = testutil::random_model(12, rng);
    auto traj = testutil::exact_trajectory(rm, rng);
    const G1Term g = g1_term(traj.b0, rm.model, y_ops(rm));
    CHECK(hermiticity_defect(g.total) <= 1e-12);
    CHECK(std::abs(g.total.trace()) <= 1e-12);
}

TEST_CASE("G1 matches the first derivative with second-order convergence") {
    std::mt19937_64 rng(53);
    const auto rm = testutil::random_model(12, rng);
    auto traj = testutil::exact_trajectory(rm, rng);
    const double t0 = 0.8;
    const BranchSet bt = propagate_exact(traj.b0, rm.model, traj.total_spectral, t0);
    const G1Term g = g1_term(bt, rm.model, y_ops(rm));

    auto rho_at = [&](double t) { return traj.rho_at(t); };
    auto fd_error = [&](double h) {
        const Matrix fd = (rho_at(t0 + h) - rho_at(t0 - h)) / (2.0 * h);
        return max_abs(fd - g.total);
    };
    const double e1 = fd_error(1e-2);
    const double e2 = fd_error(5e-3);
    const double e3 = fd_error(2.5e-3);
    CHECK(e2 <= e1 / 3.0);  // O(h^2) centered-difference scaling
    CHECK(e3 <= e2 / 3.0);
}

TEST_CASE("G2: decoupled limit, dual routes, and derivative oracle") {
    std::mt19937_64 rng(54);
    const auto rm0 = testutil::random_model(8, rng, 0.0);
    auto traj0 = testutil::exact_trajectory(rm0, rng);
    const G2Term g0 = g2_term(traj0.b0, rm0.model, y_ops(rm0), rm0.env_spectral.eigenvalues);
    const Matrix rho = rdm_from_branches(traj0.b0);
    for (Eigen::Index a = 0; a < 2; ++a) {
        for (Eigen::Index b = 0; b < 2; ++b) {
            const double de = rm0.model.system.energies(b) - rm0.model.system.energies(a);
            CHECK(std::abs(g0.total(a, b) + 0.5 * de * de * rho(a, b)) <= 1e-14);
        }
    }

    // dual-derivation identity on 10 random models
    for (int trial = 0; trial < 10; ++trial) {
        const auto rm = testutil::random_model(8 + 2 * trial, rng);
        auto traj = testutil::exact_trajectory(rm, rng);
        const BranchSet bt = propagate_exact(traj.b0, rm.model, traj.total_spectral, 0.4);
        const G2Term g = g2_term(bt, rm.model, y_ops(rm), rm.env_spectral.eigenvalues);
        REQUIRE(max_abs(g.total - g.direct) <= 1e-9);
        CHECK(hermiticity_defect(g.total) <= 1e-12);
        CHECK(std::abs(g.total.trace()) <= 1e-12);
    }

    // half the second derivative, on a 2 x 8 model at step 1e-3
    const auto rm = testutil::random_model(8, rng);
    auto traj = testutil::exact_trajectory(rm, rng);
    const double t0 = 0.6;
    const BranchSet bt = propagate_exact(traj.b0, rm.model, traj.total_spectral, t0);
    const G2Term g = g2_term(bt, rm.model, y_ops(rm), rm.env_spectral.eigenvalues);
    auto rho_at = [&](double t) { return traj.rho_at(t); };
    const double h = 1e-3;
    const Matrix second = (rho_at(t0 + h) - 2.0 * rho_at(t0) + rho_at(t0 - h)) / (h * h);
    CHECK(testutil::rel_error(g.total, 0.5 * second) <= 1e-4);
}

TEST_CASE("Richardson derivative identities at tight tolerance") {
    std::mt19937_64 rng(55);
    for (Eigen::Index d_e : {16, 32}) {
        const auto rm = testutil::random_model(d_e, rng);
        auto traj = testutil::exact_trajectory(rm, rng);
        const YOperatorSet ys = y_ops(rm);
        for (double t0 : {0.0, 1.1}) {
            const BranchSet bt = propagate_exact(traj.b0, rm.model, traj.total_spectral, t0);
            const G1Term g1 = g1_term(bt, rm.model, ys);
            const G2Term g2 = g2_term(bt, rm.model, ys, rm.env_spectral.eigenvalues);
            auto rho_at = [&](double t) { return traj.rho_at(t); };
            const Matrix d1 = testutil::richardson_first_derivative(rho_at, t0, 5e-3);
            const Matrix d2 = testutil::richardson_second_derivative(rho_at, t0, 5e-3);
            CHECK(testutil::rel_error(g1.total, d1) <= 1e-5);
            CHECK(testutil::rel_error(g2.total, 0.5 * d2) <= 1e-5);
        }
    }
}

TEST_CASE("ledger splitting: known zeros and partition identities") {
    const SplitFixture f = make_split_fixture(0.45, 61);
    const GTermLedger led = ledger_of(f, f.branches);

    // eta = 1 (identity operator): l = 1 carries everything
    CHECK(max_abs(led.g(1, 1, 1) - led.g1_eta[0]) == 0.0);
    for (int l = 2; l <= 4; ++l) {
        CHECK(max_abs(led.g(1, 1, l)) <= 1e-12);
        CHECK(max_abs(led.g(2, 1, l)) <= 1e-12);
    }

    // renormalized interaction: eta = 2, l = 1 entries vanish identically
    CHECK(max_abs(led.g(1, 2, 1)) <= 1e-10);
    CHECK(max_abs(led.g(2, 2, 1)) <= 1e-10);

    // eta = 3: zero diagonal puts everything into l = 4
    CHECK(max_abs(led.g(2, 3, 1)) <= 1e-10);
    CHECK(max_abs(led.g(2, 3, 2)) <= 1e-10);
    CHECK(max_abs(led.g(2, 3, 3)) <= 1e-10);

    CHECK(led.partition_residual() <= 1e-10);
    CHECK(led.conjugation_residual() <= 1e-10);
}

TEST_CASE("taylor step: zero step, convergence order, decoupled expansion") {
    const SplitFixture f = make_split_fixture(0.45, 62);
    const GTermLedger led = ledger_of(f, f.branches);
    CHECK(max_abs(taylor_rdm_step(led, 0.0)) == 0.0);
    CHECK(std::abs(taylor_rdm_step(led, 0.3).trace()) <= 1e-10);

    // remainder after the second-order step shrinks by ~8x when tau halves
    std::mt19937_64 rng(63);
    const auto rm = testutil::random_model(12, rng);
    auto traj = testutil::exact_trajectory(rm, rng);
    const YOperatorSet ys = y_ops(rm);
    const double t0 = 0.5;
    const BranchSet bt = propagate_exact(traj.b0, rm.model, traj.total_spectral, t0);
    const G1Term g1 = g1_term(bt, rm.model, ys);
    const G2Term g2 = g2_term(bt, rm.model, ys, rm.env_spectral.eigenvalues);
    GTermLedger simple;
    simple.g1 = g1.total;
    simple.g2 = g2.total;
    auto remainder = [&](double tau) {
        return max_abs(traj.rho_at(t0 + tau) - traj.rho_at(t0) - taylor_rdm_step(simple, tau));
    };
    const double r1 = remainder(0.2);
    const double r2 = remainder(0.1);
    CHECK(r2 <= r1 / 7.0);

    // coupling = 0: the step reproduces the expanded phase factor exactly
    const auto rm0 = testutil::random_model(8, rng, 0.0);
    auto traj0 = testutil::exact_trajectory(rm0, rng);
    const G1Term h1 = g1_term(traj0.b0, rm0.model, y_ops(rm0));
    const G2Term h2 = g2_term(traj0.b0, rm0.model, y_ops(rm0), rm0.env_spectral.eigenvalues);
    GTermLedger led0;
    led0.g1 = h1.total;
    led0.g2 = h2.total;
    const double tau = 0.07;
    const Matrix step = taylor_rdm_step(led0, tau);
    const Matrix rho0 = rdm_from_branches(traj0.b0);
    for (Eigen::Index a = 0; a < 2; ++a) {
        for (Eigen::Index b = 0; b < 2; ++b) {
            const Complex iwt = imag_unit *
                                (rm0.model.system.energies(b) - rm0.model.system.energies(a)) *
                                tau;
            const Complex want = rho0(a, b) * (iwt + 0.5 * iwt * iwt);
            CHECK(std::abs(step(a, b) - want) <= 1e-12);
        }
    }
}

TEST_CASE("partial-sum exponent: random walk vs frozen accumulation") {
    std::mt19937_64 rng(64);
    std::normal_distribution<double> nd;

    double mean_xi = 0.0;
    const int sequences = 200;
    for (int s = 0; s < sequences; ++s) {
        std::vector<Complex> series(512);
        for (auto& x : series) x = Complex(nd(rng), nd(rng));
        mean_xi += fit_partial_sum_exponent(series).xi;
    }
    mean_xi /= sequences;
    CHECK(mean_xi == doctest::Approx(0.5).epsilon(0.2));

    std::vector<Complex> frozen(512, Complex(0.3, -0.2));
    const PartialSumFit f = fit_partial_sum_exponent(frozen);
    CHECK(f.xi == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(!f.clamped);

    CHECK_THROWS_AS(fit_partial_sum_exponent(std::vector<Complex>(4)), std::invalid_argument);
}

TEST_CASE("fluctuation report: vacuous at zero coupling, populated otherwise") {
    // zero coupling: all monitored G-entries vanish identically
    const SplitFixture f0 = make_split_fixture(0.0, 65);
    std::vector<GTermLedger> ledgers0;
    for (int m = 0; m < 16; ++m) ledgers0.push_back(ledger_of(f0, f0.branches));
    const FluctuationReport rep0 = fluctuation_report(ledgers0, 0.25);
    CHECK(rep0.vacuous);
    CHECK(rep0.sigma_max == 0.0);
    CHECK(rep0.kappa_max == 0.0);

    // interacting case: sigma and kappa populated, ratios recorded
    const SplitFixture f = make_split_fixture(0.45, 66);
    const SpectralData total =
        diagonalize(working_hamiltonian(f.model, f.env_spectral.eigenvalues, f.h_int_eig));
    std::vector<GTermLedger> ledgers;
    const double tau = 0.25;
    for (int m = 0; m < 24; ++m) {
        const BranchSet bm = propagate_exact(f.branches, f.model, total, 1.2 + tau * m);
        ledgers.push_back(ledger_of(f, bm));
    }
    const FluctuationReport rep = fluctuation_report(ledgers, tau);
    CHECK(!rep.vacuous);
    CHECK(rep.sigma_max > 0.0);
    CHECK(rep.kappa_max > 0.0);
    CHECK(rep.pairs.size() == 4);
    for (const auto& p : rep.pairs) {
        CHECK(p.xi >= 0.0);
        CHECK(p.xi <= 1.1);
        CHECK(p.drift_vs_slope_ratio >= 0.0);
    }
    CHECK_THROWS_AS(fluctuation_report({}, tau), std::invalid_argument);
}
