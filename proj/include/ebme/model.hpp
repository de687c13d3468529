// Model construction: system spec, environment builders (Ising chain, GOE,
// explicit matrices), total-Hamiltonian assembly and renormalization.
#pragma once

#include <cstdint>

#include "ebme/linalg.hpp"

namespace ebme {

// Small system S, described in its current energy eigenbasis. `basis` maps the
// current eigenbasis back to the original (physical) basis; it starts as the
// identity and picks up a rotation when the model is renormalized.
struct SystemSpec {
    RealVector energies;  // e_S, ascending
    Matrix h_is;          // system factor of the interaction, current eigenbasis
    Matrix basis;         // U_S: current eigenbasis -> physical basis

    Eigen::Index dim() const { return energies.size(); }
};

SystemSpec make_system(const RealVector& energies, const Matrix& h_is);
void validate_system(const SystemSpec& s);

enum class EnvironmentKind { SpinChain, Goe, ExplicitMatrix };

struct SpinChainParams {
    double j = 1.0;
    double g = 0.9045;
    double h = 0.8090;
    double edge = 0.0;       // extra sigma_z field on site 0, breaks reflection
    Eigen::Index site = -1;  // H^IE support site; -1 selects the center
};

struct GoeParams {
    double variance = -1.0;  // off-diagonal element variance; -1 selects 1/d_E
};

struct EnvironmentSpec {
    EnvironmentKind kind = EnvironmentKind::Goe;
    Eigen::Index dim = 0;
    SpinChainParams chain;
    GoeParams goe;
    std::uint64_t seed = 0;
};

struct EnvironmentOperators {
    Matrix h_env;      // H^E
    Matrix h_int_env;  // H^IE
};

// Ising chain with transverse and longitudinal fields, open boundaries;
// H^IE is a single-site sigma_z.
EnvironmentOperators build_spin_chain_environment(const EnvironmentSpec& spec);

// Independent real-symmetric GOE matrices for H^E and H^IE: off-diagonal
// variance sigma^2, diagonal variance 2 sigma^2, deterministic in the seed.
EnvironmentOperators build_goe_environment(const EnvironmentSpec& spec);

// Caller-provided matrices, validated for shape and Hermiticity.
EnvironmentOperators build_explicit_environment(const Matrix& h_env, const Matrix& h_int_env);

struct TotalModel {
    SystemSpec system;
    Matrix h_env;
    Matrix h_int_env;
    double coupling = 1.0;
    bool renormalized = false;
    double h0_ie = 0.0;  // diagonal-function value subtracted from H^IE

    Eigen::Index system_dim() const { return system.dim(); }
    Eigen::Index env_dim() const { return h_env.rows(); }
    Eigen::Index total_dim() const { return system_dim() * env_dim(); }
    // System factor of the interaction with the coupling scalar folded in.
    Matrix h_is_eff() const { return coupling * system.h_is; }
};

TotalModel make_total_model(const SystemSpec& system, const EnvironmentOperators& env,
                            double coupling);
void validate_total_model(const TotalModel& m);

// H = H^S (x) I + I (x) H^E + coupling * H^IS (x) H^IE in the physical product
// basis, ordering (alpha, i) with alpha the slow index. Renormalization leaves
// this matrix invariant.
Matrix assemble_total_hamiltonian(const TotalModel& m);

// Shift H^IE by -h0 and absorb coupling*h0*H^IS into the system Hamiltonian,
// re-diagonalizing it so e_S and h_is refer to the renormalized eigenbasis.
TotalModel renormalize(const TotalModel& m, double h0);

}  // namespace ebme
