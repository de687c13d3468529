// Dense complex linear algebra shared across the toolkit: matrix aliases,
// Hermiticity checks, LAPACK-backed eigendecomposition, Kronecker products.
#pragma once

#include <complex>
#include <cstdint>
#include <string_view>

#include <Eigen/Dense>

namespace ebme {

using Complex = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using RealMatrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXcd;
using RealVector = Eigen::VectorXd;

constexpr Complex imag_unit{0.0, 1.0};

// Eigenpairs of a Hermitian operator, eigenvalues ascending, column j of
// eigenvectors belongs to eigenvalue j.
struct SpectralData {
    RealVector eigenvalues;
    Matrix eigenvectors;

    Eigen::Index dim() const { return eigenvalues.size(); }
    double spread() const {
        return dim() > 0 ? eigenvalues(dim() - 1) - eigenvalues(0) : 0.0;
    }
};

double max_abs(const Matrix& a);
double hermiticity_defect(const Matrix& a);
bool is_hermitian(const Matrix& a, double tol);
void require_hermitian(const Matrix& a, double tol, const char* what);

Matrix kron(const Matrix& a, const Matrix& b);

// a * b, routed through real arithmetic when both factors are numerically
// real (dense products at d_E ~ 2k are 4x cheaper that way).
Matrix product(const Matrix& a, const Matrix& b);

// Full eigendecomposition via LAPACK (dsyevd when the input is numerically
// real, zheevd otherwise). Throws std::invalid_argument for non-Hermitian
// input and std::runtime_error if LAPACK fails to converge.
SpectralData diagonalize(const Matrix& a);

// U exp(-i diag(lambda) t) U^dagger v
Vector evolve_with_spectrum(const SpectralData& s, const Vector& v, double t);

// (1/2) * sum of singular values of (a - b)
double trace_distance(const Matrix& a, const Matrix& b);

std::uint64_t fnv1a(std::string_view text);
std::uint64_t derive_seed(std::uint64_t base, std::string_view tag);

}  // namespace ebme
