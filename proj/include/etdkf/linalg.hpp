#pragma once

#include "etdkf/types.hpp"

#include <vector>

namespace etdkf {

double spectral_radius(const Matrix& M);

/// Eigenvalues sorted by (real, imag).
ComplexVector sorted_eigenvalues(const Matrix& M);

Matrix symmetrize(const Matrix& M);

double min_sym_eigenvalue(const Matrix& M);

/// Symmetric PSD square root via eigendecomposition; tiny negative eigenvalues clipped to 0.
Matrix sym_sqrt(const Matrix& M);
Matrix sym_inv_sqrt(const Matrix& M);

/// Solves P = F P Fᵀ + W for ρ(F) < 1 by squaring.
Matrix solve_stein(const Matrix& F, const Matrix& W);

int numerical_rank(const Matrix& M, double relTol);

bool is_observable(const Matrix& A, const Matrix& C, double relTol = 1e-8);

Matrix kron(const Matrix& X, const Matrix& Y);

/// Largest pairwise distance after sorting both multisets by (real, imag).
double multiset_distance(const ComplexVector& a, const ComplexVector& b);

double mahler_measure(const ComplexVector& eigs);

void require_square(const Matrix& M, const char* name);

}  // namespace etdkf
