#pragma once

#include <cstddef>
#include <vector>

#include "vlbias/rng.hpp"

namespace vlbias {

/// Dense embedding vector. Arithmetic is float64 throughout; float32 only
/// appears at the file boundary.
using Vec = std::vector<double>;

double dot(const Vec& a, const Vec& b);  // DimError on size mismatch
double l2_norm(const Vec& a);
bool all_finite(const Vec& a);

/// Scales a to unit L2 norm. DegenerateError when the norm is ~0.
void normalize_in_place(Vec& a);
Vec normalized(Vec a);

/// y += alpha * x
void axpy(double alpha, const Vec& x, Vec& y);

/// Modified Gram-Schmidt with one re-orthogonalization pass. Vectors whose
/// residual norm falls below tol * original norm are dropped.
std::vector<Vec> orthonormalize(const std::vector<Vec>& vectors, double tol = 1e-10);

/// Draws `count` orthonormal directions in R^dim from Gaussian samples.
/// DomainError if count > dim.
std::vector<Vec> random_orthonormal(std::size_t count, std::size_t dim, Rng& rng);

}  // namespace vlbias
