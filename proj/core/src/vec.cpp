#include "vlbias/vec.hpp"

#include <cmath>
#include <stdexcept>

#include "vlbias/errors.hpp"

namespace vlbias {

double dot(const Vec& a, const Vec& b) {
  if (a.size() != b.size()) {
    throw DimError("dot: dimension mismatch (" + std::to_string(a.size()) + " vs " +
                   std::to_string(b.size()) + ")");
  }
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double l2_norm(const Vec& a) {
  double s = 0.0;
  for (double v : a) s += v * v;
  return std::sqrt(s);
}

bool all_finite(const Vec& a) {
  for (double v : a) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

void normalize_in_place(Vec& a) {
  const double n = l2_norm(a);
  if (n < 1e-300) throw DegenerateError("normalize: zero vector");
  for (double& v : a) v /= n;
}

Vec normalized(Vec a) {
  normalize_in_place(a);
  return a;
}

void axpy(double alpha, const Vec& x, Vec& y) {
  if (x.size() != y.size()) throw DimError("axpy: dimension mismatch");
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

std::vector<Vec> orthonormalize(const std::vector<Vec>& vectors, double tol) {
  std::vector<Vec> basis;
  for (const Vec& v : vectors) {
    const double orig = l2_norm(v);
    if (orig < 1e-300) continue;
    Vec u = v;
    // two MGS passes keep the basis orthogonal to ~1e-15
    for (int pass = 0; pass < 2; ++pass) {
      for (const Vec& q : basis) {
        const double c = dot(u, q);
        axpy(-c, q, u);
      }
    }
    const double rem = l2_norm(u);
    if (rem <= tol * orig) continue;  // linearly dependent on the basis so far
    for (double& x : u) x /= rem;
    basis.push_back(std::move(u));
  }
  return basis;
}

std::vector<Vec> random_orthonormal(std::size_t count, std::size_t dim, Rng& rng) {
  if (count > dim) throw DomainError("random_orthonormal: count exceeds dimension");
  std::vector<Vec> basis;
  basis.reserve(count);
  while (basis.size() < count) {
    Vec v(dim);
    for (double& x : v) x = rng.next_gaussian();
    // orthogonalize against what we have; redraw on (absurdly unlikely) degeneracy
    for (int pass = 0; pass < 2; ++pass) {
      for (const Vec& q : basis) {
        const double c = dot(v, q);
        axpy(-c, q, v);
      }
    }
    const double n = l2_norm(v);
    if (n < 1e-8) continue;
    for (double& x : v) x /= n;
    basis.push_back(std::move(v));
  }
  return basis;
}

}  // namespace vlbias
