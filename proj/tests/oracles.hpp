#pragma once

// Reference computations written independently of the library code paths
// they are compared against.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "hk/types.hpp"

namespace oracle {

using hk::CMat;
using hk::cplx;
using hk::CVec;
using hk::RMat;
using hk::RVec;

inline int permutation_sign(const std::vector<int>& p) {
  int sign = 1;
  std::vector<bool> seen(p.size(), false);
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (seen[i]) continue;
    std::size_t len = 0;
    for (std::size_t j = i; !seen[j]; j = static_cast<std::size_t>(p[j])) {
      seen[j] = true;
      ++len;
    }
    if (len % 2 == 0) sign = -sign;
  }
  return sign;
}

// (A^k ^ B^l)(e_0, ..., e_{n-1}) = 2^{-m} sum_pi sign(pi) prod_s F_s(e_pi(2s), e_pi(2s+1))
inline cplx wedge_by_permutations(const CMat& a, int k, const CMat& b, int l) {
  const int n = static_cast<int>(a.rows());
  std::vector<const CMat*> factors;
  for (int i = 0; i < k; ++i) factors.push_back(&a);
  for (int i = 0; i < l; ++i) factors.push_back(&b);
  std::vector<int> p(static_cast<std::size_t>(n));
  std::iota(p.begin(), p.end(), 0);
  cplx total = 0.0;
  do {
    cplx prod = static_cast<double>(permutation_sign(p));
    for (std::size_t s = 0; s < factors.size(); ++s) prod *= (*factors[s])(p[2 * s], p[2 * s + 1]);
    total += prod;
  } while (std::next_permutation(p.begin(), p.end()));
  return total / std::pow(2.0, static_cast<double>(factors.size()));
}

// Rank from the eigenvalues of M^H M.
inline int rank_by_gram(const CMat& m, double rel = 1e-6) {
  Eigen::SelfAdjointEigenSolver<CMat> es(m.adjoint() * m);
  const RVec ev = es.eigenvalues().cwiseAbs();
  const double top = ev.maxCoeff();
  int rank = 0;
  for (Eigen::Index i = 0; i < ev.size(); ++i)
    if (ev(i) > rel * rel * top) ++rank;
  return rank;
}

inline RMat random_real(int rows, int cols, std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  RMat m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = nd(rng);
  return m;
}

inline CMat random_complex(int rows, int cols, std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  CMat m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = cplx(nd(rng), nd(rng));
  return m;
}

inline CMat random_antisymmetric(int n, std::mt19937_64& rng) {
  CMat m = random_complex(n, n, rng);
  return m - m.transpose();
}

// Taub-NUT (one center at the origin) written out in components: with
// r = |x|, V = eps + m/r and A = m (x dy - y dx) / (r (r + z)),
//   g_tt = 1/V, g_ti = A_i / V, g_ij = A_i A_j / V + V delta_ij.
inline RMat taub_nut_metric(double eps, double mass, double x, double y, double z) {
  const double r = std::sqrt(x * x + y * y + z * z);
  const double v = eps + mass / r;
  const double ax = -mass * y / (r * (r + z));
  const double ay = mass * x / (r * (r + z));
  const double a[3] = {ax, ay, 0.0};
  RMat g(4, 4);
  g(0, 0) = 1.0 / v;
  for (int i = 0; i < 3; ++i) {
    g(0, i + 1) = g(i + 1, 0) = a[i] / v;
    for (int j = 0; j < 3; ++j) g(i + 1, j + 1) = a[i] * a[j] / v + (i == j ? v : 0.0);
  }
  return g;
}

// Coefficients of omega_+(a - z J1 conj a, b - z J1 conj b) in powers of z.
inline std::array<cplx, 3> o2_coefficients(const CMat& wp, const RMat& j1, const CVec& a, const CVec& b) {
  const CVec ja = j1.cast<cplx>() * a.conjugate();
  const CVec jb = j1.cast<cplx>() * b.conjugate();
  auto w = [&](const CVec& u, const CVec& v) { return (u.transpose() * wp * v)(0, 0); };
  return {w(a, b), -(w(ja, b) + w(a, jb)), w(ja, jb)};
}

}  // namespace oracle
