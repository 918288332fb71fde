#pragma once

// Tangent-space linear algebra for complex 2-forms and operators.
//
// Conventions used throughout the library:
//   * a 2-form is an antisymmetric n x n matrix with Omega(v, w) = v^T Omega w;
//   * operators act on column vectors from the left;
//   * a covector is stored as a column sigma with sigma(w) = sum_j sigma_j w_j,
//     so the interior product is iota_v Omega = Omega^T v and the transpose
//     action (J' sigma)(v) = sigma(J v) is sigma^T J in row form.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "hk/types.hpp"

namespace hk {

class TwoForm {
 public:
  TwoForm() = default;

  // Rejects input whose symmetric part exceeds `tol` relative to its size,
  // then stores the exact antisymmetrization.
  explicit TwoForm(const CMat& m, double tol = 1e-10) {
    if (m.rows() != m.cols()) throw InputError("TwoForm: matrix must be square");
    if (m.rows() % 2 != 0) throw InputError("TwoForm: dimension must be even");
    const double scale = std::max(1.0, max_abs(m));
    if (max_abs(CMat(m + m.transpose())) > tol * scale)
      throw InputError("TwoForm: matrix is not antisymmetric");
    m_ = 0.5 * (m - m.transpose());
  }

  explicit TwoForm(const RMat& m, double tol = 1e-10) : TwoForm(CMat(m.cast<cplx>()), tol) {}

  static TwoForm zero(int n) { return TwoForm(CMat::Zero(n, n), Exact{}); }

  // e^i ^ e^j
  static TwoForm basis(int n, int i, int j) {
    CMat m = CMat::Zero(n, n);
    m(i, j) = 1.0;
    m(j, i) = -1.0;
    return TwoForm(m, Exact{});
  }

  int dim() const { return static_cast<int>(m_.rows()); }
  const CMat& matrix() const { return m_; }
  cplx operator()(const CVec& v, const CVec& w) const { return (v.transpose() * m_ * w)(0, 0); }

  TwoForm conj() const { return TwoForm(CMat(m_.conjugate()), Exact{}); }
  TwoForm real_part() const { return TwoForm(CMat(m_.real().cast<cplx>()), Exact{}); }
  TwoForm imag_part() const { return TwoForm(CMat(m_.imag().cast<cplx>()), Exact{}); }
  RMat real_matrix() const { return m_.real(); }
  bool is_real(double tol) const { return max_abs(CMat(m_ - m_.conjugate())) <= tol; }

  // A^T Omega A, i.e. (v, w) -> Omega(A v, A w).
  TwoForm pullback(const CMat& a) const { return TwoForm(CMat(a.transpose() * m_ * a)); }

  TwoForm operator+(const TwoForm& o) const { return TwoForm(CMat(m_ + o.m_), Exact{}); }
  TwoForm operator-(const TwoForm& o) const { return TwoForm(CMat(m_ - o.m_), Exact{}); }
  TwoForm operator-() const { return TwoForm(CMat(-m_), Exact{}); }
  friend TwoForm operator*(cplx s, const TwoForm& f) { return TwoForm(CMat(s * f.m_), Exact{}); }
  friend TwoForm operator*(double s, const TwoForm& f) { return TwoForm(CMat(s * f.m_), Exact{}); }

 private:
  struct Exact {};
  // Sums, negations and scalings of antisymmetric matrices stay exactly
  // antisymmetric in floating point, so they skip the check.
  TwoForm(CMat m, Exact) : m_(std::move(m)) {}

  CMat m_;
};

class LinOp {
 public:
  LinOp() = default;
  explicit LinOp(CMat m) : m_(std::move(m)), real_(false) {}
  explicit LinOp(const RMat& m) : m_(m.cast<cplx>()), real_(true) {}

  static LinOp identity(int n) { return LinOp(RMat(RMat::Identity(n, n))); }

  // Promotes a numerically real operator to a real one; throws if the
  // imaginary part exceeds tol.
  static LinOp make_real(const CMat& m, double tol) {
    const double scale = std::max(1.0, max_abs(m));
    if (max_abs(RMat(m.imag())) > tol * scale) throw InconsistentStructureError("operator is not real");
    return LinOp(RMat(m.real()));
  }

  int dim() const { return static_cast<int>(m_.rows()); }
  bool is_real() const { return real_; }
  const CMat& matrix() const { return m_; }
  RMat real() const { return m_.real(); }

 private:
  CMat m_;
  bool real_ = false;
};

struct Subspace {
  int ambient = 0;
  CMat basis;  // ambient x dim, orthonormal columns

  int dim() const { return static_cast<int>(basis.cols()); }
};

struct Signature {
  int positive = 0;
  int negative = 0;
  int zero = 0;

  friend bool operator==(const Signature&, const Signature&) = default;
};

namespace detail {

template <class F>
void for_each_matching(std::vector<int>& remaining, std::vector<std::pair<int, int>>& pairs, int sign, F&& f) {
  if (remaining.empty()) {
    f(pairs, sign);
    return;
  }
  const int first = remaining.front();
  for (std::size_t p = 1; p < remaining.size(); ++p) {
    const int partner = remaining[p];
    std::vector<int> rest;
    rest.reserve(remaining.size() - 2);
    for (std::size_t q = 1; q < remaining.size(); ++q)
      if (q != p) rest.push_back(remaining[q]);
    pairs.emplace_back(first, partner);
    for_each_matching(rest, pairs, (p % 2 == 1) ? sign : -sign, f);
    pairs.pop_back();
  }
}

inline double factorial(int k) {
  double f = 1.0;
  for (int i = 2; i <= k; ++i) f *= i;
  return f;
}

// Unit-modulus phase making the first significant component real positive.
inline cplx leading_phase(const CVec& v) {
  const double cutoff = 1e-12 * std::max(max_abs(v), 1e-300);
  for (Eigen::Index i = 0; i < v.size(); ++i)
    if (std::abs(v(i)) > cutoff) return std::conj(v(i)) / std::abs(v(i));
  return 1.0;
}

inline bool lex_less(const CVec& a, const CVec& b) {
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    if (a(i).real() != b(i).real()) return a(i).real() < b(i).real();
    if (a(i).imag() != b(i).imag()) return a(i).imag() < b(i).imag();
  }
  return false;
}

}  // namespace detail

// Coefficient of A^k ^ B^l against e^1 ^ ... ^ e^n, as a signed sum over
// perfect matchings of {0..n-1}. For each matching the k pairs carrying A are
// chosen in all possible ways; k! l! accounts for the ordering of factors.
inline cplx wedge_pairing(const TwoForm& a, int k, const TwoForm& b, int l) {
  const int n = a.dim();
  if (b.dim() != n) throw InputError("wedge_pairing: dimension mismatch");
  if (k < 0 || l < 0 || 2 * (k + l) != n) throw InputError("wedge_pairing: degree must equal the dimension");
  if (n > 12) throw InputError("wedge_pairing: exact evaluation supports n <= 12");
  if (n == 0) return 1.0;

  const CMat& am = a.matrix();
  const CMat& bm = b.matrix();
  std::vector<int> all(n);
  for (int i = 0; i < n; ++i) all[i] = i;
  std::vector<std::pair<int, int>> pairs;
  cplx total = 0.0;
  std::vector<cplx> coeff(static_cast<std::size_t>(k + l + 1));
  detail::for_each_matching(all, pairs, 1, [&](const std::vector<std::pair<int, int>>& ps, int sign) {
    std::fill(coeff.begin(), coeff.end(), cplx{0.0});
    coeff[0] = 1.0;
    int used = 0;
    for (auto [i, j] : ps) {
      ++used;
      for (int t = std::min(used, k); t >= 0; --t) {
        cplx next = coeff[t] * bm(i, j);
        if (t > 0) next += coeff[t - 1] * am(i, j);
        coeff[t] = next;
      }
    }
    total += static_cast<double>(sign) * coeff[k];
  });
  return detail::factorial(k) * detail::factorial(l) * total;
}

inline CVec interior(const TwoForm& omega, const CVec& v) {
  if (v.size() != omega.dim()) throw InputError("interior: dimension mismatch");
  return omega.matrix().transpose() * v;
}

// Orthonormal basis of the right-singular vectors with singular value at most
// tol * sigma_max, sorted by descending singular value, ties broken
// lexicographically after fixing each vector's phase.
inline Subspace nullspace(const CMat& m, double tol = 1e-8) {
  if (!(tol > 0)) throw InputError("nullspace: tolerance must be positive");
  const int n = static_cast<int>(m.cols());
  Subspace out{static_cast<int>(m.cols()), CMat(n, 0)};
  if (n == 0) return out;
  Eigen::JacobiSVD<CMat> svd(m, Eigen::ComputeFullV);
  const RVec& s = svd.singularValues();
  const double smax = s.size() ? s(0) : 0.0;
  std::vector<std::pair<double, CVec>> picked;
  for (int i = 0; i < n; ++i) {
    const double si = i < s.size() ? s(i) : 0.0;
    if (si <= tol * smax) {
      CVec v = svd.matrixV().col(i);
      v *= detail::leading_phase(v);
      picked.emplace_back(si, std::move(v));
    }
  }
  std::stable_sort(picked.begin(), picked.end(), [](const auto& x, const auto& y) { return x.first > y.first; });
  const double tie = 1e-13 * std::max(smax, 1e-300);
  for (std::size_t g = 0; g < picked.size();) {
    std::size_t e = g + 1;
    while (e < picked.size() && picked[g].first - picked[e].first <= tie) ++e;
    std::sort(picked.begin() + static_cast<long>(g), picked.begin() + static_cast<long>(e),
              [](const auto& x, const auto& y) { return detail::lex_less(x.second, y.second); });
    g = e;
  }
  out.basis.resize(n, static_cast<Eigen::Index>(picked.size()));
  for (std::size_t i = 0; i < picked.size(); ++i) out.basis.col(static_cast<Eigen::Index>(i)) = picked[i].second;
  return out;
}

inline Subspace nullspace(const TwoForm& omega, double tol = 1e-8) { return nullspace(omega.matrix(), tol); }

inline double smallest_singular_value(const CMat& m) {
  if (m.size() == 0) return 0.0;
  Eigen::JacobiSVD<CMat> svd(m);
  return svd.singularValues()(svd.singularValues().size() - 1);
}

// Unique v with iota_v Omega = sigma.
inline CVec solve_interior(const TwoForm& omega, const CVec& sigma, double tol = 1e-8) {
  if (sigma.size() != omega.dim()) throw InputError("solve_interior: dimension mismatch");
  const CMat mt = omega.matrix().transpose();
  Eigen::JacobiSVD<CMat> svd(mt, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const RVec& s = svd.singularValues();
  const double smin = s(s.size() - 1);
  if (s(0) == 0.0 || smin <= tol * s(0)) throw DegeneracyError("solve_interior: 2-form is degenerate", smin);
  CVec v = svd.solve(sigma);
  // one step of iterative refinement keeps the residual at roundoff level
  v += svd.solve(CVec(sigma - mt * v));
  return v;
}

// Projectors for T = A (+) B: P_A + P_B = 1, range P_A = A, range P_B = B.
inline std::pair<LinOp, LinOp> complement_projectors(const Subspace& a, const Subspace& b) {
  const int n = a.ambient;
  if (b.ambient != n) throw InputError("complement_projectors: ambient dimension mismatch");
  if (a.dim() + b.dim() != n) throw NotDirectSumError("complement_projectors: dimensions do not add up");
  CMat m(n, n);
  m << a.basis, b.basis;
  Eigen::JacobiSVD<CMat> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const RVec& s = svd.singularValues();
  const double smin = s(n - 1);
  if (smin == 0.0 || s(0) / smin > 1e12) throw NotDirectSumError("complement_projectors: subspaces are not complementary");
  const CMat inv = svd.solve(CMat(CMat::Identity(n, n)));
  CMat pa = a.basis * inv.topRows(a.dim());
  CMat pb = b.basis * inv.bottomRows(b.dim());
  return {LinOp(std::move(pa)), LinOp(std::move(pb))};
}

inline Signature signature_of(const RMat& g, double tol = 1e-9) {
  if (g.rows() != g.cols()) throw InputError("signature_of: matrix must be square");
  const double scale = std::max(1.0, max_abs(g));
  if (max_abs(RMat(g - g.transpose())) > tol * scale) throw InputError("signature_of: matrix is not symmetric");
  Eigen::SelfAdjointEigenSolver<RMat> es(0.5 * (g + g.transpose()), Eigen::EigenvaluesOnly);
  const RVec& ev = es.eigenvalues();
  const double norm = ev.size() ? ev.cwiseAbs().maxCoeff() : 0.0;
  Signature sig;
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (ev(i) > tol * norm)
      ++sig.positive;
    else if (ev(i) < -tol * norm)
      ++sig.negative;
    else
      ++sig.zero;
  }
  return sig;
}

inline Signature signature_of(const LinOp& g, double tol = 1e-9) {
  if (!g.is_real()) throw InputError("signature_of: operator is not real");
  return signature_of(g.real(), tol);
}

}  // namespace hk
