#pragma once

// Per-point constructions: the zeta-family varpi(zeta) of holomorphic
// symplectic forms, the complex structures it induces, kappa, the
// quaternionic triple and metric it determines, rotation frames, and real
// twistor-line sections.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "hk/form_algebra.hpp"
#include "hk/twistor_param.hpp"

namespace hk {

struct QuaternionicTriple {
  RMat j1, j2, j3;

  const RMat& operator[](int alpha) const { return alpha == 0 ? j1 : (alpha == 1 ? j2 : j3); }
  int dim() const { return static_cast<int>(j1.rows()); }
};

struct SymplecticTriple {
  TwoForm w1, w2, w3;

  const TwoForm& operator[](int alpha) const { return alpha == 0 ? w1 : (alpha == 1 ? w2 : w3); }
};

// (omega_plus, omega_3); omega_minus is the conjugate of omega_plus.
struct HoloSympFamily {
  TwoForm omega_plus;
  TwoForm omega_3;

  int dim() const { return omega_plus.dim(); }
  int r() const { return dim() / 4; }
  TwoForm omega_minus() const { return omega_plus.conj(); }
};

inline HoloSympFamily make_family(const TwoForm& omega_plus, const TwoForm& omega_3, double tol = 1e-12) {
  if (omega_plus.dim() != omega_3.dim()) throw InputError("family: omega_plus and omega_3 differ in dimension");
  if (omega_plus.dim() % 4 != 0 || omega_plus.dim() == 0) throw InputError("family: dimension must be a positive multiple of 4");
  if (!omega_3.is_real(tol * std::max(1.0, max_abs(omega_3.matrix())))) throw InputError("family: omega_3 must be real");
  return {omega_plus, omega_3.real_part()};
}

struct PointStructure {
  QuaternionicTriple triple;
  RMat metric;
  Signature signature;
  SymplecticTriple sympl;
};

struct RotationFrame {
  RMat K, I;
  double theta = 0.0;  // in [0, pi)
  // K, I, J^(zeta) as rows of an SO(3) matrix acting on (J1, J2, J3)
  std::array<std::array<double, 3>, 3> rotation{};
  double quaternion_residual = 0.0;
  double row_residual = 0.0;       // third row against c(zeta)
  double rescaled_residual = 0.0;  // |zeta|/(1+|zeta|^2) varpi = (omega_K + i omega_I)/2
  double holo_g_residual = 0.0;    // |zeta|/(1+|zeta|^2) varpi(v, K xbar) = g(v, xbar)
};

struct Tolerances {
  double rank = 1e-8;   // relative singular-value cutoff
  double check = 1e-9;  // identity residuals
};

// ---------------------------------------------------------------------------
// Quaternion algebra

inline double quaternion_residual(const RMat& a, const RMat& b, const RMat& c) {
  const std::array<const RMat*, 3> j{&a, &b, &c};
  const int n = static_cast<int>(a.rows());
  const RMat id = RMat::Identity(n, n);
  double worst = 0.0;
  for (int x = 0; x < 3; ++x) {
    for (int y = 0; y < 3; ++y) {
      RMat expected = RMat::Zero(n, n);
      if (x == y) {
        expected = -id;
      } else {
        const int z = 3 - x - y;
        const double eps = ((y - x + 3) % 3 == 1) ? 1.0 : -1.0;
        expected = eps * *j[z];
      }
      worst = std::max(worst, max_abs(RMat(*j[x] * *j[y] - expected)));
    }
  }
  return worst;
}

inline double quaternion_residual(const QuaternionicTriple& t) { return quaternion_residual(t.j1, t.j2, t.j3); }

// J^(zeta) = sum_a c_a(zeta) J_a
inline RMat j_of_zeta(const QuaternionicTriple& t, const TwistorParam& z) {
  const Vec3 c = stereographic(z);
  return c[0] * t.j1 + c[1] * t.j2 + c[2] * t.j3;
}

// ---------------------------------------------------------------------------
// Holomorphic symplectic forms on a real vector space

struct HolsympReport {
  bool pass = false;
  // Omega^r ^ conj(Omega)^r against the volume element; evaluated while the
  // exact matching sum is affordable (dimension at most 12)
  std::optional<cplx> wedge;
  int kernel_dim = 0;
  double direct_sum_sv = 0.0;  // smallest singular value of [ker Omega, conj ker Omega]
};

inline HolsympReport holosymp_check(const TwoForm& omega, int r, double tol = 1e-8, double rank_tol = 1e-8) {
  if (omega.dim() != 4 * r) throw InputError("holosymp_check: dimension must be 4r");
  const int n = omega.dim();
  HolsympReport rep;
  const Subspace k = nullspace(omega, rank_tol);
  rep.kernel_dim = k.dim();
  if (rep.kernel_dim == n / 2) {
    CMat both(n, n);
    both << k.basis, k.basis.conjugate();
    rep.direct_sum_sv = smallest_singular_value(both);
  }
  bool ok = rep.kernel_dim == n / 2 && rep.direct_sum_sv > rank_tol;
  if (n <= 12) {
    rep.wedge = wedge_pairing(omega, r, omega.conj(), r);
    const double scale = std::pow(max_abs(omega.matrix()), 2 * r);
    ok = ok && scale > 0.0 && std::abs(*rep.wedge) > tol * scale;
  }
  rep.pass = ok;
  return rep;
}

// ker Omega is the -i eigenspace, ker conj(Omega) the +i eigenspace.
inline RMat complex_structure_from_holsymp(const TwoForm& omega, double rank_tol = 1e-8, double tol = 1e-10) {
  const Subspace k = nullspace(omega, rank_tol);
  const Subspace kb = nullspace(omega.conj(), rank_tol);
  auto [p_k, p_kb] = complement_projectors(k, kb);
  const CMat j = I * p_kb.matrix() - I * p_k.matrix();
  const RMat jr = LinOp::make_real(j, tol).real();
  const int n = omega.dim();
  if (max_abs(RMat(jr * jr + RMat::Identity(n, n))) > tol * std::max(1.0, max_abs(jr) * max_abs(jr)))
    throw InconsistentStructureError("complex_structure_from_holsymp: J^2 != -1");
  return jr;
}

// ---------------------------------------------------------------------------
// The family varpi(zeta)

// -(i/2 zeta) omega_+ + omega_3 - (i/2) zeta omega_-, with the line-bundle
// fibre representatives omega_+ at 0 and omega_- at infinity.
inline TwoForm varpi(const HoloSympFamily& f, const TwistorParam& z) {
  if (z.is_zero()) return f.omega_plus;
  if (z.is_infinite()) return f.omega_minus();
  const cplx w = z.value();
  return (-I / (2.0 * w)) * f.omega_plus + f.omega_3 + (-I * w / 2.0) * f.omega_minus();
}

// max | varpi(zeta) - (-i/2 zeta) (1 - zeta J1)^T omega_+ (1 - zeta J1) |
inline double varpi_pullback_residual(const HoloSympFamily& f, const RMat& j1, const TwistorParam& z) {
  if (!z.is_finite_nonzero()) throw InputError("varpi_pullback_residual: zeta must be finite and nonzero");
  const cplx w = z.value();
  const int n = f.dim();
  const CMat m = CMat::Identity(n, n) - w * j1.cast<cplx>();
  const TwoForm pulled = (-I / (2.0 * w)) * f.omega_plus.pullback(m);
  return max_abs(CMat(varpi(f, z).matrix() - pulled.matrix()));
}

inline double varpi_reality_residual(const HoloSympFamily& f, const TwistorParam& z) {
  return max_abs(CMat(varpi(f, antipode(z)).conj().matrix() - varpi(f, z).matrix()));
}

inline double antipodal_j_residual(const QuaternionicTriple& t, const TwistorParam& z) {
  return max_abs(RMat(j_of_zeta(t, antipode(z)) + j_of_zeta(t, z)));
}

inline int kernel_dimension(const HoloSympFamily& f, const TwistorParam& z, double rank_tol = 1e-8) {
  return nullspace(varpi(f, z), rank_tol).dim();
}

// The map 1 + zeta J1 and its inverse on T^(0,1) at zeta = 0. Away from
// zeta = +-i the inverse is (1 - zeta J1)/(1 + zeta^2) on the whole space;
// at +-i it is (1 + i zeta J2)/(1 - zeta^2), valid on T^(0,1).
inline std::pair<CMat, CMat> frame_map(const QuaternionicTriple& t, cplx z) {
  const int n = t.dim();
  const CMat id = CMat::Identity(n, n);
  const CMat j1 = t.j1.cast<cplx>();
  CMat fwd = id + z * j1;
  CMat inv;
  if (std::abs(1.0 + z * z) > 1e-12) {
    inv = (id - z * j1) / (1.0 + z * z);
  } else {
    inv = (id + I * z * t.j2.cast<cplx>()) / (1.0 - z * z);
  }
  return {std::move(fwd), std::move(inv)};
}

// ---------------------------------------------------------------------------
// kappa

struct KappaSolution {
  CMat t01;              // basis of T^(0,1) at zeta = 0 (ker omega_+)
  CMat t10;              // basis of T^(1,0) at zeta = 0 (ker omega_-)
  CMat image;            // kappa(zeta) applied to the t01 basis
  double solve_residual = 0.0;
  double companion_residual = 0.0;
};

namespace detail {

// Solves iota_{kappa(zeta) v} omega_+ = -2 i zeta iota_v omega_3 for every
// basis vector v of T^(0,1), with kappa(zeta) v constrained to T^(1,0).
inline KappaSolution solve_kappa(const HoloSympFamily& f, cplx zeta, const Tolerances& tol) {
  KappaSolution sol;
  sol.t01 = nullspace(f.omega_plus, tol.rank).basis;
  sol.t10 = nullspace(f.omega_minus(), tol.rank).basis;
  const int n = f.dim();
  if (sol.t01.cols() != n / 2 || sol.t10.cols() != n / 2)
    throw DegeneracyError("kappa: omega_+ does not split the complexified tangent space", 0.0);

  const CMat& wp = f.omega_plus.matrix();
  const CMat& w3 = f.omega_3.matrix();
  const double scale3 = std::max(max_abs(w3), 1e-300);

  const double s3 = smallest_singular_value(CMat(w3 * sol.t01));
  if (s3 <= tol.rank * scale3) throw DegeneracyError("kappa: omega_3 is degenerate on T^(0,1)", s3);

  // iota_x Omega = Omega^T x = -Omega x, so the equation reads
  // omega_+ (kappa v) = -2 i zeta omega_3 v.
  const CMat a = wp * sol.t10;
  Eigen::JacobiSVD<CMat> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const RVec& s = svd.singularValues();
  if (s(s.size() - 1) <= tol.rank * std::max(s(0), 1e-300))
    throw DegeneracyError("kappa: omega_+ is degenerate on T^(1,0)", s(s.size() - 1));
  const CMat rhs = (-2.0 * I * zeta) * w3 * sol.t01;
  const CMat coeff = svd.solve(rhs);
  sol.image = sol.t10 * coeff;

  const double zscale = std::max(1.0, std::abs(zeta)) * std::max(1.0, scale3);
  sol.solve_residual = max_abs(CMat(wp * sol.image - rhs)) / zscale;
  if (sol.solve_residual > tol.check)
    throw InconsistentFamilyError("kappa: omega_3 has a (0,2) part, the defining equation has no solution");

  // companion identity iota_{kappa v} omega_3 = (i/2) zeta iota_v omega_-
  const CMat lhs = w3 * sol.image;
  const CMat rhs2 = (I * zeta / 2.0) * f.omega_minus().matrix() * sol.t01;
  sol.companion_residual = max_abs(CMat(lhs - rhs2)) / std::max(1.0, std::abs(zeta));
  if (sol.companion_residual > tol.check)
    throw InconsistentFamilyError("kappa: companion identity iota_{kappa v} omega_3 = (i/2) iota_v omega_- fails");
  return sol;
}

}  // namespace detail

struct KappaResult {
  RMat kappa;
  double solve_residual = 0.0;
  double companion_residual = 0.0;
};

// kappa on T^(0,1), extended to a real operator by kappa(conj v) = conj(kappa v).
inline KappaResult kappa_with_diagnostics(const HoloSympFamily& f, const Tolerances& tol = {}) {
  const KappaSolution sol = detail::solve_kappa(f, 1.0, tol);
  const int n = f.dim();
  CMat src(n, n), dst(n, n);
  src << sol.t01, sol.t01.conjugate();
  dst << sol.image, sol.image.conjugate();
  const CMat k = dst * src.fullPivLu().inverse();
  KappaResult out;
  out.kappa = LinOp::make_real(k, 1e-10).real();
  out.solve_residual = sol.solve_residual;
  out.companion_residual = sol.companion_residual;
  return out;
}

inline RMat kappa_from_family(const HoloSympFamily& f, const Tolerances& tol = {}) {
  return kappa_with_diagnostics(f, tol).kappa;
}

// max over samples of |kappa(zeta) - zeta kappa(1)| on T^(0,1).
inline double kappa_linearity_residual(const HoloSympFamily& f, std::span<const cplx> zetas, const Tolerances& tol = {}) {
  const KappaSolution one = detail::solve_kappa(f, 1.0, tol);
  double worst = 0.0;
  for (cplx z : zetas) {
    if (z == cplx(0.0)) throw InputError("kappa_linearity_residual: samples must be nonzero");
    const KappaSolution sz = detail::solve_kappa(f, z, tol);
    worst = std::max(worst, max_abs(CMat(sz.image - z * one.image)));
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Reconstruction of the pseudo-hyper-Kaehler structure

// J3 = J^(0) from omega_+, J1 = kappa, J2 = J3 J1.
inline QuaternionicTriple triple_from_family(const HoloSympFamily& f, const Tolerances& tol = {}) {
  QuaternionicTriple t;
  t.j3 = complex_structure_from_holsymp(f.omega_plus, tol.rank);
  t.j1 = kappa_from_family(f, tol);
  t.j2 = t.j3 * t.j1;
  const double q = quaternion_residual(t);
  if (q > tol.check)
    throw InconsistentFamilyError("triple_from_family: quaternion relations fail (residual " + std::to_string(q) + ")");
  return t;
}

struct Omega3TypeReport {
  double type_residual = 0.0;               // |omega_3(J3., J3.) - omega_3|
  std::optional<cplx> wedge_plus;           // omega_+^r ^ omega_3, top degree only when r = 1
  std::optional<cplx> wedge_minus;          // omega_-^r ^ omega_3
  double smallest_singular_value = 0.0;
};

inline Omega3TypeReport omega3_type_check(const HoloSympFamily& f, const RMat& j3) {
  Omega3TypeReport rep;
  rep.type_residual = max_abs(CMat(f.omega_3.pullback(j3.cast<cplx>()).matrix() - f.omega_3.matrix()));
  if (f.r() == 1) {
    rep.wedge_plus = wedge_pairing(f.omega_plus, 1, f.omega_3, 1);
    rep.wedge_minus = wedge_pairing(f.omega_minus(), 1, f.omega_3, 1);
  }
  rep.smallest_singular_value = smallest_singular_value(f.omega_3.matrix());
  return rep;
}

struct MetricDiagnostics {
  double quaternion = 0.0;
  double compatibility = 0.0;   // all three forms, all three alpha
  double identity_chain = 0.0;  // g via Im varpi(-1), Im varpi(-i), Re varpi(-1)
  double plus_presentation = 0.0;  // g = Re omega_+(., J1 .) = Im omega_+(., J2 .)
  double metric_reality = 0.0;  // imaginary and antisymmetric parts of g
  double recovery = 0.0;        // J3 = -w1^-1 w2, g = -w3 w1^-1 w2
  double kappa_square = 0.0;    // kappa^2 + 1
  double kappa_companion = 0.0;
  double cross_check = 0.0;     // J1, J2 recomputed from ker varpi(i), ker varpi(-1)
  double omega3_type = 0.0;

  double worst() const {
    return std::max({quaternion, compatibility, identity_chain, plus_presentation, metric_reality, recovery, kappa_square,
                     kappa_companion, cross_check, omega3_type});
  }
};

struct Reconstruction {
  PointStructure structure;
  MetricDiagnostics diag;
};

namespace detail {

inline double compatibility_residual(const QuaternionicTriple& t, const SymplecticTriple& s, const RMat& g) {
  double worst = 0.0;
  const RMat ginv = g.fullPivLu().inverse();
  for (int a = 0; a < 3; ++a) {
    const RMat w = s[a].real_matrix();
    const RMat& j = t[a];
    worst = std::max(worst, max_abs(RMat(w - j.transpose() * g)));  // w(v, x) = g(J v, x)
    worst = std::max(worst, max_abs(RMat(g - w * j)));              // g(v, x) = w(v, J x)
    worst = std::max(worst, max_abs(RMat(j + ginv * w)));           // J = -g^-1 w
  }
  return worst;
}

}  // namespace detail

// Builds (J1, J2, J3, g) at a point and evaluates every identity residual.
// Throws only when a construction step itself is impossible.
inline Reconstruction reconstruct_point(const HoloSympFamily& f, const Tolerances& tol = {}) {
  Reconstruction out;
  const int n = f.dim();
  QuaternionicTriple& t = out.structure.triple;
  MetricDiagnostics& d = out.diag;

  t.j3 = complex_structure_from_holsymp(f.omega_plus, tol.rank);
  const KappaResult k = kappa_with_diagnostics(f, tol);
  t.j1 = k.kappa;
  t.j2 = t.j3 * t.j1;
  d.quaternion = quaternion_residual(t);
  d.kappa_square = max_abs(RMat(t.j1 * t.j1 + RMat::Identity(n, n)));
  d.kappa_companion = k.companion_residual;

  const CMat& wp = f.omega_plus.matrix();
  const CMat j1c = t.j1.cast<cplx>();
  // g(v, w) = (omega_+(v, J1 w) - omega_+(J1 v, w)) / 2
  const CMat gc = 0.5 * (wp * j1c - j1c.transpose() * wp);
  const RMat g = gc.real();
  d.metric_reality = std::max(max_abs(RMat(gc.imag())), max_abs(RMat(g - g.transpose())));

  SymplecticTriple& s = out.structure.sympl;
  s.w1 = f.omega_plus.real_part();
  s.w2 = f.omega_plus.imag_part();
  s.w3 = f.omega_3;
  out.structure.metric = 0.5 * (g + g.transpose());
  const RMat& gs = out.structure.metric;

  d.compatibility = detail::compatibility_residual(t, s, gs);

  const RMat via1 = varpi(f, cplx(-1.0)).imag_part().real_matrix() * t.j1;
  const RMat via2 = varpi(f, cplx(0.0, -1.0)).imag_part().real_matrix() * t.j2;
  const RMat via3 = varpi(f, cplx(-1.0)).real_part().real_matrix() * t.j3;
  d.identity_chain = std::max({max_abs(RMat(via1 - gs)), max_abs(RMat(via2 - gs)), max_abs(RMat(via3 - gs)),
                               max_abs(RMat(via1 - via2)), max_abs(RMat(via2 - via3))});
  d.plus_presentation = std::max(max_abs(RMat(s.w1.real_matrix() * t.j1 - gs)), max_abs(RMat(s.w2.real_matrix() * t.j2 - gs)));

  const Eigen::FullPivLU<RMat> w1lu(s.w1.real_matrix());
  const RMat w1inv_w2 = w1lu.solve(s.w2.real_matrix());
  d.recovery = std::max(max_abs(RMat(t.j3 + w1inv_w2)), max_abs(RMat(gs + s.w3.real_matrix() * w1inv_w2)));

  const RMat j1x = complex_structure_from_holsymp(varpi(f, cplx(0.0, 1.0)), tol.rank);
  const RMat j2x = complex_structure_from_holsymp(varpi(f, cplx(-1.0)), tol.rank);
  d.cross_check = std::max(max_abs(RMat(j1x - t.j1)), max_abs(RMat(j2x - t.j2)));

  d.omega3_type = omega3_type_check(f, t.j3).type_residual;

  out.structure.signature = signature_of(gs, tol.rank);
  return out;
}

// reconstruct_point plus acceptance: every identity within tol.check, g
// nondegenerate with p, q multiples of four.
inline PointStructure metric_from_family(const HoloSympFamily& f, const Tolerances& tol = {}) {
  Reconstruction rec = reconstruct_point(f, tol);
  const double w = rec.diag.worst();
  if (w > tol.check)
    throw InconsistentFamilyError("metric_from_family: structure identities fail (worst residual " + std::to_string(w) + ")");
  const Signature& sig = rec.structure.signature;
  if (sig.zero != 0) throw InconsistentFamilyError("metric_from_family: metric is degenerate");
  if (sig.positive % 4 != 0 || sig.negative % 4 != 0)
    throw InconsistentFamilyError("metric_from_family: signature is not a pair of multiples of four");
  return std::move(rec.structure);
}

// g = omega_3 J3, checked against the other two presentations.
inline RMat metric_from_triples(const QuaternionicTriple& t, const SymplecticTriple& s, double tol = 1e-9) {
  const RMat g = s.w3.real_matrix() * t.j3;
  const double scale = std::max(1.0, max_abs(g));
  if (max_abs(RMat(g - g.transpose())) > tol * scale) throw InputError("extract_family: omega_3 J3 is not symmetric");
  if (detail::compatibility_residual(t, s, g) > tol * scale)
    throw InputError("extract_family: triples are not compatible with a common metric");
  return g;
}

inline HoloSympFamily extract_family(const QuaternionicTriple& t, const SymplecticTriple& s, double tol = 1e-9) {
  if (!s.w1.is_real(tol) || !s.w2.is_real(tol) || !s.w3.is_real(tol))
    throw InputError("extract_family: symplectic forms must be real");
  metric_from_triples(t, s, tol);
  return make_family(s.w1 + I * s.w2, s.w3);
}

// ---------------------------------------------------------------------------
// Rotation frames

struct RotationFrameOptions {
  int holo_g_pairs = 20;
  std::uint64_t seed = 0;
  double tol = 1e-9;
};

namespace detail {

// SO(3) matrix of the adjoint action of U = [[u, v], [-conj v, conj u]] on
// M(c) = [[i c3, c1 + i c2], [-c1 + i c2, -i c3]].
inline std::array<std::array<double, 3>, 3> adjoint_rotation(cplx u, cplx v) {
  Eigen::Matrix2cd um;
  um << u, v, -std::conj(v), std::conj(u);
  std::array<std::array<double, 3>, 3> r{};
  for (int a = 0; a < 3; ++a) {
    std::array<double, 3> e{0.0, 0.0, 0.0};
    e[a] = 1.0;
    Eigen::Matrix2cd m;
    m << I * e[2], cplx(e[0], e[1]), cplx(-e[0], e[1]), -I * e[2];
    const Eigen::Matrix2cd out = um * m * um.adjoint();
    r[0][a] = out(0, 1).real();
    r[1][a] = out(0, 1).imag();
    r[2][a] = out(0, 0).imag();
  }
  return r;
}

// Frame on the real blow-up of the sphere at 0 and infinity: zeta is given
// by modulus in [0, inf] and phase. theta_in fixes the phase instead of
// solving for it.
inline RotationFrame rotation_frame_impl(const QuaternionicTriple& t, const SymplecticTriple& s, double modulus,
                                         double phase, std::optional<double> theta_in, const RotationFrameOptions& opt) {
  const int n = t.dim();
  const RMat g = s.w3.real_matrix() * t.j3;
  const bool at_inf = std::isinf(modulus);
  const double m2 = at_inf ? 0.0 : modulus * modulus;
  const double ca = at_inf ? 0.0 : 1.0 / (1.0 + m2);        // coefficient of omega_+
  const double cb = at_inf ? 0.0 : modulus / (1.0 + m2);    // coefficient of omega_3
  const double cc = at_inf ? 1.0 : m2 / (1.0 + m2);         // coefficient of omega_-
  const cplx eip = std::polar(1.0, phase);
  const TwoForm wp = s.w1 + I * s.w2;
  // |zeta|/(1 + |zeta|^2) varpi(zeta), continuous on the blow-up
  const TwoForm rescaled = (-0.5 * I * ca / eip) * wp + cb * s.w3 + (-0.5 * I * cc * eip) * wp.conj();

  const double sq = at_inf ? 0.0 : 1.0 / std::sqrt(1.0 + m2);
  const double vm = at_inf ? 1.0 : modulus / std::sqrt(1.0 + m2);
  auto frame_at = [&](double theta) {
    const cplx e = std::polar(1.0, theta);
    return adjoint_rotation(sq * e, -eip * vm * e);
  };
  auto forms_of = [&](const std::array<std::array<double, 3>, 3>& r, int row) {
    return r[row][0] * s.w1 + r[row][1] * s.w2 + r[row][2] * s.w3;
  };

  double theta = 0.0;
  if (theta_in) {
    theta = *theta_in;
  } else {
    // omega_K + i omega_I scales by e^{2 i theta}; match the largest entry of
    // 2 * rescaled against the theta = 0 frame.
    const auto r0 = frame_at(0.0);
    const CMat f0 = (forms_of(r0, 0) + I * forms_of(r0, 1)).matrix();
    const CMat target = 2.0 * rescaled.matrix();
    Eigen::Index bi = 0, bj = 0;
    target.cwiseAbs().maxCoeff(&bi, &bj);
    if (std::abs(f0(bi, bj)) == 0.0) throw InconsistentStructureError("rotation_frame: no matching entry pair");
    const double ang = std::arg(target(bi, bj) / f0(bi, bj));
    theta = 0.5 * ang;
    if (theta < 0.0) theta += std::numbers::pi;
    if (theta >= std::numbers::pi) theta -= std::numbers::pi;
  }

  RotationFrame fr;
  fr.theta = theta;
  fr.rotation = frame_at(theta);
  const auto& r = fr.rotation;
  fr.K = r[0][0] * t.j1 + r[0][1] * t.j2 + r[0][2] * t.j3;
  fr.I = r[1][0] * t.j1 + r[1][1] * t.j2 + r[1][2] * t.j3;
  const RMat jz = r[2][0] * t.j1 + r[2][1] * t.j2 + r[2][2] * t.j3;

  Vec3 c;
  if (at_inf) {
    c = {0.0, 0.0, -1.0};
  } else {
    c = stereographic(TwistorParam(modulus * eip));
  }
  fr.row_residual = std::max({std::abs(r[2][0] - c[0]), std::abs(r[2][1] - c[1]), std::abs(r[2][2] - c[2])});
  fr.quaternion_residual = quaternion_residual(fr.K, fr.I, jz);

  const TwoForm wk = forms_of(r, 0);
  const TwoForm wi = forms_of(r, 1);
  fr.rescaled_residual = max_abs(CMat(rescaled.matrix() - 0.5 * (wk + I * wi).matrix()));

  std::mt19937_64 rng(opt.seed);
  std::normal_distribution<double> nd;
  const CMat jzc = jz.cast<cplx>();
  const CMat id = CMat::Identity(n, n);
  const CMat p10 = 0.5 * (id - I * jzc);
  const CMat p01 = 0.5 * (id + I * jzc);
  const CMat kc = fr.K.cast<cplx>();
  const CMat gc = g.cast<cplx>();
  double worst = 0.0;
  for (int p = 0; p < opt.holo_g_pairs; ++p) {
    CVec y(n), y2(n);
    for (int i = 0; i < n; ++i) {
      y(i) = cplx(nd(rng), nd(rng));
      y2(i) = cplx(nd(rng), nd(rng));
    }
    const CVec v = p10 * y;
    const CVec xb = p01 * y2;
    const double norm = std::max(v.norm() * xb.norm(), 1e-300);
    const cplx lhs = rescaled(v, kc * xb);
    const cplx rhs = (v.transpose() * gc * xb)(0, 0);
    worst = std::max(worst, std::abs(lhs - rhs) / norm);
  }
  fr.holo_g_residual = worst;
  return fr;
}

}  // namespace detail

// (K, I, J^(zeta)) = R (J1, J2, J3) with R in SO(3) and theta fixed so that
// |zeta|/(1+|zeta|^2) varpi(zeta) = (omega_K + i omega_I)/2. The unchecked
// variant reports residuals without throwing.
inline RotationFrame rotation_frame_unchecked(const QuaternionicTriple& t, const SymplecticTriple& s,
                                              const TwistorParam& z, const RotationFrameOptions& opt = {}) {
  if (!z.is_finite_nonzero()) throw InputError("rotation_frame: zeta must be finite and nonzero; use rotation_frame_at_pole");
  const cplx w = z.value();
  return detail::rotation_frame_impl(t, s, std::abs(w), std::arg(w), std::nullopt, opt);
}

inline RotationFrame rotation_frame(const QuaternionicTriple& t, const SymplecticTriple& s, const TwistorParam& z,
                                    const RotationFrameOptions& opt = {}) {
  RotationFrame fr = rotation_frame_unchecked(t, s, z, opt);
  if (fr.rescaled_residual > opt.tol || fr.quaternion_residual > opt.tol || fr.row_residual > opt.tol)
    throw InconsistentStructureError("rotation_frame: no theta satisfies the rescaled identity");
  return fr;
}

// Boundary circles of the blow-up: zeta -> 0 (or infinity) along a fixed phase.
inline RotationFrame rotation_frame_at_pole(const QuaternionicTriple& t, const SymplecticTriple& s, bool at_infinity,
                                            double phase, const RotationFrameOptions& opt = {}) {
  const double modulus = at_infinity ? std::numeric_limits<double>::infinity() : 0.0;
  RotationFrame fr = detail::rotation_frame_impl(t, s, modulus, phase, std::nullopt, opt);
  if (fr.rescaled_residual > opt.tol || fr.quaternion_residual > opt.tol || fr.row_residual > opt.tol)
    throw InconsistentStructureError("rotation_frame: no theta satisfies the rescaled identity");
  return fr;
}

// Frame for a prescribed theta; residuals are reported, never thrown.
inline RotationFrame rotation_frame_at_phase(const QuaternionicTriple& t, const SymplecticTriple& s,
                                             const TwistorParam& z, double theta,
                                             const RotationFrameOptions& opt = {}) {
  if (!z.is_finite_nonzero()) throw InputError("rotation_frame_at_phase: zeta must be finite and nonzero");
  const cplx w = z.value();
  return detail::rotation_frame_impl(t, s, std::abs(w), std::arg(w), theta, opt);
}

// ---------------------------------------------------------------------------
// Real holomorphic sections of the twistor line

struct RealSection {
  CVec v;  // a - zeta J1 conj(a)
  CVec s;  // (1 + conj(zeta) J1) v / (1 + |zeta|^2)
  double membership = 0.0;  // |J^(zeta) s - i s|
  double reality = 0.0;     // |conj(s(-1/conj zeta)) - s(zeta)|, 0 at zeta = 0
  double v_reality = 0.0;   // |v(zeta) + zeta J1 conj(v(-1/conj zeta))|
};

inline void require_type10(const RMat& j3, const CVec& a, const char* who, double tol = 1e-10) {
  if (a.size() != j3.rows()) throw InputError(std::string(who) + ": dimension mismatch");
  const double res = max_abs(CVec(j3.cast<cplx>() * a - I * a));
  if (res > tol * std::max(1.0, max_abs(a))) throw InputError(std::string(who) + ": vector is not of type (1,0)");
}

namespace detail {

inline std::pair<CVec, CVec> section_at(const QuaternionicTriple& t, const CVec& a, cplx z) {
  const CMat j1 = t.j1.cast<cplx>();
  CVec v = a - z * (j1 * a.conjugate());
  CVec s = (v + std::conj(z) * (j1 * v)) / (1.0 + std::norm(z));
  return {std::move(v), std::move(s)};
}

}  // namespace detail

inline RealSection real_section(const QuaternionicTriple& t, const CVec& a, const TwistorParam& z) {
  require_type10(t.j3, a, "real_section");
  if (z.is_infinite()) throw InputError("real_section: zeta must be finite");
  const cplx w = z.value();
  RealSection out;
  std::tie(out.v, out.s) = detail::section_at(t, a, w);
  const CMat jz = j_of_zeta(t, z).cast<cplx>();
  out.membership = max_abs(CVec(jz * out.s - I * out.s));
  if (w != cplx(0.0)) {
    const cplx wa = -1.0 / std::conj(w);
    const auto [va, sa] = detail::section_at(t, a, wa);
    out.reality = max_abs(CVec(sa.conjugate() - out.s));
    out.v_reality = max_abs(CVec(out.v + w * (t.j1.cast<cplx>() * va.conjugate())));
  }
  return out;
}

// (omega_+(a, J1 conj b) - omega_+(J1 conj a, b)) / 2, before taking the real part.
inline cplx hklr_pairing(const TwoForm& omega_plus, const RMat& j1, const CVec& a, const CVec& b) {
  const CMat j1c = j1.cast<cplx>();
  return 0.5 * (omega_plus(a, j1c * b.conjugate()) - omega_plus(j1c * a.conjugate(), b));
}

inline double hklr_metric(const HoloSympFamily& f, const QuaternionicTriple& t, const CVec& a, const CVec& b) {
  require_type10(t.j3, a, "hklr_metric");
  require_type10(t.j3, b, "hklr_metric");
  const cplx val = hklr_pairing(f.omega_plus, t.j1, a, b);
  const double scale = std::max(1.0, max_abs(f.omega_plus.matrix()) * a.norm() * b.norm());
  if (std::abs(val.imag()) > 1e-10 * scale) throw InconsistentStructureError("hklr_metric: value is not real");
  return val.real();
}

inline double hklr_metric(const HoloSympFamily& f, const CVec& a, const CVec& b, const Tolerances& tol = {}) {
  return hklr_metric(f, triple_from_family(f, tol), a, b);
}

struct O2Report {
  std::vector<cplx> nodes;
  std::vector<cplx> values;            // P(zeta) = 2 i zeta varpi(zeta)(s_a, s_b)
  std::array<cplx, 3> coefficients{};  // quadratic through the first three nodes
  double extrapolation_residual = 0.0; // at the remaining nodes
  double identity_residual = 0.0;      // |P(zeta) - omega_+(v_a, v_b)|
  cplx constant_term = 0.0;            // fitted P(0+)
  cplx expected_constant = 0.0;        // omega_+(a, b)
};

inline O2Report o2_polynomial_check(const HoloSympFamily& f, const QuaternionicTriple& t, const CVec& a, const CVec& b,
                                    std::span<const cplx> nodes) {
  require_type10(t.j3, a, "o2_polynomial_check");
  require_type10(t.j3, b, "o2_polynomial_check");
  if (nodes.size() < 4) throw InputError("o2_polynomial_check: need at least 4 nodes");
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (nodes[i] == cplx(0.0) || !std::isfinite(std::abs(nodes[i]))) throw InputError("o2_polynomial_check: nodes must be finite and nonzero");
    for (std::size_t j = 0; j < i; ++j)
      if (nodes[i] == nodes[j]) throw InputError("o2_polynomial_check: nodes must be distinct");
  }
  O2Report rep;
  rep.nodes.assign(nodes.begin(), nodes.end());
  for (cplx z : nodes) {
    const auto [va, sa] = detail::section_at(t, a, z);
    const auto [vb, sb] = detail::section_at(t, b, z);
    const cplx p = 2.0 * I * z * varpi(f, z)(sa, sb);
    rep.values.push_back(p);
    rep.identity_residual = std::max(rep.identity_residual, std::abs(p - f.omega_plus(va, vb)));
  }
  Eigen::Matrix3cd vand;
  Eigen::Vector3cd rhs;
  for (int i = 0; i < 3; ++i) {
    vand(i, 0) = 1.0;
    vand(i, 1) = nodes[i];
    vand(i, 2) = nodes[i] * nodes[i];
    rhs(i) = rep.values[i];
  }
  const Eigen::Vector3cd c = vand.fullPivLu().solve(rhs);
  rep.coefficients = {c(0), c(1), c(2)};
  for (std::size_t i = 3; i < nodes.size(); ++i) {
    const cplx z = nodes[i];
    const cplx fit = c(0) + z * (c(1) + z * c(2));
    rep.extrapolation_residual = std::max(rep.extrapolation_residual, std::abs(fit - rep.values[i]));
  }
  rep.constant_term = c(0);
  rep.expected_constant = f.omega_plus(a, b);
  return rep;
}

// |P10 x - zeta kappa P01 x| over an orthonormal basis x of ker varpi(zeta):
// T^(0,1) at zeta is the graph of zeta kappa over T^(0,1) at 0.
inline double graph_residual(const HoloSympFamily& f, const QuaternionicTriple& t, const TwistorParam& z,
                             double rank_tol = 1e-8) {
  if (z.is_infinite()) throw InputError("graph_residual: zeta must be finite");
  const int n = f.dim();
  const CMat x = nullspace(varpi(f, z), rank_tol).basis;
  const CMat id = CMat::Identity(n, n);
  const CMat j3 = t.j3.cast<cplx>();
  const CMat p10 = 0.5 * (id - I * j3);
  const CMat p01 = 0.5 * (id + I * j3);
  return max_abs(CMat(p10 * x - z.value() * t.j1.cast<cplx>() * (p01 * x)));
}

}  // namespace hk
