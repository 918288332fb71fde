#pragma once

#include <array>
#include <cmath>
#include <optional>

#include "hk/types.hpp"

namespace hk {

// A point of the Riemann sphere: a finite complex number or infinity.
class TwistorParam {
 public:
  TwistorParam() : z_(0.0) {}
  TwistorParam(cplx z) : z_(z) {}  // NOLINT: implicit from finite values is intended
  TwistorParam(double x) : z_(cplx(x, 0.0)) {}  // NOLINT

  static TwistorParam infinity() {
    TwistorParam p;
    p.z_.reset();
    return p;
  }

  bool is_infinite() const { return !z_.has_value(); }
  bool is_zero() const { return z_.has_value() && *z_ == cplx(0.0); }
  bool is_finite_nonzero() const { return z_.has_value() && *z_ != cplx(0.0); }

  cplx value() const {
    if (!z_) throw InputError("TwistorParam: value() at infinity");
    return *z_;
  }

  friend bool operator==(const TwistorParam& a, const TwistorParam& b) { return a.z_ == b.z_; }

 private:
  std::optional<cplx> z_;
};

// zeta -> -1/conj(zeta)
inline TwistorParam antipode(const TwistorParam& z) {
  if (z.is_infinite()) return cplx(0.0);
  if (z.is_zero()) return TwistorParam::infinity();
  return -1.0 / std::conj(z.value());
}

using Vec3 = std::array<double, 3>;

// c = (2 Im z, -2 Re z, 1 - |z|^2) / (1 + |z|^2); infinity -> (0, 0, -1).
inline Vec3 stereographic(const TwistorParam& z) {
  if (z.is_infinite()) return {0.0, 0.0, -1.0};
  const cplx w = z.value();
  const double n2 = std::norm(w);
  if (!std::isfinite(n2)) return {0.0, 0.0, -1.0};
  const double d = 1.0 + n2;
  return {2.0 * w.imag() / d, -2.0 * w.real() / d, (1.0 - n2) / d};
}

// zeta = (i c1 - c2) / (1 + c3); the south pole maps to infinity.
inline TwistorParam inverse_stereographic(const Vec3& c) {
  const double den = 1.0 + c[2];
  if (den <= 0.0) return TwistorParam::infinity();
  return cplx(-c[1], c[0]) / den;
}

// Fractional linear action zeta -> (u zeta + v) / (-conj(v) zeta + conj(u)) of
// the SU(2) element [[u, v], [-conj(v), conj(u)]].
inline TwistorParam rotate_zeta(cplx u, cplx v, const TwistorParam& z, double tol = 1e-12) {
  if (std::abs(std::norm(u) + std::norm(v) - 1.0) > tol) throw InputError("rotate_zeta: |u|^2 + |v|^2 must be 1");
  if (z.is_infinite()) {
    if (v == cplx(0.0)) return TwistorParam::infinity();
    return u / (-std::conj(v));
  }
  const cplx w = z.value();
  const cplx den = -std::conj(v) * w + std::conj(u);
  if (den == cplx(0.0)) return TwistorParam::infinity();
  return (u * w + v) / den;
}

}  // namespace hk
