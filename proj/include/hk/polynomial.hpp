#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "hk/types.hpp"

namespace hk {

// Real multivariate polynomial sum_k c_k x^{e_k} in a fixed number of variables.
class Polynomial {
 public:
  struct Term {
    double c = 0.0;
    std::vector<int> e;
  };

  Polynomial() = default;
  explicit Polynomial(int vars) : vars_(vars) {}
  Polynomial(int vars, std::vector<Term> terms) : vars_(vars), terms_(std::move(terms)) {
    for (const Term& t : terms_) {
      if (static_cast<int>(t.e.size()) != vars_) throw InputError("Polynomial: exponent tuple has the wrong length");
      for (int p : t.e)
        if (p < 0) throw InputError("Polynomial: exponents must be nonnegative");
    }
  }

  static Polynomial constant(int vars, double c) { return Polynomial(vars, {Term{c, std::vector<int>(vars, 0)}}); }

  int vars() const { return vars_; }
  const std::vector<Term>& terms() const { return terms_; }
  bool empty() const { return terms_.empty(); }

  double operator()(const RVec& x) const {
    double sum = 0.0;
    for (const Term& t : terms_) {
      double m = t.c;
      for (int i = 0; i < vars_; ++i)
        if (t.e[i] != 0) m *= std::pow(x(i), t.e[i]);
      sum += m;
    }
    return sum;
  }

  Polynomial derivative(int var) const {
    Polynomial d(vars_);
    for (const Term& t : terms_) {
      if (t.e[var] == 0 || t.c == 0.0) continue;
      Term dt = t;
      dt.c *= t.e[var];
      dt.e[var] -= 1;
      d.terms_.push_back(std::move(dt));
    }
    return d;
  }

  bool depends_on(int var) const {
    return std::any_of(terms_.begin(), terms_.end(), [&](const Term& t) { return t.c != 0.0 && t.e[var] != 0; });
  }

  bool is_constant() const {
    for (int i = 0; i < vars_; ++i)
      if (depends_on(i)) return false;
    return true;
  }

  friend bool operator==(const Polynomial& a, const Polynomial& b) {
    if (a.vars_ != b.vars_ || a.terms_.size() != b.terms_.size()) return false;
    for (std::size_t i = 0; i < a.terms_.size(); ++i)
      if (a.terms_[i].c != b.terms_[i].c || a.terms_[i].e != b.terms_[i].e) return false;
    return true;
  }

 private:
  int vars_ = 0;
  std::vector<Term> terms_;
};

}  // namespace hk
