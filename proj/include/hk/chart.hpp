#pragma once

// Fields of 2-forms on a coordinate box and the chart-level checks built on
// the pointwise constructions.

#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <functional>
#include <memory>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "hk/pointwise.hpp"
#include "hk/polynomial.hpp"

namespace hk {

// ---------------------------------------------------------------------------
// Charts

struct ChartSpec {
  std::vector<std::string> coords;
  std::vector<std::pair<double, double>> box;
  std::vector<int> grid;

  int dim() const { return static_cast<int>(box.size()); }

  void validate() const {
    if (box.empty()) throw InputError("chart: box must not be empty");
    if (grid.size() != box.size()) throw InputError("chart.grid: length must match chart.box");
    if (!coords.empty() && coords.size() != box.size()) throw InputError("chart.coords: length must match chart.box");
    for (std::size_t a = 0; a < box.size(); ++a) {
      if (!(std::isfinite(box[a].first) && std::isfinite(box[a].second) && box[a].first < box[a].second))
        throw InputError("chart.box[" + std::to_string(a) + "]: interval must be finite and nondegenerate");
      if (grid[a] < 3) throw InputError("chart.grid[" + std::to_string(a) + "]: need at least 3 samples per axis");
    }
  }

  std::size_t node_count() const {
    std::size_t n = 1;
    for (int g : grid) n *= static_cast<std::size_t>(g);
    return n;
  }

  // Row-major: the last axis varies fastest.
  RVec node(std::size_t index) const {
    const int d = dim();
    RVec x(d);
    for (int a = d - 1; a >= 0; --a) {
      const auto g = static_cast<std::size_t>(grid[a]);
      const std::size_t k = index % g;
      index /= g;
      x(a) = box[a].first + (box[a].second - box[a].first) * static_cast<double>(k) / static_cast<double>(g - 1);
    }
    return x;
  }

  double spacing(int axis) const { return (box[axis].second - box[axis].first) / (grid[axis] - 1); }

  RVec center() const {
    RVec x(dim());
    for (int a = 0; a < dim(); ++a) x(a) = 0.5 * (box[a].first + box[a].second);
    return x;
  }

  bool contains(const RVec& x) const {
    if (x.size() != dim()) return false;
    for (int a = 0; a < dim(); ++a) {
      const double slack = 1e-12 * (box[a].second - box[a].first);
      if (!(x(a) >= box[a].first - slack && x(a) <= box[a].second + slack)) return false;
    }
    return true;
  }

  // Distance from x to the nearest face of the box.
  double margin(const RVec& x) const {
    double m = std::numeric_limits<double>::infinity();
    for (int a = 0; a < dim(); ++a) m = std::min({m, x(a) - box[a].first, box[a].second - x(a)});
    return m;
  }
};

inline std::string format_point(const RVec& x) {
  std::string s = "(";
  char buf[32];
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.6g", x(i));
    if (i) s += ", ";
    s += buf;
  }
  return s + ")";
}

// ---------------------------------------------------------------------------
// Form fields

struct EntryTerm {
  int i = 0, j = 0;
  Polynomial re, im;
  std::optional<Polynomial> den;
};

class FormField {
 public:
  enum class Kind { constant, polynomial, rational, builtin, grid, combination };

  FormField() = default;

  static FormField from_entries(int dim, std::vector<EntryTerm> entries) {
    auto impl = std::make_shared<Impl>();
    impl->dim = dim;
    bool constant = true, rational = false;
    std::vector<std::pair<int, int>> seen;
    for (const EntryTerm& t : entries) {
      if (t.i < 0 || t.j >= dim || t.i >= t.j) throw InputError("form entry: need 0 <= i < j < dim");
      for (auto [a, b] : seen)
        if (a == t.i && b == t.j) throw InputError("form entry: duplicate (i, j) = (" + std::to_string(t.i) + ", " + std::to_string(t.j) + ")");
      seen.emplace_back(t.i, t.j);
      for (const Polynomial* p : {&t.re, &t.im})
        if (p->vars() != dim && !p->empty()) throw InputError("form entry: exponent tuples must have length dim");
      if (t.den) {
        rational = true;
        if (t.den->vars() != dim) throw InputError("form entry: denominator exponent tuples must have length dim");
        if (t.den->empty()) throw InputError("form entry: denominator must not be empty");
      }
      if (!t.re.is_constant() || !t.im.is_constant() || t.den) constant = false;
    }
    impl->kind = rational ? Kind::rational : (constant ? Kind::constant : Kind::polynomial);
    impl->entries = std::move(entries);
    return FormField(std::move(impl));
  }

  static FormField constant(const TwoForm& w) {
    const int n = w.dim();
    std::vector<EntryTerm> entries;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) {
        const cplx v = w.matrix()(i, j);
        if (v == cplx(0.0)) continue;
        EntryTerm t{i, j, Polynomial(n), Polynomial(n), std::nullopt};
        if (v.real() != 0.0) t.re = Polynomial::constant(n, v.real());
        if (v.imag() != 0.0) t.im = Polynomial::constant(n, v.imag());
        entries.push_back(std::move(t));
      }
    return from_entries(n, std::move(entries));
  }

  static FormField builtin(std::string name, int dim, std::function<CMat(const RVec&)> fn) {
    auto impl = std::make_shared<Impl>();
    impl->kind = Kind::builtin;
    impl->dim = dim;
    impl->name = std::move(name);
    impl->fn = std::move(fn);
    return FormField(std::move(impl));
  }

  // Values at the chart nodes in row-major order; multilinear in between.
  static FormField sampled(const ChartSpec& chart, std::vector<CMat> values) {
    chart.validate();
    if (values.size() != chart.node_count()) throw InputError("grid field: one value per chart node is required");
    auto impl = std::make_shared<Impl>();
    impl->kind = Kind::grid;
    impl->dim = chart.dim();
    impl->chart = chart;
    impl->samples = std::move(values);
    return FormField(std::move(impl));
  }

  static FormField combination(std::vector<std::pair<cplx, FormField>> parts) {
    if (parts.empty()) throw InputError("combination: no parts");
    auto impl = std::make_shared<Impl>();
    impl->kind = Kind::combination;
    impl->dim = parts.front().second.dim();
    for (const auto& p : parts)
      if (p.second.dim() != impl->dim) throw InputError("combination: dimension mismatch");
    impl->parts = std::move(parts);
    return FormField(std::move(impl));
  }

  Kind kind() const { return impl_->kind; }
  int dim() const { return impl_->dim; }
  const std::vector<EntryTerm>& entries() const { return impl_->entries; }
  const std::string& builtin_name() const { return impl_->name; }

  bool symbolic() const {
    switch (impl_->kind) {
      case Kind::constant:
      case Kind::polynomial:
      case Kind::rational:
        return true;
      case Kind::combination:
        return std::all_of(impl_->parts.begin(), impl_->parts.end(), [](const auto& p) { return p.second.symbolic(); });
      default:
        return false;
    }
  }

  // Mesh spacing for grid fields, which can only be differenced at that step.
  std::optional<double> fixed_step(int axis) const {
    if (impl_->kind == Kind::grid) return impl_->chart.spacing(axis);
    if (impl_->kind == Kind::combination)
      for (const auto& p : impl_->parts)
        if (auto s = p.second.fixed_step(axis)) return s;
    return std::nullopt;
  }

  CMat matrix(const RVec& x) const {
    const int n = impl_->dim;
    if (x.size() != n) throw InputError("form field: point has the wrong dimension");
    switch (impl_->kind) {
      case Kind::builtin: {
        CMat m = impl_->fn(x);
        return 0.5 * (m - m.transpose());
      }
      case Kind::grid:
        return interpolate(x);
      case Kind::combination: {
        CMat m = CMat::Zero(n, n);
        for (const auto& [c, f] : impl_->parts) m += c * f.matrix(x);
        return m;
      }
      default: {
        CMat m = CMat::Zero(n, n);
        for (const EntryTerm& t : impl_->entries) {
          cplx v(t.re.empty() ? 0.0 : t.re(x), t.im.empty() ? 0.0 : t.im(x));
          if (t.den) v /= (*t.den)(x);
          m(t.i, t.j) += v;
          m(t.j, t.i) -= v;
        }
        return m;
      }
    }
  }

  TwoForm operator()(const RVec& x) const { return TwoForm(matrix(x)); }

  // Exact partial derivative d/dx_var of the matrix field (symbolic kinds only).
  CMat partial(const RVec& x, int var) const {
    const int n = impl_->dim;
    if (impl_->kind == Kind::combination) {
      CMat m = CMat::Zero(n, n);
      for (const auto& [c, f] : impl_->parts) m += c * f.partial(x, var);
      return m;
    }
    if (!symbolic()) throw InputError("form field: no symbolic derivative for this kind");
    CMat m = CMat::Zero(n, n);
    for (const EntryTerm& t : impl_->entries) {
      const cplx num(t.re.empty() ? 0.0 : t.re(x), t.im.empty() ? 0.0 : t.im(x));
      const cplx dnum(t.re.empty() ? 0.0 : t.re.derivative(var)(x), t.im.empty() ? 0.0 : t.im.derivative(var)(x));
      cplx v = dnum;
      if (t.den) {
        const double d = (*t.den)(x);
        const double dd = t.den->derivative(var)(x);
        v = (dnum * d - num * dd) / (d * d);
      }
      m(t.i, t.j) += v;
      m(t.j, t.i) -= v;
    }
    return m;
  }

 private:
  struct Impl {
    Kind kind = Kind::constant;
    int dim = 0;
    std::vector<EntryTerm> entries;
    std::string name;
    std::function<CMat(const RVec&)> fn;
    ChartSpec chart;
    std::vector<CMat> samples;
    std::vector<std::pair<cplx, FormField>> parts;
  };

  explicit FormField(std::shared_ptr<const Impl> impl) : impl_(std::move(impl)) {}

  CMat interpolate(const RVec& x) const {
    const ChartSpec& c = impl_->chart;
    const int d = c.dim();
    std::vector<int> lo(d);
    std::vector<double> w(d);
    for (int a = 0; a < d; ++a) {
      const double s = (x(a) - c.box[a].first) / c.spacing(a);
      int k = static_cast<int>(std::floor(s));
      k = std::clamp(k, 0, c.grid[a] - 2);
      lo[a] = k;
      w[a] = std::clamp(s - k, 0.0, 1.0);
    }
    CMat out = CMat::Zero(impl_->dim, impl_->dim);
    for (int corner = 0; corner < (1 << d); ++corner) {
      double weight = 1.0;
      std::size_t idx = 0;
      for (int a = 0; a < d; ++a) {
        const int bit = (corner >> a) & 1;
        weight *= bit ? w[a] : 1.0 - w[a];
        idx = idx * static_cast<std::size_t>(c.grid[a]) + static_cast<std::size_t>(lo[a] + bit);
      }
      if (weight != 0.0) out += weight * impl_->samples[idx];
    }
    return out;
  }

  std::shared_ptr<const Impl> impl_;
};

inline TwoForm eval_field(const FormField& f, const ChartSpec& chart, const RVec& x) {
  if (!chart.contains(x)) throw InputError("eval_field: point " + format_point(x) + " is outside the chart box");
  return f(x);
}

// Rejects rational fields whose denominators come within 1e-6 of zero on a
// 4x refinement of the chart grid. Only axes a denominator depends on are
// refined.
inline void check_poles(const FormField& f, const ChartSpec& chart, const std::string& label = "form") {
  if (f.kind() != FormField::Kind::rational) return;
  const int d = chart.dim();
  for (const EntryTerm& t : f.entries()) {
    if (!t.den) continue;
    std::vector<int> counts(d, 1);
    for (int a = 0; a < d; ++a)
      if (t.den->depends_on(a)) counts[a] = 4 * (chart.grid[a] - 1) + 1;
    std::size_t total = 1;
    for (int c : counts) total *= static_cast<std::size_t>(c);
    RVec x(d);
    for (std::size_t idx = 0; idx < total; ++idx) {
      std::size_t rem = idx;
      for (int a = d - 1; a >= 0; --a) {
        const auto c = static_cast<std::size_t>(counts[a]);
        const std::size_t k = rem % c;
        rem /= c;
        x(a) = c == 1 ? chart.box[a].first
                      : chart.box[a].first + (chart.box[a].second - chart.box[a].first) * static_cast<double>(k) / static_cast<double>(c - 1);
      }
      if (std::abs((*t.den)(x)) <= 1e-6)
        throw InputError(label + "[" + std::to_string(t.i) + "," + std::to_string(t.j) + "]: denominator vanishes near x = " +
                         format_point(x));
    }
  }
}

// ---------------------------------------------------------------------------
// Exterior derivative

class ThreeForm {
 public:
  explicit ThreeForm(int n) : n_(n), c_(static_cast<std::size_t>(n * n * n), cplx(0.0)) {}
  int dim() const { return n_; }
  cplx operator()(int i, int j, int k) const { return c_[idx(i, j, k)]; }
  cplx& at(int i, int j, int k) { return c_[idx(i, j, k)]; }
  double max_abs() const {
    double m = 0.0;
    for (cplx v : c_) m = std::max(m, std::abs(v));
    return m;
  }
  ThreeForm real_part() const { return map([](cplx v) { return cplx(v.real()); }); }
  ThreeForm imag_part() const { return map([](cplx v) { return cplx(v.imag()); }); }

 private:
  template <class F>
  ThreeForm map(F f) const {
    ThreeForm o(n_);
    for (std::size_t i = 0; i < c_.size(); ++i) o.c_[i] = f(c_[i]);
    return o;
  }
  std::size_t idx(int i, int j, int k) const { return static_cast<std::size_t>((i * n_ + j) * n_ + k); }
  int n_;
  std::vector<cplx> c_;
};

namespace detail {

inline std::vector<CMat> partials(const FormField& f, const ChartSpec& chart, const RVec& x, double h, int order) {
  const int n = f.dim();
  std::vector<CMat> d(static_cast<std::size_t>(n));
  if (f.symbolic()) {
    for (int a = 0; a < n; ++a) d[a] = f.partial(x, a);
    return d;
  }
  if (order != 2 && order != 4) throw InputError("exterior_derivative: order must be 2 or 4");
  for (int a = 0; a < n; ++a) {
    const double step = f.fixed_step(a).value_or(h);
    const double reach = (order == 4 ? 2.0 : 1.0) * step;
    if (x(a) - reach < chart.box[a].first - 1e-12 * step || x(a) + reach > chart.box[a].second + 1e-12 * step)
      throw InputError("exterior_derivative: point " + format_point(x) + " is closer than the stencil to the boundary");
    auto shifted = [&](double s) {
      RVec y = x;
      y(a) += s;
      return f.matrix(y);
    };
    if (order == 2) {
      d[a] = (shifted(step) - shifted(-step)) / (2.0 * step);
    } else {
      d[a] = (-shifted(2 * step) + 8.0 * shifted(step) - 8.0 * shifted(-step) + shifted(-2 * step)) / (12.0 * step);
    }
  }
  return d;
}

}  // namespace detail

// (dF)_{ijk} = d_i F_{jk} + d_j F_{ki} + d_k F_{ij}
inline ThreeForm exterior_derivative(const FormField& f, const ChartSpec& chart, const RVec& x, double h = 1e-3,
                                     int order = 2) {
  if (f.dim() != chart.dim()) throw InputError("exterior_derivative: field and chart dimensions differ");
  if (!chart.contains(x)) throw InputError("exterior_derivative: point " + format_point(x) + " is outside the chart box");
  const std::vector<CMat> d = detail::partials(f, chart, x, h, order);
  const int n = f.dim();
  ThreeForm out(n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k) out.at(i, j, k) = d[i](j, k) + d[j](k, i) + d[k](i, j);
  return out;
}

// ---------------------------------------------------------------------------
// Reports

struct Location {
  RVec point;
  std::optional<cplx> zeta;
  bool zeta_infinite = false;
  std::string form;
};

struct CheckRecord {
  std::string name;
  std::string anchor;
  double residual = 0.0;
  double tolerance = 0.0;
  bool pass = true;
  std::optional<Location> worst;
  std::string error;
};

struct FieldReport {
  std::vector<CheckRecord> checks;
  std::optional<Signature> signature;

  bool pass() const {
    return std::all_of(checks.begin(), checks.end(), [](const CheckRecord& c) { return c.pass; });
  }
  const CheckRecord* find(const std::string& name) const {
    for (const CheckRecord& c : checks)
      if (c.name == name) return &c;
    return nullptr;
  }
};

namespace detail {

struct Accumulator {
  double worst = 0.0;
  std::optional<Location> where;
  std::string error;
  std::optional<Location> error_where;
  bool any = false;

  void add(double v, const Location& loc) {
    if (!any || v > worst || std::isnan(v)) {
      if (std::isnan(worst) && any) return;
      worst = v;
      where = loc;
    }
    any = true;
  }
  void fail(const std::string& msg, const Location& loc) {
    if (error.empty()) {
      error = msg;
      error_where = loc;
    }
  }
  void merge(const Accumulator& o) {
    if (o.any) add(o.worst, *o.where);
    if (!o.error.empty()) fail(o.error, *o.error_where);
  }
  CheckRecord record(std::string name, std::string anchor, double tol) const {
    CheckRecord r;
    r.name = std::move(name);
    r.anchor = std::move(anchor);
    r.tolerance = tol;
    r.residual = any ? worst : 0.0;
    r.worst = error.empty() ? where : error_where;
    r.error = error;
    r.pass = error.empty() && std::isfinite(r.residual) && r.residual <= tol;
    return r;
  }
};

inline int thread_count() {
  if (const char* env = std::getenv("HK_THREADS")) {
    const int v = std::atoi(env);
    if (v >= 1) return v;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

// Runs fn(i) for i in [0, n); fn must not throw.
template <class F>
void parallel_for(std::size_t n, F&& fn) {
  const int threads = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(thread_count()), n));
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (int t = 0; t < threads; ++t)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) fn(i);
    });
  for (auto& th : pool) th.join();
}

// Re-raises the active exception with a location prefix, keeping its type.
[[noreturn]] inline void rethrow_at(const std::string& where) {
  try {
    throw;
  } catch (const InputError& e) {
    throw InputError(where + ": " + e.what());
  } catch (const DegeneracyError& e) {
    throw DegeneracyError(where + ": " + e.what(), e.smallest_singular_value());
  } catch (const NotDirectSumError& e) {
    throw NotDirectSumError(where + ": " + e.what());
  } catch (const InconsistentFamilyError& e) {
    throw InconsistentFamilyError(where + ": " + e.what());
  } catch (const InconsistentStructureError& e) {
    throw InconsistentStructureError(where + ": " + e.what());
  } catch (const std::exception& e) {
    throw Error(where + ": " + e.what());
  }
}

inline std::string describe_active_exception() {
  try {
    throw;
  } catch (const std::exception& e) {
    return e.what();
  } catch (...) {
    return "unknown error";
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Family fields

struct PointTruth {
  QuaternionicTriple triple;
  RMat metric;
  SymplecticTriple sympl;
};

struct FamilyField {
  int r = 1;
  FormField omega_plus;
  FormField omega_3;
  // Known structure at each point, when the fields come from a closed form.
  std::function<PointTruth(const RVec&)> truth;

  HoloSympFamily at(const RVec& x) const { return make_family(omega_plus(x), omega_3(x), 1e-10); }
};

inline std::vector<cplx> sample_zetas(std::uint64_t seed, int count) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> logmod(-2.0, 2.0);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  std::vector<cplx> out;
  out.reserve(static_cast<std::size_t>(std::max(count, 0)));
  for (int i = 0; i < count; ++i) {
    const double m = std::pow(10.0, logmod(rng));
    out.push_back(std::polar(m, phase(rng)));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Closedness

enum class FormPart { full, real, imag };

namespace detail {

inline std::vector<std::size_t> eligible_nodes(const FormField& f, const ChartSpec& chart, double h, int order) {
  std::vector<std::size_t> out;
  const double reach = (order == 4 ? 2.0 : 1.0);
  for (std::size_t i = 0; i < chart.node_count(); ++i) {
    const RVec x = chart.node(i);
    bool ok = true;
    if (!f.symbolic()) {
      for (int a = 0; a < chart.dim() && ok; ++a) {
        const double step = reach * f.fixed_step(a).value_or(h);
        ok = x(a) - step >= chart.box[a].first - 1e-12 * step && x(a) + step <= chart.box[a].second + 1e-12 * step;
      }
    }
    if (ok) out.push_back(i);
  }
  return out;
}

inline Accumulator closedness_scan(const FormField& f, const ChartSpec& chart, double h, int order, FormPart part,
                                   const std::string& label) {
  const std::vector<std::size_t> nodes = eligible_nodes(f, chart, h, order);
  std::vector<Accumulator> acc(nodes.size());
  parallel_for(nodes.size(), [&](std::size_t k) {
    const RVec x = chart.node(nodes[k]);
    Location loc{x, std::nullopt, false, label};
    try {
      ThreeForm d = exterior_derivative(f, chart, x, h, order);
      if (part == FormPart::real) d = d.real_part();
      if (part == FormPart::imag) d = d.imag_part();
      acc[k].add(d.max_abs(), loc);
    } catch (...) {
      acc[k].fail(describe_active_exception(), loc);
    }
  });
  Accumulator total;
  for (const Accumulator& a : acc) total.merge(a);
  return total;
}

}  // namespace detail

inline constexpr const char* kClosednessAnchor = "d omega_alpha = 0 for each pseudo-Kaehler form";

// Max |dF| over grid nodes at least one stencil reach inside the box.
inline CheckRecord closedness_check(const FormField& f, const ChartSpec& chart, double h = 1e-3, double tol = 1e-5,
                                    int order = 2, const std::string& label = "form") {
  return detail::closedness_scan(f, chart, h, order, FormPart::full, label).record("closedness", kClosednessAnchor, tol);
}

// ---------------------------------------------------------------------------
// Nijenhuis tensor

namespace detail {

// N(e_i, e_j)^a = J^b_i d_b J^a_j - J^b_j d_b J^a_i + J^a_b d_j J^b_i - J^a_b d_i J^b_j
inline double nijenhuis_max(const RMat& j, const std::vector<RMat>& dj) {
  const int n = static_cast<int>(j.rows());
  double worst = 0.0;
  for (int i = 0; i < n; ++i)
    for (int k = i + 1; k < n; ++k)
      for (int a = 0; a < n; ++a) {
        double v = 0.0;
        for (int b = 0; b < n; ++b) {
          v += j(b, i) * dj[b](a, k) - j(b, k) * dj[b](a, i);
          v += j(a, b) * (dj[k](b, i) - dj[i](b, k));
        }
        worst = std::max(worst, std::abs(v));
      }
  return worst;
}

inline std::vector<RMat> central_derivatives(const std::function<RMat(const RVec&)>& field, const RVec& x, double h) {
  const int n = static_cast<int>(x.size());
  std::vector<RMat> d(static_cast<std::size_t>(n));
  for (int b = 0; b < n; ++b) {
    RVec p = x, m = x;
    p(b) += h;
    m(b) -= h;
    d[b] = (field(p) - field(m)) / (2.0 * h);
  }
  return d;
}

}  // namespace detail

inline constexpr const char* kNijenhuisAnchor = "J^(zeta) integrable: Nijenhuis tensor vanishes";

// Integrability of an arbitrary almost-complex-structure field.
inline CheckRecord nijenhuis_check(const std::function<RMat(const RVec&)>& jfield, const ChartSpec& chart,
                                   double h = 1e-4, double tol = 1e-4) {
  detail::Accumulator total;
  for (std::size_t i = 0; i < chart.node_count(); ++i) {
    const RVec x = chart.node(i);
    if (chart.margin(x) < h) continue;
    Location loc{x, std::nullopt, false, ""};
    try {
      total.add(detail::nijenhuis_max(jfield(x), detail::central_derivatives(jfield, x, h)), loc);
    } catch (...) {
      total.fail(detail::describe_active_exception(), loc);
    }
  }
  return total.record("nijenhuis", kNijenhuisAnchor, tol);
}

// Integrability of J^(zeta) reconstructed from the family at each stencil point.
inline CheckRecord nijenhuis_check(const FamilyField& ff, const ChartSpec& chart, std::span<const cplx> zetas,
                                   double h = 1e-4, double tol = 1e-4, const Tolerances& ptol = {}) {
  std::vector<std::size_t> nodes;
  for (std::size_t i = 0; i < chart.node_count(); ++i)
    if (chart.margin(chart.node(i)) >= h) nodes.push_back(i);
  std::vector<detail::Accumulator> acc(nodes.size());
  detail::parallel_for(nodes.size(), [&](std::size_t k) {
    const RVec x = chart.node(nodes[k]);
    const int n = chart.dim();
    Location loc{x, std::nullopt, false, ""};
    try {
      const QuaternionicTriple t0 = triple_from_family(ff.at(x), ptol);
      std::vector<QuaternionicTriple> tp(n), tm(n);
      for (int b = 0; b < n; ++b) {
        RVec p = x, m = x;
        p(b) += h;
        m(b) -= h;
        tp[b] = triple_from_family(ff.at(p), ptol);
        tm[b] = triple_from_family(ff.at(m), ptol);
      }
      for (cplx z : zetas) {
        loc.zeta = z;
        const RMat jz = j_of_zeta(t0, z);
        std::vector<RMat> dj(n);
        for (int b = 0; b < n; ++b) dj[b] = (j_of_zeta(tp[b], z) - j_of_zeta(tm[b], z)) / (2.0 * h);
        acc[k].add(detail::nijenhuis_max(jz, dj), loc);
      }
    } catch (...) {
      acc[k].fail(detail::describe_active_exception(), loc);
    }
  });
  detail::Accumulator total;
  for (const auto& a : acc) total.merge(a);
  return total.record("nijenhuis", kNijenhuisAnchor, tol);
}

// ---------------------------------------------------------------------------
// Whole-chart verification

struct VerifyConfig {
  double tol = 1e-9;
  double closed_tol = 1e-5;
  double closed_h = 1e-3;
  int closed_order = 2;
  double nijenhuis_tol = 1e-4;
  double nijenhuis_h = 1e-4;
  std::vector<cplx> nijenhuis_zetas{cplx(0.0), cplx(1.0), cplx(0.0, 1.0), cplx(2.0)};
  int samples = 4;
  std::uint64_t seed = 0;
  double rank_tol = 1e-8;
  int holo_g_pairs = 8;
  double roundtrip_tol = 1e-8;
  std::optional<Signature> expected_signature;
};

// Check names in report order, with a one-line statement of what each verifies.
inline const std::vector<std::pair<std::string, std::string>>& check_catalog() {
  static const std::vector<std::pair<std::string, std::string>> c{
      {"holosymp", "omega_+ is holomorphic symplectic: ker omega_+ (+) ker omega_- spans, omega_+^r ^ omega_-^r != 0"},
      {"triple", "J3 from ker omega_+, J1 = kappa, J2 = J3 J1; kappa^2 = -1 and J1, J2 agree with ker varpi(i), ker varpi(-1)"},
      {"kappa_companion", "iota_{kappa v} omega_3 = (i/2) iota_v omega_- on T^(0,1)"},
      {"kappa_linearity", "kappa(zeta) = zeta kappa(1)"},
      {"quaternion", "J_a J_b = -delta_ab + eps_abc J_c"},
      {"compatibility", "omega_a(v, w) = g(J_a v, w), g real symmetric"},
      {"omega3_type", "omega_3 is of type (1,1) for J3"},
      {"metric_identity_chain", "g = Im varpi(-1) J1 = Im varpi(-i) J2 = Re varpi(-1) J3 = Re omega_+ J1 = Im omega_+ J2"},
      {"recovery", "J3 = -omega_1^-1 omega_2 and g = -omega_3 omega_1^-1 omega_2"},
      {"signature", "g nondegenerate with signature (4p, 4q), constant on the chart"},
      {"rotation_frame", "|zeta|/(1+|zeta|^2) varpi(zeta) = (omega_K + i omega_I)/2 and varpi(v, K xbar) = g(v, xbar)"},
      {"reality", "conj varpi(-1/conj zeta) = varpi(zeta) and J^(-1/conj zeta) = -J^(zeta)"},
      {"kernel_dimension", "dim ker varpi(zeta) = 2r"},
      {"graph_property", "ker varpi(zeta) is the graph of zeta kappa over T^(0,1) at zeta = 0"},
      {"closedness", kClosednessAnchor},
      {"nijenhuis", kNijenhuisAnchor},
      {"roundtrip", "extract then reconstruct reproduces (J1, J2, J3, g)"},
  };
  return c;
}

inline const std::string& anchor_of(const std::string& name) {
  static const std::string none;
  for (const auto& [n, a] : check_catalog())
    if (n == name) return a;
  return none;
}

namespace detail {

enum PointCheck {
  kHolosymp,
  kTriple,
  kKappaCompanion,
  kKappaLinearity,
  kQuaternion,
  kCompatibility,
  kOmega3Type,
  kChain,
  kRecovery,
  kSignature,
  kRotation,
  kReality,
  kKernelDim,
  kGraph,
  kPointCheckCount
};

struct NodeResult {
  std::array<Accumulator, kPointCheckCount> acc;
  std::optional<Signature> signature;
};

inline NodeResult verify_node(const FamilyField& ff, const RVec& x, const std::vector<cplx>& zetas,
                              const VerifyConfig& cfg) {
  NodeResult out;
  auto& acc = out.acc;
  const Location here{x, std::nullopt, false, ""};
  auto fail_from = [&](int first, const std::string& msg) {
    for (int c = first; c < kPointCheckCount; ++c) acc[c].fail(msg, here);
  };

  HoloSympFamily f;
  try {
    f = ff.at(x);
  } catch (...) {
    fail_from(kHolosymp, describe_active_exception());
    return out;
  }
  const Tolerances ptol{cfg.rank_tol, cfg.tol};
  const int r = f.r();

  try {
    const HolsympReport hs = holosymp_check(f.omega_plus, r, cfg.rank_tol, cfg.rank_tol);
    acc[kHolosymp].add(hs.pass ? 0.0 : 1.0, here);
  } catch (...) {
    acc[kHolosymp].fail(describe_active_exception(), here);
  }

  Reconstruction rec;
  try {
    rec = reconstruct_point(f, ptol);
  } catch (...) {
    fail_from(kTriple, describe_active_exception());
    return out;
  }
  const MetricDiagnostics& d = rec.diag;
  const QuaternionicTriple& t = rec.structure.triple;
  const SymplecticTriple& s = rec.structure.sympl;
  acc[kTriple].add(std::max(d.kappa_square, d.cross_check), here);
  acc[kKappaCompanion].add(d.kappa_companion, here);
  acc[kQuaternion].add(d.quaternion, here);
  acc[kCompatibility].add(std::max(d.compatibility, d.metric_reality), here);
  acc[kOmega3Type].add(d.omega3_type, here);
  acc[kChain].add(std::max(d.identity_chain, d.plus_presentation), here);
  acc[kRecovery].add(d.recovery, here);

  const Signature& sig = rec.structure.signature;
  out.signature = sig;
  const bool sig_ok = sig.zero == 0 && sig.positive % 4 == 0 && sig.negative % 4 == 0 &&
                      (!cfg.expected_signature || *cfg.expected_signature == sig);
  acc[kSignature].add(sig_ok ? 0.0 : 1.0, here);

  RotationFrameOptions ropt;
  ropt.holo_g_pairs = cfg.holo_g_pairs;
  ropt.seed = cfg.seed;
  ropt.tol = cfg.tol;

  auto guarded = [&](int check, const Location& loc, auto&& body) {
    try {
      acc[check].add(body(), loc);
    } catch (...) {
      acc[check].fail(describe_active_exception(), loc);
    }
  };

  for (cplx z : zetas) {
    Location loc{x, z, false, ""};
    guarded(kKappaLinearity, loc, [&] {
      const cplx one[1] = {z};
      return kappa_linearity_residual(f, one, ptol);
    });
    guarded(kRotation, loc, [&] {
      const RotationFrame fr = rotation_frame_unchecked(t, s, z, ropt);
      return std::max({fr.rescaled_residual, fr.quaternion_residual, fr.row_residual, fr.holo_g_residual});
    });
    guarded(kReality, loc, [&] { return std::max(varpi_reality_residual(f, z), antipodal_j_residual(t, z)); });
    guarded(kGraph, loc, [&] { return graph_residual(f, t, z, cfg.rank_tol); });
  }
  std::vector<TwistorParam> kz{TwistorParam(0.0), TwistorParam::infinity()};
  for (cplx z : zetas) kz.emplace_back(z);
  for (const TwistorParam& z : kz) {
    Location loc{x, z.is_infinite() ? std::nullopt : std::optional<cplx>(z.value()), z.is_infinite(), ""};
    guarded(kKernelDim, loc, [&] { return std::abs(kernel_dimension(f, z, cfg.rank_tol) - 2.0 * r); });
  }
  guarded(kGraph, here, [&] { return graph_residual(f, t, TwistorParam(0.0), cfg.rank_tol); });
  return out;
}

}  // namespace detail

// Extract (omega_+, omega_3) from the known structure, rebuild, and compare:
// relative metric error and absolute operator error, worst over the grid.
inline CheckRecord roundtrip_check(const std::function<PointTruth(const RVec&)>& truth, const ChartSpec& chart,
                                   double tol = 1e-8, const Tolerances& ptol = {}) {
  std::vector<detail::Accumulator> acc(chart.node_count());
  detail::parallel_for(chart.node_count(), [&](std::size_t k) {
    const RVec x = chart.node(k);
    Location loc{x, std::nullopt, false, ""};
    try {
      const PointTruth pt = truth(x);
      const HoloSympFamily f = extract_family(pt.triple, pt.sympl);
      const PointStructure ps = metric_from_family(f, ptol);
      double e = max_abs(RMat(ps.metric - pt.metric)) / std::max(max_abs(pt.metric), 1e-300);
      for (int a = 0; a < 3; ++a) e = std::max(e, max_abs(RMat(ps.triple[a] - pt.triple[a])));
      acc[k].add(e, loc);
    } catch (...) {
      acc[k].fail(detail::describe_active_exception(), loc);
    }
  });
  detail::Accumulator total;
  for (const auto& a : acc) total.merge(a);
  return total.record("roundtrip", anchor_of("roundtrip"), tol);
}

inline FieldReport verify_chart(const FamilyField& ff, const ChartSpec& chart, const VerifyConfig& cfg = {}) {
  chart.validate();
  if (chart.dim() != 4 * ff.r) throw InputError("verify_chart: chart dimension must be 4r");
  const std::vector<cplx> zetas = sample_zetas(cfg.seed, cfg.samples);

  const std::size_t count = chart.node_count();
  std::vector<detail::NodeResult> nodes(count);
  detail::parallel_for(count, [&](std::size_t k) { nodes[k] = detail::verify_node(ff, chart.node(k), zetas, cfg); });

  std::array<detail::Accumulator, detail::kPointCheckCount> total;
  FieldReport rep;
  std::optional<Signature> first;
  for (std::size_t k = 0; k < count; ++k) {
    for (int c = 0; c < detail::kPointCheckCount; ++c) total[c].merge(nodes[k].acc[c]);
    if (nodes[k].signature) {
      if (!first) first = nodes[k].signature;
      if (!(*first == *nodes[k].signature))
        total[detail::kSignature].add(1.0, Location{chart.node(k), std::nullopt, false, ""});
    }
  }
  rep.signature = first;

  const auto& cat = check_catalog();
  for (int c = 0; c < detail::kPointCheckCount; ++c) {
    const bool exact = c == detail::kHolosymp || c == detail::kSignature || c == detail::kKernelDim;
    rep.checks.push_back(total[c].record(cat[c].first, cat[c].second, exact ? 0.0 : cfg.tol));
  }

  detail::Accumulator closed;
  const struct {
    const FormField* f;
    FormPart part;
    const char* label;
  } forms[] = {{&ff.omega_plus, FormPart::real, "omega_1"},
               {&ff.omega_plus, FormPart::imag, "omega_2"},
               {&ff.omega_3, FormPart::full, "omega_3"}};
  for (const auto& fm : forms) closed.merge(detail::closedness_scan(*fm.f, chart, cfg.closed_h, cfg.closed_order, fm.part, fm.label));
  rep.checks.push_back(closed.record("closedness", kClosednessAnchor, cfg.closed_tol));

  rep.checks.push_back(nijenhuis_check(ff, chart, cfg.nijenhuis_zetas, cfg.nijenhuis_h, cfg.nijenhuis_tol,
                                       Tolerances{cfg.rank_tol, cfg.tol}));
  if (ff.truth)
    rep.checks.push_back(roundtrip_check(ff.truth, chart, cfg.roundtrip_tol, Tolerances{cfg.rank_tol, cfg.tol}));
  return rep;
}

struct MetricGrid {
  std::vector<RVec> points;
  std::vector<RMat> metric;
  std::vector<Signature> signature;
};

inline MetricGrid reconstruct_metric_field(const FamilyField& ff, const ChartSpec& chart, const Tolerances& tol = {}) {
  chart.validate();
  const std::size_t count = chart.node_count();
  MetricGrid out;
  out.points.resize(count);
  out.metric.resize(count);
  out.signature.resize(count);
  std::vector<std::exception_ptr> errors(count);
  detail::parallel_for(count, [&](std::size_t k) {
    const RVec x = chart.node(k);
    out.points[k] = x;
    try {
      try {
        PointStructure ps = metric_from_family(ff.at(x), tol);
        out.metric[k] = std::move(ps.metric);
        out.signature[k] = ps.signature;
      } catch (...) {
        detail::rethrow_at("at x = " + format_point(x));
      }
    } catch (...) {
      errors[k] = std::current_exception();
    }
  });
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

}  // namespace hk
