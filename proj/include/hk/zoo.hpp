#pragma once

// Closed-form pseudo-hyper-Kaehler models with known (J1, J2, J3, g).

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "hk/chart.hpp"

namespace hk {

struct ZooModel {
  std::string name;
  std::map<std::string, double> params;  // fully defaulted
  int r = 1;
  ChartSpec chart;
  FormField w1, w2, w3;
  std::function<PointTruth(const RVec&)> truth;
  Signature expected_signature;

  FamilyField family() const { return FamilyField{r, FormField::combination({{1.0, w1}, {I, w2}}), w3, truth}; }
};

namespace detail {

inline ChartSpec cube_chart(int dim, double lo, double hi, int grid) {
  ChartSpec c;
  for (int a = 0; a < dim; ++a) {
    c.coords.push_back("x" + std::to_string(a));
    c.box.emplace_back(lo, hi);
    c.grid.push_back(grid);
  }
  return c;
}

// Standard block on (x0, x1, x2, x3), scaled by `sign` on block `b`.
inline std::array<RMat, 3> quaternionic_blocks(const std::vector<int>& signs) {
  const int n = 4 * static_cast<int>(signs.size());
  std::array<RMat, 3> w{RMat::Zero(n, n), RMat::Zero(n, n), RMat::Zero(n, n)};
  auto put = [](RMat& m, int i, int j, double v) {
    m(i, j) += v;
    m(j, i) -= v;
  };
  for (std::size_t b = 0; b < signs.size(); ++b) {
    const int o = 4 * static_cast<int>(b);
    const double s = signs[b];
    put(w[0], o + 0, o + 1, s);
    put(w[0], o + 2, o + 3, s);
    put(w[1], o + 0, o + 2, s);
    put(w[1], o + 3, o + 1, s);
    put(w[2], o + 0, o + 3, s);
    put(w[2], o + 1, o + 2, s);
  }
  return w;
}

inline PointTruth truth_from_forms(const RMat& g, const std::array<RMat, 3>& w) {
  PointTruth t;
  const RMat ginv = g.inverse();
  t.triple.j1 = -ginv * w[0];
  t.triple.j2 = -ginv * w[1];
  t.triple.j3 = -ginv * w[2];
  t.metric = g;
  t.sympl = {TwoForm(w[0]), TwoForm(w[1]), TwoForm(w[2])};
  return t;
}

// Load-time validation of a model on its chart.
inline void self_validate(const ZooModel& m, int fd_order, double closed_tol) {
  const FormField* forms[] = {&m.w1, &m.w2, &m.w3};
  const bool constant = std::all_of(std::begin(forms), std::end(forms),
                                    [](const FormField* f) { return f->kind() == FormField::Kind::constant; });
  const std::size_t nodes = constant ? 1 : m.chart.node_count();
  for (std::size_t k = 0; k < nodes; ++k) {
    const RVec x = m.chart.node(k);
    const PointTruth t = m.truth(x);
    const double q = quaternion_residual(t.triple);
    if (q > 1e-9) throw Error(m.name + ": quaternion relations fail at " + format_point(x));
    const Signature sig = signature_of(t.metric);
    if (!(sig == m.expected_signature)) throw Error(m.name + ": unexpected metric signature at " + format_point(x));
  }
  if (constant) return;
  for (const FormField* f : forms) {
    const CheckRecord c = closedness_check(*f, m.chart, 1e-3, closed_tol, fd_order);
    if (!c.pass) throw Error(m.name + ": forms are not closed on the chart (" + std::to_string(c.residual) + ")");
  }
}

}  // namespace detail

// Block-diagonal flat model: r_plus standard blocks followed by r_minus
// blocks with all three forms negated.
inline ZooModel flat_split(int r_plus, int r_minus) {
  if (r_plus < 0 || r_minus < 0 || r_plus + r_minus < 1) throw InputError("flat_split: need r_plus + r_minus >= 1");
  std::vector<int> signs(static_cast<std::size_t>(r_plus), 1);
  signs.insert(signs.end(), static_cast<std::size_t>(r_minus), -1);
  const int r = r_plus + r_minus;
  const int n = 4 * r;
  const std::array<RMat, 3> w = detail::quaternionic_blocks(signs);
  RMat g = RMat::Zero(n, n);
  for (int i = 0; i < n; ++i) g(i, i) = signs[static_cast<std::size_t>(i / 4)];
  const PointTruth pt = detail::truth_from_forms(g, w);

  ZooModel m;
  m.name = r_minus == 0 ? "flat" : "flat-split";
  if (r_minus == 0)
    m.params = {{"r", static_cast<double>(r)}};
  else
    m.params = {{"r_minus", static_cast<double>(r_minus)}, {"r_plus", static_cast<double>(r_plus)}};
  m.r = r;
  m.chart = detail::cube_chart(n, -1.0, 1.0, 3);
  m.w1 = FormField::constant(TwoForm(w[0]));
  m.w2 = FormField::constant(TwoForm(w[1]));
  m.w3 = FormField::constant(TwoForm(w[2]));
  m.truth = [pt](const RVec&) { return pt; };
  m.expected_signature = Signature{4 * r_plus, 4 * r_minus, 0};
  detail::self_validate(m, 2, 1e-14);
  return m;
}

inline ZooModel flat_hk(int r) {
  if (r < 1) throw InputError("flat_hk: need r >= 1");
  return flat_split(r, 0);
}

struct Center {
  std::array<double, 3> position{};
  double mass = 0.0;
};

// Multi-center Gibbons-Hawking metric on (t, x1, x2, x3):
//   V = epsilon + sum m / |x - p|,   theta = dt + A,
//   A = sum m (X dY - Y dX) / (R (R + Z)) in coordinates relative to each center,
//   omega_a = theta ^ dx^a + V dx^b ^ dx^c   (a, b, c cyclic),
//   g = theta^2 / V + V |dx|^2.
// Each center's A is singular on the half-line below it, which the chart must avoid.
class GibbonsHawking {
 public:
  GibbonsHawking(double epsilon, std::vector<Center> centers) : eps_(epsilon), centers_(std::move(centers)) {
    if (!(eps_ >= 0.0)) throw InputError("gibbons_hawking: epsilon must be nonnegative");
    if (centers_.empty() && eps_ == 0.0) throw InputError("gibbons_hawking: V vanishes identically");
    for (const Center& c : centers_)
      if (!(c.mass > 0.0)) throw InputError("gibbons_hawking: masses must be positive");
    // canonical order so that permuted input gives bit-identical sums
    std::sort(centers_.begin(), centers_.end(), [](const Center& a, const Center& b) {
      if (a.position != b.position) return a.position < b.position;
      return a.mass < b.mass;
    });
  }

  double potential(const RVec& x) const {
    double v = eps_;
    for (const Center& c : centers_) v += c.mass / std::sqrt(sq(x(1) - c.position[0]) + sq(x(2) - c.position[1]) + sq(x(3) - c.position[2]));
    return v;
  }

  std::array<double, 3> connection(const RVec& x) const {
    std::array<double, 3> a{0.0, 0.0, 0.0};
    for (const Center& c : centers_) {
      const double X = x(1) - c.position[0], Y = x(2) - c.position[1], Z = x(3) - c.position[2];
      const double R = std::sqrt(X * X + Y * Y + Z * Z);
      const double k = c.mass / (R * (R + Z));
      a[0] += -k * Y;
      a[1] += k * X;
    }
    return a;
  }

  std::array<RMat, 3> forms(const RVec& x) const {
    const double v = potential(x);
    const auto a = connection(x);
    const RVec theta = (RVec(4) << 1.0, a[0], a[1], a[2]).finished();
    std::array<RMat, 3> w;
    for (int al = 0; al < 3; ++al) {
      RMat m = RMat::Zero(4, 4);
      const int e = 1 + al, b = 1 + (al + 1) % 3, c = 1 + (al + 2) % 3;
      for (int i = 0; i < 4; ++i) {
        m(i, e) += theta(i);
        m(e, i) -= theta(i);
      }
      m(b, c) += v;
      m(c, b) -= v;
      w[al] = m;
    }
    return w;
  }

  RMat metric(const RVec& x) const {
    const double v = potential(x);
    const auto a = connection(x);
    const RVec theta = (RVec(4) << 1.0, a[0], a[1], a[2]).finished();
    RMat g = theta * theta.transpose() / v;
    for (int i = 1; i < 4; ++i) g(i, i) += v;
    return g;
  }

  double epsilon() const { return eps_; }
  const std::vector<Center>& centers() const { return centers_; }

  // Throws unless the box stays clear of every center and every string.
  void check_chart(const ChartSpec& chart) const {
    if (chart.dim() != 4) throw InputError("gibbons_hawking: chart must be 4-dimensional");
    for (const Center& c : centers_) {
      double dist2 = 0.0;
      bool over_string = true;
      for (int k = 0; k < 3; ++k) {
        const auto [lo, hi] = chart.box[k + 1];
        const double p = c.position[k];
        const double d = p < lo ? lo - p : (p > hi ? p - hi : 0.0);
        dist2 += d * d;
        if (k < 2 && d > 0.0) over_string = false;
      }
      if (dist2 < 1e-12) throw InputError("gibbons_hawking: chart box contains a center");
      if (over_string && chart.box[3].first <= c.position[2])
        throw InputError("gibbons_hawking: chart box meets the Dirac string below a center");
    }
  }

 private:
  static double sq(double v) { return v * v; }
  double eps_;
  std::vector<Center> centers_;
};

inline ZooModel gibbons_hawking(double epsilon, const std::vector<Center>& centers, const ChartSpec& chart,
                                std::string name = "gibbons-hawking", std::map<std::string, double> params = {}) {
  chart.validate();
  auto gh = std::make_shared<const GibbonsHawking>(epsilon, centers);
  gh->check_chart(chart);
  ZooModel m;
  m.name = std::move(name);
  m.params = std::move(params);
  m.r = 1;
  m.chart = chart;
  for (int al = 0; al < 3; ++al) {
    FormField f = FormField::builtin(m.name + "/omega_" + std::to_string(al + 1), 4, [gh, al](const RVec& x) {
      return CMat(gh->forms(x)[static_cast<std::size_t>(al)].cast<cplx>());
    });
    (al == 0 ? m.w1 : al == 1 ? m.w2 : m.w3) = std::move(f);
  }
  m.truth = [gh](const RVec& x) { return detail::truth_from_forms(gh->metric(x), gh->forms(x)); };
  m.expected_signature = Signature{4, 0, 0};
  detail::self_validate(m, 4, 1e-6);
  return m;
}

inline std::vector<std::string> list_models() { return {"eguchi-hanson", "flat", "flat-split", "taub-nut"}; }

inline ChartSpec default_chart(const std::string& name, const std::map<std::string, double>& params) {
  auto grid = [&](int def) {
    auto it = params.find("grid");
    return it == params.end() ? def : static_cast<int>(it->second);
  };
  if (name == "taub-nut") {
    ChartSpec c{{"t", "x1", "x2", "x3"}, {{0.0, 1.0}, {1.0, 2.0}, {1.0, 2.0}, {1.0, 2.0}}, std::vector<int>(4, grid(5))};
    return c;
  }
  if (name == "eguchi-hanson") {
    ChartSpec c{{"t", "x1", "x2", "x3"}, {{0.0, 1.0}, {1.0, 2.0}, {1.0, 2.0}, {-0.5, 0.5}}, std::vector<int>(4, grid(5))};
    return c;
  }
  int r = 1;
  if (name == "flat") r = static_cast<int>(params.at("r"));
  if (name == "flat-split") r = static_cast<int>(params.at("r_plus") + params.at("r_minus"));
  return detail::cube_chart(4 * r, -1.0, 1.0, grid(3));
}

namespace detail {

inline std::map<std::string, double> defaulted(const std::string& name, std::map<std::string, double> p) {
  std::map<std::string, double> def;
  if (name == "flat") def = {{"r", 1}};
  else if (name == "flat-split") def = {{"r_plus", 1}, {"r_minus", 1}};
  else if (name == "taub-nut") def = {{"mass", 0.5}, {"epsilon", 1.0}};
  else if (name == "eguchi-hanson") def = {{"mass", 0.5}, {"separation", 1.0}, {"epsilon", 0.0}};
  else throw InputError("unknown model '" + name + "'");
  for (const auto& [k, v] : p) {
    if (k == "grid") continue;
    if (!def.count(k)) throw InputError("model '" + name + "': unknown parameter '" + k + "'");
    if (!std::isfinite(v)) throw InputError("model '" + name + "': parameter '" + k + "' must be finite");
    def[k] = v;
  }
  return def;
}

inline int as_count(double v, const std::string& what) {
  if (v != std::floor(v) || v < 0 || v > 64) throw InputError(what + " must be a small nonnegative integer");
  return static_cast<int>(v);
}

}  // namespace detail

// Registry access. `chart` overrides the model's default box and grid; the
// "grid" parameter only affects the default chart.
inline ZooModel get_model(const std::string& name, const std::map<std::string, double>& params = {},
                          const std::optional<ChartSpec>& chart = std::nullopt) {
  const auto p = detail::defaulted(name, params);
  const ChartSpec c = chart ? *chart : default_chart(name, [&] {
    auto q = p;
    if (params.count("grid")) q["grid"] = params.at("grid");
    return q;
  }());
  ZooModel m;
  if (name == "flat" || name == "flat-split") {
    m = name == "flat" ? flat_hk(detail::as_count(p.at("r"), "r"))
                       : flat_split(detail::as_count(p.at("r_plus"), "r_plus"), detail::as_count(p.at("r_minus"), "r_minus"));
    c.validate();
    if (c.dim() != 4 * m.r) throw InputError("chart: dimension must be 4r");
    m.chart = c;
  } else if (name == "taub-nut") {
    m = gibbons_hawking(p.at("epsilon"), {Center{{0.0, 0.0, 0.0}, p.at("mass")}}, c, name, p);
  } else {
    const double h = 0.5 * p.at("separation");
    m = gibbons_hawking(p.at("epsilon"), {Center{{0.0, 0.0, h}, p.at("mass")}, Center{{0.0, 0.0, -h}, p.at("mass")}}, c,
                        name, p);
  }
  m.name = name;
  m.params = p;
  return m;
}

}  // namespace hk
