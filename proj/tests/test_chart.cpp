#include <catch_amalgamated.hpp>

#include <cstdlib>

#include "hk/zoo.hpp"
#include "oracles.hpp"

using namespace hk;

namespace {

Polynomial mono(int vars, double c, std::vector<int> e) { return Polynomial(vars, {{c, std::move(e)}}); }

EntryTerm real_entry(int i, int j, Polynomial re) { return EntryTerm{i, j, std::move(re), Polynomial(4), std::nullopt}; }

ChartSpec cube(double lo, double hi, int grid) {
  return ChartSpec{{}, std::vector<std::pair<double, double>>(4, {lo, hi}), std::vector<int>(4, grid)};
}

RMat rotation_03(double a) {
  RMat r = RMat::Identity(4, 4);
  r(0, 0) = r(3, 3) = std::cos(a);
  r(0, 3) = -std::sin(a);
  r(3, 0) = std::sin(a);
  return r;
}

// Scoped HK_THREADS override.
struct ThreadsEnv {
  explicit ThreadsEnv(const char* v) { setenv("HK_THREADS", v, 1); }
  ~ThreadsEnv() { unsetenv("HK_THREADS"); }
};

}  // namespace

TEST_CASE("chart nodes are row-major with the last axis fastest", "[chart]") {
  ChartSpec c{{"a", "b"}, {{0.0, 1.0}, {-2.0, 2.0}}, {3, 5}};
  REQUIRE_NOTHROW(c.validate());
  CHECK(c.node_count() == 15);
  CHECK(c.node(0) == (RVec(2) << 0.0, -2.0).finished());
  CHECK(c.node(1) == (RVec(2) << 0.0, -1.0).finished());
  CHECK(c.node(5) == (RVec(2) << 0.5, -2.0).finished());
  CHECK(c.node(14) == (RVec(2) << 1.0, 2.0).finished());
  CHECK(c.spacing(1) == 1.0);
  CHECK(c.contains(c.center()));
  CHECK_FALSE(c.contains((RVec(2) << 1.1, 0.0).finished()));

  ChartSpec bad = c;
  bad.grid = {2, 5};
  CHECK_THROWS_AS(bad.validate(), InputError);
  bad = c;
  bad.box[0] = {1.0, 1.0};
  CHECK_THROWS_AS(bad.validate(), InputError);
  bad = c;
  bad.coords = {"a"};
  CHECK_THROWS_AS(bad.validate(), InputError);
}

TEST_CASE("evaluating a polynomial form field", "[chart][field]") {
  const FormField f = FormField::from_entries(4, {real_entry(0, 1, mono(4, 1.0, {1, 0, 0, 0}))});
  const ChartSpec c = cube(-3.0, 3.0, 3);
  const TwoForm w = eval_field(f, c, (RVec(4) << 2.0, 0.0, 0.0, 0.0).finished());
  CHECK(w.matrix()(0, 1) == cplx(2.0));
  CHECK(w.matrix()(1, 0) == cplx(-2.0));
  CHECK(max_abs(CMat(w.matrix() - 2.0 * TwoForm::basis(4, 0, 1).matrix())) == 0.0);
  CHECK_THROWS_AS(eval_field(f, c, (RVec(4) << 4.0, 0.0, 0.0, 0.0).finished()), InputError);

  CHECK_THROWS_AS(FormField::from_entries(4, {real_entry(1, 0, mono(4, 1.0, {0, 0, 0, 0}))}), InputError);
  CHECK_THROWS_AS(FormField::from_entries(4, {real_entry(0, 1, mono(4, 1.0, {0, 0, 0, 0})),
                                              real_entry(0, 1, mono(4, 2.0, {0, 0, 0, 0}))}),
                  InputError);
  CHECK_THROWS_AS(Polynomial(4, {{1.0, {1, 0}}}), InputError);
}

TEST_CASE("exterior derivative of simple fields", "[chart][d]") {
  const ChartSpec c = cube(-1.0, 1.0, 3);
  const RVec x = (RVec(4) << 0.3, -0.2, 0.1, 0.5).finished();

  const FormField k = FormField::constant(TwoForm::basis(4, 0, 1) + TwoForm::basis(4, 2, 3));
  CHECK(exterior_derivative(k, c, x).max_abs() == 0.0);

  const FormField f = FormField::from_entries(4, {real_entry(1, 2, mono(4, 1.0, {1, 0, 0, 0}))});
  const ThreeForm d = exterior_derivative(f, c, x);
  CHECK(d(0, 1, 2) == cplx(1.0));
  CHECK(d(1, 0, 2) == cplx(-1.0));
  CHECK(d(2, 0, 1) == cplx(1.0));
  CHECK(std::abs(d(0, 1, 3)) == 0.0);
}

TEST_CASE("d of an exact polynomial form vanishes", "[chart][d]") {
  // F = d(x1 x2 dx0 + x0^2 x3 dx1 + x1^3 dx3)
  Polynomial f01(4, {{2.0, {1, 0, 0, 1}}, {-1.0, {0, 0, 1, 0}}});
  Polynomial f02 = mono(4, -1.0, {0, 1, 0, 0});
  Polynomial f13(4, {{3.0, {0, 2, 0, 0}}, {-1.0, {2, 0, 0, 0}}});
  const FormField f = FormField::from_entries(4, {real_entry(0, 1, f01), real_entry(0, 2, f02), real_entry(1, 3, f13)});
  const ChartSpec c = cube(-1.0, 1.0, 3);
  for (std::size_t i = 0; i < c.node_count(); ++i) CHECK(exterior_derivative(f, c, c.node(i)).max_abs() < 1e-14);

  // the same field as an opaque builtin goes through finite differences
  const FormField opaque = FormField::builtin("exact", 4, [f](const RVec& x) { return f.matrix(x); });
  const RVec x = (RVec(4) << 0.2, 0.4, -0.3, 0.1).finished();
  CHECK_FALSE(opaque.symbolic());
  CHECK(exterior_derivative(opaque, c, x, 1e-3, 2).max_abs() < 1e-9);
  CHECK(exterior_derivative(opaque, c, x, 1e-3, 4).max_abs() < 1e-9);
  CHECK_THROWS_AS(exterior_derivative(opaque, c, x, 1e-3, 3), InputError);
  const RVec edge = (RVec(4) << 1.0, 0.0, 0.0, 0.0).finished();
  CHECK_THROWS_AS(exterior_derivative(opaque, c, edge, 1e-3, 2), InputError);
}

TEST_CASE("finite-difference order is visible under step halving", "[chart][d]") {
  // F = sin(x0) e12, dF_{012} = cos(x0)
  const FormField f = FormField::builtin("sine", 4, [](const RVec& x) {
    CMat m = CMat::Zero(4, 4);
    m(1, 2) = std::sin(x(0));
    m(2, 1) = -m(1, 2);
    return m;
  });
  const ChartSpec c = cube(-1.0, 1.0, 3);
  const RVec x = (RVec(4) << 0.4, 0.0, 0.0, 0.0).finished();
  auto err = [&](double h, int order) { return std::abs(exterior_derivative(f, c, x, h, order)(0, 1, 2) - std::cos(0.4)); };
  const double r2 = err(0.02, 2) / err(0.01, 2);
  const double r4 = err(0.04, 4) / err(0.02, 4);
  CHECK(r2 == Catch::Approx(4.0).epsilon(0.02));
  CHECK(r4 == Catch::Approx(16.0).epsilon(0.05));
}

TEST_CASE("closedness check", "[chart][closedness]") {
  const ZooModel flat = flat_hk(1);
  const CheckRecord ok = closedness_check(flat.w1, flat.chart);
  CHECK(ok.pass);
  CHECK(ok.residual == 0.0);
  CHECK(ok.anchor == kClosednessAnchor);

  // omega_1 + x0 e23 has d = e0 ^ e2 ^ e3
  const FormField corrupt =
      FormField::combination({{1.0, flat.w1}, {1.0, FormField::from_entries(4, {real_entry(2, 3, mono(4, 1.0, {1, 0, 0, 0}))})}});
  const CheckRecord bad = closedness_check(corrupt, flat.chart, 1e-3, 1e-5, 2, "omega_1");
  CHECK_FALSE(bad.pass);
  CHECK(bad.residual == Catch::Approx(1.0));
  REQUIRE(bad.worst);
  CHECK(bad.worst->form == "omega_1");
  CHECK(flat.chart.contains(bad.worst->point));
}

TEST_CASE("rational fields", "[chart][field]") {
  // F01 = x1 / (x0 - 3)
  EntryTerm t{0, 1, mono(4, 1.0, {0, 1, 0, 0}), Polynomial(4),
              Polynomial(4, {{1.0, {1, 0, 0, 0}}, {-3.0, {0, 0, 0, 0}}})};
  const FormField f = FormField::from_entries(4, {t});
  CHECK(f.kind() == FormField::Kind::rational);
  const ChartSpec c = cube(-1.0, 1.0, 3);
  REQUIRE_NOTHROW(check_poles(f, c));
  const RVec x = (RVec(4) << 0.5, 0.7, 0.0, 0.0).finished();
  CHECK(std::abs(f.matrix(x)(0, 1) - 0.7 / (0.5 - 3.0)) < 1e-15);
  CHECK(std::abs(f.partial(x, 0)(0, 1) + 0.7 / std::pow(0.5 - 3.0, 2)) < 1e-15);
  CHECK(std::abs(f.partial(x, 1)(0, 1) - 1.0 / (0.5 - 3.0)) < 1e-15);
  CHECK(f.partial(x, 2).norm() == 0.0);

  EntryTerm p{0, 1, mono(4, 1.0, {0, 0, 0, 0}), Polynomial(4), mono(4, 1.0, {1, 0, 0, 0})};
  const FormField pole = FormField::from_entries(4, {p});
  try {
    check_poles(pole, c, "omega_3");
    FAIL("expected a pole error");
  } catch (const InputError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("omega_3[0,1]") != std::string::npos);
    CHECK(msg.find("x = (0,") != std::string::npos);
  }
}

TEST_CASE("sampled grid fields interpolate multilinearly", "[chart][field]") {
  const ChartSpec c = cube(0.0, 2.0, 3);
  auto value = [](const RVec& x) {
    CMat m = CMat::Zero(4, 4);
    m(0, 1) = cplx(1.0 + x(0) - 2.0 * x(3), x(2));
    m(1, 0) = -m(0, 1);
    return m;
  };
  std::vector<CMat> vals;
  for (std::size_t i = 0; i < c.node_count(); ++i) vals.push_back(value(c.node(i)));
  const FormField f = FormField::sampled(c, vals);
  CHECK(f.kind() == FormField::Kind::grid);
  const RVec x = (RVec(4) << 0.3, 1.7, 0.9, 1.25).finished();
  CHECK(max_abs(CMat(f.matrix(x) - value(x))) < 1e-14);
  REQUIRE(f.fixed_step(0));
  CHECK(*f.fixed_step(0) == 1.0);
  vals.pop_back();
  CHECK_THROWS_AS(FormField::sampled(c, vals), InputError);
}

TEST_CASE("Nijenhuis tensor of explicit almost-complex fields", "[chart][nijenhuis]") {
  const ChartSpec c = cube(-0.5, 0.5, 3);
  const RMat j0 = flat_hk(1).truth(RVec::Zero(4)).triple.j1;
  const CheckRecord flat = nijenhuis_check([&](const RVec&) { return j0; }, c);
  CHECK(flat.pass);
  CHECK(flat.residual == 0.0);

  // pulled back along phi(x) = (x0 + x1^2, x1, x2, x3 + x2^2): integrable
  auto pulled = [&](const RVec& x) {
    RMat dphi = RMat::Identity(4, 4);
    dphi(0, 1) = 2.0 * x(1);
    dphi(3, 2) = 2.0 * x(2);
    return RMat(dphi.inverse() * j0 * dphi);
  };
  CHECK(nijenhuis_check(pulled, c).residual < 1e-6);

  // conjugated pointwise by a rotation in the (0,3) plane depending on x1: not integrable
  auto twisted = [&](const RVec& x) {
    const RMat r = rotation_03(x(1));
    return RMat(r.transpose() * j0 * r);
  };
  const CheckRecord bad = nijenhuis_check(twisted, c);
  CHECK_FALSE(bad.pass);
  CHECK(bad.residual > 0.1);
}

TEST_CASE("Nijenhuis check on model families", "[chart][nijenhuis]") {
  const std::vector<cplx> zetas{cplx(0.0), cplx(1.0), cplx(0.0, 1.0), cplx(2.0)};
  const ZooModel flat = flat_hk(1);
  CHECK(nijenhuis_check(flat.family(), flat.chart, zetas).residual < 1e-12);
  const ZooModel tn = get_model("taub-nut", {{"grid", 3}});
  const CheckRecord rec = nijenhuis_check(tn.family(), tn.chart, zetas);
  CHECK(rec.pass);
  CHECK(rec.residual < 1e-6);
}

TEST_CASE("verify_chart on the flat model", "[chart][verify]") {
  const ZooModel m = flat_hk(1);
  const FieldReport rep = verify_chart(m.family(), m.chart);
  for (const CheckRecord& c : rep.checks) {
    INFO(c.name << " residual " << c.residual << " " << c.error);
    CHECK(c.pass);
  }
  REQUIRE(rep.signature);
  CHECK(*rep.signature == Signature{4, 0, 0});
  CHECK(rep.checks.size() == check_catalog().size());
  for (std::size_t i = 0; i < rep.checks.size(); ++i) {
    CHECK(rep.checks[i].name == check_catalog()[i].first);
    CHECK(rep.checks[i].anchor == check_catalog()[i].second);
  }
}

TEST_CASE("verify_chart on Taub-NUT", "[chart][verify]") {
  const ZooModel m = get_model("taub-nut", {{"grid", 3}});
  VerifyConfig cfg;
  cfg.expected_signature = m.expected_signature;
  const FieldReport rep = verify_chart(m.family(), m.chart, cfg);
  for (const CheckRecord& c : rep.checks) {
    INFO(c.name << " residual " << c.residual << " " << c.error);
    CHECK(c.pass);
  }
  cfg.expected_signature = Signature{0, 4, 0};
  CHECK_FALSE(verify_chart(m.family(), m.chart, cfg).find("signature")->pass);
}

TEST_CASE("verify_chart reports the failing identity for a corrupted omega_3", "[chart][verify]") {
  const ZooModel m = flat_hk(1);
  FamilyField ff = m.family();
  ff.omega_3 = FormField::combination({{1.0, m.w3}, {0.1, m.w1}});
  ff.truth = nullptr;
  const FieldReport rep = verify_chart(ff, m.chart);
  CHECK(rep.find("holosymp")->pass);
  const CheckRecord* triple = rep.find("triple");
  CHECK_FALSE(triple->pass);
  CHECK(triple->error.find("kappa") != std::string::npos);
  REQUIRE(triple->worst);
  CHECK_FALSE(rep.find("graph_property")->pass);
  CHECK(rep.find("closedness")->pass);
  CHECK(rep.find("roundtrip") == nullptr);
}

TEST_CASE("reports do not depend on the thread count", "[chart][determinism]") {
  const ZooModel m = get_model("taub-nut", {{"grid", 3}});
  FieldReport one, many;
  {
    ThreadsEnv env("1");
    one = verify_chart(m.family(), m.chart);
  }
  {
    ThreadsEnv env("3");
    many = verify_chart(m.family(), m.chart);
  }
  REQUIRE(one.checks.size() == many.checks.size());
  for (std::size_t i = 0; i < one.checks.size(); ++i) {
    INFO(one.checks[i].name);
    CHECK(one.checks[i].residual == many.checks[i].residual);
    REQUIRE(one.checks[i].worst.has_value() == many.checks[i].worst.has_value());
    if (one.checks[i].worst) CHECK(one.checks[i].worst->point == many.checks[i].worst->point);
  }
}

TEST_CASE("reconstructed Taub-NUT metric matches the component formula", "[chart][metric][oracle]") {
  const ZooModel m = get_model("taub-nut", {{"grid", 3}});
  const MetricGrid grid = reconstruct_metric_field(m.family(), m.chart);
  REQUIRE(grid.metric.size() == m.chart.node_count());
  for (std::size_t k = 0; k < grid.points.size(); ++k) {
    const RVec& x = grid.points[k];
    const RMat want = oracle::taub_nut_metric(1.0, 0.5, x(1), x(2), x(3));
    CHECK(max_abs(RMat(grid.metric[k] - want)) / max_abs(want) < 1e-8);
    CHECK(grid.signature[k] == Signature{4, 0, 0});
  }
}

TEST_CASE("reconstruct_metric_field names the failing node", "[chart][metric]") {
  const ZooModel m = flat_hk(1);
  FamilyField ff = m.family();
  ff.omega_3 = FormField::combination({{1.0, m.w3}, {0.1, m.w1}});
  try {
    reconstruct_metric_field(ff, m.chart);
    FAIL("expected InconsistentFamilyError");
  } catch (const InconsistentFamilyError& e) {
    CHECK(std::string(e.what()).find("at x = (-1, -1, -1, -1)") == 0);
  }
}

TEST_CASE("roundtrip check", "[chart]") {
  const ZooModel m = get_model("eguchi-hanson", {{"grid", 3}});
  const CheckRecord rec = roundtrip_check(m.truth, m.chart);
  CHECK(rec.pass);
  CHECK(rec.residual < 1e-9);
}
