// End-to-end acceptance run: one PASS/FAIL line per criterion, nonzero exit
// status if any criterion fails.

#include <cstdio>
#include <functional>
#include <numbers>

#include "hk/cli.hpp"

using namespace hk;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

// Collects named maxima against thresholds.
class Tally {
 public:
  void bound(const std::string& what, double value, double limit) {
    if (!(value <= limit)) pass_ = false;
    note(what + " " + fmt(value) + (value <= limit ? " <= " : " > ") + fmt(limit));
  }
  void require(const std::string& what, bool ok) {
    if (!ok) {
      pass_ = false;
      note(what + " failed");
    }
  }
  void note(const std::string& s) { parts_.push_back(s); }
  Outcome done() const {
    std::string d;
    for (std::size_t i = 0; i < parts_.size(); ++i) d += (i ? "; " : "") + parts_[i];
    return {pass_, d};
  }

 private:
  static std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2e", v);
    return buf;
  }
  bool pass_ = true;
  std::vector<std::string> parts_;
};

std::string scratch(const std::string& name) { return std::string(HK_SCRATCH) + "/acceptance_" + name; }
std::string fixture(const std::string& name) { return std::string(HK_FIXTURES) + "/" + name; }

CVec random_type10(const RMat& j3, std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  const int n = static_cast<int>(j3.rows());
  CVec y(n);
  for (int i = 0; i < n; ++i) y(i) = cplx(nd(rng), nd(rng));
  const CVec a = 0.5 * (CMat::Identity(n, n) - I * j3.cast<cplx>()) * y;
  return a / a.norm();
}

const std::vector<cplx> kO2Nodes{cplx(1.0), cplx(2.0), cplx(0.0, 1.0),  cplx(1.0, 1.0),
                                 cplx(3.0), cplx(-1.0, 2.0), cplx(0.5, -1.0), cplx(-2.0, -0.5)};

ZooModel taub_nut() { return get_model("taub-nut"); }

// Sample points: the chart centre and two interior nodes.
std::vector<RVec> sample_points(const ChartSpec& c) {
  return {c.center(), c.node(c.node_count() / 3), c.node(2 * c.node_count() / 3)};
}

double worst_check(const FieldReport& rep, const std::string& name) {
  const CheckRecord* c = rep.find(name);
  return c ? c->residual : std::numeric_limits<double>::infinity();
}

Outcome flat_roundtrip() {
  Tally t;
  const ZooModel m = flat_hk(1);
  ChartSpec c = m.chart;
  c.grid.assign(4, 3);
  double err = 0.0;
  for (std::size_t k = 0; k < c.node_count(); ++k) {
    const PointTruth pt = m.truth(c.node(k));
    const PointStructure ps = metric_from_family(extract_family(pt.triple, pt.sympl));
    err = std::max(err, max_abs(RMat(ps.metric - RMat::Identity(4, 4))));
    for (int a = 0; a < 3; ++a) err = std::max(err, max_abs(RMat(ps.triple[a] - pt.triple[a])));
  }
  t.note(std::to_string(c.node_count()) + " nodes");
  t.bound("max residual", err, 1e-12);
  return t.done();
}

Outcome split_signature() {
  Tally t;
  const ZooModel m = flat_split(1, 1);
  VerifyConfig cfg;
  cfg.expected_signature = Signature{4, 4, 0};
  const FieldReport rep = verify_chart(m.family(), m.chart, cfg);
  for (const CheckRecord& c : rep.checks) t.require("check " + c.name, c.pass);
  const MetricGrid grid = reconstruct_metric_field(m.family(), m.chart);
  bool all = true;
  for (const Signature& s : grid.signature) all = all && s == Signature{4, 4, 0};
  t.require("signature (4,4) at every node", all);
  t.note(std::to_string(grid.signature.size()) + " nodes at signature (4,4)");
  t.bound("quaternion", worst_check(rep, "quaternion"), 1e-10);
  return t.done();
}

Outcome taub_nut_chart() {
  Tally t;
  const ZooModel m = gibbons_hawking(1.0, {Center{{0.0, 0.0, 0.0}, 0.5}}, default_chart("taub-nut", {}), "taub-nut");
  VerifyConfig cfg;
  cfg.closed_h = 1e-3;
  cfg.closed_tol = 1e-5;
  cfg.nijenhuis_h = 1e-4;
  cfg.nijenhuis_tol = 1e-4;
  cfg.nijenhuis_zetas = {cplx(0.0), cplx(1.0), cplx(0.0, 1.0), cplx(2.0)};
  cfg.expected_signature = Signature{4, 0, 0};
  const FieldReport rep = verify_chart(m.family(), m.chart, cfg);
  for (const CheckRecord& c : rep.checks) t.require("check " + c.name, c.pass);
  t.bound("closedness", worst_check(rep, "closedness"), 1e-5);
  t.bound("quaternion", worst_check(rep, "quaternion"), 1e-8);
  t.bound("compatibility", worst_check(rep, "compatibility"), 1e-8);
  t.bound("nijenhuis", worst_check(rep, "nijenhuis"), 1e-4);
  t.bound("roundtrip", worst_check(rep, "roundtrip"), 1e-8);
  return t.done();
}

Outcome hklr_agreement() {
  Tally t;
  const ZooModel models[] = {flat_hk(1), taub_nut()};
  std::mt19937_64 rng(2024);
  double worst = 0.0;
  int pairs = 0;
  for (const ZooModel& m : models) {
    for (const RVec& x : sample_points(m.chart)) {
      const HoloSympFamily f = m.family().at(x);
      const PointTruth truth = m.truth(x);
      const QuaternionicTriple tr = triple_from_family(f);
      for (int k = 0; k < 100; ++k) {
        const CVec a = random_type10(tr.j3, rng), b = random_type10(tr.j3, rng);
        const RVec xa = (a + a.conjugate()).real(), xb = (b + b.conjugate()).real();
        worst = std::max(worst, std::abs(hklr_metric(f, tr, a, b) - xa.dot(truth.metric * xb)));
        ++pairs;
      }
    }
  }
  t.note(std::to_string(pairs) + " pairs");
  t.bound("max |hklr - g|", worst, 1e-10);
  return t.done();
}

Outcome o2_polynomiality() {
  Tally t;
  const std::pair<ZooModel, double> cases[] = {{flat_hk(1), 1e-9}, {taub_nut(), 1e-7}};
  std::mt19937_64 rng(77);
  for (const auto& [m, limit] : cases) {
    double worst = 0.0;
    for (const RVec& x : sample_points(m.chart)) {
      const HoloSympFamily f = m.family().at(x);
      const QuaternionicTriple tr = triple_from_family(f);
      for (int k = 0; k < 20; ++k) {
        const CVec a = random_type10(tr.j3, rng), b = random_type10(tr.j3, rng);
        worst = std::max(worst, o2_polynomial_check(f, tr, a, b, kO2Nodes).extrapolation_residual);
      }
    }
    t.bound(m.name + " held-out residual", worst, limit);
  }
  return t.done();
}

Outcome antipodal() {
  Tally t;
  const std::vector<cplx> zs = sample_zetas(6, 20);
  for (const ZooModel& m : {flat_hk(1), taub_nut()}) {
    const RVec x = m.chart.center();
    const HoloSympFamily f = m.family().at(x);
    const QuaternionicTriple tr = triple_from_family(f);
    double varpi_res = 0.0, j_res = 0.0;
    for (cplx z : zs) {
      varpi_res = std::max(varpi_res, varpi_reality_residual(f, z));
      j_res = std::max(j_res, antipodal_j_residual(tr, z));
    }
    t.bound(m.name + " varpi reality", varpi_res, 1e-10);
    t.bound(m.name + " J antipodal", j_res, 1e-10);
  }
  return t.done();
}

Outcome rotation_frame_identities() {
  Tally t;
  const PointTruth pt = flat_hk(1).truth(RVec::Zero(4));
  RotationFrameOptions opt;
  opt.holo_g_pairs = 20;
  opt.seed = 9;
  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> dir(0.0, 2.0 * std::numbers::pi);
  double rescaled = 0.0, holo = 0.0, drift = 0.0;
  bool in_range = true;
  for (cplx z : sample_zetas(7, 10)) {
    const RotationFrame fr = rotation_frame_unchecked(pt.triple, pt.sympl, z, opt);
    rescaled = std::max(rescaled, fr.rescaled_residual);
    holo = std::max(holo, fr.holo_g_residual);
    in_range = in_range && fr.theta >= 0.0 && fr.theta < std::numbers::pi;
    const RotationFrame near = rotation_frame_unchecked(pt.triple, pt.sympl, z + std::polar(1e-8, dir(rng)), opt);
    const double d = std::abs(near.theta - fr.theta);
    drift = std::max(drift, std::min(d, std::numbers::pi - d));
  }
  t.bound("rescaled varpi", rescaled, 1e-10);
  t.bound("varpi(v, K conj w) - g", holo, 1e-10);
  t.require("theta in [0, pi)", in_range);
  t.bound("theta drift", drift, 1e-6);
  return t.done();
}

Outcome kappa_structure() {
  Tally t;
  const std::vector<cplx> zs = sample_zetas(8, 10);
  for (const ZooModel& m : {flat_hk(1), taub_nut()}) {
    const HoloSympFamily f = m.family().at(m.chart.center());
    const KappaResult k = kappa_with_diagnostics(f);
    double companion = k.companion_residual;
    for (cplx z : zs) companion = std::max(companion, detail::solve_kappa(f, z, Tolerances{}).companion_residual);
    const int n = f.dim();
    t.bound(m.name + " linearity", kappa_linearity_residual(f, zs), 1e-10);
    t.bound(m.name + " kappa^2 + 1", max_abs(RMat(k.kappa * k.kappa + RMat::Identity(n, n))), 1e-10);
    t.bound(m.name + " companion", companion, 1e-9);
  }
  return t.done();
}

Outcome kernel_dimension_all() {
  Tally t;
  const std::vector<cplx> zs = sample_zetas(11, 20);
  for (const std::string& name : list_models()) {
    const ZooModel m = get_model(name);
    bool ok = true;
    for (const RVec& x : sample_points(m.chart)) {
      const HoloSympFamily f = m.family().at(x);
      for (cplx z : zs) ok = ok && kernel_dimension(f, z, 1e-8) == 2 * m.r;
    }
    t.require(name + " dim ker = " + std::to_string(2 * m.r), ok);
    if (ok) t.note(name + " dim ker = " + std::to_string(2 * m.r));
  }
  return t.done();
}

bool check_failed(const std::string& report, const std::string& name) {
  const json j = json::parse(cli::read_file(report));
  for (const json& c : j["checks"])
    if (c["name"] == name) return c["pass"] == false;
  return false;
}

Outcome cli_contract() {
  Tally t;
  for (const std::string& name : list_models()) {
    const std::string file = scratch(name + ".json");
    const int z = cli::cmd_zoo(name, {}, file);
    const int v = z == 0 ? cli::cmd_verify(file, cli::VerifyOptions{std::nullopt, 4, 0, scratch(name + ".report.json")}) : -1;
    t.require("zoo -> verify " + name, z == 0 && v == 0);
  }
  const std::pair<const char*, const char*> corrupted[] = {{"nonclosed_flat.json", "closedness"},
                                                           {"corrupted_omega3.json", "triple"}};
  for (const auto& [file, check] : corrupted) {
    const std::string out = scratch(std::string(file) + ".report.json");
    const int rc = cli::cmd_verify(fixture(file), cli::VerifyOptions{std::nullopt, 4, 0, out});
    t.require(std::string(file) + " exits 1 failing " + check, rc == 1 && check_failed(out, check));
  }
  for (const char* file : {"missing_omega3.json", "bad_index_order.json", "bad_exponent_length.json", "bad_version.json"}) {
    const int rc = cli::cmd_verify(fixture(file), cli::VerifyOptions{std::nullopt, 4, 0, scratch("malformed.json")});
    t.require(std::string(file) + " exits 2", rc == 2);
  }
  std::string reports[2];
  for (int k = 0; k < 2; ++k) {
    const std::string out = scratch("stable" + std::to_string(k) + ".json");
    cli::cmd_verify(fixture("corrupted_omega3.json"), cli::VerifyOptions{std::nullopt, 4, 42, out});
    json j = json::parse(cli::read_file(out));
    j.erase("wall_time_s");
    reports[k] = dump_canonical(j);
  }
  t.require("byte-stable reports", reports[0] == reports[1]);
  t.note("4 models, 2 corrupted fixtures, 4 malformed fixtures, seeded rerun identical");
  return t.done();
}

}  // namespace

int main() {
  const std::pair<const char*, std::function<Outcome()>> criteria[] = {
      {"flat roundtrip", flat_roundtrip},
      {"split signature", split_signature},
      {"Taub-NUT chart verification", taub_nut_chart},
      {"HKLR agreement", hklr_agreement},
      {"O(2) polynomiality", o2_polynomiality},
      {"antipodal identities", antipodal},
      {"rotation frame", rotation_frame_identities},
      {"kappa structure", kappa_structure},
      {"kernel dimension", kernel_dimension_all},
      {"CLI contract", cli_contract},
  };
  int failures = 0;
  int index = 1;
  for (const auto& [name, run] : criteria) {
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failures;
    std::printf("%s %2d %s: %s\n", o.pass ? "PASS" : "FAIL", index++, name, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %d criteria passed\n", index - 1 - failures, index - 1);
  return failures == 0 ? 0 : 1;
}
