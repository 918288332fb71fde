#pragma once

// Command implementations behind the `hk` executable. Each returns the
// process exit code: 0 when every check passes, 1 when a mathematical check
// fails, 2 for malformed input or configuration.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include "hk/io.hpp"

namespace hk::cli {

struct VerifyOptions {
  std::optional<double> tol;
  int samples = 4;
  std::uint64_t seed = 0;
  std::string out;
};

struct SweepOptions {
  int zeta_grid = 8;
  std::string point;
  std::string out;
};

struct SectionsOptions {
  int count = 100;
  std::uint64_t seed = 0;
  std::string point;
  std::string out;
  double tol = 1e-9;
  double hklr_tol = 1e-10;
};

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read '" + path + "'");
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void write_output(const std::string& out, const std::string& text) {
  if (out.empty() || out == "-") {
    std::cout << text;
    std::cout.flush();
    return;
  }
  std::ofstream f(out, std::ios::binary);
  if (!f) throw InputError("cannot write '" + out + "'");
  f << text;
  if (!f) throw InputError("failed writing '" + out + "'");
}

// Maps exceptions onto the exit-code contract.
template <class F>
int guarded(F&& body, std::ostream& err = std::cerr) {
  try {
    return body();
  } catch (const InputError& e) {
    err << "hk: input error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    err << "hk: check failed: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "hk: error: " << e.what() << "\n";
    return 1;
  }
}

inline RVec parse_point(const std::string& text, const ChartSpec& chart) {
  if (text.empty()) return chart.center();
  std::vector<double> vals;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      std::size_t used = 0;
      const double v = std::stod(tok, &used);
      while (used < tok.size() && std::isspace(static_cast<unsigned char>(tok[used]))) ++used;
      if (used != tok.size()) throw std::invalid_argument(tok);
      vals.push_back(v);
    } catch (const std::exception&) {
      throw InputError("--point: cannot parse '" + tok + "'");
    }
  }
  if (static_cast<int>(vals.size()) != chart.dim())
    throw InputError("--point: expected " + std::to_string(chart.dim()) + " coordinates");
  RVec x = Eigen::Map<RVec>(vals.data(), static_cast<Eigen::Index>(vals.size()));
  if (!chart.contains(x)) throw InputError("--point: " + format_point(x) + " is outside the chart box");
  return x;
}

inline json zetas_json(const std::vector<cplx>& zs) {
  json a = json::array();
  for (cplx z : zs) a.push_back(json::array({z.real(), z.imag()}));
  return a;
}

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

inline int cmd_verify(const std::string& path, const VerifyOptions& opt) {
  return guarded([&] {
    const auto t0 = std::chrono::steady_clock::now();
    const std::string text = read_file(path);
    const StructureFile sf = parse_structure_text(text);
    if (opt.samples < 0) throw InputError("--samples: must be nonnegative");
    if (opt.tol && !(*opt.tol > 0.0)) throw InputError("--tol: must be positive");
    const LoadedStructure ls = load_structure(sf);
    VerifyConfig cfg;
    if (opt.tol) cfg.tol = *opt.tol;
    cfg.samples = opt.samples;
    cfg.seed = opt.seed;
    cfg.expected_signature = ls.expected_signature;
    const FieldReport rep = verify_chart(ls.family, ls.chart, cfg);
    json config{{"tol", cfg.tol},
                {"closed_tol", cfg.closed_tol},
                {"closed_h", cfg.closed_h},
                {"closed_order", cfg.closed_order},
                {"nijenhuis_tol", cfg.nijenhuis_tol},
                {"nijenhuis_h", cfg.nijenhuis_h},
                {"nijenhuis_zetas", zetas_json(cfg.nijenhuis_zetas)},
                {"samples", cfg.samples},
                {"rank_tol", cfg.rank_tol},
                {"roundtrip_tol", cfg.roundtrip_tol}};
    json doc = report_json("verify", fnv1a64_hex(text), opt.seed, config, rep.checks, seconds_since(t0));
    doc["signature"] = rep.signature ? signature_json(*rep.signature) : json(nullptr);
    write_output(opt.out, dump_canonical(doc));
    return rep.pass() ? 0 : 1;
  });
}

inline int cmd_reconstruct(const std::string& path, const std::string& out) {
  return guarded([&] {
    const auto t0 = std::chrono::steady_clock::now();
    const std::string text = read_file(path);
    const StructureFile sf = parse_structure_text(text);
    const LoadedStructure ls = load_structure(sf);
    const MetricGrid grid = reconstruct_metric_field(ls.family, ls.chart);
    json points = json::array();
    std::optional<Signature> constant = grid.signature.empty() ? std::nullopt : std::optional(grid.signature.front());
    double truth_error = 0.0;
    for (std::size_t k = 0; k < grid.points.size(); ++k) {
      json rows = json::array();
      const RMat& g = grid.metric[k];
      for (Eigen::Index i = 0; i < g.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < g.cols(); ++j) row.push_back(g(i, j));
        rows.push_back(std::move(row));
      }
      points.push_back(json{{"x", point_json(grid.points[k])}, {"g", rows}, {"signature", signature_json(grid.signature[k])}});
      if (constant && !(*constant == grid.signature[k])) constant.reset();
      if (ls.family.truth) {
        const RMat gt = ls.family.truth(grid.points[k]).metric;
        truth_error = std::max(truth_error, max_abs(RMat(g - gt)) / std::max(max_abs(gt), 1e-300));
      }
    }
    json doc{{"tool", kToolName},
             {"version", kToolVersion},
             {"command", "reconstruct"},
             {"input_digest", fnv1a64_hex(text)},
             {"points", points},
             {"signature", constant ? signature_json(*constant) : json(nullptr)},
             {"wall_time_s", seconds_since(t0)}};
    if (ls.family.truth) doc["truth_relative_error"] = truth_error;
    write_output(out, dump_canonical(doc));
    return 0;
  });
}

// Cell-centred grid on the sphere: N bands equal in area, N longitudes.
inline std::vector<cplx> sphere_grid(int n) {
  std::vector<cplx> out;
  for (int i = 0; i < n; ++i) {
    const double c3 = 1.0 - 2.0 * (i + 0.5) / n;
    const double rho = std::sqrt(std::max(0.0, 1.0 - c3 * c3));
    for (int j = 0; j < n; ++j) {
      const double phi = 2.0 * std::numbers::pi * (j + 0.5) / n;
      out.push_back(inverse_stereographic({rho * std::cos(phi), rho * std::sin(phi), c3}).value());
    }
  }
  return out;
}

inline int cmd_sweep(const std::string& path, const SweepOptions& opt) {
  return guarded([&] {
    if (opt.zeta_grid < 1 || opt.zeta_grid > 4096) throw InputError("--zeta-grid: must be between 1 and 4096");
    const StructureFile sf = parse_structure_text(read_file(path));
    const LoadedStructure ls = load_structure(sf);
    const RVec x = parse_point(opt.point, ls.chart);
    const HoloSympFamily f = ls.family.at(x);
    const Reconstruction rec = reconstruct_point(f);
    const QuaternionicTriple& t = rec.structure.triple;
    const SymplecticTriple& s = rec.structure.sympl;
    std::string csv = "zeta_re,zeta_im,check,value\n";
    char buf[160];
    for (cplx z : sphere_grid(opt.zeta_grid)) {
      const RotationFrame fr = rotation_frame_unchecked(t, s, z);
      const double frame = std::max({fr.rescaled_residual, fr.quaternion_residual, fr.row_residual, fr.holo_g_residual});
      const double reality = std::max(varpi_reality_residual(f, z), antipodal_j_residual(t, z));
      std::snprintf(buf, sizeof buf, "%.17g,%.17g,kernel_dim,%d\n", z.real(), z.imag(), kernel_dimension(f, z));
      csv += buf;
      std::snprintf(buf, sizeof buf, "%.17g,%.17g,reality,%.17g\n", z.real(), z.imag(), reality);
      csv += buf;
      std::snprintf(buf, sizeof buf, "%.17g,%.17g,rotation_frame,%.17g\n", z.real(), z.imag(), frame);
      csv += buf;
      std::snprintf(buf, sizeof buf, "%.17g,%.17g,theta,%.17g\n", z.real(), z.imag(), fr.theta);
      csv += buf;
    }
    write_output(opt.out, csv);
    return 0;
  });
}

inline std::map<std::string, double> parse_params(const std::vector<std::string>& kv) {
  std::map<std::string, double> out;
  for (const std::string& s : kv) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) throw InputError("--param: expected key=value, got '" + s + "'");
    const std::string key = s.substr(0, eq);
    const std::string val = s.substr(eq + 1);
    try {
      std::size_t used = 0;
      const double v = std::stod(val, &used);
      if (used != val.size()) throw std::invalid_argument(val);
      out[key] = v;
    } catch (const std::exception&) {
      throw InputError("--param " + key + ": '" + val + "' is not a number");
    }
  }
  return out;
}

inline int cmd_zoo(const std::string& name, const std::vector<std::string>& params, const std::string& out) {
  return guarded([&] {
    const ZooModel m = get_model(name, parse_params(params));
    write_output(out, dump_canonical(serialize_structure(structure_from_model(m))));
    return 0;
  });
}

inline int cmd_sections(const std::string& path, const SectionsOptions& opt) {
  return guarded([&] {
    const auto t0 = std::chrono::steady_clock::now();
    if (opt.count < 0) throw InputError("--count: must be nonnegative");
    const std::string text = read_file(path);
    const StructureFile sf = parse_structure_text(text);
    const LoadedStructure ls = load_structure(sf);
    const RVec x = parse_point(opt.point, ls.chart);
    const Location here{x, std::nullopt, false, ""};

    static const char* names[] = {"section_membership", "section_reality", "o2_extrapolation", "o2_identity",
                                  "o2_constant",        "hklr_reality",    "hklr_agreement"};
    static const char* anchors[] = {
        "J^(zeta) s(zeta) = i s(zeta)",
        "conj s(-1/conj zeta) = s(zeta) and v(zeta) = -zeta J1 conj v(-1/conj zeta)",
        "P(zeta) = 2 i zeta varpi(zeta)(s_a, s_b) is quadratic in zeta",
        "P(zeta) = omega_+(v_a(zeta), v_b(zeta))",
        "P(0) = omega_+(a, b)",
        "(omega_+(a, J1 conj b) - omega_+(J1 conj a, b))/2 is real",
        "(omega_+(a, J1 conj b) - omega_+(J1 conj a, b))/2 = g(a + conj a, b + conj b)",
    };
    constexpr int kCount = 7;
    std::array<detail::Accumulator, kCount> acc;
    const double tols[kCount] = {opt.tol, opt.tol, opt.tol, opt.tol, opt.tol, opt.hklr_tol, opt.hklr_tol};

    if (opt.count > 0) {
      HoloSympFamily f;
      Reconstruction rec;
      bool ok = true;
      try {
        f = ls.family.at(x);
        rec = reconstruct_point(f);
      } catch (const InputError&) {
        throw;
      } catch (...) {
        const std::string msg = detail::describe_active_exception();
        for (auto& a : acc) a.fail(msg, here);
        ok = false;
      }
      if (ok) {
        const QuaternionicTriple& t = rec.structure.triple;
        const RMat& g = rec.structure.metric;
        const int n = f.dim();
        const CMat p10 = 0.5 * (CMat::Identity(n, n) - I * t.j3.cast<cplx>());
        std::mt19937_64 rng(opt.seed);
        std::normal_distribution<double> nd;
        const std::vector<cplx> rz = sample_zetas(opt.seed ^ 0x9e3779b97f4a7c15ULL, opt.count);
        const std::vector<cplx> nodes{cplx(1.0),       cplx(2.0),       cplx(0.0, 1.0), cplx(1.0, 1.0),
                                      cplx(3.0),       cplx(-1.0, 2.0), cplx(0.5, -1.0), cplx(-2.0, -0.5)};
        auto draw = [&] {
          CVec y(n);
          for (int i = 0; i < n; ++i) y(i) = cplx(nd(rng), nd(rng));
          CVec a = p10 * y;
          return CVec(a / a.norm());
        };
        for (int k = 0; k < opt.count; ++k) {
          const CVec a = draw();
          const CVec b = draw();
          try {
            for (cplx z : {cplx(1.0), cplx(0.0, 1.0), cplx(2.0, -3.0), rz[static_cast<std::size_t>(k)]}) {
              const Location loc{x, z, false, ""};
              const RealSection sec = real_section(t, a, z);
              acc[0].add(sec.membership, loc);
              acc[1].add(std::max(sec.reality, sec.v_reality), loc);
            }
            const O2Report o2 = o2_polynomial_check(f, t, a, b, nodes);
            acc[2].add(o2.extrapolation_residual, here);
            acc[3].add(o2.identity_residual, here);
            acc[4].add(std::abs(o2.constant_term - o2.expected_constant), here);
            const cplx h = hklr_pairing(f.omega_plus, t.j1, a, b);
            acc[5].add(std::abs(h.imag()), here);
            const RVec xa = (a + a.conjugate()).real();
            const RVec xb = (b + b.conjugate()).real();
            acc[6].add(std::abs(h.real() - xa.dot(g * xb)), here);
          } catch (...) {
            const std::string msg = detail::describe_active_exception();
            for (auto& ac : acc) ac.fail(msg, here);
          }
        }
      }
    }
    std::vector<CheckRecord> records;
    if (opt.count > 0)
      for (int c = 0; c < kCount; ++c) records.push_back(acc[c].record(names[c], anchors[c], tols[c]));
    json config{{"count", opt.count}, {"tol", opt.tol}, {"hklr_tol", opt.hklr_tol}, {"point", point_json(x)}};
    const json doc = report_json("sections", fnv1a64_hex(text), opt.seed, config, records, seconds_since(t0));
    write_output(opt.out, dump_canonical(doc));
    bool pass = true;
    for (const auto& r : records) pass = pass && r.pass;
    return pass ? 0 : 1;
  });
}

}  // namespace hk::cli
