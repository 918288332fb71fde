#pragma once

// JSON structure files and run reports.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hk/zoo.hpp"

namespace hk {

using json = nlohmann::json;

inline constexpr const char* kToolName = "hk";
inline constexpr const char* kToolVersion = "1.0.0";
inline constexpr const char* kStructureFormat = "hk-structure";
inline constexpr int kStructureVersion = 1;

struct BuiltinRef {
  std::string name;
  std::map<std::string, double> params;
};

struct StructureFile {
  enum class Forms { plus_and_3, triple, builtin };

  int r = 1;
  ChartSpec chart;
  Forms forms = Forms::plus_and_3;
  std::map<std::string, FormField> fields;  // omega_plus/omega_3 or omega_1/omega_2/omega_3
  std::optional<BuiltinRef> builtin;
  std::optional<Signature> expected_signature;
};

namespace detail {

inline const json& require(const json& obj, const std::string& key, const std::string& path) {
  if (!obj.is_object()) throw InputError(path + ": expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) throw InputError(path + "." + key + ": missing");
  return *it;
}

inline double as_number(const json& v, const std::string& path) {
  if (!v.is_number()) throw InputError(path + ": expected a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) throw InputError(path + ": must be finite");
  return d;
}

inline int as_int(const json& v, const std::string& path) {
  if (!v.is_number_integer()) throw InputError(path + ": expected an integer");
  return v.get<int>();
}

inline Polynomial parse_polynomial(const json& v, int vars, const std::string& path) {
  if (!v.is_array()) throw InputError(path + ": expected a list of terms");
  std::vector<Polynomial::Term> terms;
  for (std::size_t k = 0; k < v.size(); ++k) {
    const std::string p = path + "[" + std::to_string(k) + "]";
    Polynomial::Term t;
    t.c = as_number(require(v[k], "c", p), p + ".c");
    const json& e = require(v[k], "e", p);
    if (!e.is_array()) throw InputError(p + ".e: expected an exponent list");
    if (static_cast<int>(e.size()) != vars)
      throw InputError(p + ".e: exponent tuple has length " + std::to_string(e.size()) + ", expected " + std::to_string(vars));
    for (std::size_t q = 0; q < e.size(); ++q) {
      const int ex = as_int(e[q], p + ".e[" + std::to_string(q) + "]");
      if (ex < 0) throw InputError(p + ".e[" + std::to_string(q) + "]: exponents must be nonnegative");
      t.e.push_back(ex);
    }
    terms.push_back(std::move(t));
  }
  return Polynomial(vars, std::move(terms));
}

inline json polynomial_json(const Polynomial& p) {
  json out = json::array();
  for (const auto& t : p.terms()) out.push_back(json{{"c", t.c}, {"e", t.e}});
  return out;
}

inline FormField parse_form(const json& v, int dim, const std::string& path) {
  if (!v.is_array()) throw InputError(path + ": expected a list of entry terms");
  std::vector<EntryTerm> entries;
  for (std::size_t k = 0; k < v.size(); ++k) {
    const std::string p = path + "[" + std::to_string(k) + "]";
    if (!v[k].is_object()) throw InputError(p + ": expected an object");
    EntryTerm t;
    t.i = as_int(require(v[k], "i", p), p + ".i");
    t.j = as_int(require(v[k], "j", p), p + ".j");
    if (t.i < 0 || t.j >= dim || t.i >= t.j) throw InputError(p + ": need 0 <= i < j < " + std::to_string(dim));
    for (const EntryTerm& o : entries)
      if (o.i == t.i && o.j == t.j) throw InputError(p + ": duplicate entry (" + std::to_string(t.i) + ", " + std::to_string(t.j) + ")");
    t.re = v[k].contains("re") ? parse_polynomial(v[k]["re"], dim, p + ".re") : Polynomial(dim);
    t.im = v[k].contains("im") ? parse_polynomial(v[k]["im"], dim, p + ".im") : Polynomial(dim);
    if (v[k].contains("den")) t.den = parse_polynomial(v[k]["den"], dim, p + ".den");
    if (t.den && t.den->empty()) throw InputError(p + ".den: denominator must have at least one term");
    for (const auto& [key, _] : v[k].items())
      if (key != "i" && key != "j" && key != "re" && key != "im" && key != "den") throw InputError(p + "." + key + ": unknown key");
    entries.push_back(std::move(t));
  }
  return FormField::from_entries(dim, std::move(entries));
}

inline json form_json(const FormField& f) {
  json out = json::array();
  for (const EntryTerm& t : f.entries()) {
    json e{{"i", t.i}, {"j", t.j}, {"re", polynomial_json(t.re)}, {"im", polynomial_json(t.im)}};
    if (t.den) e["den"] = polynomial_json(*t.den);
    out.push_back(std::move(e));
  }
  return out;
}

inline bool is_real_form(const FormField& f) {
  for (const EntryTerm& t : f.entries())
    for (const auto& term : t.im.terms())
      if (term.c != 0.0) return false;
  return true;
}

}  // namespace detail

inline StructureFile parse_structure(const json& doc) {
  using namespace detail;
  if (!doc.is_object()) throw InputError("structure file: top level must be an object");
  const json& fmt = require(doc, "format", "$");
  if (!fmt.is_string() || fmt.get<std::string>() != kStructureFormat)
    throw InputError(std::string("$.format: expected \"") + kStructureFormat + "\"");
  const int version = as_int(require(doc, "version", "$"), "$.version");
  if (version != kStructureVersion) throw InputError("$.version: unsupported version " + std::to_string(version));

  StructureFile sf;
  sf.r = as_int(require(doc, "r", "$"), "$.r");
  if (sf.r < 1) throw InputError("$.r: must be at least 1");
  const int dim = 4 * sf.r;

  const json& chart = require(doc, "chart", "$");
  const json& box = require(chart, "box", "$.chart");
  const json& grid = require(chart, "grid", "$.chart");
  if (!box.is_array() || static_cast<int>(box.size()) != dim) throw InputError("$.chart.box: expected " + std::to_string(dim) + " intervals");
  if (!grid.is_array() || static_cast<int>(grid.size()) != dim) throw InputError("$.chart.grid: expected " + std::to_string(dim) + " counts");
  for (int a = 0; a < dim; ++a) {
    const std::string p = "$.chart.box[" + std::to_string(a) + "]";
    if (!box[a].is_array() || box[a].size() != 2) throw InputError(p + ": expected [lo, hi]");
    sf.chart.box.emplace_back(as_number(box[a][0], p + "[0]"), as_number(box[a][1], p + "[1]"));
    sf.chart.grid.push_back(as_int(grid[a], "$.chart.grid[" + std::to_string(a) + "]"));
  }
  if (chart.contains("coords")) {
    const json& c = chart["coords"];
    if (!c.is_array() || static_cast<int>(c.size()) != dim) throw InputError("$.chart.coords: expected " + std::to_string(dim) + " names");
    for (const json& name : c) {
      if (!name.is_string()) throw InputError("$.chart.coords: names must be strings");
      sf.chart.coords.push_back(name.get<std::string>());
    }
  } else {
    for (int a = 0; a < dim; ++a) sf.chart.coords.push_back("x" + std::to_string(a));
  }
  sf.chart.validate();

  const json& forms = require(doc, "forms", "$");
  if (!forms.is_object()) throw InputError("$.forms: expected an object");
  if (forms.contains("builtin")) {
    if (forms.size() != 1) throw InputError("$.forms: builtin cannot be combined with explicit forms");
    const json& b = forms["builtin"];
    BuiltinRef ref;
    const json& name = require(b, "name", "$.forms.builtin");
    if (!name.is_string()) throw InputError("$.forms.builtin.name: expected a string");
    ref.name = name.get<std::string>();
    if (b.contains("params")) {
      if (!b["params"].is_object()) throw InputError("$.forms.builtin.params: expected an object");
      for (const auto& [k, v] : b["params"].items()) ref.params[k] = as_number(v, "$.forms.builtin.params." + k);
    }
    sf.forms = StructureFile::Forms::builtin;
    sf.builtin = std::move(ref);
  } else if (forms.contains("omega_plus") || (!forms.contains("omega_1") && !forms.contains("omega_2"))) {
    sf.forms = StructureFile::Forms::plus_and_3;
    sf.fields["omega_plus"] = parse_form(require(forms, "omega_plus", "$.forms"), dim, "$.forms.omega_plus");
    sf.fields["omega_3"] = parse_form(require(forms, "omega_3", "$.forms"), dim, "$.forms.omega_3");
    if (forms.size() != 2) throw InputError("$.forms: expected exactly omega_plus and omega_3");
  } else {
    sf.forms = StructureFile::Forms::triple;
    for (const char* k : {"omega_1", "omega_2", "omega_3"})
      sf.fields[k] = parse_form(require(forms, k, "$.forms"), dim, std::string("$.forms.") + k);
    if (forms.size() != 3) throw InputError("$.forms: expected exactly omega_1, omega_2 and omega_3");
  }
  for (const auto& [k, f] : sf.fields) {
    if (k != "omega_plus" && !detail::is_real_form(f)) throw InputError("$.forms." + k + ": must be real");
    check_poles(f, sf.chart, "$.forms." + k);
  }

  if (doc.contains("expected_signature")) {
    const json& s = doc["expected_signature"];
    if (!s.is_array() || s.size() != 2) throw InputError("$.expected_signature: expected [p, q]");
    sf.expected_signature = Signature{as_int(s[0], "$.expected_signature[0]"), as_int(s[1], "$.expected_signature[1]"), 0};
  }
  for (const auto& [k, _] : doc.items())
    if (k != "format" && k != "version" && k != "r" && k != "chart" && k != "forms" && k != "expected_signature")
      throw InputError("$." + k + ": unknown key");
  return sf;
}

inline StructureFile parse_structure_text(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw InputError(std::string("structure file is not valid JSON: ") + e.what());
  }
  return parse_structure(doc);
}

inline json serialize_structure(const StructureFile& sf) {
  json chart{{"coords", sf.chart.coords}, {"grid", sf.chart.grid}};
  json box = json::array();
  for (const auto& [lo, hi] : sf.chart.box) box.push_back(json::array({lo, hi}));
  chart["box"] = box;
  json forms = json::object();
  if (sf.forms == StructureFile::Forms::builtin) {
    json params = json::object();
    for (const auto& [k, v] : sf.builtin->params) params[k] = v;
    forms["builtin"] = json{{"name", sf.builtin->name}, {"params", params}};
  } else {
    for (const auto& [k, f] : sf.fields) forms[k] = detail::form_json(f);
  }
  json doc{{"format", kStructureFormat}, {"version", kStructureVersion}, {"r", sf.r}, {"chart", chart}, {"forms", forms}};
  if (sf.expected_signature)
    doc["expected_signature"] = json::array({sf.expected_signature->positive, sf.expected_signature->negative});
  return doc;
}

inline std::string dump_canonical(const json& j) { return j.dump(2) + "\n"; }

inline StructureFile structure_from_model(const ZooModel& m) {
  StructureFile sf;
  sf.r = m.r;
  sf.chart = m.chart;
  sf.forms = StructureFile::Forms::builtin;
  sf.builtin = BuiltinRef{m.name, m.params};
  sf.expected_signature = m.expected_signature;
  return sf;
}

struct LoadedStructure {
  FamilyField family;
  ChartSpec chart;
  std::optional<Signature> expected_signature;
};

inline LoadedStructure load_structure(const StructureFile& sf) {
  LoadedStructure out;
  out.chart = sf.chart;
  out.expected_signature = sf.expected_signature;
  switch (sf.forms) {
    case StructureFile::Forms::builtin: {
      const ZooModel m = get_model(sf.builtin->name, sf.builtin->params, sf.chart);
      if (m.r != sf.r) throw InputError("$.r: does not match the builtin model");
      out.family = m.family();
      if (!out.expected_signature) out.expected_signature = m.expected_signature;
      break;
    }
    case StructureFile::Forms::plus_and_3:
      out.family = FamilyField{sf.r, sf.fields.at("omega_plus"), sf.fields.at("omega_3"), {}};
      break;
    case StructureFile::Forms::triple:
      out.family = FamilyField{sf.r, FormField::combination({{1.0, sf.fields.at("omega_1")}, {I, sf.fields.at("omega_2")}}),
                               sf.fields.at("omega_3"), {}};
      break;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reports

inline std::string fnv1a64_hex(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

inline json point_json(const RVec& x) {
  json a = json::array();
  for (Eigen::Index i = 0; i < x.size(); ++i) a.push_back(number_or_null(x(i)));
  return a;
}

inline json location_json(const Location& loc) {
  json out{{"point", point_json(loc.point)}};
  if (loc.zeta_infinite)
    out["zeta"] = "inf";
  else if (loc.zeta)
    out["zeta"] = json::array({loc.zeta->real(), loc.zeta->imag()});
  else
    out["zeta"] = nullptr;
  if (!loc.form.empty()) out["form"] = loc.form;
  return out;
}

inline json check_json(const CheckRecord& c) {
  json out{{"name", c.name},
           {"anchor", c.anchor},
           {"residual", number_or_null(c.residual)},
           {"tolerance", c.tolerance},
           {"pass", c.pass},
           {"worst", c.worst ? location_json(*c.worst) : json(nullptr)}};
  if (!c.error.empty()) out["error"] = c.error;
  return out;
}

inline json signature_json(const Signature& s) { return json::array({s.positive, s.negative, s.zero}); }

inline json report_json(const std::string& command, const std::string& digest, std::uint64_t seed, const json& config,
                        const std::vector<CheckRecord>& checks, double wall_time) {
  json arr = json::array();
  bool pass = true;
  for (const CheckRecord& c : checks) {
    arr.push_back(check_json(c));
    pass = pass && c.pass;
  }
  return json{{"tool", kToolName},   {"version", kToolVersion}, {"command", command},
              {"input_digest", digest}, {"seed", seed},         {"config", config},
              {"checks", arr},          {"pass", pass},         {"wall_time_s", wall_time}};
}

}  // namespace hk
