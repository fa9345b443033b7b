#pragma once

// Columnar text input, declarative model files, and line-delimited JSON
// records for fits, tests and simulation reports.

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <initializer_list>
#include <iomanip>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include <nlohmann/json.hpp>
#include "vamzls/cavi.hpp"
#include "vamzls/design.hpp"
#include "vamzls/errors.hpp"
#include "vamzls/simulate.hpp"
#include "vamzls/zls.hpp"

namespace vamzls {

using Json = nlohmann::json;

// ---- delimited tables -------------------------------------------------------

struct DataTable {
  std::vector<std::string> names;
  std::vector<std::vector<double>> columns;

  std::size_t rows() const { return columns.empty() ? 0 : columns.front().size(); }

  bool has(const std::string& name) const { return std::find(names.begin(), names.end(), name) != names.end(); }

  const std::vector<double>& column(const std::string& name) const {
    const auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) throw DataError("data has no column '" + name + "'");
    return columns[static_cast<std::size_t>(it - names.begin())];
  }

  Eigen::VectorXd vector(const std::string& name) const {
    const auto& c = column(name);
    return Eigen::Map<const Eigen::VectorXd>(c.data(), static_cast<Eigen::Index>(c.size()));
  }

  // Wide block name[1], name[2], ... in index order.
  Eigen::MatrixXd wide_block(const std::string& name) const {
    std::vector<const std::vector<double>*> cols;
    for (int j = 1;; ++j) {
      const std::string key = name + "[" + std::to_string(j) + "]";
      const auto it = std::find(names.begin(), names.end(), key);
      if (it == names.end()) break;
      cols.push_back(&columns[static_cast<std::size_t>(it - names.begin())]);
    }
    if (cols.empty()) throw DataError("data has no functional columns '" + name + "[1]', '" + name + "[2]', ...");
    Eigen::MatrixXd out(static_cast<Eigen::Index>(rows()), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t j = 0; j < cols.size(); ++j)
      for (std::size_t i = 0; i < rows(); ++i) out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = (*cols[j])[i];
    return out;
  }
};

namespace detail {

inline std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

inline std::vector<std::string> split_fields(const std::string& line, char delim) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == delim) {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(trim(cur));
  return out;
}

inline char infer_delimiter(const std::string& header) {
  if (header.find('\t') != std::string::npos) return '\t';
  if (header.find(',') != std::string::npos) return ',';
  if (header.find(';') != std::string::npos) return ';';
  return ',';
}

inline bool parse_number(const std::string& s, double& out) {
  if (s == "NA" || s == "NaN" || s == "nan") return false;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (first != last && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last && std::isfinite(out);
}

}  // namespace detail

// Header row required; comma, tab or semicolon inferred from the header.
inline DataTable read_table(std::istream& in, const std::string& source = "input") {
  DataTable t;
  std::string line;
  std::size_t lineno = 0;
  char delim = ',';
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (detail::trim(line).empty()) continue;
    if (t.names.empty()) {
      delim = detail::infer_delimiter(line);
      t.names = detail::split_fields(line, delim);
      for (std::size_t j = 0; j < t.names.size(); ++j) {
        if (t.names[j].empty())
          throw DataError(source + ": line " + std::to_string(lineno) + ", column " + std::to_string(j + 1) +
                          ": empty column name");
        if (std::count(t.names.begin(), t.names.end(), t.names[j]) > 1)
          throw DataError(source + ": duplicate column name '" + t.names[j] + "'");
      }
      t.columns.assign(t.names.size(), {});
      continue;
    }
    const auto fields = detail::split_fields(line, delim);
    if (fields.size() != t.names.size())
      throw DataError(source + ": line " + std::to_string(lineno) + " has " + std::to_string(fields.size()) +
                      " fields, header has " + std::to_string(t.names.size()));
    for (std::size_t j = 0; j < fields.size(); ++j) {
      double v = 0.0;
      if (!detail::parse_number(fields[j], v))
        throw DataError(source + ": line " + std::to_string(lineno) + ", column " + std::to_string(j + 1) + " ('" +
                        t.names[j] + "'): cannot read '" + fields[j] + "' as a finite number");
      t.columns[j].push_back(v);
    }
  }
  if (t.names.empty()) throw DataError(source + ": no header row");
  if (t.rows() == 0) throw DataError(source + ": no data rows");
  return t;
}

inline DataTable read_table_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open data file '" + path + "'");
  return read_table(in, path);
}

// ---- model files ----------------------------------------------------------

struct ModelFile {
  ModelSpec spec;
  std::string response;
};

namespace detail {

template <class T>
T get_or(const Json& j, const char* key, T fallback) {
  return j.contains(key) ? j.at(key).get<T>() : fallback;
}

inline void reject_unknown(const Json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  for (const auto& [key, value] : j.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }))
      throw DataError("model file: unknown field '" + key + "' in " + where);
  }
}

}  // namespace detail

// {
//   "family": "gaussian" | "probit",
//   "response": "y",
//   "scalar": ["x1", ...],
//   "smooth": [{"name": "z", "knots": 8, "diff_order": 2, "a_omega": 0.01, "b_omega": 0.01}],
//   "functional": [{"name": "w", "knots": 12, "grid": [...], "a_eta": 0.01, "b_eta": 0.01}],
//   "hyper": {"sigma_a2": 1e6, "sigma_b2": 1e6, "a_e": 0.01, "b_e": 0.01, "xi_pen": 0.5},
//   "degree": 3
// }
inline ModelFile parse_model(const Json& j) {
  try {
    if (!j.is_object()) throw DataError("model file: top level must be an object");
    detail::reject_unknown(j, {"family", "response", "scalar", "smooth", "functional", "hyper", "degree"}, "model");
    ModelFile m;
    if (!j.contains("response")) throw DataError("model file: 'response' is required");
    m.response = j.at("response").get<std::string>();
    m.spec.family = parse_family(detail::get_or<std::string>(j, "family", "gaussian"));
    m.spec.degree = detail::get_or(j, "degree", 3);
    if (j.contains("scalar")) m.spec.scalar_terms = j.at("scalar").get<std::vector<std::string>>();
    if (j.contains("smooth")) {
      for (const auto& s : j.at("smooth")) {
        detail::reject_unknown(s, {"name", "knots", "diff_order", "a_omega", "b_omega"}, "smooth term");
        SmoothTerm t;
        t.name = s.at("name").get<std::string>();
        t.num_basis = detail::get_or(s, "knots", t.num_basis);
        t.diff_order = detail::get_or(s, "diff_order", t.diff_order);
        t.a_omega = detail::get_or(s, "a_omega", t.a_omega);
        t.b_omega = detail::get_or(s, "b_omega", t.b_omega);
        m.spec.smooth_terms.push_back(t);
      }
    }
    if (j.contains("functional")) {
      for (const auto& f : j.at("functional")) {
        detail::reject_unknown(f, {"name", "knots", "grid", "a_eta", "b_eta"}, "functional term");
        FunctionalTerm t;
        t.name = f.at("name").get<std::string>();
        t.num_basis = detail::get_or(f, "knots", t.num_basis);
        if (f.contains("grid")) t.grid = f.at("grid").get<std::vector<double>>();
        t.a_eta = detail::get_or(f, "a_eta", t.a_eta);
        t.b_eta = detail::get_or(f, "b_eta", t.b_eta);
        m.spec.functional_terms.push_back(t);
      }
    }
    if (j.contains("hyper")) {
      const Json& h = j.at("hyper");
      detail::reject_unknown(h, {"sigma_a2", "sigma_b2", "a_e", "b_e", "xi_pen"}, "hyper");
      auto& hp = m.spec.hyper;
      hp.sigma_a2 = detail::get_or(h, "sigma_a2", hp.sigma_a2);
      hp.sigma_b2 = detail::get_or(h, "sigma_b2", hp.sigma_b2);
      hp.a_e = detail::get_or(h, "a_e", hp.a_e);
      hp.b_e = detail::get_or(h, "b_e", hp.b_e);
      hp.xi_pen = detail::get_or(h, "xi_pen", hp.xi_pen);
    }
    return m;
  } catch (const Json::exception& e) {
    throw DataError(std::string("model file: ") + e.what());
  }
}

inline ModelFile read_model_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open model file '" + path + "'");
  try {
    return parse_model(Json::parse(in));
  } catch (const Json::parse_error& e) {
    throw DataError("model file '" + path + "': " + e.what());
  }
}

// Pull the model's columns out of a table. Functional grids default to
// equally spaced points on [0, 1].
inline ModelData extract_data(ModelFile& model, const DataTable& table) {
  const auto n = static_cast<Eigen::Index>(table.rows());
  ModelData d;
  d.scalar.resize(n, static_cast<Eigen::Index>(model.spec.scalar_terms.size()));
  for (std::size_t j = 0; j < model.spec.scalar_terms.size(); ++j)
    d.scalar.col(static_cast<Eigen::Index>(j)) = table.vector(model.spec.scalar_terms[j]);
  for (const auto& s : model.spec.smooth_terms) d.smooth.push_back(table.vector(s.name));
  for (auto& f : model.spec.functional_terms) {
    Eigen::MatrixXd w = table.wide_block(f.name);
    if (f.grid.empty()) {
      f.grid.resize(static_cast<std::size_t>(w.cols()));
      for (Eigen::Index k = 0; k < w.cols(); ++k) f.grid[k] = static_cast<double>(k) / static_cast<double>(w.cols() - 1);
    }
    d.functional.push_back(std::move(w));
  }
  return d;
}

// ---- fit artifacts ----------------------------------------------------------

struct TermSummary {
  std::string name;
  std::string kind;
  std::vector<double> mean;
  std::vector<double> var;
};

struct ScaleSummary {
  std::string name;  // "sigma2", or the term name for omega / eta
  double shape = 0.0;
  double scale = 0.0;
};

struct FitArtifact {
  std::string family;
  std::string response;
  long long n = 0;
  bool converged = false;
  int iterations = 0;
  std::string diagnostic;
  std::vector<double> elbo;
  std::vector<TermSummary> terms;
  std::vector<ScaleSummary> scales;
  std::vector<CurveEstimate> curves;
  std::vector<std::string> curve_terms;
};

namespace detail {

inline std::vector<double> to_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

inline Eigen::VectorXd to_eigen(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace detail

inline FitArtifact make_artifact(const DesignBundle& bundle, const VariationalFit& f, const std::string& response) {
  FitArtifact a;
  a.family = to_string(f.family);
  a.response = response;
  a.n = static_cast<long long>(bundle.n());
  a.converged = f.converged;
  a.iterations = f.iterations;
  a.diagnostic = f.diagnostic;
  a.elbo = f.elbo_trace;
  for (const auto& b : bundle.blocks) {
    TermSummary t{b.name, to_string(b.kind), detail::to_std(f.mu_theta.segment(b.start, b.width)),
                  detail::to_std(f.sigma_theta.diagonal().segment(b.start, b.width))};
    a.terms.push_back(std::move(t));
  }
  if (f.family == Family::gaussian) a.scales.push_back({"sigma2", f.shape_sigma2, f.b_sigma2});
  std::size_t k = 0;
  for (const auto& b : bundle.blocks) {
    if (!b.penalized()) continue;
    a.scales.push_back({b.name, detail::penalty_shape(b), f.b_penalty[k++]});
    const auto grid = default_curve_grid(b, 201);
    a.curves.push_back(extract_curve(f, bundle, b.name, grid));
    a.curve_terms.push_back(b.name);
  }
  return a;
}

// One JSON object per line: summary, elbo, one coefficients record per term,
// one scale record per inverse-gamma factor, one curve record per penalized term.
inline void write_artifact(std::ostream& out, const FitArtifact& a) {
  out << Json{{"record", "summary"}, {"family", a.family},       {"response", a.response},
              {"n", a.n},            {"converged", a.converged}, {"iterations", a.iterations},
              {"elbo", a.elbo.empty() ? Json() : Json(a.elbo.back())}, {"diagnostic", a.diagnostic}}
             .dump()
      << '\n';
  out << Json{{"record", "elbo"}, {"trace", a.elbo}}.dump() << '\n';
  for (const auto& t : a.terms)
    out << Json{{"record", "coefficients"}, {"term", t.name}, {"kind", t.kind}, {"mean", t.mean}, {"var", t.var}}.dump()
        << '\n';
  for (const auto& s : a.scales)
    out << Json{{"record", "scale"}, {"name", s.name}, {"shape", s.shape}, {"b", s.scale}}.dump() << '\n';
  for (std::size_t c = 0; c < a.curves.size(); ++c) {
    const auto& cv = a.curves[c];
    out << Json{{"record", "curve"},
                {"term", a.curve_terms[c]},
                {"grid", cv.grid},
                {"estimate", detail::to_std(cv.estimate)},
                {"sd", detail::to_std(cv.sd)}}
               .dump()
        << '\n';
  }
}

inline FitArtifact read_artifact(std::istream& in) {
  FitArtifact a;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    try {
      const Json j = Json::parse(line);
      const std::string rec = j.at("record").get<std::string>();
      if (rec == "summary") {
        a.family = j.at("family").get<std::string>();
        a.response = j.at("response").get<std::string>();
        a.n = j.at("n").get<long long>();
        a.converged = j.at("converged").get<bool>();
        a.iterations = j.at("iterations").get<int>();
        a.diagnostic = j.at("diagnostic").get<std::string>();
      } else if (rec == "elbo") {
        a.elbo = j.at("trace").get<std::vector<double>>();
      } else if (rec == "coefficients") {
        a.terms.push_back({j.at("term").get<std::string>(), j.at("kind").get<std::string>(),
                           j.at("mean").get<std::vector<double>>(), j.at("var").get<std::vector<double>>()});
      } else if (rec == "scale") {
        a.scales.push_back({j.at("name").get<std::string>(), j.at("shape").get<double>(), j.at("b").get<double>()});
      } else if (rec == "curve") {
        CurveEstimate c;
        c.grid = j.at("grid").get<std::vector<double>>();
        c.estimate = detail::to_eigen(j.at("estimate").get<std::vector<double>>());
        c.sd = detail::to_eigen(j.at("sd").get<std::vector<double>>());
        a.curves.push_back(std::move(c));
        a.curve_terms.push_back(j.at("term").get<std::string>());
      } else {
        throw DataError("unknown record '" + rec + "'");
      }
    } catch (const Json::exception& e) {
      throw DataError("fit artifact line " + std::to_string(lineno) + ": " + e.what());
    } catch (const DataError& e) {
      throw DataError("fit artifact line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return a;
}

// ---- test and simulation reports -------------------------------------------

enum class OutputFormat { table, jsonl };

inline OutputFormat parse_format(const std::string& s) {
  if (s == "table" || s == "text") return OutputFormat::table;
  if (s == "jsonl" || s == "json") return OutputFormat::jsonl;
  throw DataError("unknown output format '" + s + "' (expected table or jsonl)");
}

namespace detail {

inline std::string fixed(double v, int digits) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << v;
  return s.str();
}

inline std::string format_p(double p) {
  if (p < 0.001) return "<0.001";
  return fixed(p, 3);
}

}  // namespace detail

inline Json to_json(const ZlsResult& r) {
  return {{"record", "zls"}, {"term", r.term},     {"statistic", r.statistic}, {"nu", r.nu},
          {"kappa", r.kappa}, {"p_value", r.p_value}, {"e", r.e_mean},         {"psi", r.psi_var},
          {"grid_size", r.grid_size}};
}

inline void write_zls(std::ostream& out, const std::vector<ZlsResult>& rows, OutputFormat fmt) {
  if (fmt == OutputFormat::jsonl) {
    for (const auto& r : rows) out << to_json(r).dump() << '\n';
    return;
  }
  out << std::left << std::setw(16) << "term" << std::right << std::setw(12) << "chi2" << std::setw(10) << "nu"
      << std::setw(12) << "kappa" << std::setw(10) << "p" << '\n';
  for (const auto& r : rows)
    out << std::left << std::setw(16) << r.term << std::right << std::setw(12) << detail::fixed(r.statistic / r.kappa, 3)
        << std::setw(10) << detail::fixed(r.nu, 3) << std::setw(12) << detail::fixed(r.kappa, 5) << std::setw(10)
        << detail::format_p(r.p_value) << '\n';
}

inline Json to_json(const SimReport& r) {
  const auto& s = r.scenario;
  Json pv = Json::array();
  for (double p : r.per_rep_pvalues) pv.push_back(std::isnan(p) ? Json() : Json(p));
  return {{"record", "simulation"},
          {"family", to_string(s.family)},
          {"effect", to_string(s.effect)},
          {"n", s.n},
          {"t", kind_of(s.effect) == EffectKind::functional ? Json(s.t_points) : Json()},
          {"xi", s.xi_scale},
          {"knots", r.knots_used},
          {"replications", s.replications},
          {"seed", s.seed},
          {"alpha", s.alpha_level},
          {"rejection_rate", r.rejection_rate},
          {"mc_stderr", r.mc_stderr},
          {"rejections", r.rejections},
          {"completed", r.completed},
          {"failures", r.failures},
          {"flagged", r.flagged},
          {"p_values", pv}};
}

inline void write_sim_header(std::ostream& out) {
  out << std::left << std::setw(10) << "family" << std::setw(15) << "effect" << std::right << std::setw(6) << "N"
      << std::setw(6) << "T" << std::setw(6) << "xi" << std::setw(6) << "K" << std::setw(7) << "reps" << std::setw(9)
      << "rate" << std::setw(9) << "se" << std::setw(9) << "failed" << '\n';
}

inline void write_sim_row(std::ostream& out, const SimReport& r, OutputFormat fmt) {
  if (fmt == OutputFormat::jsonl) {
    out << to_json(r).dump() << '\n';
    return;
  }
  const auto& s = r.scenario;
  const bool func = kind_of(s.effect) == EffectKind::functional;
  out << std::left << std::setw(10) << to_string(s.family) << std::setw(15) << to_string(s.effect) << std::right
      << std::setw(6) << s.n << std::setw(6) << (func ? std::to_string(s.t_points) : "-") << std::setw(6)
      << detail::fixed(s.xi_scale, 1) << std::setw(6) << r.knots_used << std::setw(7) << s.replications << std::setw(9)
      << detail::fixed(r.rejection_rate, 3) << std::setw(9) << detail::fixed(r.mc_stderr, 3) << std::setw(8)
      << r.failures << (r.flagged ? "!" : " ") << '\n';
}

// Scenario list: delimited table with columns family, effect, n, xi and
// optional t, knots, reps, seed, alpha. Missing optional cells take the
// defaults passed in.
inline std::vector<SimScenario> read_scenarios(std::istream& in, const SimScenario& defaults,
                                               const std::string& source = "scenarios") {
  std::vector<SimScenario> out;
  std::string header;
  std::vector<std::string> names;
  char delim = ',';
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::string t = detail::trim(line);
    if (t.empty() || t.front() == '#') continue;
    if (names.empty()) {
      delim = detail::infer_delimiter(line);
      names = detail::split_fields(line, delim);
      for (const char* req : {"family", "effect", "n", "xi"})
        if (std::find(names.begin(), names.end(), req) == names.end())
          throw DataError(source + ": header lacks required column '" + std::string(req) + "'");
      continue;
    }
    const auto fields = detail::split_fields(line, delim);
    if (fields.size() != names.size())
      throw DataError(source + ": line " + std::to_string(lineno) + " has " + std::to_string(fields.size()) +
                      " fields, header has " + std::to_string(names.size()));
    SimScenario sc = defaults;
    for (std::size_t j = 0; j < names.size(); ++j) {
      const std::string& key = names[j];
      const std::string& v = fields[j];
      if (v.empty()) continue;
      const auto where = source + ": line " + std::to_string(lineno) + ", column '" + key + "'";
      double num = 0.0;
      const bool numeric = detail::parse_number(v, num);
      auto need_int = [&] {
        if (!numeric || num != std::floor(num) || num < 0) throw DataError(where + ": expected a nonnegative integer");
        return static_cast<long long>(num);
      };
      if (key == "family") {
        sc.family = parse_family(v);
      } else if (key == "effect") {
        sc.effect = parse_effect(v);
      } else if (key == "n") {
        sc.n = static_cast<int>(need_int());
      } else if (key == "t") {
        sc.t_points = static_cast<int>(need_int());
      } else if (key == "xi") {
        if (!numeric) throw DataError(where + ": expected a number");
        sc.xi_scale = num;
      } else if (key == "knots") {
        sc.knots = static_cast<int>(need_int());
      } else if (key == "reps") {
        sc.replications = static_cast<int>(need_int());
      } else if (key == "seed") {
        sc.seed = static_cast<std::uint64_t>(need_int());
      } else if (key == "alpha") {
        if (!numeric) throw DataError(where + ": expected a number");
        sc.alpha_level = num;
      } else {
        throw DataError(source + ": unknown column '" + key + "'");
      }
    }
    validate(sc);
    out.push_back(sc);
  }
  return out;
}

}  // namespace vamzls
