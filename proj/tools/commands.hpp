#pragma once

// Subcommands of the vamzls tool. Each returns the process exit status:
// 0 success, 2 bad input, 3 numerical or convergence failure.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "vamzls/io.hpp"
#include "vamzls/vamzls.hpp"

namespace vamzls::cli {

inline constexpr int exit_ok = 0;
inline constexpr int exit_user = 2;
inline constexpr int exit_numeric = 3;

struct RunConfig {
  std::string data_path;
  std::string model_path;
  std::vector<std::string> terms;
  std::optional<int> knots;
  bool standardize = false;
  FitControl control;
  std::string scenarios_path;
  std::optional<std::uint64_t> seed;
  std::optional<double> alpha;
  std::optional<int> reps;
  unsigned threads = 0;
  std::string out_path;
  OutputFormat format = OutputFormat::table;
};

namespace detail {

struct Loaded {
  ModelFile model;
  DesignBundle bundle;
  Eigen::VectorXd y;
};

inline Loaded load(const RunConfig& cfg) {
  if (cfg.data_path.empty()) throw DataError("--data is required");
  if (cfg.model_path.empty()) throw DataError("--model is required");
  Loaded l;
  l.model = read_model_file(cfg.model_path);
  if (cfg.knots) {
    for (auto& s : l.model.spec.smooth_terms) s.num_basis = *cfg.knots;
    for (auto& f : l.model.spec.functional_terms) f.num_basis = *cfg.knots;
  }
  const DataTable table = read_table_file(cfg.data_path);
  ModelData data = extract_data(l.model, table);
  if (cfg.standardize) {
    for (Eigen::Index j = 0; j < data.scalar.cols(); ++j) {
      auto col = data.scalar.col(j);
      const double mean = col.mean();
      const double sd = std::sqrt((col.array() - mean).square().sum() / static_cast<double>(col.size() - 1));
      if (!(sd > 0.0))
        throw DataError("cannot standardize constant column '" + l.model.spec.scalar_terms[static_cast<std::size_t>(j)] + "'");
      col = (col.array() - mean) / sd;
    }
  }
  l.y = table.vector(l.model.response);
  l.bundle = build_design(l.model.spec, data);
  return l;
}

// Output goes to --out when given, otherwise to the supplied stream.
class Sink {
 public:
  Sink(const std::string& path, std::ostream& fallback) : out_(&fallback) {
    if (path.empty()) return;
    file_.open(path);
    if (!file_) throw DataError("cannot open output file '" + path + "'");
    out_ = &file_;
  }
  std::ostream& stream() { return *out_; }

 private:
  std::ofstream file_;
  std::ostream* out_;
};

template <class F>
int guarded(std::ostream& err, F&& body) {
  try {
    return body();
  } catch (const NumericalError& e) {
    err << "error: " << e.what() << '\n';
    return exit_numeric;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_user;
  }
}

}  // namespace detail

// Fits the model, writes the artifact (to --out, default fit.jsonl) and
// prints a convergence summary.
inline int cmd_fit(const RunConfig& cfg, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  return detail::guarded(err, [&] {
    const auto l = detail::load(cfg);
    const VariationalFit f = fit(l.bundle, l.y, cfg.control);
    const FitArtifact art = make_artifact(l.bundle, f, l.model.response);
    {
      const std::string path = cfg.out_path.empty() ? "fit.jsonl" : cfg.out_path;
      std::ofstream file(path);
      if (!file) throw DataError("cannot open output file '" + path + "'");
      write_artifact(file, art);
    }
    out << (f.converged ? "converged" : "not converged") << " after " << f.iterations << " sweeps, ELBO "
        << vamzls::detail::fixed(f.elbo_trace.back(), 4) << '\n';
    for (const auto& t : art.terms) {
      if (t.kind != "intercept" && t.kind != "scalar") continue;
      out << "  " << t.name << ": " << t.mean.front() << " (sd " << std::sqrt(t.var.front()) << ")\n";
    }
    if (f.family == Family::gaussian) out << "  sigma2: " << f.sigma2_hat() << '\n';
    if (!f.converged) {
      err << "warning: " << f.diagnostic << '\n';
      return exit_numeric;
    }
    return exit_ok;
  });
}

// Fits the model once and tests each requested term (all penalized terms by default).
inline int cmd_test(const RunConfig& cfg, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  return detail::guarded(err, [&] {
    const auto l = detail::load(cfg);
    std::vector<std::string> terms = cfg.terms;
    for (const auto& t : terms) {
      if (!l.bundle.has_term(t)) throw DataError("term '" + t + "' is not in the model");
      if (!l.bundle.block(t).penalized()) throw DataError("term '" + t + "' is not a smooth or functional term");
    }
    if (terms.empty())
      for (const auto& b : l.bundle.blocks)
        if (b.penalized()) terms.push_back(b.name);
    if (terms.empty()) throw DataError("the model has no smooth or functional terms to test");

    const VariationalFit f = fit(l.bundle, l.y, cfg.control);
    if (!f.converged) {
      err << "error: fit did not converge: " << f.diagnostic << '\n';
      return exit_numeric;
    }
    std::vector<ZlsResult> rows;
    for (const auto& t : terms) rows.push_back(zls_test(f, l.bundle, t));
    detail::Sink sink(cfg.out_path, out);
    write_zls(sink.stream(), rows, cfg.format);
    return exit_ok;
  });
}

// Runs every scenario of the list and writes one report row each.
inline int cmd_simulate(const RunConfig& cfg, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  return detail::guarded(err, [&] {
    if (cfg.scenarios_path.empty()) throw DataError("--scenarios is required");
    std::ifstream in(cfg.scenarios_path);
    if (!in) throw DataError("cannot open scenario file '" + cfg.scenarios_path + "'");
    SimScenario defaults;
    if (cfg.seed) defaults.seed = *cfg.seed;
    if (cfg.alpha) defaults.alpha_level = *cfg.alpha;
    if (cfg.reps) defaults.replications = *cfg.reps;
    if (cfg.knots) defaults.knots = *cfg.knots;
    const auto scenarios = read_scenarios(in, defaults, cfg.scenarios_path);
    if (scenarios.empty()) throw DataError("scenario list '" + cfg.scenarios_path + "' is empty");

    detail::Sink sink(cfg.out_path, out);
    if (cfg.format == OutputFormat::table) write_sim_header(sink.stream());
    bool any_flagged = false;
    for (const auto& sc : scenarios) {
      const SimReport r = run_scenario(sc, cfg.threads, cfg.control);
      any_flagged = any_flagged || r.flagged;
      write_sim_row(sink.stream(), r, cfg.format);
      sink.stream().flush();
    }
    if (any_flagged) err << "warning: at least one scenario had more than 5% failed replications\n";
    return exit_ok;
  });
}

}  // namespace vamzls::cli
