#include "brw/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "brw/parallel.hpp"
#include "brw/tail.hpp"
#include "brw/tree.hpp"
#include "brw/walk.hpp"

namespace brw {

// ---------------------------------------------------------------------------
// stats.hpp implementations
// ---------------------------------------------------------------------------

KsReport ks_test_two_sample(std::vector<double> a, std::vector<double> b) {
  if (a.size() < 2 || b.size() < 2)
    throw std::invalid_argument("ks_test_two_sample: need at least 2 samples per side");
  double ne = static_cast<double>(a.size()) * static_cast<double>(b.size()) /
              static_cast<double>(a.size() + b.size());
  if (ne < 50.0)
    throw std::invalid_argument("ks_test_two_sample: fewer than 50 effective samples");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  double d = 0.0;
  std::size_t ia = 0, ib = 0;
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  while (ia < a.size() && ib < b.size()) {
    double v = std::min(a[ia], b[ib]);
    while (ia < a.size() && a[ia] <= v) ++ia;
    while (ib < b.size() && b[ib] <= v) ++ib;
    d = std::max(d, std::abs(static_cast<double>(ia) / na -
                             static_cast<double>(ib) / nb));
  }
  KsReport r;
  r.statistic = d;
  r.n_effective = ne;
  r.p_value = ks_p_value(d, ne);
  return r;
}

PlateauFit plateau_fit(std::span<const double> x, std::span<const double> y,
                       std::span<const double> yerr) {
  if (x.size() < 4)
    throw std::invalid_argument("plateau_fit: need at least 4 grid points");
  std::size_t lo = x.size() / 2;
  double sw = 0.0, swx = 0.0, swy = 0.0, swxx = 0.0, swxy = 0.0;
  for (std::size_t i = lo; i < x.size(); ++i) {
    double e = std::max(yerr[i], 1e-12);
    double w = 1.0 / (e * e);
    sw += w;
    swx += w * x[i];
    swy += w * y[i];
    swxx += w * x[i] * x[i];
    swxy += w * x[i] * y[i];
  }
  PlateauFit fit;
  fit.window_lo = x[lo];
  fit.window_hi = x[x.size() - 1];
  fit.level = swy / sw;
  double det = sw * swxx - swx * swx;
  double slope = det > 0 ? (sw * swxy - swx * swy) / det : 0.0;
  fit.drift = std::abs(slope) * (fit.window_hi - fit.window_lo);
  fit.level_stderr = std::sqrt(1.0 / sw + 0.25 * fit.drift * fit.drift);
  return fit;
}

}  // namespace brw

namespace brw::harness {

namespace {

using ordered_json = nlohmann::ordered_json;

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

double to_double(const std::string& v, const std::string& path) {
  try {
    std::size_t pos = 0;
    double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("trailing");
    return d;
  } catch (...) {
    throw std::invalid_argument("config value for " + path + " is not numeric: " + v);
  }
}

std::uint64_t to_u64(const std::string& v, const std::string& path) {
  double d = to_double(v, path);
  if (d < 0 || d > 1.8e18)
    throw std::invalid_argument("config value for " + path + " out of range");
  return static_cast<std::uint64_t>(d);
}

std::vector<int> to_int_grid(const std::string& v) {
  std::vector<int> out;
  for (double d : parse_grid(v)) out.push_back(static_cast<int>(d));
  return out;
}

}  // namespace

std::vector<double> parse_grid(const std::string& text) {
  std::vector<double> out;
  if (text.find(':') != std::string::npos) {
    double a = 0, b = 0, step = 1;
    std::string t = text;
    std::replace(t.begin(), t.end(), ':', ' ');
    std::istringstream is(t);
    if (!(is >> a >> b)) throw std::invalid_argument("bad grid: " + text);
    if (!(is >> step)) step = 1;
    if (step <= 0) throw std::invalid_argument("bad grid step: " + text);
    for (double v = a; v <= b + 1e-12; v += step) out.push_back(v);
    return out;
  }
  std::string t = text;
  std::replace(t.begin(), t.end(), ',', ' ');
  std::istringstream is(t);
  double v;
  while (is >> v) out.push_back(v);
  if (out.empty()) throw std::invalid_argument("empty grid: " + text);
  return out;
}

void apply_setting(ExperimentConfig& cfg, const std::string& section,
                   const std::string& key, const std::string& value) {
  const std::string path = section.empty() ? key : section + "." + key;
  if (section.empty()) {
    if (key == "seed") {
      cfg.seed = to_u64(value, path);
      return;
    }
    if (key == "workers") {
      cfg.workers = static_cast<int>(to_u64(value, path));
      return;
    }
  } else if (section == "model") {
    if (key == "family") {
      cfg.family = models::family_from_name(value);
      return;
    }
    if (key == "p") {
      cfg.p = to_double(value, path);
      return;
    }
  } else if (section == "run") {
    if (key == "samples") { cfg.samples = to_u64(value, path); return; }
    if (key == "direct_replicas") { cfg.direct_replicas = to_u64(value, path); return; }
    if (key == "horizon") { cfg.horizon = static_cast<int>(to_u64(value, path)); return; }
    if (key == "kmax") { cfg.k_max = static_cast<int>(to_u64(value, path)); return; }
    if (key == "barrier_slack") { cfg.barrier_slack = to_double(value, path); return; }
    if (key == "barrier_x") { cfg.barrier_x = to_double(value, path); return; }
    if (key == "subtree_horizon") { cfg.subtree_horizon = static_cast<int>(to_u64(value, path)); return; }
    if (key == "subtree_slack") { cfg.subtree_slack = to_double(value, path); return; }
    if (key == "population_cap") { cfg.population_cap = static_cast<std::int64_t>(to_u64(value, path)); return; }
    if (key == "workers") { cfg.workers = static_cast<int>(to_u64(value, path)); return; }
    if (key == "seed") { cfg.seed = to_u64(value, path); return; }
  } else if (section == "analysis") {
    if (key == "x_grid") { cfg.x_grid = parse_grid(value); return; }
    if (key == "t_grid") { cfg.t_grid = to_int_grid(value); return; }
    if (key == "d_grid") { cfg.d_grid = parse_grid(value); return; }
    if (key == "epsilon") { cfg.epsilon = to_double(value, path); return; }
    if (key == "overshoot_x") { cfg.overshoot_x = to_double(value, path); return; }
    if (key == "cdinf_horizon") { cfg.cdinf_horizon = static_cast<int>(to_u64(value, path)); return; }
    if (key == "cdinf_barrier") { cfg.cdinf_barrier = to_double(value, path); return; }
    if (key == "ks_alpha") { cfg.ks_alpha = to_double(value, path); return; }
    if (key == "tolerance") { cfg.tolerance = to_double(value, path); return; }
  } else if (section == "walk") {
    if (key == "dist") { cfg.dist = value; return; }
    if (key == "quantity") { cfg.quantity = value; return; }
    if (key == "method") { cfg.method = value; return; }
    if (key == "u_grid") { cfg.u_grid = parse_grid(value); return; }
    if (key == "a_grid") { cfg.a_grid = parse_grid(value); return; }
  } else {
    throw std::invalid_argument("unknown config section: [" + section + "]");
  }
  throw std::invalid_argument("unknown config key: " + path);
}

ExperimentConfig parse_config_text(const std::string& text) {
  ExperimentConfig cfg;
  std::istringstream is(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw std::invalid_argument("config line " + std::to_string(lineno) +
                                    ": malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config line " + std::to_string(lineno) +
                                  ": expected key = value");
    apply_setting(cfg, section, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return cfg;
}

ExperimentConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

spine::MinTailOptions ExperimentConfig::min_tail_options() const {
  spine::MinTailOptions opt;
  opt.k_max = k_max;
  opt.subtree_horizon = subtree_horizon;
  opt.subtree_slack = subtree_slack;
  opt.workers = effective_workers();
  opt.t_grid = t_grid.empty() ? std::vector<int>{25} : t_grid;
  return opt;
}

StepDistribution ExperimentConfig::step_distribution() const {
  if (dist == "srw") return StepDistribution::srw();
  if (dist == "asym212") return StepDistribution::asym_lattice();
  if (dist == "gaussian") return models::spine_step_law(spec());
  throw std::invalid_argument("unknown walk.dist: " + dist);
}

int ExperimentConfig::effective_workers() const {
  return workers > 0 ? workers : default_workers();
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

namespace {

ordered_json config_json(const ExperimentConfig& cfg) {
  ordered_json j;
  j["model"] = {{"family", models::family_name(cfg.family)}, {"p", cfg.p}};
  j["run"] = {{"samples", cfg.samples},
              {"direct_replicas", cfg.direct_replicas},
              {"horizon", cfg.horizon},
              {"kmax", cfg.k_max},
              {"subtree_horizon", cfg.subtree_horizon},
              {"subtree_slack", cfg.subtree_slack},
              {"seed", cfg.seed}};
  return j;
}

ordered_json estimate_json(const Estimate& e) {
  return ordered_json{{"value", e.value},
                      {"stderr", e.stderror},
                      {"ci_low", e.ci_low},
                      {"ci_high", e.ci_high},
                      {"n_effective", e.n_effective},
                      {"method", e.method}};
}

class CsvBuilder {
 public:
  explicit CsvBuilder(std::string header) { rows_ = std::move(header) + "\n"; }
  void row(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      rows_ += cells[i];
      rows_ += (i + 1 == cells.size()) ? '\n' : ',';
    }
  }
  std::string str() const { return rows_; }

 private:
  std::string rows_;
};

std::string fd(double v) { return format_double(v); }

// plot-data: comment-headed two/three-column text
std::string plot_data(const std::string& title, std::span<const double> x,
                      std::span<const double> y, std::span<const double> yerr) {
  std::string out = "# " + title + "\n# x y yerr\n";
  for (std::size_t i = 0; i < x.size(); ++i) {
    out += fd(x[i]);
    out += ' ';
    out += fd(y[i]);
    if (!yerr.empty()) {
      out += ' ';
      out += fd(yerr[i]);
    }
    out += '\n';
  }
  return out;
}

ExperimentResult make_result(const std::string& name, ordered_json summary,
                             std::vector<OutputFile> extra, bool gates_pass) {
  ExperimentResult res;
  res.name = name;
  res.exit_code = gates_pass ? 0 : 2;
  summary["experiment"] = name;
  summary["all_gates_pass"] = gates_pass;
  res.files.push_back({"summary.json", summary.dump(2) + "\n"});
  for (auto& f : extra) res.files.push_back(std::move(f));
  return res;
}

// ---------------------------------------------------------------------------
// experiments
// ---------------------------------------------------------------------------

ExperimentResult run_simulate(const ExperimentConfig& cfg) {
  auto spec = cfg.spec();
  sim::BarrierPolicy barrier =
      cfg.barrier_x >= 0.0
          ? sim::BarrierPolicy::adaptive(cfg.barrier_x, cfg.barrier_slack)
          : sim::BarrierPolicy::none();

  struct Partial {
    std::string rows;
    Accumulator w, d, m, survival;
    void merge(Partial& o) {
      rows += o.rows;
      w.merge(o.w);
      d.merge(o.d);
      m.merge(o.m);
      survival.merge(o.survival);
    }
  };
  auto parts = run_chunked<Partial>(
      cfg.samples, cfg.effective_workers(), cfg.seed, 0,
      [&](std::uint64_t rep, RngStream& rng, Partial& part) {
        sim::TreeState tree =
            sim::simulate_tree(spec, cfg.horizon, barrier, rng, cfg.population_cap);
        double w = sim::additive_martingale(tree, cfg.horizon);
        double d = sim::derivative_martingale(tree, cfg.horizon);
        sim::MinRecord rec = sim::global_min(tree, rng);
        sim::DecompositionTerms terms = sim::min_decomposition(tree, rec, cfg.horizon);
        part.w.add(w);
        part.d.add(d);
        part.m.add(rec.value);
        part.survival.add(tree.frontier_size() > 0 ? 1.0 : 0.0);
        part.rows += std::to_string(cfg.seed) + "," + std::to_string(rep) + "," +
                     std::to_string(cfg.horizon) + "," + fd(w) + "," + fd(d) + "," +
                     fd(rec.value) + "," + std::to_string(rec.argmin_generation) +
                     "," + fd(terms.frak_d) + "," + fd(tree.killed_mass_bound) + "\n";
      });
  Partial total;
  for (auto& p : parts) total.merge(p);

  ordered_json j = config_json(cfg);
  j["mean_w"] = estimate_json(total.w.estimate());
  j["mean_d"] = estimate_json(total.d.estimate());
  j["mean_min"] = estimate_json(total.m.estimate());
  j["survival"] = total.survival.mean();

  std::string csv =
      "seed,replica_id,n,W_n,D_n,M,argmin_gen,frak_D,killed_mass_bound\n" +
      total.rows;
  return make_result("simulate", std::move(j), {{"replicas.csv", csv}}, true);
}

ExperimentResult run_spine_marginal(const ExperimentConfig& cfg) {
  auto spec = cfg.spec();
  const std::vector<int> depths = {1, 5, 20};
  const int k_deep = 20;

  struct Partial {
    std::vector<std::vector<double>> at;
    void merge(Partial& o) {
      if (at.size() < o.at.size()) at.resize(o.at.size());
      for (std::size_t i = 0; i < o.at.size(); ++i)
        at[i].insert(at[i].end(), o.at[i].begin(), o.at[i].end());
    }
  };
  auto parts = run_chunked<Partial>(
      cfg.samples, cfg.effective_workers(), cfg.seed, 0,
      [&](std::uint64_t, RngStream& rng, Partial& part) {
        if (part.at.empty()) part.at.resize(depths.size());
        spine::SpinePath path = spine::simulate_spine(spec, k_deep, rng);
        for (std::size_t i = 0; i < depths.size(); ++i)
          part.at[i].push_back(path.positions[static_cast<std::size_t>(depths[i])]);
      });
  Partial total;
  for (auto& p : parts) total.merge(p);

  bool pass = true;
  ordered_json checks = ordered_json::array();
  for (std::size_t i = 0; i < depths.size(); ++i) {
    double sd = std::sqrt(spec.sigma_g2 * depths[i]);
    KsReport ks = ks_test(total.at[i], [&](double v) { return normal_cdf(v / sd); });
    pass = pass && ks.p_value > cfg.ks_alpha;
    checks.push_back({{"n", depths[i]},
                      {"ks_statistic", ks.statistic},
                      {"p_value", ks.p_value}});
  }
  ordered_json j = config_json(cfg);
  j["checks"] = checks;
  return make_result("spine:marginal", std::move(j), {}, pass);
}

ExperimentResult run_many_to_one(const ExperimentConfig& cfg) {
  auto spec = cfg.spec();
  const std::vector<std::string> tags = {"one", "below_zero", "endpoint_exp_neg"};
  spine::ManyToOneOptions opt;
  opt.workers = cfg.effective_workers();

  bool pass = true;
  CsvBuilder csv("g,n,tree_value,tree_stderr,walk_value,walk_stderr,agree");
  ordered_json rows = ordered_json::array();
  for (const auto& tag : tags) {
    for (int n = 1; n <= 6; ++n) {
      auto [lhs, rhs] =
          spine::many_to_one_check(spec, n, tag, cfg.samples, cfg.seed + n, opt);
      double comb = std::sqrt(lhs.stderror * lhs.stderror + rhs.stderror * rhs.stderror);
      bool agree = std::abs(lhs.value - rhs.value) <= 3.0 * comb + 1e-12;
      if (tag == "one" && cfg.p == 1.0) {
        double target = std::pow(2.0, n);
        agree = agree && std::abs(lhs.value - target) <= 0.01 * target &&
                std::abs(rhs.value - target) <= 0.01 * target;
      }
      pass = pass && agree;
      csv.row({tag, std::to_string(n), fd(lhs.value), fd(lhs.stderror),
               fd(rhs.value), fd(rhs.stderror), agree ? "1" : "0"});
      rows.push_back({{"g", tag},
                      {"n", n},
                      {"tree", estimate_json(lhs)},
                      {"walk", estimate_json(rhs)},
                      {"agree", agree}});
    }
  }
  ordered_json j = config_json(cfg);
  j["checks"] = rows;
  return make_result("spine:many-to-one", std::move(j),
                     {{"many_to_one.csv", csv.str()}}, pass);
}

ExperimentResult run_reversal(const ExperimentConfig& cfg) {
  auto spec = cfg.spec();
  const int k = 10;
  spine::TimeReversalOptions opt;
  opt.workers = cfg.effective_workers();
  bool pass = true;
  ordered_json rows = ordered_json::array();
  for (const auto& tag : {"endpoint", "max_below_zero", "exp_first_step_sib"}) {
    auto [fwd, rev] =
        spine::time_reversal_check(spec, k, tag, cfg.samples, cfg.seed, opt);
    double comb =
        std::sqrt(fwd.stderror * fwd.stderror + rev.stderror * rev.stderror);
    bool agree = std::abs(fwd.value - rev.value) <= 3.0 * comb + 1e-12;
    pass = pass && agree;
    rows.push_back({{"phi", tag},
                    {"forward", estimate_json(fwd)},
                    {"reversed", estimate_json(rev)},
                    {"agree", agree}});
  }
  ordered_json j = config_json(cfg);
  j["k"] = k;
  j["checks"] = rows;
  return make_result("spine:reversal", std::move(j), {}, pass);
}

ExperimentResult run_renewal(const ExperimentConfig& cfg) {
  StepDistribution dist = cfg.step_distribution();
  ordered_json j = config_json(cfg);
  j["dist"] = cfg.dist;
  j["method"] = cfg.method;
  std::vector<OutputFile> files;

  if (cfg.method == "dp") {
    walk::LatticeOracle oracle(dist);
    CsvBuilder csv("u,r_minus,r_plus,k_atom,error_bound");
    for (double u : cfg.u_grid)
      csv.row({fd(u), fd(oracle.r_minus(u)), fd(oracle.r_plus(u)),
               fd(oracle.k_atom(u)), fd(oracle.error_bound())});
    files.push_back({"renewal.csv", csv.str()});
    j["theta0"] = oracle.theta0();
    j["c_minus"] = oracle.c_minus();
    j["c_plus"] = oracle.c_plus();
    j["error_bound"] = oracle.error_bound();
  } else if (cfg.method == "mc") {
    RngStream rng(cfg.seed, 0);
    double u_max = *std::max_element(cfg.u_grid.begin(), cfg.u_grid.end());
    walk::McRenewalTable table = walk::mc_renewal_table(
        dist, u_max, 0.25, static_cast<long long>(cfg.samples), 4000000, rng);
    CsvBuilder csv("u,r_minus,r_minus_stderr,r_plus,r_plus_stderr");
    for (double u : cfg.u_grid)
      csv.row({fd(u), fd(table.r_minus_at(u)), fd(table.r_minus_stderr_at(u)),
               fd(table.r_plus_at(u)), fd(0.0)});
    files.push_back({"renewal.csv", csv.str()});
    j["censored_fraction"] = table.censored_fraction;
  } else {
    throw std::invalid_argument("renewal: method must be dp or mc");
  }
  return make_result("renewal", std::move(j), std::move(files), true);
}

ExperimentResult run_min_tail(const ExperimentConfig& cfg, double x) {
  auto spec = cfg.spec();
  spine::MinTailOptions opt = cfg.min_tail_options();
  spine::MinTailResult res =
      spine::estimate_min_tail(spec, x, cfg.samples, opt, cfg.seed);

  ordered_json j = config_json(cfg);
  j["x"] = x;
  j["p_hat"] = res.estimate.value;
  j["stderr"] = res.estimate.stderror;
  j["exm_phat"] = res.exm_phat;
  j["truncation_bound"] = res.truncation_bound;
  j["indicator_bias_bound"] = res.indicator_bias_bound;
  j["accepted"] = res.accepted;
  j["ess"] = res.ess;
  j["mean_argmin_depth"] = res.mean_depth;
  j["kmax_warning"] = res.kmax_warning;

  CsvBuilder csv("j,interval_lo,interval_hi,p_hat,stderr,samples");
  for (const auto& ic : res.intervals)
    csv.row({std::to_string(ic.j), fd(-(x + ic.j + 1)), fd(-(x + ic.j)),
             fd(ic.p_hat), fd(ic.std_err), std::to_string(ic.samples)});

  bool pass = res.exm_phat > 0.0 &&
              res.exm_phat <= 1.0 + 3.0 * std::exp(x) * res.estimate.stderror;
  return make_result("min-tail", std::move(j), {{"intervals.csv", csv.str()}}, pass);
}

ExperimentResult run_theorem_cm(const ExperimentConfig& cfg) {
  auto spec = cfg.spec();
  tail::TailCurve curve = tail::estimate_cm(spec, cfg.x_grid, cfg.samples,
                                            cfg.min_tail_options(), cfg.seed);
  bool bracket = true;
  for (std::size_t i = 0; i < curve.x_grid.size(); ++i)
    bracket = bracket && curve.transformed[i] > 0.0 &&
              curve.transformed[i] <= 1.0 + 3.0 * curve.transformed_stderr[i];
  bool pass = bracket && !curve.non_plateau_flag;

  ordered_json j = config_json(cfg);
  j["plateau_level"] = curve.fit.level;
  j["plateau_level_stderr"] = curve.fit.level_stderr;
  j["plateau_drift"] = curve.fit.drift;
  j["window"] = {curve.fit.window_lo, curve.fit.window_hi};
  j["non_plateau_flag"] = curve.non_plateau_flag;
  j["bracket_ok"] = bracket;

  CsvBuilder csv("x,p_hat,stderr,exm_phat,exm_stderr,truncation_bound");
  for (std::size_t i = 0; i < curve.x_grid.size(); ++i)
    csv.row({fd(curve.x_grid[i]), fd(curve.raw_p[i]), fd(curve.raw_stderr[i]),
             fd(curve.transformed[i]), fd(curve.transformed_stderr[i]),
             fd(curve.extra[i])});
  return make_result(
      "theorem:cM", std::move(j),
      {{"cm_curve.csv", csv.str()},
       {"cm_curve.plot",
        plot_data("e^x P(M <= -x)", curve.x_grid, curve.transformed,
                  curve.transformed_stderr)}},
      pass);
}

ExperimentResult run_theorem_cdinf(const ExperimentConfig& cfg) {
  auto spec = cfg.spec();
  std::vector<double> grid = cfg.d_grid;
  if (grid.empty())
    for (double e = 1.0; e <= 5.01; e += 0.5) grid.push_back(std::exp(e));
  tail::DerivativeTailResult res =
      tail::estimate_cdinf(spec, cfg.cdinf_horizon, grid, cfg.samples,
                           cfg.cdinf_barrier, cfg.seed, cfg.effective_workers());

  bool monotone = true;
  for (std::size_t i = 1; i < res.curve.raw_p.size(); ++i)
    monotone = monotone &&
               res.curve.raw_p[i] <= res.curve.raw_p[i - 1] +
                   3.0 * (res.curve.raw_stderr[i] + res.curve.raw_stderr[i - 1]);
  bool pass = monotone && !res.curve.non_plateau_flag;

  ordered_json j = config_json(cfg);
  j["plateau_level"] = res.curve.fit.level;
  j["plateau_level_stderr"] = res.curve.fit.level_stderr;
  j["plateau_drift"] = res.curve.fit.drift;
  j["horizon_sensitivity_flag"] = res.horizon_sensitivity_flag;
  j["survival_fraction"] = res.survival_fraction;
  ordered_json integral = ordered_json::array();
  for (std::size_t i = 0; i < res.integral_grid.size(); ++i)
    integral.push_back({{"X", res.integral_grid[i]},
                        {"integral_over_logx", res.integral_over_logx[i]},
                        {"stderr", res.integral_stderr[i]}});
  j["slow_variation"] = integral;

  CsvBuilder csv("x,p_hat,stderr,x_p,x_p_stderr");
  for (std::size_t i = 0; i < grid.size(); ++i)
    csv.row({fd(grid[i]), fd(res.curve.raw_p[i]), fd(res.curve.raw_stderr[i]),
             fd(res.curve.transformed[i]), fd(res.curve.transformed_stderr[i])});
  return make_result(
      "theorem:cDinf", std::move(j),
      {{"cdinf_curve.csv", csv.str()},
       {"cdinf_curve.plot", plot_data("x P(D >= x)", grid, res.curve.transformed,
                                      res.curve.transformed_stderr)}},
      pass);
}

ExperimentResult run_theorem_overshoot(const ExperimentConfig& cfg) {
  auto spec = cfg.spec();
  tail::ConditionalSample cond = tail::conditional_min_law(
      spec, cfg.overshoot_x, cfg.samples, cfg.min_tail_options(), cfg.seed);
  bool pass = cond.overshoot_ks.p_value > cfg.ks_alpha &&
              std::abs(cond.independence_corr) < 0.05;

  ordered_json j = config_json(cfg);
  j["x"] = cfg.overshoot_x;
  j["ks_statistic"] = cond.overshoot_ks.statistic;
  j["ks_p_value"] = cond.overshoot_ks.p_value;
  j["effective_n"] = cond.overshoot_ks.n_effective;
  j["overshoot_mean"] = cond.overshoot_mean;
  j["overshoot_mean_stderr"] = cond.overshoot_mean_stderr;
  j["independence_corr"] = cond.independence_corr;
  j["accepted"] = cond.accepted;
  j["ess_warning"] = cond.ess_warning;
  return make_result("theorem:overshoot", std::move(j), {}, pass);
}

ExperimentResult run_theorem_factorization(const ExperimentConfig& cfg) {
  auto spec = cfg.spec();
  tail::TailCurve cm = tail::estimate_cm(spec, cfg.x_grid, cfg.samples,
                                         cfg.min_tail_options(), cfg.seed);
  std::vector<double> grid;
  for (double e = 1.0; e <= 5.01; e += 0.5) grid.push_back(std::exp(e));
  tail::DerivativeTailResult cdinf = tail::estimate_cdinf(
      spec, cfg.cdinf_horizon, grid, cfg.direct_replicas, cfg.cdinf_barrier,
      cfg.seed + 1, cfg.effective_workers());
  tail::ConditionalSample cond = tail::conditional_min_law(
      spec, cfg.overshoot_x, cfg.samples, cfg.min_tail_options(), cfg.seed + 2);

  WeightedAccumulator frak;
  for (const auto& r : cond.records)
    frak.add(r.frak_d_at_t.empty() ? r.frak_d : r.frak_d_at_t.back(), r.weight);
  Estimate frak_mean = frak.estimate("weighted-conditional", cfg.seed + 2);

  tail::FactorizationReport rep = tail::factorization_check(cm, cdinf, frak_mean);

  ordered_json j = config_json(cfg);
  j["c_m"] = estimate_json(rep.c_m);
  j["c_dinf"] = estimate_json(rep.c_dinf);
  j["e_frak"] = estimate_json(rep.e_frak);
  j["residual"] = rep.residual;
  j["combined_halfwidth"] = rep.combined_halfwidth;
  j["pass"] = rep.pass;
  j["upstream_flags"] = rep.upstream_flags;
  return make_result("theorem:factorization", std::move(j), {}, rep.pass);
}

ExperimentResult run_theorem_smoothing(const ExperimentConfig& cfg) {
  auto spec = cfg.spec();
  tail::SmoothingReport rep = tail::smoothing_fixed_point_test(
      spec, cfg.cdinf_horizon, cfg.samples, cfg.cdinf_barrier, cfg.seed,
      cfg.effective_workers());
  double comb = std::sqrt(rep.mean_a.stderror * rep.mean_a.stderror +
                          rep.mean_b.stderror * rep.mean_b.stderror);
  bool pass = rep.ks.p_value > cfg.ks_alpha &&
              rep.degenerate_ks.p_value < cfg.ks_alpha &&
              std::abs(rep.mean_a.value - rep.mean_b.value) <= 3.0 * comb;

  ordered_json j = config_json(cfg);
  j["ks_statistic"] = rep.ks.statistic;
  j["ks_p_value"] = rep.ks.p_value;
  j["degenerate_p_value"] = rep.degenerate_ks.p_value;
  j["mean_fresh"] = estimate_json(rep.mean_a);
  j["mean_assembled"] = estimate_json(rep.mean_b);
  return make_result("theorem:smoothing", std::move(j), {}, pass);
}

ExperimentResult run_theorem_integrability(const ExperimentConfig& cfg) {
  auto spec = cfg.spec();
  const std::vector<double> grid = {4, 6, 8, 10};
  tail::IntegrabilityProfile prof = tail::integrability_profile(
      spec, grid, cfg.samples, cfg.min_tail_options(), cfg.seed);

  // flatness: all CI overlap with the weighted mean level
  double level = 0.0, wsum = 0.0;
  for (const auto& e : prof.log2_moment) {
    double w = e.stderror > 0 ? 1.0 / (e.stderror * e.stderror) : 1.0;
    level += w * e.value;
    wsum += w;
  }
  level /= wsum;
  bool flat = true;
  for (const auto& e : prof.log2_moment)
    flat = flat && std::abs(e.value - level) <= 3.0 * std::max(e.stderror, 1e-12);

  ordered_json rows = ordered_json::array();
  CsvBuilder csv("x,log2_moment,log2_stderr,plain_mean,plain_stderr,ess,heavy_tail");
  for (std::size_t i = 0; i < grid.size(); ++i) {
    rows.push_back({{"x", grid[i]},
                    {"log2_moment", estimate_json(prof.log2_moment[i])},
                    {"plain_mean", estimate_json(prof.plain_mean[i])},
                    {"ess", prof.ess[i]},
                    {"heavy_tail_warning", static_cast<bool>(prof.heavy_tail_warning[i])}});
    csv.row({fd(grid[i]), fd(prof.log2_moment[i].value),
             fd(prof.log2_moment[i].stderror), fd(prof.plain_mean[i].value),
             fd(prof.plain_mean[i].stderror), fd(prof.ess[i]),
             prof.heavy_tail_warning[i] ? "1" : "0"});
  }
  ordered_json j = config_json(cfg);
  j["profile"] = rows;
  j["flat_level"] = level;
  j["flat"] = flat;
  return make_result("theorem:integrability", std::move(j),
                     {{"integrability.csv", csv.str()}}, flat);
}

ExperimentResult run_theorem_truncation(const ExperimentConfig& cfg) {
  auto spec = cfg.spec();
  std::vector<double> xg;
  for (double x : cfg.x_grid)
    if (x >= 4.0 && x <= 10.0) xg.push_back(x);
  if (xg.empty()) xg = {4, 6, 8};
  std::vector<int> tg = cfg.t_grid;
  tail::TruncationTable table = tail::truncation_profile(
      spec, tg, xg, cfg.epsilon, cfg.samples, cfg.min_tail_options(), cfg.seed);

  bool nonincreasing = true;
  for (std::size_t xi = 0; xi < xg.size(); ++xi)
    for (std::size_t ti = 1; ti < tg.size(); ++ti)
      nonincreasing =
          nonincreasing && table.p[ti][xi] <= table.p[ti - 1][xi] + 1e-12;
  bool pass = nonincreasing;

  CsvBuilder csv("t,x,p_gap_ge_eps");
  for (std::size_t ti = 0; ti < tg.size(); ++ti)
    for (std::size_t xi = 0; xi < xg.size(); ++xi)
      csv.row({std::to_string(tg[ti]), fd(xg[xi]), fd(table.p[ti][xi])});

  ordered_json j = config_json(cfg);
  j["epsilon"] = cfg.epsilon;
  j["t_grid"] = tg;
  j["x_grid"] = xg;
  j["sup_over_x"] = table.sup_over_x;
  j["nonincreasing_in_t"] = nonincreasing;
  return make_result("theorem:truncation", std::move(j),
                     {{"truncation.csv", csv.str()}}, pass);
}

ExperimentResult run_verify_lemma25(const ExperimentConfig& cfg) {
  StepDistribution dist = cfg.step_distribution();
  if (!dist.is_lattice())
    throw std::invalid_argument("verify lemma25: lattice walk required");
  walk::LatticeOracle oracle(dist);

  bool pass = true;
  CsvBuilder csv("x,a,lhs,rhs,residual,bound,ok");
  for (double x : cfg.u_grid.size() > 1 ? cfg.u_grid : std::vector<double>{6}) {
    for (double ad : cfg.a_grid) {
      long a = static_cast<long>(ad);
      if (a <= 0) continue;
      walk::IdentityReport rep = walk::check_renewal_identity(oracle, x, a);
      bool ok = std::abs(rep.residual) <=
                std::max(rep.combined_bound, cfg.tolerance);
      pass = pass && ok;
      csv.row({fd(x), std::to_string(a), fd(rep.lhs), fd(rep.rhs),
               fd(rep.residual), fd(rep.combined_bound), ok ? "1" : "0"});
    }
  }
  bool rejected = false;
  try {
    walk::check_renewal_identity(oracle, 5.0, 0);
  } catch (const std::invalid_argument&) {
    rejected = true;
  }
  pass = pass && rejected;

  ordered_json j = config_json(cfg);
  j["dist"] = cfg.dist;
  j["a_zero_rejected"] = rejected;
  j["pass"] = pass;
  return make_result("verify:lemma25", std::move(j), {{"lemma25.csv", csv.str()}},
                     pass);
}

ExperimentResult run_verify_harmonicity(const ExperimentConfig& cfg) {
  ordered_json j = config_json(cfg);
  bool pass = true;
  ordered_json rows = ordered_json::array();
  StepDistribution dist = cfg.step_distribution();
  if (dist.is_lattice()) {
    walk::LatticeOracle oracle(dist);
    for (double u : cfg.u_grid) {
      walk::HarmonicityReport rep = walk::check_harmonicity(oracle, u);
      bool ok = std::abs(rep.residual) <= 1e-9 * (1.0 + oracle.r_minus(u)) &&
                std::abs(rep.residual_plus) <= 1e-9 * (1.0 + oracle.r_plus(u));
      pass = pass && ok;
      rows.push_back({{"u", u},
                      {"residual_minus", rep.residual},
                      {"residual_plus", rep.residual_plus},
                      {"ok", ok}});
    }
  } else {
    RngStream rng(cfg.seed, 0);
    double u_max = *std::max_element(cfg.u_grid.begin(), cfg.u_grid.end());
    walk::McRenewalTable table = walk::mc_renewal_table(
        dist, u_max + 8.0 * std::sqrt(dist.variance), 0.25,
        static_cast<long long>(std::max<std::uint64_t>(cfg.samples / 10, 20000)),
        4000000, rng);
    for (double u : cfg.u_grid) {
      RngStream mc_rng(cfg.seed, 1 + static_cast<std::uint64_t>(u * 16));
      walk::HarmonicityReport rep = walk::check_harmonicity_mc(
          table, dist, u, static_cast<long long>(cfg.samples), mc_rng);
      bool ok = std::abs(rep.residual) <= 3.0 * rep.combined_stderr;
      pass = pass && ok;
      rows.push_back({{"u", u},
                      {"residual_minus", rep.residual},
                      {"combined_stderr", rep.combined_stderr},
                      {"ok", ok}});
    }
  }
  j["checks"] = rows;
  return make_result("verify:harmonicity", std::move(j), {}, pass);
}

ExperimentResult run_verify_renewal_oracle(const ExperimentConfig& cfg) {
  StepDistribution srw = StepDistribution::srw();
  walk::LatticeOracle oracle(srw);
  bool pass = true;

  // SRW closed forms
  for (int u = 0; u <= 20; ++u) {
    pass = pass && std::abs(oracle.r_minus(u) - (u + 1)) < 1e-9;
    pass = pass && std::abs(oracle.k_atom(u) - 1.0) < 1e-9;
  }
  double theta_err = std::abs(oracle.theta0() - 2.0);
  pass = pass && theta_err < 1e-6;

  RngStream rng(cfg.seed, 0);
  walk::McRenewalTable table = walk::mc_renewal_table(
      srw, 21.0, 1.0, static_cast<long long>(cfg.samples), 2000000, rng);
  bool mc_ok = true;
  for (int u = 0; u <= 20; ++u) {
    double se = std::max(table.r_minus_stderr_at(u), 1e-12);
    mc_ok = mc_ok && std::abs(table.r_minus_at(u) - oracle.r_minus(u)) <= 3.0 * se;
  }
  pass = pass && mc_ok;

  ordered_json j = config_json(cfg);
  j["theta0"] = oracle.theta0();
  j["theta0_error"] = theta_err;
  j["mc_matches_dp"] = mc_ok;
  return make_result("verify:renewal-oracle", std::move(j), {}, pass);
}

}  // namespace

ExperimentResult run_experiment(const std::string& which,
                                const ExperimentConfig& cfg) {
  if (which == "simulate") return run_simulate(cfg);
  if (which == "spine:marginal") return run_spine_marginal(cfg);
  if (which == "spine:many-to-one" || which == "verify:many-to-one")
    return run_many_to_one(cfg);
  if (which == "spine:reversal" || which == "verify:reversal")
    return run_reversal(cfg);
  if (which == "renewal") return run_renewal(cfg);
  if (which.rfind("min-tail", 0) == 0) {
    double x = cfg.x_grid.empty() ? 6.0 : cfg.x_grid.front();
    return run_min_tail(cfg, x);
  }
  if (which == "theorem:cM") return run_theorem_cm(cfg);
  if (which == "theorem:cDinf") return run_theorem_cdinf(cfg);
  if (which == "theorem:overshoot") return run_theorem_overshoot(cfg);
  if (which == "theorem:factorization") return run_theorem_factorization(cfg);
  if (which == "theorem:smoothing") return run_theorem_smoothing(cfg);
  if (which == "theorem:integrability") return run_theorem_integrability(cfg);
  if (which == "theorem:truncation") return run_theorem_truncation(cfg);
  if (which == "verify:lemma25") return run_verify_lemma25(cfg);
  if (which == "verify:harmonicity") return run_verify_harmonicity(cfg);
  if (which == "verify:renewal-oracle") return run_verify_renewal_oracle(cfg);
  throw std::invalid_argument("unknown experiment: " + which);
}

void write_outputs(const ExperimentResult& result, const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  for (const auto& f : result.files) {
    std::ofstream out(std::filesystem::path(out_dir) / f.name, std::ios::binary);
    out << f.content;
  }
}

}  // namespace brw::harness
