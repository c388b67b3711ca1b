#include "wildlab/cli.hpp"

#include "wildlab/diagrams.hpp"
#include "wildlab/errors.hpp"
#include "wildlab/heat.hpp"
#include "wildlab/params.hpp"
#include "wildlab/trees.hpp"

#include <CLI11.hpp>
#include <boost/version.hpp>
#include <openssl/crypto.h>
#include <openssl/evp.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <memory>
#include <ostream>
#include <set>
#include <sstream>
#include <type_traits>

#ifndef WILDLAB_VERSION
#define WILDLAB_VERSION "0.0.0"
#endif

namespace wildlab {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

json versions() {
  return {{"wildlab", WILDLAB_VERSION},
          {"fftw", fft_library_version()},
          {"boost", BOOST_LIB_VERSION},
          {"openssl", OpenSSL_version(OPENSSL_VERSION)},
          {"compiler", __VERSION__}};
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw DomainError("cannot write " + path.string());
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("invalid JSON in " + path + ": " + e.what());
  }
}

// Strict field-by-field reader: typed, and every key must be consumed.
class ConfigReader {
 public:
  explicit ConfigReader(const json& j) : j_(j) {
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
  }

  template <class T>
  void operator()(const char* key, T& value) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end()) return;
    if constexpr (std::is_same_v<T, bool>) {
      if (!it->is_boolean()) throw ConfigError(std::string(key) + " must be a boolean");
    } else if constexpr (std::is_integral_v<T>) {
      if (!it->is_number_integer()) throw ConfigError(std::string(key) + " must be an integer");
      if (std::is_unsigned_v<T> && it->get<std::int64_t>() < 0) throw ConfigError(std::string(key) + " must be >= 0");
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!it->is_number()) throw ConfigError(std::string(key) + " must be a number");
    }
    try {
      value = it->get<T>();
    } catch (const json::exception&) {
      throw ConfigError(std::string("bad value for ") + key);
    }
  }

  void finish() const {
    for (const auto& item : j_.items())
      if (!seen_.count(item.key())) throw ConfigError("unknown config key " + item.key());
  }

 private:
  const json& j_;
  std::set<std::string> seen_;
};

template <class Visitor>
void visit_study(StudyConfig& c, Visitor&& v) {
  v("d", c.d);
  v("n", c.n);
  v("M", c.M);
  v("samples", c.samples);
  v("seed", c.seed);
  v("ladder", c.ladder);
  v("tree", c.tree);
  v("beta", c.beta);
  v("kappa", c.kappa);
  v("time_factor", c.time_factor);
  v("lambda_factor", c.lambda_factor);
  v("eps_factor", c.eps_factor);
  v("eps_ratio", c.eps_ratio);
  v("h", c.h);
  v("p", c.p);
  v("b", c.b);
  v("p_cubic", c.p_cubic);
  v("J", c.J);
  v("probes", c.probes);
  v("constant_field", c.constant_field);
  v("fit_lo", c.fit_lo);
  v("fit_hi", c.fit_hi);
  v("tolerance", c.tolerance);
  v("stderr_cap", c.stderr_cap);
  v("eps_diff_kappa", c.eps_diff_kappa);
  v("deriv_mollify", c.deriv_mollify);
  v("gamma", c.gamma);
  v("alpha", c.alpha);
  v("k_order", c.k_order);
  v("times", c.times);
  v("spread_cap", c.spread_cap);
  v("eta_offset", c.eta_offset);
  v("floor_fraction", c.floor_fraction);
  v("eps_c", c.eps_c);
  v("smooth_data", c.smooth_data);
}

template <class Visitor>
void visit_solve(SolveConfig& c, Visitor&& v) {
  v("d", c.d);
  v("kappa", c.kappa);
  v("n", c.n);
  v("M", c.M);
  v("eps", c.eps);
  v("seed", c.seed);
  v("T", c.T);
  v("J", c.J);
  v("q", c.q);
  v("b", c.b);
  v("p_cubic", c.p_cubic);
  v("eps_c", c.eps_c);
  v("tol", c.tol);
  v("max_iter", c.max_iter);
  v("snapshots", c.snapshots);
}

json affine_json(const Affine& a, const Binding& at) {
  return {{"form", a.str()}, {"value", a.eval(at.d, at.kappa)}};
}

json pairs_json(const std::vector<std::pair<int, int>>& v) {
  json out = json::array();
  for (const auto& [a, b] : v) out.push_back({a, b});
  return out;
}

json certificate_json(const BoundCertificate& c, const Binding& at) {
  json trace = json::array();
  for (const auto& s : c.trace) {
    json updates = json::array();
    for (const auto& u : s.updates)
      updates.push_back({{"vertex", u.vertex}, {"before", u.before.str()}, {"after", u.after.str()}});
    trace.push_back({{"step", step_name(s.kind)},
                     {"removed_vertices", s.removed_vertices},
                     {"removed_edges", pairs_json(s.removed_edges)},
                     {"removed_contractions", pairs_json(s.removed_contractions)},
                     {"added_contractions", pairs_json(s.added_contractions)},
                     {"updates", updates},
                     {"safe_deletion", s.safe_deletion},
                     {"zeta_consumed", s.zeta_consumed.str()},
                     {"theta_max_after", s.theta_max_after.str()}});
  }
  json j = {{"ok", c.ok},
            {"theta", affine_json(c.theta, at)},
            {"theta_max", affine_json(c.theta_max, at)},
            {"lambda_rho", affine_json(c.lambda_rho, at)},
            {"lambda_rho_bar", affine_json(c.lambda_rho_bar, at)},
            {"exponent_rho", affine_json(c.exponent_rho, at)},
            {"exponent_rho_bar", affine_json(c.exponent_rho_bar, at)},
            {"spatial_exponent", affine_json(c.spatial_exponent, at)},
            {"time_difference", c.time_difference},
            {"trace", trace}};
  if (!c.ok) {
    j["failure"] = c.failure;
    j["failed_step"] = c.failed_step;
  }
  if (c.time_difference) {
    j["zeta"] = affine_json(c.zeta, at);
    j["time_exponent"] = affine_json(c.time_exponent, at);
  }
  return j;
}

json ci_report_json(const CiReport& r) {
  json trees = json::array();
  for (const auto& t : r.per_tree)
    trees.push_back({{"tree", t.tree},
                     {"noise", t.noise},
                     {"level_default", t.level_default},
                     {"beta", t.beta},
                     {"delta", t.delta},
                     {"omega", t.omega},
                     {"beta_ok", t.beta_ok},
                     {"delta_ok", t.delta_ok},
                     {"omega_ok", t.omega_ok}});
  return {{"pass", r.pass},
          {"omega_min", r.omega_min},
          {"alpha", r.alpha},
          {"gamma", r.gamma},
          {"omega_witness", r.omega_witness},
          {"alpha_witness", r.alpha_witness},
          {"gamma_witness", r.gamma_witness},
          {"alpha_noise_sum", r.alpha_noise_sum},
          {"gamma_noise_sum", r.gamma_noise_sum},
          {"per_tree", trees}};
}

// "key=value" with value parsed as JSON, falling back to a plain string.
void apply_overrides(json& j, const std::vector<std::string>& sets) {
  for (const auto& s : sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) throw CLI::ValidationError("--set", "expected key=value, got " + s);
    const std::string key = s.substr(0, eq), text = s.substr(eq + 1);
    json value = json::parse(text, nullptr, false);
    j[key] = value.is_discarded() ? json(text) : value;
  }
}

std::string error_kind(const std::exception& e) {
  if (dynamic_cast<const HorizonTooLarge*>(&e)) return "horizon_too_large";
  if (dynamic_cast<const ConfigError*>(&e)) return "config_error";
  if (dynamic_cast<const DomainError*>(&e)) return "domain_error";
  return "runtime_error";
}

void emit_error(std::ostream& err, const std::string& kind, const std::string& message) {
  err << json{{"error", kind}, {"message", message}}.dump() << "\n";
}

fs::path prepare_dir(const std::string& dir) {
  fs::path p(dir);
  fs::create_directories(p);
  return p;
}

}  // namespace

std::string sha256_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DomainError("cannot read " + path);
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) throw DomainError("sha256 init failed");
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (in.gcount() > 0) EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), md, &len);
  std::string hex;
  char byte[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(byte, sizeof byte, "%02x", md[i]);
    hex += byte;
  }
  return hex;
}

void write_manifest(RunManifest run, const std::string& dir, const std::vector<std::string>& outputs) {
  const fs::path root(dir);
  run.outputs.clear();
  for (const auto& rel : outputs) {
    const fs::path p = root / rel;
    run.outputs.push_back({rel, sha256_file(p.string()), fs::file_size(p)});
  }
  if (run.finished.empty()) run.finished = utc_now();
  json inventory = json::array();
  for (const auto& o : run.outputs) inventory.push_back({{"path", o.path}, {"sha256", o.sha256}, {"bytes", o.bytes}});
  const json j = {{"command", run.command},   {"config", run.config},     {"seeds", run.seeds},
                  {"versions", versions()},   {"started", run.started},   {"finished", run.finished},
                  {"outputs", inventory}};
  const fs::path tmp = root / "manifest.json.tmp";
  write_text(tmp, j.dump(2) + "\n");
  fs::rename(tmp, root / "manifest.json");
}

VerifyResult verify_run(const std::string& dir) {
  VerifyResult r;
  const fs::path root(dir);
  std::ifstream in(root / "manifest.json");
  if (!in) {
    r.ok = false;
    r.problems.push_back("missing manifest.json");
    return r;
  }
  const json j = json::parse(in, nullptr, false);
  if (j.is_discarded() || !j.contains("outputs")) {
    r.ok = false;
    r.problems.push_back("unreadable manifest.json");
    return r;
  }
  for (const auto& o : j.at("outputs")) {
    const std::string rel = o.at("path").get<std::string>();
    const fs::path p = root / rel;
    if (fs::path(rel).is_absolute() || rel.find("..") != std::string::npos) {
      r.problems.push_back(rel + ": path escapes the run directory");
    } else if (!fs::exists(p)) {
      r.problems.push_back(rel + ": missing");
    } else if (sha256_file(p.string()) != o.at("sha256").get<std::string>()) {
      r.problems.push_back(rel + ": digest mismatch");
    }
  }
  r.ok = r.problems.empty();
  return r;
}

json study_config_json(const StudyConfig& c) {
  json j = json::object();
  StudyConfig copy = c;
  visit_study(copy, [&](const char* key, const auto& v) { j[key] = v; });
  return j;
}

StudyConfig study_config_from_json(const json& j, StudyKind kind) {
  StudyConfig c = default_config(kind);
  ConfigReader reader(j);
  visit_study(c, reader);
  reader.finish();
  return c;
}

json study_report_json(const StudyResult& r) {
  json fits = json::array();
  for (const auto& f : r.fits)
    fits.push_back({{"name", f.name},
                    {"slope", f.fit.slope},
                    {"intercept", f.fit.intercept},
                    {"stderr", f.fit.stderr_slope},
                    {"r2", f.fit.r2},
                    {"predicted", f.predicted},
                    {"tolerance", f.tolerance},
                    {"stderr_cap", f.stderr_cap},
                    {"indicative", f.indicative},
                    {"pass", f.pass}});
  json summary = json::object();
  for (const auto& [k, v] : r.summary) summary[k] = v;
  return {{"study", study_name(r.kind)}, {"pass", r.pass}, {"fits", fits}, {"summary", summary}};
}

json solve_config_json(const SolveConfig& c) {
  json j = json::object();
  SolveConfig copy = c;
  visit_solve(copy, [&](const char* key, const auto& v) { j[key] = v; });
  return j;
}

SolveConfig solve_config_from_json(const json& j) {
  SolveConfig c;
  ConfigReader reader(j);
  visit_solve(c, reader);
  reader.finish();
  return c;
}

json params_report_json(double d, double kappa, int n) {
  const CiReport r = check_ci(default_parameters(d, kappa, n));
  json j = ci_report_json(r);
  j["d"] = d;
  j["kappa"] = kappa;
  if (r.pass) {
    const SolverExponents e = solver_exponents(r);
    j["theta_remainder"] = e.theta_remainder;
    j["kappa_hat"] = e.kappa_hat;
  }
  return j;
}

json certify_json(const std::string& tree, double d, double kappa, const std::string& kind, const std::string& theta,
                  int n) {
  ForestKind fk;
  if (kind == "plain") fk = ForestKind::plain;
  else if (kind == "eps-diff") fk = ForestKind::eps_diff;
  else if (kind == "time-diff") fk = ForestKind::time_diff;
  else throw ConfigError("unknown forest kind " + kind);
  const Binding at{d, fk == ForestKind::eps_diff ? std::min(kappa, 1.0) : kappa};
  const Affine th = Affine::parse(theta);
  json all = json::array();
  for (const auto& m : build_two_point_forest(LabelledTree::parse(tree), fk, n)) {
    const Classification cls = classify_contraction(m.forest);
    json j = {{"pairing", pairs_json(m.pairing)}, {"safe", cls.safe}};
    if (fk == ForestKind::eps_diff) j["distinguished_leaf"] = m.distinguished_leaf;
    if (!cls.safe) {
      j["saturated_root"] = cls.saturated_root;
    } else if (fk == ForestKind::time_diff) {
      // Increments of size |t - s|^(kappa/4) on every derivative child.
      TimeDifferenceQuery q = derivative_children_query(m.forest);
      q.kappa = q.kappa_bar = Affine(0, 0, Rational(1, 4));
      j["certificate"] = certificate_json(power_count_time_diff(m.forest, q, th, at), at);
    } else {
      j["certificate"] = certificate_json(power_count(m.forest, th, at), at);
    }
    all.push_back(j);
  }
  return all;
}

namespace {

int cmd_trees(int n_max, double d, bool have_d, std::ostream& out) {
  out << "tree,noise,k,homogeneity,coefficient\n";
  for (const auto& t : enumerate_trees(n_max)) {
    const TreeStats s = tree_stats(t, have_d ? d : 3.0);
    char num[32];
    std::snprintf(num, sizeof num, "%.17g", s.homogeneity_value);
    out << canonical_form(t) << "," << s.noise << "," << s.deriv_edges << ","
        << (have_d ? std::string(num) : s.homogeneity.str()) << "," << rational_str(symmetry_factor(t)) << "\n";
  }
  return 0;
}

int cmd_params(double d, double kappa, int n, std::ostream& out, std::ostream& err) {
  const json j = params_report_json(d, kappa, n);
  out << j.dump(2) << "\n";
  if (!j.at("pass").get<bool>()) {
    emit_error(err, "condition_failed", "parameter conditions fail");
    return 1;
  }
  return 0;
}

int cmd_certify(const std::string& tree, double d, double kappa, const std::string& kind, const std::string& theta,
                int n, std::ostream& out) {
  out << certify_json(tree, d, kappa, kind, theta, n).dump(2) << "\n";
  return 0;
}

int cmd_sample(double d, int n, int M, double eps, std::uint64_t seed, const std::string& path) {
  const GridSpec grid{n, M};
  grid.validate();
  Field x = sample_gff(grid, CovarianceSpec{d}, seed);
  if (eps > 0) x = mollify(x, Mollifier{eps});
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  save_field(x, path, json{{"d", d}, {"eps", eps}, {"seed", seed}}.dump());
  return 0;
}

int cmd_solve(const SolveConfig& c, const std::string& dir, const std::string& command) {
  RunManifest run;
  run.command = command;
  run.config = solve_config_json(c);
  run.seeds = {c.seed};
  run.started = utc_now();

  const GridSpec grid{c.n, c.M};
  grid.validate();
  Mollifier{c.eps}.validate(grid);
  if (c.J < 4) throw ConfigError("J must be >= 4");
  const Field x = mollify(sample_gff(grid, CovarianceSpec{c.d}, c.seed), Mollifier{c.eps});
  const ParameterSet params = default_parameters(c.d, c.kappa, c.n);
  const CiReport ci = check_ci(params);
  if (!ci.pass) throw DomainError("parameter conditions fail");
  const SolverExponents exps = solver_exponents(ci);
  const auto nl = Nonlinearity::scalar(c.n, c.b, c.p_cubic);
  const double K = ball_radius({x}, params, nl);
  const double T = c.T > 0 ? c.T : admissible_horizon(exps, K, c.eps_c);
  const TimeGrid time = TimeGrid::graded(T, c.J, c.q);
  const PicardBundle bundle = picard_terms(x, params, nl, time);
  SolverOptions opt;
  opt.K = K;
  opt.eps_c = c.eps_c;
  opt.tol = c.tol;
  opt.max_iter = c.max_iter;
  const RemainderSolution sol = solve_remainder(bundle, exps, nl, opt);

  const fs::path root = prepare_dir(dir);
  std::vector<int> nodes = c.snapshots;
  if (nodes.empty()) nodes = {c.J / 4, c.J / 2, c.J};
  std::vector<std::string> outputs;
  json snaps = json::array();
  for (int j : nodes) {
    if (j < 1 || j > c.J) throw ConfigError("snapshot node out of range");
    for (std::size_t comp = 0; comp < sol.A.v[j].size(); ++comp) {
      const std::string name = "A_j" + std::to_string(j) + "_c" + std::to_string(comp) + ".f64";
      save_field(sol.A.v[j][comp], (root / name).string(),
                 json{{"d", c.d}, {"eps", c.eps}, {"seed", c.seed}, {"t", time.t[j]}, {"node", j}}.dump());
      outputs.push_back(name);
      outputs.push_back(name + ".json");
      snaps.push_back({{"node", j}, {"t", time.t[j]}, {"component", comp}, {"file", name}});
    }
  }
  json log = json::array();
  for (const auto& r : sol.log)
    log.push_back({{"iteration", r.iteration}, {"residual", r.residual}, {"contraction", r.contraction},
                   {"norm", r.norm}});
  const json summary = {{"parameters", run.config},
                        {"T", T},
                        {"K", K},
                        {"theta_norm", theta_norm(bundle)},
                        {"kappa_hat", exps.kappa_hat},
                        {"theta", sol.theta},
                        {"remainder_norm", sol.norm},
                        {"residual", sol.residual},
                        {"iterations", log},
                        {"snapshots", snaps}};
  write_text(root / "solve.json", summary.dump(2) + "\n");
  outputs.push_back("solve.json");
  write_manifest(run, dir, outputs);
  return 0;
}

int cmd_study(StudyKind kind, const StudyConfig& cfg, const std::string& dir, std::ostream& out) {
  RunManifest run;
  run.command = std::string("study ") + study_name(kind);
  run.config = study_config_json(cfg);
  if (kind != StudyKind::heat_bound)
    for (int s = 0; s < cfg.samples; ++s) run.seeds.push_back(cfg.seed + static_cast<std::uint64_t>(s));
  run.started = utc_now();
  const StudyResult r = run_study(kind, cfg);
  const fs::path root = prepare_dir(dir);
  write_text(root / "series.csv", series_csv(r));
  const json report = study_report_json(r);
  write_text(root / "report.json", report.dump(2) + "\n");
  write_manifest(run, dir, {"series.csv", "report.json"});
  out << json{{"study", study_name(kind)}, {"pass", r.pass}, {"out", dir}}.dump() << "\n";
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"wildlab: singular tree calculus, torus solver and scaling studies", "wildlab"};
  app.require_subcommand(1);

  auto* trees = app.add_subcommand("trees", "Tree enumeration");
  auto* enumerate = trees->add_subcommand("enumerate", "CSV of the trees up to a noise count");
  trees->require_subcommand(1);
  int n_max = 3;
  double tree_d = 3.0;
  enumerate->add_option("--n-max", n_max, "Largest noise count")->required()->check(CLI::Range(1, 8));
  auto* tree_d_opt = enumerate->add_option("--d", tree_d, "Evaluate homogeneities at this dimension");

  auto* params = app.add_subcommand("params", "Parameter conditions");
  auto* check = params->add_subcommand("check", "Report of the exponent conditions as JSON");
  params->require_subcommand(1);
  double p_d = 3.0, p_kappa = 0.0;
  int p_n = 2;
  check->add_option("--d", p_d, "Dimension")->required();
  check->add_option("--kappa", p_kappa, "Regularity loss")->required();
  check->add_option("--n", p_n, "Space dimension of the grid")->check(CLI::IsMember({2, 3}));

  auto* diagrams = app.add_subcommand("diagrams", "Power counting");
  auto* certify = diagrams->add_subcommand("certify", "One certificate per pairing of a two-point forest");
  diagrams->require_subcommand(1);
  std::string c_tree, c_kind = "plain", c_theta = "0";
  double c_d = 3.0, c_kappa = 0.0;
  int c_n = 2;
  certify->add_option("--tree", c_tree, "Tree in canonical text form")->required();
  certify->add_option("--d", c_d, "Dimension");
  certify->add_option("--kappa", c_kappa, "Regularity loss");
  certify->add_option("--kind", c_kind, "Forest kind")->check(CLI::IsMember({"plain", "eps-diff", "time-diff"}));
  certify->add_option("--theta", c_theta, "Extra weight, an affine form such as 1/2 or d-2");
  certify->add_option("--n", c_n, "Space dimension")->check(CLI::IsMember({2, 3}));

  auto* fields = app.add_subcommand("fields", "Gaussian free field samples");
  auto* sample = fields->add_subcommand("sample", "Write one mollified sample in the field file format");
  fields->require_subcommand(1);
  double f_d = 3.0, f_eps = 0.0;
  int f_n = 2, f_M = 128;
  std::uint64_t f_seed = 1;
  std::string f_out;
  sample->add_option("--d", f_d, "Dimension")->required();
  sample->add_option("--n", f_n, "Space dimension")->check(CLI::IsMember({2, 3}));
  sample->add_option("--m", f_M, "Grid points per axis")->required();
  sample->add_option("--eps", f_eps, "Mollification scale, 0 for none");
  sample->add_option("--seed", f_seed, "Seed")->required();
  sample->add_option("--out", f_out, "Output path")->required();

  auto* solve = app.add_subcommand("solve", "Solve the remainder equation for one sample");
  std::string s_config, s_out;
  std::vector<std::string> s_sets;
  std::uint64_t s_seed = 0;
  solve->add_option("--config", s_config, "JSON config file");
  solve->add_option("--out", s_out, "Run directory")->required();
  auto* s_seed_opt = solve->add_option("--seed", s_seed, "Override the seed");
  solve->add_option("--set", s_sets, "Override a config key, key=value");

  auto* study = app.add_subcommand("study", "Monte Carlo scaling studies");
  std::string st_kind, st_config, st_out;
  std::vector<std::string> st_sets;
  std::uint64_t st_seed = 0;
  int st_samples = 0;
  study->add_option("kind", st_kind, "Study")
      ->required()
      ->check(CLI::IsMember({"lambda", "eps", "time", "covariance", "heat-bound", "convergence"}));
  study->add_option("--config", st_config, "JSON config file");
  study->add_option("--out", st_out, "Run directory")->required();
  auto* st_seed_opt = study->add_option("--seed", st_seed, "Override the seed");
  auto* st_samples_opt = study->add_option("--samples", st_samples, "Override the sample count");
  study->add_option("--set", st_sets, "Override a config key, key=value");

  auto* verify = app.add_subcommand("verify", "Check the digests of a run directory");
  std::string v_dir;
  verify->add_option("dir", v_dir, "Run directory")->required();

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    const CLI::App* sub = &app;
    for (auto* s : {trees, params, diagrams, fields, solve, study, verify})
      if (s->parsed()) sub = s;
    for (auto* s : sub->get_subcommands({}))
      if (s->parsed()) sub = s;
    err << sub->help();
    return 2;
  }

  try {
    if (enumerate->parsed()) return cmd_trees(n_max, tree_d, tree_d_opt->count() > 0, out);
    if (check->parsed()) return cmd_params(p_d, p_kappa, p_n, out, err);
    if (certify->parsed()) return cmd_certify(c_tree, c_d, c_kappa, c_kind, c_theta, c_n, out);
    if (sample->parsed()) return cmd_sample(f_d, f_n, f_M, f_eps, f_seed, f_out);
    if (solve->parsed()) {
      json j = s_config.empty() ? json::object() : read_json_file(s_config);
      apply_overrides(j, s_sets);
      if (s_seed_opt->count()) j["seed"] = s_seed;
      return cmd_solve(solve_config_from_json(j), s_out, "solve");
    }
    if (study->parsed()) {
      const StudyKind kind = parse_study_kind(st_kind);
      json j = st_config.empty() ? json::object() : read_json_file(st_config);
      apply_overrides(j, st_sets);
      if (st_seed_opt->count()) j["seed"] = st_seed;
      if (st_samples_opt->count()) j["samples"] = st_samples;
      return cmd_study(kind, study_config_from_json(j, kind), st_out, out);
    }
    if (verify->parsed()) {
      const VerifyResult r = verify_run(v_dir);
      out << json{{"ok", r.ok}, {"problems", r.problems}}.dump(2) << "\n";
      if (!r.ok) emit_error(err, "verify_failed", r.problems.empty() ? "" : r.problems.front());
      return r.ok ? 0 : 1;
    }
  } catch (const CLI::ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    emit_error(err, error_kind(e), e.what());
    return 1;
  }
  return 2;
}

}  // namespace wildlab
