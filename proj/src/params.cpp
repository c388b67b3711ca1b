#include "wildlab/params.hpp"

#include "wildlab/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

namespace wildlab {

namespace {

bool lt(double a, double b) { return a < b - kExponentTol; }
bool le(double a, double b) { return a <= b + kExponentTol; }

double level_value(const std::vector<double>& levels, int m, const char* what) {
  if (m < 2 || m >= static_cast<int>(levels.size()))
    throw DomainError(std::string(what) + " undefined for trees with " + std::to_string(m) + " leaves");
  return levels[m];
}

}  // namespace

double ParameterSet::beta(const LabelledTree& t) const {
  auto it = beta_override.find(canonical_form(t));
  return it != beta_override.end() ? it->second : level_value(beta_level, noise_count(t), "beta");
}

double ParameterSet::delta(const LabelledTree& t) const {
  auto it = delta_override.find(canonical_form(t));
  return it != delta_override.end() ? it->second : level_value(delta_level, noise_count(t), "delta");
}

double ParameterSet::omega(const LabelledTree& t) const {
  if (noise_count(t) == 1) return omega_xi;
  return beta(t) - 2 * delta(t) + 2;
}

void ParameterSet::set_beta(const LabelledTree& t, double value) { beta_override[canonical_form(t)] = value; }
void ParameterSet::set_delta(const LabelledTree& t, double value) { delta_override[canonical_form(t)] = value; }

int noise_bound(double d) {
  if (!(d > 2 && d < 4)) throw DomainError("d must lie in (2,4)");
  // The offset absorbs representation error when 2/(4-d) is an integer.
  return static_cast<int>(std::floor(2.0 / (4.0 - d) + 1e-9));
}

ParameterSet default_parameters(double d, double kappa, int n, double kappa_max) {
  ParameterSet p;
  p.N = noise_bound(d);
  if (!(kappa > 0)) throw DomainError("kappa must be positive");
  if (kappa > kappa_max) throw DomainError("kappa exceeds the configured guard " + std::to_string(kappa_max));
  if (n < 2) throw DomainError("spatial dimension must be >= 2");
  p.d = d;
  p.n = n;
  p.kappa = kappa;
  p.omega_xi = (2 - d) / 2 - kappa;
  p.beta_level.assign(p.N + 1, 0.0);
  p.delta_level.assign(p.N + 1, 0.0);
  for (int m = 2; m <= p.N; ++m) {
    double h = homogeneity_closed_form(m).eval(d, 0.0);
    double beta = (2 - d) / 2;
    p.beta_level[m] = beta;
    p.delta_level[m] = -h / 2 + beta / 2 + kappa / 2;
  }
  return p;
}

CiReport check_ci(const ParameterSet& p) {
  if (p.N < 1) throw DomainError("N must be >= 1");
  if (static_cast<int>(p.beta_level.size()) <= p.N && p.N >= 2) throw DomainError("beta levels do not cover N");
  if (static_cast<int>(p.delta_level.size()) <= p.N && p.N >= 2) throw DomainError("delta levels do not cover N");
  auto counts = count_trees_by_noise(p.N);

  // Individually checked trees: every override key.
  std::map<int, std::set<std::string>> overridden;
  for (const auto* m : {&p.beta_override, &p.delta_override})
    for (const auto& [code, value] : *m) {
      LabelledTree t = LabelledTree::parse(code);
      int noise = noise_count(t);
      if (!is_singular(t) || noise < 2 || noise > p.N)
        throw ConfigError("parameter override for tree " + code + " outside the truncated tree set");
      overridden[noise].insert(canonical_form(t));
    }

  CiReport r;
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<double> level_min(p.N + 1, inf);
  std::vector<std::string> level_arg(p.N + 1);
  level_min[1] = p.omega_xi;
  level_arg[1] = "X";
  bool trees_ok = le(p.omega_xi, 0);

  auto record = [&](TreeCheck c) {
    c.beta_ok = lt(-1, c.beta) && lt(c.beta, 0);
    c.delta_ok = lt(c.delta, 1);
    c.omega_ok = le(c.omega, 0);
    trees_ok = trees_ok && c.beta_ok && c.delta_ok && c.omega_ok;
    if (c.omega < level_min[c.noise]) {
      level_min[c.noise] = c.omega;
      level_arg[c.noise] = c.tree;
    }
    r.per_tree.push_back(std::move(c));
  };

  for (int m = 2; m <= p.N; ++m) {
    const auto& over = overridden[m];
    for (const auto& code : over) {
      LabelledTree t = LabelledTree::parse(code);
      TreeCheck c;
      c.tree = code;
      c.noise = m;
      c.beta = p.beta(t);
      c.delta = p.delta(t);
      c.omega = c.beta - 2 * c.delta + 2;
      record(c);
    }
    if (counts[m] > over.size()) {
      TreeCheck c;
      c.noise = m;
      c.level_default = true;
      c.multiplicity = counts[m] - over.size();
      c.tree = canonical_form(comb_tree(m));
      if (over.count(c.tree)) {
        for (const auto& t : enumerate_level(m, std::max(m, kDefaultTreeCap))) {
          std::string code = canonical_form(t);
          if (!over.count(code)) {
            c.tree = code;
            break;
          }
        }
      }
      c.beta = p.beta_level[m];
      c.delta = p.delta_level[m];
      c.omega = c.beta - 2 * c.delta + 2;
      record(c);
    }
  }

  r.omega_min = inf;
  for (int m = 1; m <= p.N; ++m)
    if (level_min[m] < r.omega_min) {
      r.omega_min = level_min[m];
      r.omega_witness = {level_arg[m]};
    }

  r.alpha = inf;
  for (int a = 1; a <= p.N; ++a)
    for (int b = a; b <= p.N; ++b) {
      if (a + b <= p.N) continue;
      double v = level_min[a] + level_min[b];
      if (v < r.alpha) {
        r.alpha = v;
        r.alpha_witness = {level_arg[a], level_arg[b]};
        r.alpha_noise_sum = a + b;
      }
    }

  r.gamma = inf;
  for (int a = 1; a <= p.N; ++a)
    for (int b = a; b <= p.N; ++b)
      for (int c = b; c <= p.N; ++c) {
        if (a + b + c <= p.N) continue;
        double v = level_min[a] + level_min[b] + level_min[c];
        if (v < r.gamma) {
          r.gamma = v;
          r.gamma_witness = {level_arg[a], level_arg[b], level_arg[c]};
          r.gamma_noise_sum = a + b + c;
        }
      }

  r.pass = trees_ok && lt(-1, r.omega_min) && lt(-1, r.alpha) && lt(-2, r.gamma);
  return r;
}

SolverExponents solver_exponents(const CiReport& report) {
  if (!report.pass) throw DomainError("condition (I) fails; no admissible solver exponents");
  const double w = report.omega_min, a = report.alpha, g = report.gamma;
  SolverExponents e;
  e.theta_remainder = 0.5 * std::min({w / 2 + 0.5, a / 2 + 0.5, g / 2 + 1});
  const double th = e.theta_remainder;
  e.kappa_hat = std::min({(w + 1) / 2, 2 * th + 0.5, (a + 1) / 2, g / 2 + 1}) - th;
  if (!(e.kappa_hat > 0)) throw std::logic_error("non-positive contraction exponent for a passing report");
  return e;
}

double kappa_guard(double d, int n, double kappa_max) {
  auto passes = [&](double k) { return check_ci(default_parameters(d, k, n, kappa_max)).pass; };
  if (passes(kappa_max)) return kappa_max;
  double lo = 1e-9, hi = kappa_max;
  if (!passes(lo)) throw DomainError("no admissible kappa for d = " + std::to_string(d));
  for (int i = 0; i < 80; ++i) {
    double mid = 0.5 * (lo + hi);
    (passes(mid) ? lo : hi) = mid;
  }
  return lo;
}

}  // namespace wildlab
