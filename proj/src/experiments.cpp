#include "wildlab/experiments.hpp"

#include "wildlab/diagrams.hpp"
#include "wildlab/errors.hpp"
#include "wildlab/parallel.hpp"
#include "wildlab/params.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <sstream>

namespace wildlab {

namespace {

constexpr double kPi = std::numbers::pi;

bool is_dyadic(double x) {
  int e = 0;
  return x > 0 && std::frexp(x, &e) == 0.5;
}

LabelledTree study_tree(const StudyConfig& cfg) {
  LabelledTree t = LabelledTree::parse(cfg.tree);
  if (!is_singular(t) || noise_count(t) < 2) throw ConfigError("study tree must be a singular tree with >= 2 leaves");
  return t;
}

Rational to_rational(double x) {
  const std::int64_t den = 1 << 20;
  return Rational(std::llround(x * den), den);
}

struct Estimate {
  double value = 0;
  double std_error = 0;
};

// (mean v)^(1/p) with the delta-method standard error.
Estimate moment_estimate(const std::vector<double>& v, int p) {
  const double n = static_cast<double>(v.size());
  const double mean = compensated_sum(v) / n;
  std::vector<double> sq(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) sq[i] = (v[i] - mean) * (v[i] - mean);
  const double var = compensated_sum(sq) / std::max(1.0, n - 1);
  Estimate e;
  e.value = std::pow(mean, 1.0 / p);
  e.std_error = mean > 0 ? std::sqrt(var / n) * std::pow(mean, 1.0 / p - 1) / p : 0;
  return e;
}

Estimate mean_estimate(const std::vector<double>& v) {
  const double n = static_cast<double>(v.size());
  const double mean = compensated_sum(v) / n;
  std::vector<double> sq(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) sq[i] = (v[i] - mean) * (v[i] - mean);
  return {mean, std::sqrt(compensated_sum(sq) / std::max(1.0, n - 1) / n)};
}

// Mean of |<Z, phi^lambda_z>|^p over the probe points (all points if none).
double pairing_statistic(const Field& z, double lambda, int p, const std::vector<std::size_t>& probes) {
  Field pf = pairing_field(fft(z), lambda);
  std::vector<double> v;
  if (probes.empty()) {
    v.reserve(pf.v.size());
    for (double x : pf.v) v.push_back(std::pow(std::abs(x), p));
  } else {
    for (std::size_t i : probes) {
      if (i >= pf.v.size()) throw ConfigError("probe index outside the grid");
      v.push_back(std::pow(std::abs(pf.v[i]), p));
    }
  }
  return compensated_sum(v) / static_cast<double>(v.size());
}

bool one_level(const LabelledTree& t) {
  for (auto [label, child] : t.children(t.root()))
    if (!t.children(child).empty()) return false;
  return true;
}

Field term_at(const LabelledTree& tau, const Field& x, const Nonlinearity& nl, double t, int J) {
  const int nodes = one_level(tau) ? 1 : J;
  return tree_term(tau, x, nl, TimeGrid::graded(t, nodes)).v[nodes][0];
}

Field mollified(const Spectrum& raw, double eps) { return eps > 0 ? ifft(mollify(raw, Mollifier{eps})) : ifft(raw); }

std::vector<std::size_t> window(const StudyConfig& cfg, std::size_t n) {
  const int hi = cfg.fit_hi < 0 ? static_cast<int>(n) - 1 : cfg.fit_hi;
  std::vector<std::size_t> idx;
  for (int i = cfg.fit_lo; i <= hi; ++i) idx.push_back(static_cast<std::size_t>(i));
  return idx;
}

LogLogFit fit_series(const std::vector<SeriesRow>& rows, const std::string& name, const std::vector<std::size_t>& idx) {
  std::vector<double> x, y;
  std::vector<const SeriesRow*> sel;
  for (const auto& r : rows)
    if (r.series == name) sel.push_back(&r);
  for (std::size_t i : idx) {
    if (i >= sel.size()) throw ConfigError("fit window outside the ladder");
    x.push_back(sel[i]->scale);
    y.push_back(sel[i]->estimate);
  }
  return fit_loglog(x, y);
}

// Moment study driver: z(sample, ladder index) gives the field to pair and
// its pairing scale; returns one row per ladder point.
template <class Make>
std::vector<SeriesRow> moment_series(const StudyConfig& cfg, const std::string& name, const std::vector<double>& xs,
                                     Make make) {
  std::vector<SeriesRow> rows;
  for (std::size_t li = 0; li < cfg.ladder.size(); ++li) {
    std::vector<double> stat(cfg.samples);
    parallel_for(cfg.samples, [&](std::size_t s) {
      auto [z, lambda] = make(cfg.seed + s, li);
      stat[s] = pairing_statistic(z, lambda, cfg.p, cfg.probes);
    });
    const Estimate e = moment_estimate(stat, cfg.p);
    rows.push_back({name, xs[li], e.value, e.std_error});
  }
  return rows;
}

void finish_single_fit(StudyResult& r, const StudyConfig& cfg, const std::string& name, double predicted) {
  bool degenerate = false;
  for (const auto& row : r.series) degenerate = degenerate || !(row.estimate > 0);
  if (degenerate) {
    SlopeReport rep;
    rep.name = name;
    rep.predicted = predicted;
    rep.tolerance = cfg.tolerance;
    rep.stderr_cap = cfg.stderr_cap;
    rep.fit.slope = std::numeric_limits<double>::quiet_NaN();
    r.fits.push_back(rep);
    r.summary.push_back({"degenerate", 1});
    r.pass = false;
    return;
  }
  r.fits.push_back(make_report(name, fit_series(r.series, name, window(cfg, r.series.size())), predicted,
                               cfg.tolerance, cfg.stderr_cap));
  r.pass = r.fits.back().pass;
}

double radial(const Field& c, int k) {
  // Average of the two axis directions.
  std::vector<int> a(c.grid.n, 0), b(c.grid.n, 0);
  a[0] = k;
  b[1] = k;
  return 0.5 * (c.v[c.index(a)] + c.v[c.index(b)]);
}

double quantile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  const double pos = q * (v.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - lo) * (v[hi] - v[lo]);
}

}  // namespace

const char* study_name(StudyKind k) {
  switch (k) {
    case StudyKind::lambda: return "lambda";
    case StudyKind::eps: return "eps";
    case StudyKind::time: return "time";
    case StudyKind::covariance: return "covariance";
    case StudyKind::heat_bound: return "heat-bound";
    case StudyKind::convergence: return "convergence";
  }
  return "?";
}

StudyKind parse_study_kind(const std::string& name) {
  for (auto k : {StudyKind::lambda, StudyKind::eps, StudyKind::time, StudyKind::covariance, StudyKind::heat_bound,
                 StudyKind::convergence})
    if (name == study_name(k)) return k;
  throw ConfigError("unknown study '" + name + "'");
}

StudyConfig default_config(StudyKind kind) {
  StudyConfig c;
  switch (kind) {
    case StudyKind::lambda:
      c.beta = (2 - c.d) / 2;
      break;
    case StudyKind::eps:
      c.kappa = 0.5;
      c.lambda_factor = 4;
      break;
    case StudyKind::time:
      c.kappa = 1.0;
      break;
    case StudyKind::covariance:
      c.d = 3.0;
      c.lambda_factor = 4;
      c.tolerance = 0.1;
      break;
    case StudyKind::heat_bound:
      c.M = 512;
      c.samples = 0;
      break;
    case StudyKind::convergence:
      c.d = 3.0;
      c.kappa = 0.01;
      c.samples = 20;
      break;
  }
  return c;
}

void StudyConfig::validate(StudyKind kind) const {
  if (!(d > 2 && d < 4)) throw ConfigError("d must lie in (2, 4)");
  GridSpec{n, M}.validate();
  if (kind == StudyKind::heat_bound) {
    if (!(gamma >= 0 && gamma < n)) throw ConfigError("gamma must lie in [0, n)");
    if (!(alpha >= 0 && alpha <= gamma)) throw ConfigError("alpha must lie in [0, gamma]");
    if (k_order != 0 && k_order != 1) throw ConfigError("k_order must be 0 or 1");
    if (times.size() < 4) throw ConfigError("need at least 4 times");
    for (double t : times)
      if (!(t > 0 && t < 1)) throw ConfigError("times must lie in (0, 1)");
    return;
  }
  const bool fitted = kind != StudyKind::convergence;
  if (fitted && samples < 30) throw ConfigError("fitted slopes need at least 30 samples");
  if (!fitted && samples < 3) throw ConfigError("convergence study needs at least 3 seeds");
  if (ladder.size() < 4) throw ConfigError("ladder needs at least 4 points");
  for (std::size_t i = 0; i < ladder.size(); ++i) {
    if (!is_dyadic(ladder[i]) || ladder[i] >= 1) throw ConfigError("ladder entries must be dyadic and < 1");
    if (i > 0 && !(ladder[i] < ladder[i - 1])) throw ConfigError("ladder must be strictly decreasing");
  }
  const int hi = fit_hi < 0 ? static_cast<int>(ladder.size()) - 1 : fit_hi;
  if (fit_lo < 0 || hi >= static_cast<int>(ladder.size()) || hi - fit_lo + 1 < 4)
    throw ConfigError("fit window must hold at least 4 ladder points");
  if (p < 1) throw ConfigError("moment order must be >= 1");
  if (!(kappa >= 0 && kappa < 4 - d)) throw ConfigError("kappa must lie in [0, 4 - d)");
  const double lo = 2.0 / M;
  switch (kind) {
    case StudyKind::lambda:
    case StudyKind::eps:
    case StudyKind::time: {
      study_tree(*this);
      if (!(beta >= (2 - d) / 2 - 1e-12 && beta <= 0)) throw ConfigError("beta must lie in [(2-d)/2, 0]");
      if (!(time_factor > 0)) throw ConfigError("time_factor must be positive");
      for (double l : ladder) {
        const double lambda = lambda_factor * l;
        if (lambda < 4.0 / M - 1e-15 || lambda > 1) throw ConfigError("pairing scale under-resolved or above 1");
        if (kind == StudyKind::eps) {
          if (l < lo || eps_ratio * l < lo - 1e-15) throw ConfigError("mollification scale below 2/M");
        }
        const double t = time_factor * l * l * (kind == StudyKind::time ? 1 + h : 1);
        if (!(t < 1)) throw ConfigError("times must stay below 1");
      }
      if (kind == StudyKind::eps && !(eps_ratio > 0 && eps_ratio <= 1)) throw ConfigError("eps_ratio must lie in (0, 1]");
      if (kind == StudyKind::time && !(h >= 0 && h <= 1)) throw ConfigError("time pairs need s <= t <= 2s");
      break;
    }
    case StudyKind::covariance:
      for (double l : ladder) {
        if (l < 2 * lo - 1e-15) throw ConfigError("eps ladder needs eps/2 >= 2/M");
        if (lambda_factor * l < 4.0 / M - 1e-15 || lambda_factor * l > 1) throw ConfigError("pairing scale out of range");
      }
      if (!(eps_diff_kappa >= 0 && eps_diff_kappa <= 1)) throw ConfigError("eps_diff_kappa must lie in [0, 1]");
      if (deriv_mollify < 2) throw ConfigError("deriv_mollify must be >= 2 cells");
      if (M < 64) throw ConfigError("covariance study needs M >= 64");
      break;
    case StudyKind::convergence:
      if (ladder.back() / 2 < lo - 1e-15) throw ConfigError("eps ladder needs eps/2 >= 2/M");
      if (!(floor_fraction > 0 && floor_fraction < 1)) throw ConfigError("floor_fraction must lie in (0, 1)");
      if (!(eta_offset > 0)) throw ConfigError("eta_offset must be positive");
      if (J < 8) throw ConfigError("J must be >= 8");
      break;
    default:
      break;
  }
}

double compensated_sum(const std::vector<double>& v) {
  double sum = 0, c = 0;
  for (double x : v) {
    const double t = sum + x;
    c += std::abs(sum) >= std::abs(x) ? (sum - t) + x : (x - t) + sum;
    sum = t;
  }
  return sum + c;
}

LogLogFit fit_loglog(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw DomainError("fit needs equally many x and y values");
  if (x.size() < 4) throw DomainError("fit window needs at least 4 points");
  const std::size_t n = x.size();
  std::vector<double> lx(n), ly(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!(x[i] > 0 && y[i] > 0)) throw DomainError("log-log fit needs positive data");
    lx[i] = std::log(x[i]);
    ly[i] = std::log(y[i]);
  }
  const double mx = compensated_sum(lx) / n, my = compensated_sum(ly) / n;
  std::vector<double> sxx(n), sxy(n), syy(n);
  for (std::size_t i = 0; i < n; ++i) {
    sxx[i] = (lx[i] - mx) * (lx[i] - mx);
    sxy[i] = (lx[i] - mx) * (ly[i] - my);
    syy[i] = (ly[i] - my) * (ly[i] - my);
  }
  const double Sxx = compensated_sum(sxx), Sxy = compensated_sum(sxy), Syy = compensated_sum(syy);
  if (!(Sxx > 0)) throw DomainError("fit needs distinct x values");
  LogLogFit f;
  f.slope = Sxy / Sxx;
  f.intercept = my - f.slope * mx;
  std::vector<double> rss(n);
  for (std::size_t i = 0; i < n; ++i) {
    f.residuals.push_back(ly[i] - f.intercept - f.slope * lx[i]);
    rss[i] = f.residuals.back() * f.residuals.back();
  }
  const double RSS = compensated_sum(rss);
  f.stderr_slope = std::sqrt(RSS / (n - 2) / Sxx);
  f.r2 = Syy > 0 ? 1 - RSS / Syy : 1;
  return f;
}

SlopeReport make_report(std::string name, const LogLogFit& fit, double predicted, double tolerance,
                        double stderr_cap) {
  SlopeReport r;
  r.name = std::move(name);
  r.fit = fit;
  r.predicted = predicted;
  r.tolerance = tolerance;
  r.stderr_cap = stderr_cap;
  r.pass = std::abs(fit.slope - predicted) <= tolerance && fit.stderr_slope <= stderr_cap;
  return r;
}

double StudyResult::value(const std::string& key) const {
  for (const auto& [k, v] : summary)
    if (k == key) return v;
  throw DomainError("no summary entry '" + key + "'");
}

std::string series_csv(const StudyResult& r) {
  std::ostringstream out;
  out << "series,scale,estimate,stderr\n";
  char buf[128];
  for (const auto& row : r.series) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g", row.scale, row.estimate, row.std_error);
    out << row.series << ',' << buf << '\n';
  }
  return out.str();
}

double time_weight(const LabelledTree& tau, double d, double beta, double kappa) {
  return -homogeneity_recursive(tau).eval(d, kappa) / 2 + beta / 2 + kappa / 4;
}

double predicted_slope(StudyKind kind, const StudyConfig& cfg) {
  if (kind != StudyKind::lambda && kind != StudyKind::eps && kind != StudyKind::time)
    throw DomainError("predicted_slope applies to the moment studies");
  const LabelledTree tau = study_tree(cfg);
  const double delta = time_weight(tau, cfg.d, cfg.beta, cfg.kappa);
  const ForestKind fk = kind == StudyKind::eps ? ForestKind::eps_diff
                        : kind == StudyKind::time ? ForestKind::time_diff
                                                  : ForestKind::plain;
  const Binding at{cfg.d, kind == StudyKind::eps ? std::min(cfg.kappa, 1.0) : cfg.kappa};
  const Affine theta(to_rational(-2 * cfg.beta));
  double best = std::numeric_limits<double>::infinity();
  for (const auto& m : build_two_point_forest(tau, fk, cfg.n)) {
    if (!classify_contraction(m.forest).safe) continue;
    BoundCertificate cert;
    if (kind == StudyKind::time) {
      TimeDifferenceQuery q = derivative_children_query(m.forest);
      q.kappa = Affine(Rational(0), Rational(0), Rational(1, 4));
      q.kappa_bar = q.kappa;
      cert = power_count_time_diff(m.forest, q, theta, at);
    } else {
      cert = power_count(m.forest, theta, at);
    }
    if (!cert.ok) throw DomainError("power counting failed: " + cert.failure);
    const double time_exp = (cert.exponent_rho + cert.exponent_rho_bar).eval(at.d, at.kappa);
    const double spatial = cert.spatial_exponent.eval(at.d, at.kappa);
    double shift = 0;
    if (kind == StudyKind::eps)
      for (const auto& e : m.forest.contraction) shift += e.a.eval(at.d, at.kappa) - (at.d - 2);
    // Second moment ~ t^{2 delta + time_exp} lambda^{spatial} |eps - eps_bar|^{shift}
    // with t ~ l^2, lambda ~ l, eps ~ l; the time-difference factor
    // |t - s|^zeta t^{-zeta} is scale free since t - s ~ t.
    const double E = 2 * (2 * delta + time_exp) + spatial + shift;
    best = std::min(best, kind == StudyKind::time ? E / 4 : E / 2);
  }
  if (!std::isfinite(best)) throw DomainError("no safe pairing for tree " + cfg.tree);
  return best;
}

StudyResult scaling_study_lambda(const StudyConfig& cfg) {
  cfg.validate(StudyKind::lambda);
  const LabelledTree tau = study_tree(cfg);
  const GridSpec grid{cfg.n, cfg.M};
  const CovarianceSpec cov{cfg.d};
  const auto nl = Nonlinearity::scalar(cfg.n, cfg.b, cfg.p_cubic);
  const double delta = time_weight(tau, cfg.d, cfg.beta, cfg.kappa);
  std::vector<double> lambdas;
  for (double l : cfg.ladder) lambdas.push_back(cfg.lambda_factor * l);
  StudyResult r;
  r.kind = StudyKind::lambda;
  r.series = moment_series(cfg, "pairing", lambdas, [&](std::uint64_t seed, std::size_t li) {
    const double l = cfg.ladder[li];
    if (cfg.constant_field) return std::pair{Field::constant(grid, 1.0), lambdas[li]};
    const double t = cfg.time_factor * l * l, eps = std::max(cfg.eps_factor * l, 2.0 / cfg.M);
    Field z = term_at(tau, mollified(sample_gff_spectrum(grid, cov, seed), eps), nl, t, cfg.J);
    const double w = std::pow(t, delta);
    for (double& v : z.v) v *= w;
    return std::pair{std::move(z), lambdas[li]};
  });
  const double predicted = cfg.constant_field ? 0.0 : predicted_slope(StudyKind::lambda, cfg);
  r.summary.push_back({"delta", delta});
  finish_single_fit(r, cfg, "pairing", predicted);
  return r;
}

StudyResult scaling_study_eps(const StudyConfig& cfg) {
  cfg.validate(StudyKind::eps);
  const LabelledTree tau = study_tree(cfg);
  const GridSpec grid{cfg.n, cfg.M};
  const CovarianceSpec cov{cfg.d};
  const auto nl = Nonlinearity::scalar(cfg.n, cfg.b, cfg.p_cubic);
  const double delta = time_weight(tau, cfg.d, cfg.beta, cfg.kappa);
  StudyResult r;
  r.kind = StudyKind::eps;
  r.series = moment_series(cfg, "difference", cfg.ladder, [&](std::uint64_t seed, std::size_t li) {
    const double eps = cfg.ladder[li], eps_bar = cfg.eps_ratio * eps;
    const double t = cfg.time_factor * eps * eps, lambda = cfg.lambda_factor * eps;
    const Spectrum raw = sample_gff_spectrum(grid, cov, seed);
    Field a = term_at(tau, mollified(raw, eps), nl, t, cfg.J);
    const Field b = term_at(tau, mollified(raw, eps_bar), nl, t, cfg.J);
    const double w = std::pow(t, delta);
    for (std::size_t i = 0; i < a.v.size(); ++i) a.v[i] = w * (a.v[i] - b.v[i]);
    return std::pair{std::move(a), lambda};
  });
  r.summary.push_back({"delta", delta});
  finish_single_fit(r, cfg, "difference", predicted_slope(StudyKind::eps, cfg));
  return r;
}

StudyResult scaling_study_time(const StudyConfig& cfg) {
  cfg.validate(StudyKind::time);
  const LabelledTree tau = study_tree(cfg);
  const GridSpec grid{cfg.n, cfg.M};
  const CovarianceSpec cov{cfg.d};
  const auto nl = Nonlinearity::scalar(cfg.n, cfg.b, cfg.p_cubic);
  const double delta = time_weight(tau, cfg.d, cfg.beta, cfg.kappa);
  std::vector<double> gaps;
  for (double l : cfg.ladder) gaps.push_back(cfg.time_factor * l * l * cfg.h);
  StudyResult r;
  r.kind = StudyKind::time;
  r.series = moment_series(cfg, "increment", gaps, [&](std::uint64_t seed, std::size_t li) {
    const double l = cfg.ladder[li];
    const double s = cfg.time_factor * l * l, t = s * (1 + cfg.h);
    const double eps = std::max(cfg.eps_factor * l, 2.0 / cfg.M), lambda = cfg.lambda_factor * l;
    const Field x = mollified(sample_gff_spectrum(grid, cov, seed), eps);
    Field a = term_at(tau, x, nl, t, cfg.J);
    const Field b = term_at(tau, x, nl, s, cfg.J);
    const double wt = std::pow(t, delta), ws = std::pow(s, delta);
    for (std::size_t i = 0; i < a.v.size(); ++i) a.v[i] = wt * a.v[i] - ws * b.v[i];
    return std::pair{std::move(a), lambda};
  });
  r.summary.push_back({"delta", delta});
  finish_single_fit(r, cfg, "increment", predicted_slope(StudyKind::time, cfg));
  return r;
}

double exact_pairing_moment(const GridSpec& grid, const CovarianceSpec& cov, const std::vector<QuadraticTerm>& terms,
                            double lambda, double b) {
  grid.validate();
  cov.validate(grid.n);
  const auto modes = mode_table(grid);
  const auto var = gff_variance_table(grid, cov);
  const auto w = bump_table(grid, lambda / 2);
  std::vector<std::vector<double>> g;
  for (const auto& term : terms) {
    if (term.t < 0) throw DomainError("time must be non-negative");
    std::vector<double> gi(var.size());
    const auto mol = term.eps > 0 ? bump_table(grid, term.eps) : nullptr;
    for (std::size_t q = 0; q < gi.size(); ++q)
      gi[q] = std::exp(-4 * kPi * kPi * static_cast<double>(q) * term.t) * (mol ? (*mol)[q] : 1.0);
    g.push_back(std::move(gi));
  }
  const std::size_t S = modes->q.size();
  const int last = grid.n - 1;
  double total = 0;
  for (std::size_t i = 0; i < terms.size(); ++i)
    for (std::size_t j = 0; j < terms.size(); ++j) {
      // s = sigma^2 g_i g_j; conv(s, s m^2) + conv(s m, s m) with m = 2 pi m_1
      // (zero on the Nyquist line, as for spectral derivatives).
      Spectrum s0 = Spectrum::zeros(grid), s2 = Spectrum::zeros(grid), s1 = Spectrum::zeros(grid);
      for (std::size_t k = 0; k < S; ++k) {
        const auto q = modes->q[k];
        const double s = var[q] * g[i][q] * g[j][q];
        const int m1 = modes->component(k, 0);
        const double dm = (modes->nyquist[k] & 1u) ? 0.0 : 2 * kPi * m1;
        s0.c[k] = s;
        s2.c[k] = s * dm * dm;
        s1.c[k] = Complex(0, s * dm);
      }
      Field f0 = ifft(s0), f2 = ifft(s2), f1 = ifft(s1);
      Field prod = f0;
      for (std::size_t p = 0; p < prod.v.size(); ++p) prod.v[p] = f0.v[p] * f2.v[p] - f1.v[p] * f1.v[p];
      Spectrum c = fft(prod);
      std::vector<double> acc(S);
      for (std::size_t k = 0; k < S; ++k) {
        const int mlast = modes->component(k, last);
        const double mult = (mlast == 0 || 2 * std::abs(mlast) == grid.M) ? 1.0 : 2.0;
        const double wk = (*w)[modes->q[k]];
        acc[k] = mult * wk * wk * c.c[k].real();
      }
      total += terms[i].coeff * terms[j].coeff * compensated_sum(acc);
    }
  return b * b * total;
}

double exact_difference_moment(const GridSpec& grid, const CovarianceSpec& cov, double eps, double eps_bar,
                               double lambda) {
  grid.validate();
  cov.validate(grid.n);
  const auto modes = mode_table(grid);
  const auto var = gff_variance_table(grid, cov);
  const auto w = bump_table(grid, lambda / 2);
  const auto be = bump_table(grid, eps), bb = bump_table(grid, eps_bar);
  const int last = grid.n - 1;
  std::vector<double> acc(modes->q.size());
  for (std::size_t k = 0; k < acc.size(); ++k) {
    const auto q = modes->q[k];
    const int mlast = modes->component(k, last);
    const double mult = (mlast == 0 || 2 * std::abs(mlast) == grid.M) ? 1.0 : 2.0;
    const double diff = (*be)[q] - (*bb)[q];
    acc[k] = mult * var[q] * diff * diff * (*w)[q] * (*w)[q];
  }
  return compensated_sum(acc);
}

StudyResult covariance_decay_study(const StudyConfig& cfg) {
  cfg.validate(StudyKind::covariance);
  const GridSpec grid{cfg.n, cfg.M};
  const CovarianceSpec cov{cfg.d};
  const double deriv_eps = static_cast<double>(cfg.deriv_mollify) / cfg.M;
  const int k_lo = 8, k_hi = cfg.M / 8;  // |x| in [8/M, 1/8], increments reach 1/4
  const std::size_t L = cfg.ladder.size();

  struct SampleStats {
    std::vector<double> inc, dcov, epsdiff;
  };
  std::vector<SampleStats> per(cfg.samples);
  parallel_for(cfg.samples, [&](std::size_t s) {
    const Spectrum raw = sample_gff_spectrum(grid, cov, cfg.seed + s);
    const Field c = autocovariance(raw);
    const Spectrum sm = mollify(raw, Mollifier{deriv_eps});
    Spectrum ds = sm;
    differentiate(ds, 0);
    const Field dc = cross_covariance(sm, ds);
    SampleStats st;
    for (int k = k_lo; k <= k_hi; ++k) {
      st.inc.push_back(radial(c, k) - radial(c, 2 * k));
      std::vector<int> at(grid.n, 0);
      at[0] = k;
      st.dcov.push_back(-dc.v[dc.index(at)]);
    }
    for (std::size_t li = 0; li < L; ++li) {
      const double eps = cfg.ladder[li];
      Spectrum d = mollify(raw, Mollifier{eps});
      const Spectrum bar = mollify(raw, Mollifier{eps / 2});
      for (std::size_t i = 0; i < d.c.size(); ++i) d.c[i] -= bar.c[i];
      st.epsdiff.push_back(pairing_statistic(ifft(d), cfg.lambda_factor * eps, 2, cfg.probes));
    }
    per[s] = std::move(st);
  });

  StudyResult r;
  r.kind = StudyKind::covariance;
  const ExactCovariance exact = covariance_exact(grid, cov, 0, 0);
  const Field exact_d = covariance_exact(grid, cov, deriv_eps, 0, 0).cov;
  std::size_t idx = 0;
  for (int k = k_lo; k <= k_hi; ++k, ++idx) {
    std::vector<double> a(cfg.samples), b(cfg.samples);
    for (int s = 0; s < cfg.samples; ++s) {
      a[s] = per[s].inc[idx];
      b[s] = per[s].dcov[idx];
    }
    const double x = static_cast<double>(k) / cfg.M;
    const Estimate ea = mean_estimate(a), eb = mean_estimate(b);
    std::vector<int> at(grid.n, 0);
    at[0] = k;
    r.series.push_back({"increment", x, ea.value, ea.std_error});
    r.series.push_back({"increment_exact", x, radial(exact.cov, k) - radial(exact.cov, 2 * k), 0});
    r.series.push_back({"derivative", x, eb.value, eb.std_error});
    r.series.push_back({"derivative_exact", x, -exact_d.v[exact_d.index(at)], 0});
  }
  const double kap = cfg.eps_diff_kappa;
  const double lam_exp = 1 - cfg.d / 2 - kap / 2;
  for (std::size_t li = 0; li < L; ++li) {
    const double eps = cfg.ladder[li], lambda = cfg.lambda_factor * eps;
    std::vector<double> v(cfg.samples);
    for (int s = 0; s < cfg.samples; ++s) v[s] = per[s].epsdiff[li];
    const Estimate e = moment_estimate(v, 2);
    const double norm = std::pow(lambda, lam_exp);
    r.series.push_back({"eps_difference", eps, e.value / norm, e.std_error / norm});
    r.series.push_back(
        {"eps_difference_exact", eps, std::sqrt(exact_difference_moment(grid, cov, eps, eps / 2, lambda)) / norm, 0});
  }
  const std::size_t npts = idx;
  std::vector<std::size_t> all(npts);
  for (std::size_t i = 0; i < npts; ++i) all[i] = i;
  const auto ladder_window = window(cfg, L);
  r.fits.push_back(make_report("increment", fit_series(r.series, "increment", all), 2 - cfg.d, cfg.tolerance,
                               cfg.stderr_cap));
  r.fits.push_back(make_report("derivative", fit_series(r.series, "derivative", all), 1 - cfg.d, cfg.tolerance,
                               cfg.stderr_cap));
  r.fits.push_back(make_report("eps_difference", fit_series(r.series, "eps_difference", ladder_window), kap / 2,
                               cfg.tolerance, cfg.stderr_cap));
  SlopeReport ie = make_report("increment_exact", fit_series(r.series, "increment_exact", all), 2 - cfg.d,
                               cfg.tolerance, 1);
  SlopeReport de = make_report("derivative_exact", fit_series(r.series, "derivative_exact", all), 1 - cfg.d,
                               cfg.tolerance, 1);
  SlopeReport ee = make_report("eps_difference_exact", fit_series(r.series, "eps_difference_exact", ladder_window),
                               kap / 2, cfg.tolerance, 1);
  for (auto* rep : {&ie, &de, &ee}) rep->indicative = true;
  r.fits.push_back(ie);
  r.fits.push_back(de);
  r.fits.push_back(ee);
  r.summary.push_back({"derivative_minus_increment", r.fits[1].fit.slope - r.fits[0].fit.slope});
  r.pass = r.fits[0].pass && r.fits[1].pass && r.fits[2].pass;
  return r;
}

Field heat_kernel_convolution(const GridSpec& grid, double t, double gamma, int k_order) {
  grid.validate();
  if (!(t > 0)) throw DomainError("time must be positive");
  if (k_order != 0 && k_order != 1) throw DomainError("k_order must be 0 or 1");
  const int M = grid.M, n = grid.n;
  const double h = 1.0 / M;
  const int images = static_cast<int>(std::ceil(std::sqrt(40 * t))) + 1;
  Field G = Field::zeros(grid), f = Field::zeros(grid);
  std::vector<int> j(n, 0);
  for (std::size_t idx = 0; idx < G.v.size(); ++idx) {
    std::size_t rem = idx;
    for (int a = n - 1; a >= 0; --a) {
      j[a] = static_cast<int>(rem % M);
      rem /= M;
    }
    std::vector<double> x(n);
    double r2 = 0;
    for (int a = 0; a < n; ++a) {
      x[a] = j[a] * h;
      if (x[a] >= 0.5) x[a] -= 1;
      r2 += x[a] * x[a];
    }
    f.v[idx] = std::pow(std::max(std::sqrt(r2), h), -gamma);
    // Periodic images of (4 pi t)^{-n/2} exp(-|x|^2/4t) and of its d_1 derivative.
    double g = 0;
    const int span = 2 * images + 1;
    int count = 1;
    for (int a = 0; a < n; ++a) count *= span;
    for (int c = 0; c < count; ++c) {
      int cc = c;
      double d2 = 0, x1 = 0;
      for (int a = 0; a < n; ++a) {
        const int m = cc % span - images;
        cc /= span;
        const double y = x[a] + m;
        d2 += y * y;
        if (a == 0) x1 = y;
      }
      const double e = std::exp(-d2 / (4 * t));
      g += k_order == 0 ? e : -x1 / (2 * t) * e;
    }
    G.v[idx] = std::abs(g) * std::pow(4 * kPi * t, -0.5 * n);
  }
  Spectrum a = fft(G), b = fft(f);
  for (std::size_t i = 0; i < a.c.size(); ++i) a.c[i] *= b.c[i];
  return ifft(a);  // sum_y G(x - y) f(y) h^n
}

StudyResult heat_bound_spotcheck(const StudyConfig& cfg) {
  cfg.validate(StudyKind::heat_bound);
  const GridSpec grid{cfg.n, cfg.M};
  const int kmax = cfg.M / 4;
  StudyResult r;
  r.kind = StudyKind::heat_bound;
  std::vector<Field> conv(cfg.times.size());
  parallel_for(cfg.times.size(), [&](std::size_t i) {
    conv[i] = heat_kernel_convolution(grid, cfg.times[i], cfg.gamma, cfg.k_order);
  });
  double cmax = 0, cmin = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < cfg.times.size(); ++i) {
    const double t = cfg.times[i];
    double sup = 0;
    for (int k = 2; k <= kmax; ++k) {
      std::vector<int> at(grid.n, 0);
      at[0] = k;
      const double x = static_cast<double>(k) / cfg.M;
      const double bound = std::pow(t, -(cfg.alpha + cfg.k_order) / 2) * std::pow(x, cfg.alpha - cfg.gamma);
      sup = std::max(sup, conv[i].v[conv[i].index(at)] / bound);
    }
    cmax = std::max(cmax, sup);
    cmin = std::min(cmin, sup);
    r.series.push_back({"sup_ratio", t, sup, 0});
    r.series.push_back({"peak", t, conv[i].v[0], 0});
  }
  std::vector<std::size_t> all(cfg.times.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  r.fits.push_back(make_report("peak", fit_series(r.series, "peak", all), -(cfg.gamma + cfg.k_order) / 2,
                               cfg.tolerance, cfg.stderr_cap));
  r.summary.push_back({"fitted_constant", cmax});
  r.summary.push_back({"spread", cmax / cmin});
  r.pass = cmax / cmin < cfg.spread_cap && r.fits[0].pass;
  return r;
}

StudyResult solution_convergence_study(const StudyConfig& cfg) {
  cfg.validate(StudyKind::convergence);
  const GridSpec grid{cfg.n, cfg.M};
  const CovarianceSpec cov{cfg.d};
  const auto nl = Nonlinearity::scalar(cfg.n, cfg.b, cfg.p_cubic);
  const ParameterSet params = default_parameters(cfg.d, cfg.kappa, cfg.n);
  const SolverExponents exps = solver_exponents(check_ci(params));
  const double eta = (2 - cfg.d) / 2 - cfg.eta_offset;
  std::vector<double> eps = cfg.ladder;
  eps.push_back(cfg.ladder.back() / 2);
  const std::size_t L = cfg.ladder.size();

  struct SeedResult {
    bool ok = false;
    double T = 0;
    std::vector<double> increment, theta;
  };
  std::vector<SeedResult> seeds(cfg.samples);
  // Seeds run one after another; the solver parallelises internally.
  for (int s = 0; s < cfg.samples; ++s) {
    SeedResult& out = seeds[s];
    const Spectrum raw = sample_gff_spectrum(grid, cov, cfg.seed + s);
    Spectrum low = raw;
    if (cfg.smooth_data) {
      const auto modes = mode_table(grid);
      for (std::size_t i = 0; i < low.c.size(); ++i)
        if (modes->q[i] > 8) low.c[i] = 0;
    }
    std::vector<Field> x;
    std::vector<double> K;
    double T = 1;
    for (double e : eps) {
      x.push_back(cfg.smooth_data ? ifft(low) : mollified(raw, e));
      K.push_back(ball_radius({x.back()}, params, nl));
      T = std::min(T, admissible_horizon(exps, K.back(), cfg.eps_c));
    }
    const TimeGrid time = TimeGrid::graded(T, cfg.J);
    std::vector<PicardBundle> bundles;
    std::vector<SpaceTimeField> A;
    try {
      for (std::size_t i = 0; i < eps.size(); ++i) {
        bundles.push_back(picard_terms(x[i], params, nl, time));
        SolverOptions opt;
        opt.K = K[i];
        opt.eps_c = cfg.eps_c;
        A.push_back(solve_remainder(bundles.back(), exps, nl, opt).A);
      }
    } catch (const HorizonTooLarge&) {
      continue;
    }
    out.ok = true;
    out.T = T;
    for (std::size_t i = 0; i < L; ++i) {
      double sup = 0;
      for (int j = 1; j <= time.J; ++j) {
        if (time.t[j] < cfg.floor_fraction * T) continue;
        VecField d = A[i].v[j];
        for (std::size_t c = 0; c < d.size(); ++c)
          for (std::size_t p = 0; p < d[c].v.size(); ++p) d[c].v[p] -= A[i + 1].v[j][c].v[p];
        sup = std::max(sup, besov_norm(d, eta) + std::pow(time.t[j], -eta / 2) * sup_norm(d));
      }
      out.increment.push_back(sup);
      out.theta.push_back(theta_distance(bundles[i], bundles[i + 1]));
    }
  }

  StudyResult r;
  r.kind = StudyKind::convergence;
  std::vector<double> inv_T;
  for (const auto& s : seeds)
    if (s.ok) inv_T.push_back(1 / s.T);
  const std::size_t ok = inv_T.size();
  bool decreasing = ok > 0;
  double prev = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < L && ok > 0; ++i) {
    std::vector<double> inc, th;
    for (const auto& s : seeds)
      if (s.ok) {
        inc.push_back(s.increment[i]);
        th.push_back(s.theta[i]);
      }
    const double med = quantile(inc, 0.5);
    r.series.push_back({"increment_median", cfg.ladder[i], med, 0});
    r.series.push_back({"theta_median", cfg.ladder[i], quantile(th, 0.5), 0});
    decreasing = decreasing && med < prev;
    prev = med;
  }
  r.summary.push_back({"eta", eta});
  r.summary.push_back({"seeds_solved", static_cast<double>(ok)});
  r.summary.push_back({"seeds_failed", static_cast<double>(cfg.samples - static_cast<int>(ok))});
  if (ok > 0) {
    r.summary.push_back({"inv_T_median", quantile(inv_T, 0.5)});
    r.summary.push_back({"inv_T_p90", quantile(inv_T, 0.9)});
    r.summary.push_back({"inv_T_max", quantile(inv_T, 1.0)});
    r.summary.push_back({"inv_T_mean", compensated_sum(inv_T) / static_cast<double>(ok)});
  }
  r.summary.push_back({"strictly_decreasing", decreasing ? 1.0 : 0.0});
  bool positive = ok > 0;
  for (const auto& row : r.series) positive = positive && row.estimate > 0;
  if (positive && !cfg.smooth_data) {
    for (const char* name : {"increment_median", "theta_median"}) {
      SlopeReport rep = make_report(name, fit_series(r.series, name, window(cfg, L)), cfg.kappa / 4, cfg.tolerance,
                                    cfg.stderr_cap);
      rep.indicative = true;
      r.fits.push_back(rep);
    }
  }
  r.pass = decreasing;
  return r;
}

StudyResult run_study(StudyKind kind, const StudyConfig& cfg) {
  switch (kind) {
    case StudyKind::lambda: return scaling_study_lambda(cfg);
    case StudyKind::eps: return scaling_study_eps(cfg);
    case StudyKind::time: return scaling_study_time(cfg);
    case StudyKind::covariance: return covariance_decay_study(cfg);
    case StudyKind::heat_bound: return heat_bound_spotcheck(cfg);
    case StudyKind::convergence: return solution_convergence_study(cfg);
  }
  throw ConfigError("unknown study");
}

}  // namespace wildlab
