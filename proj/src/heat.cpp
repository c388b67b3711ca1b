#include "wildlab/heat.hpp"

#include "wildlab/errors.hpp"
#include "wildlab/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>

namespace wildlab {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kFourPi2 = 4 * kPi * kPi;

// phi_1(z) = (e^z - 1)/z and phi_2(z) = (e^z - 1 - z)/z^2 for z <= 0.
double phi1(double z) { return std::abs(z) < 1e-8 ? 1 + z / 2 : std::expm1(z) / z; }

double phi2(double z) {
  if (std::abs(z) < 1e-2) return 0.5 + z / 6 + z * z / 24 + z * z * z / 120 + z * z * z * z / 720;
  return (std::expm1(z) - z) / (z * z);
}

std::vector<double> radial(const GridSpec& grid, double (*f)(double, double), double h) {
  auto modes = mode_table(grid);
  std::vector<double> t(modes->q_max + 1);
  for (std::size_t q = 0; q < t.size(); ++q) t[q] = f(-kFourPi2 * static_cast<double>(q) * h, h);
  return t;
}

Spectrum& add_scaled(Spectrum& acc, const Spectrum& x, const std::vector<double>& table,
                     const std::vector<std::int64_t>& q) {
  for (std::size_t i = 0; i < acc.c.size(); ++i) acc.c[i] += table[q[i]] * x.c[i];
  return acc;
}

VecField ifft_all(const std::vector<Spectrum>& s) {
  VecField out;
  out.reserve(s.size());
  for (const auto& c : s) out.push_back(ifft(c));
  return out;
}

std::vector<Spectrum> fft_all(const VecField& x) {
  std::vector<Spectrum> out;
  out.reserve(x.size());
  for (const auto& c : x) out.push_back(fft(c));
  return out;
}

std::vector<VecField> gradient_spectral(const std::vector<Spectrum>& s) {
  const int n = s.at(0).grid.n;
  std::vector<VecField> out(n);
  for (int a = 0; a < n; ++a)
    for (const auto& c : s) {
      Spectrum d = c;
      differentiate(d, a);
      out[a].push_back(ifft(d));
    }
  return out;
}

VecField diff(const VecField& x, const VecField& y) {
  VecField out = x;
  for (std::size_t k = 0; k < out.size(); ++k)
    for (std::size_t i = 0; i < out[k].v.size(); ++i) out[k].v[i] -= y[k].v[i];
  return out;
}

void check_vec(const VecField& x, int dim) {
  if (static_cast<int>(x.size()) != dim || x.empty()) throw DomainError("field has the wrong number of components");
  for (const auto& c : x) {
    c.grid.validate();
    if (!(c.grid == x[0].grid)) throw DomainError("components live on different grids");
  }
}

// |R_t|_inf and max_a |d_a R_t|_inf from the spectrum.
std::pair<double, double> sup_and_lip(const std::vector<Spectrum>& s) {
  double sup = 0, lip = 0;
  for (const auto& c : s) sup = std::max(sup, ifft(c).sup_norm());
  for (const auto& axis : gradient_spectral(s))
    for (const auto& c : axis) lip = std::max(lip, c.sup_norm());
  return {sup, lip};
}

double bt_weight_sum(double t, double theta, double sup, double lip) {
  return std::pow(t, -theta) * sup + std::pow(t, 0.5 - theta) * (sup + lip);
}

double bt_norm_spectral(const TimeGrid& time, const std::vector<std::vector<Spectrum>>& s, double theta) {
  std::vector<double> per(time.J + 1, 0.0);
  parallel_for(time.J, [&](std::size_t i) {
    const int j = static_cast<int>(i) + 1;
    auto [sup, lip] = sup_and_lip(s[j]);
    per[j] = bt_weight_sum(time.t[j], theta, sup, lip);
  });
  return *std::max_element(per.begin(), per.end());
}

}  // namespace

TimeGrid TimeGrid::graded(double T, int J, double q) {
  TimeGrid g;
  g.T = T;
  g.J = J;
  g.q = q;
  g.validate();
  g.t.resize(J + 1);
  for (int j = 0; j <= J; ++j) g.t[j] = T * std::pow(static_cast<double>(j) / J, q);
  g.t[J] = T;
  return g;
}

void TimeGrid::validate() const {
  if (!(T > 0) || !std::isfinite(T)) throw DomainError("time horizon must be positive");
  if (J < 1) throw DomainError("time grid needs at least one interval");
  if (!(q >= 1)) throw DomainError("grading exponent must be >= 1");
  for (std::size_t j = 1; j < t.size(); ++j)
    if (!(t[j] > t[j - 1])) throw DomainError("time grid must be strictly increasing");
}

SpaceTimeField SpaceTimeField::zeros(const TimeGrid& time, const GridSpec& grid, int dim) {
  SpaceTimeField s;
  s.time = time;
  s.v.assign(time.J + 1, VecField(dim, Field::zeros(grid)));
  return s;
}

Nonlinearity::Nonlinearity(int dim, int n) : dim_(dim), n_(n) {
  if (dim < 1) throw DomainError("model space dimension must be >= 1");
  if (n < 1) throw DomainError("spatial dimension must be >= 1");
  B_.assign(dim * dim * dim * n, 0.0);
  P_.assign(dim * dim * dim * dim, 0.0);
  Q1_.assign(dim * dim * dim, 0.0);
  Q2_.assign(dim * dim * n, 0.0);
  L_.assign(dim * dim, 0.0);
  c_.assign(dim, 0.0);
}

Nonlinearity::Nonlinearity(int dim, int n, std::vector<double> B, std::vector<double> P, std::vector<double> Q1,
                           std::vector<double> Q2, std::vector<double> L, std::vector<double> c)
    : Nonlinearity(dim, n) {
  auto take = [](std::vector<double>& dst, std::vector<double>& src, const char* name) {
    if (src.empty()) return;
    if (src.size() != dst.size())
      throw DomainError(std::string("tensor ") + name + " has " + std::to_string(src.size()) + " entries, expected " +
                        std::to_string(dst.size()));
    for (double v : src)
      if (!std::isfinite(v)) throw DomainError(std::string("tensor ") + name + " has a non-finite entry");
    dst = std::move(src);
  };
  take(B_, B, "B");
  take(P_, P, "P");
  take(Q1_, Q1, "Q1");
  take(Q2_, Q2, "Q2");
  take(L_, L, "L");
  take(c_, c, "c");
  const int e = dim_;
  std::vector<double> sym(P_.size(), 0.0);
  for (int i = 0; i < e; ++i)
    for (int j = 0; j < e; ++j)
      for (int k = 0; k < e; ++k)
        for (int l = 0; l < e; ++l) {
          auto at = [&](int a, int b, int c2) { return P_[((i * e + a) * e + b) * e + c2]; };
          sym[((i * e + j) * e + k) * e + l] =
              (at(j, k, l) + at(j, l, k) + at(k, j, l) + at(k, l, j) + at(l, j, k) + at(l, k, j)) / 6;
        }
  P_ = std::move(sym);
}

Nonlinearity Nonlinearity::scalar(int n, double b, double p) {
  Nonlinearity nl(1, n);
  nl.B_[0] = b;
  nl.P_[0] = p;
  return nl;
}

bool Nonlinearity::is_zero() const {
  for (const auto* t : {&B_, &P_, &Q1_, &Q2_, &L_, &c_})
    for (double v : *t)
      if (v != 0) return false;
  return true;
}

VecField Nonlinearity::bilinear(const VecField& x, const std::vector<VecField>& dy) const {
  check_vec(x, dim_);
  if (static_cast<int>(dy.size()) != n_) throw DomainError("gradient has the wrong number of axes");
  for (const auto& a : dy) check_vec(a, dim_);
  const int e = dim_;
  const GridSpec& g = x[0].grid;
  VecField out(e, Field::zeros(g));
  for (int i = 0; i < e; ++i)
    for (int j = 0; j < e; ++j)
      for (int k = 0; k < e; ++k)
        for (int a = 0; a < n_; ++a) {
          const double w = B_[((i * e + j) * e + k) * n_ + a];
          if (w == 0) continue;
          auto& o = out[i].v;
          const auto& xv = x[j].v;
          const auto& yv = dy[a][k].v;
          for (std::size_t p = 0; p < o.size(); ++p) o[p] += w * xv[p] * yv[p];
        }
  return out;
}

VecField Nonlinearity::trilinear(const VecField& x, const VecField& y, const VecField& z) const {
  check_vec(x, dim_);
  check_vec(y, dim_);
  check_vec(z, dim_);
  const int e = dim_;
  VecField out(e, Field::zeros(x[0].grid));
  for (int i = 0; i < e; ++i)
    for (int j = 0; j < e; ++j)
      for (int k = 0; k < e; ++k)
        for (int l = 0; l < e; ++l) {
          const double w = P_[((i * e + j) * e + k) * e + l];
          if (w == 0) continue;
          auto& o = out[i].v;
          for (std::size_t p = 0; p < o.size(); ++p) o[p] += w * x[j].v[p] * y[k].v[p] * z[l].v[p];
        }
  return out;
}

VecField Nonlinearity::eval(const VecField& A, const std::vector<VecField>& dA) const {
  VecField out = bilinear(A, dA);
  VecField cubic = trilinear(A, A, A);
  const int e = dim_;
  for (int i = 0; i < e; ++i) {
    auto& o = out[i].v;
    for (std::size_t p = 0; p < o.size(); ++p) o[p] += cubic[i].v[p] + c_[i];
    for (int j = 0; j < e; ++j) {
      if (const double w = L_[i * e + j]; w != 0)
        for (std::size_t p = 0; p < o.size(); ++p) o[p] += w * A[j].v[p];
      for (int k = 0; k < e; ++k)
        if (const double w = Q1_[(i * e + j) * e + k]; w != 0)
          for (std::size_t p = 0; p < o.size(); ++p) o[p] += w * A[j].v[p] * A[k].v[p];
      for (int a = 0; a < n_; ++a)
        if (const double w = Q2_[(i * e + j) * n_ + a]; w != 0)
          for (std::size_t p = 0; p < o.size(); ++p) o[p] += w * dA[a][j].v[p];
    }
  }
  return out;
}

void heat_semigroup_inplace(Spectrum& s, double t) {
  if (!(t >= 0)) throw DomainError("heat semigroup needs t >= 0");
  if (t == 0) return;
  auto modes = mode_table(s.grid);
  std::vector<double> table(modes->q_max + 1);
  for (std::size_t q = 0; q < table.size(); ++q) table[q] = std::exp(-kFourPi2 * static_cast<double>(q) * t);
  scale_radial(s, table);
}

Field heat_semigroup(const Field& x, double t) {
  if (!(t >= 0)) throw DomainError("heat semigroup needs t >= 0");
  if (t == 0) return x;
  Spectrum s = fft(x);
  heat_semigroup_inplace(s, t);
  return ifft(s);
}

std::vector<std::vector<Spectrum>> duhamel_spectral(const TimeGrid& time,
                                                    const std::vector<std::vector<Spectrum>>& src) {
  time.validate();
  if (static_cast<int>(src.size()) != time.J + 1) throw DomainError("source does not match the time grid");
  const std::size_t dim = src[0].size();
  if (dim == 0) throw DomainError("empty source");
  const GridSpec grid = src[0][0].grid;
  auto modes = mode_table(grid);
  std::vector<std::vector<Spectrum>> out(time.J + 1, std::vector<Spectrum>(dim, Spectrum::zeros(grid)));
  auto decay = [](double z, double) { return std::exp(z); };
  auto w_first = [](double z, double h) { return h * phi1(z); };
  auto w_left = [](double z, double h) { return h * (phi1(z) - phi2(z)); };
  auto w_right = [](double z, double h) { return h * phi2(z); };
  for (int j = 1; j <= time.J; ++j) {
    const double h = time.t[j] - time.t[j - 1];
    const auto e = radial(grid, decay, h);
    for (std::size_t k = 0; k < dim; ++k) {
      Spectrum& u = out[j][k];
      if (j == 1) {
        add_scaled(u, src[1][k], radial(grid, w_first, h), modes->q);
        continue;
      }
      u = out[j - 1][k];
      for (std::size_t i = 0; i < u.c.size(); ++i) u.c[i] *= e[modes->q[i]];
      add_scaled(u, src[j - 1][k], radial(grid, w_left, h), modes->q);
      add_scaled(u, src[j][k], radial(grid, w_right, h), modes->q);
    }
  }
  return out;
}

SpaceTimeField duhamel(const SpaceTimeField& source) {
  if (source.v.empty() || source.v[0].empty()) throw DomainError("empty source");
  source.time.validate();
  if (static_cast<int>(source.v.size()) != source.time.J + 1) throw DomainError("source does not match the time grid");
  std::vector<std::vector<Spectrum>> s(source.v.size());
  parallel_for(s.size(), [&](std::size_t j) { s[j] = fft_all(source.v[j]); });
  auto u = duhamel_spectral(source.time, s);
  SpaceTimeField out;
  out.time = source.time;
  out.v.resize(u.size());
  parallel_for(u.size(), [&](std::size_t j) { out.v[j] = ifft_all(u[j]); });
  return out;
}

std::vector<VecField> gradient(const VecField& x) { return gradient_spectral(fft_all(x)); }

int PicardBundle::find(const std::string& code) const {
  auto it = std::find(codes.begin(), codes.end(), code);
  return it == codes.end() ? -1 : static_cast<int>(it - codes.begin());
}

const SpaceTimeField& PicardBundle::heat_of(const std::string& code) const {
  if (code == "X") return heat_x;
  int i = find(code);
  if (i < 0) throw DomainError("tree " + code + " is not in the bundle");
  return heat[i];
}

PicardBundle picard_terms(const VecField& xeps, const ParameterSet& params, const Nonlinearity& nl,
                          const TimeGrid& time) {
  check_vec(xeps, nl.dim());
  time.validate();
  if (xeps[0].grid.n != nl.n()) throw DomainError("nonlinearity and field disagree on the spatial dimension");
  if (params.N < 1) throw DomainError("truncation level N must be >= 1");
  PicardBundle b;
  b.params = params;
  b.time = time;
  b.x = xeps;
  b.heat_x.time = time;
  b.heat_x.v.resize(time.J + 1);
  parallel_for(time.J + 1, [&](std::size_t j) {
    VecField v;
    for (const auto& c : xeps) v.push_back(heat_semigroup(c, time.t[j]));
    b.heat_x.v[j] = std::move(v);
  });
  for (auto& t : enumerate_trees(params.N)) {
    if (noise_count(t) == 1) continue;
    b.codes.push_back(canonical_form(t));
    b.coeff.push_back(boost::rational_cast<double>(symmetry_factor(t)));
    b.trees.push_back(std::move(t));
  }
  const GridSpec grid = xeps[0].grid;
  for (std::size_t ti = 0; ti < b.trees.size(); ++ti) {
    const LabelledTree& t = b.trees[ti];
    std::vector<std::string> plain, deriv;
    for (auto [label, child] : t.children(t.root()))
      (label == EdgeLabel::I ? plain : deriv).push_back(canonical_form(t.branch(child)));
    SpaceTimeField src = SpaceTimeField::zeros(time, grid, nl.dim());
    parallel_for(time.J, [&](std::size_t i) {
      const std::size_t j = i + 1;
      if (plain.size() == 3) {
        src.v[j] = nl.trilinear(b.heat_of(plain[0]).v[j], b.heat_of(plain[1]).v[j], b.heat_of(plain[2]).v[j]);
      } else if (plain.size() == 1 && deriv.size() == 1) {
        src.v[j] = nl.bilinear(b.heat_of(plain[0]).v[j], gradient(b.heat_of(deriv[0]).v[j]));
      } else {
        throw std::logic_error("tree " + b.codes[ti] + " is not produced by the singular grammar");
      }
    });
    b.heat.push_back(duhamel(src));
    b.source.push_back(std::move(src));
  }
  return b;
}

PicardBundle picard_terms(const Field& xeps, const ParameterSet& params, const Nonlinearity& nl,
                          const TimeGrid& time) {
  return picard_terms(VecField{xeps}, params, nl, time);
}

namespace {

struct TermCache {
  const VecField& x;
  const Nonlinearity& nl;
  const TimeGrid& time;
  std::map<std::string, SpaceTimeField> source, heat;

  const SpaceTimeField& heat_of(const LabelledTree& t) {
    const std::string code = canonical_form(t);
    if (auto it = heat.find(code); it != heat.end()) return it->second;
    if (noise_count(t) == 1) {
      SpaceTimeField h;
      h.time = time;
      h.v.resize(time.J + 1);
      parallel_for(time.J + 1, [&](std::size_t j) {
        VecField v;
        for (const auto& c : x) v.push_back(heat_semigroup(c, time.t[j]));
        h.v[j] = std::move(v);
      });
      return heat.emplace(code, std::move(h)).first->second;
    }
    return heat.emplace(code, duhamel(source_of(t))).first->second;
  }

  const SpaceTimeField& source_of(const LabelledTree& t) {
    const std::string code = canonical_form(t);
    if (auto it = source.find(code); it != source.end()) return it->second;
    if (!is_singular(t) || noise_count(t) == 1) throw DomainError("tree " + code + " has no source term");
    std::vector<const SpaceTimeField*> plain, deriv;
    for (auto [label, child] : t.children(t.root()))
      (label == EdgeLabel::I ? plain : deriv).push_back(&heat_of(t.branch(child)));
    SpaceTimeField src = SpaceTimeField::zeros(time, x[0].grid, nl.dim());
    parallel_for(time.J, [&](std::size_t i) {
      const std::size_t j = i + 1;
      src.v[j] = plain.size() == 3 ? nl.trilinear(plain[0]->v[j], plain[1]->v[j], plain[2]->v[j])
                                   : nl.bilinear(plain[0]->v[j], gradient(deriv[0]->v[j]));
    });
    return source.emplace(code, std::move(src)).first->second;
  }
};

}  // namespace

SpaceTimeField tree_term(const LabelledTree& tau, const VecField& xeps, const Nonlinearity& nl, const TimeGrid& time) {
  check_vec(xeps, nl.dim());
  time.validate();
  if (xeps[0].grid.n != nl.n()) throw DomainError("nonlinearity and field disagree on the spatial dimension");
  TermCache cache{xeps, nl, time, {}, {}};
  return cache.source_of(tau);
}

SpaceTimeField tree_term(const LabelledTree& tau, const Field& xeps, const Nonlinearity& nl, const TimeGrid& time) {
  return tree_term(tau, VecField{xeps}, nl, time);
}

namespace {

SpaceTimeField weighted_sum(const PicardBundle& b, const std::vector<SpaceTimeField>& terms, bool with_noise) {
  const GridSpec grid = b.x.at(0).grid;
  const int dim = static_cast<int>(b.x.size());
  SpaceTimeField out = with_noise ? b.heat_x : SpaceTimeField::zeros(b.time, grid, dim);
  for (std::size_t ti = 0; ti < terms.size(); ++ti)
    for (std::size_t j = 0; j < out.v.size(); ++j)
      for (int k = 0; k < dim; ++k) {
        auto& o = out.v[j][k].v;
        const auto& s = terms[ti].v[j][k].v;
        for (std::size_t p = 0; p < o.size(); ++p) o[p] += b.coeff[ti] * s[p];
      }
  return out;
}

}  // namespace

SpaceTimeField truncated_expansion(const PicardBundle& b) { return weighted_sum(b, b.heat, true); }

SpaceTimeField truncated_source(const PicardBundle& b) { return weighted_sum(b, b.source, false); }

double besov_norm(const VecField& x, double eta) {
  double r = 0;
  for (const auto& c : x) r = std::max(r, besov_norm(c, eta));
  return r;
}

double sup_norm(const VecField& x) {
  double r = 0;
  for (const auto& c : x) r = std::max(r, c.sup_norm());
  return r;
}

double theta_distance(const PicardBundle& x, const PicardBundle& y) {
  if (x.codes != y.codes || !(x.time == y.time) || x.x.size() != y.x.size())
    throw DomainError("bundles differ in trees, time grid or model space");
  if (x.params.d != y.params.d || x.params.kappa != y.params.kappa || x.params.N != y.params.N)
    throw DomainError("bundles use different parameter sets");
  if (!(x.x[0].grid == y.x[0].grid)) throw DomainError("bundles live on different grids");
  double total = besov_norm(diff(x.x, y.x), x.params.omega_xi);
  for (std::size_t ti = 0; ti < x.trees.size(); ++ti) {
    const double beta = x.params.beta(x.trees[ti]);
    const double delta = x.params.delta(x.trees[ti]);
    std::vector<double> per(x.time.J + 1, 0.0);
    parallel_for(x.time.J, [&](std::size_t i) {
      const std::size_t j = i + 1;
      per[j] = std::pow(x.time.t[j], delta) * besov_norm(diff(x.source[ti].v[j], y.source[ti].v[j]), beta);
    });
    total += *std::max_element(per.begin(), per.end());
  }
  return total;
}

double theta_norm(const PicardBundle& x) {
  PicardBundle zero = x;
  for (auto& c : zero.x) std::fill(c.v.begin(), c.v.end(), 0.0);
  for (auto& s : zero.source)
    for (auto& vf : s.v)
      for (auto& c : vf) std::fill(c.v.begin(), c.v.end(), 0.0);
  return theta_distance(x, zero);
}

double ball_radius(const VecField& xeps, const ParameterSet& params, const Nonlinearity& nl, int J) {
  return std::max(1.0, theta_norm(picard_terms(xeps, params, nl, TimeGrid::graded(1.0, J))));
}

double bt_norm(const SpaceTimeField& R, double theta, double upto) {
  if (upto < 0) upto = R.time.T;
  double r = 0;
  for (int j = 1; j <= R.time.J; ++j) {
    if (R.time.t[j] > upto * (1 + 1e-12)) break;
    double sup = sup_norm(R.v[j]), lip = 0;
    for (const auto& axis : gradient(R.v[j])) lip = std::max(lip, sup_norm(axis));
    r = std::max(r, bt_weight_sum(R.time.t[j], theta, sup, lip));
  }
  return r;
}

double admissible_horizon(const SolverExponents& e, double K, double eps_c) {
  if (!(e.kappa_hat > 0)) throw DomainError("contraction exponent must be positive");
  if (!(K >= 1)) throw DomainError("ball radius must be >= 1");
  if (!(eps_c > 0)) throw DomainError("smallness constant must be positive");
  // Strictly inside both T^kappa_hat < eps_c K^-2 and T < 1.
  return 0.99 * std::min(1.0, std::pow(eps_c / (K * K), 1.0 / e.kappa_hat));
}

RemainderSolution solve_remainder(const PicardBundle& b, const SolverExponents& e, const Nonlinearity& nl,
                                  const SolverOptions& opt) {
  check_vec(b.x, nl.dim());
  const TimeGrid& time = b.time;
  const double T = time.T;
  const double K = opt.K > 0 ? opt.K : ball_radius(b.x, b.params, nl, time.J);
  if (!(K >= 1)) throw DomainError("ball radius must be >= 1");
  if (!(e.kappa_hat > 0) || !(e.theta_remainder > 0)) throw DomainError("solver exponents must be positive");
  if (!(T < 1) || !(std::pow(T, e.kappa_hat) < opt.eps_c / (K * K)))
    throw HorizonTooLarge("horizon T = " + std::to_string(T) + " violates T^kappa_hat < eps_c K^-2 (K = " +
                          std::to_string(K) + "); choose T below " +
                          std::to_string(std::min(1.0, std::pow(opt.eps_c / (K * K), 1.0 / e.kappa_hat))));
  if (opt.max_iter < 1 || !(opt.tol > 0)) throw DomainError("invalid iteration controls");

  const int dim = nl.dim();
  const GridSpec grid = b.x[0].grid;
  const SpaceTimeField S = truncated_expansion(b);
  const SpaceTimeField sub = truncated_source(b);
  std::vector<std::vector<Spectrum>> S_hat(time.J + 1);
  parallel_for(S_hat.size(), [&](std::size_t j) { S_hat[j] = fft_all(S.v[j]); });

  std::vector<std::vector<Spectrum>> R(time.J + 1, std::vector<Spectrum>(dim, Spectrum::zeros(grid)));
  if (!opt.initial.v.empty()) {
    if (!(opt.initial.time == time) || opt.initial.dim() != dim) throw DomainError("initial iterate does not match");
    for (std::size_t j = 1; j < R.size(); ++j) R[j] = fft_all(opt.initial.v[j]);
  }
  RemainderSolution sol;
  sol.T = T;
  sol.K = K;
  sol.theta = e.theta_remainder;
  bool converged = false;
  for (int it = 1; it <= opt.max_iter; ++it) {
    std::vector<std::vector<Spectrum>> src(time.J + 1, std::vector<Spectrum>(dim, Spectrum::zeros(grid)));
    parallel_for(time.J, [&](std::size_t i) {
      const std::size_t j = i + 1;
      std::vector<Spectrum> a = S_hat[j];
      for (int k = 0; k < dim; ++k)
        for (std::size_t m = 0; m < a[k].c.size(); ++m) a[k].c[m] += R[j][k].c[m];
      VecField F = nl.eval(ifft_all(a), gradient_spectral(a));
      src[j] = fft_all(diff(F, sub.v[j]));
    });
    auto next = duhamel_spectral(time, src);
    std::vector<std::vector<Spectrum>> delta = next;
    for (std::size_t j = 0; j < delta.size(); ++j)
      for (int k = 0; k < dim; ++k)
        for (std::size_t m = 0; m < delta[j][k].c.size(); ++m) delta[j][k].c[m] -= R[j][k].c[m];
    IterationRecord rec;
    rec.iteration = it;
    rec.residual = bt_norm_spectral(time, delta, e.theta_remainder);
    rec.norm = bt_norm_spectral(time, next, e.theta_remainder);
    rec.contraction = sol.log.empty() || sol.log.back().residual == 0 ? 0 : rec.residual / sol.log.back().residual;
    sol.log.push_back(rec);
    R = std::move(next);
    if (!std::isfinite(rec.residual) || !std::isfinite(rec.norm))
      throw HorizonTooLarge("fixed-point iteration overflowed at iteration " + std::to_string(it) +
                            "; reduce the horizon T");
    if (rec.norm > K)
      throw HorizonTooLarge("iterate left the ball of radius K = " + std::to_string(K) + " (norm " +
                            std::to_string(rec.norm) + "); reduce the horizon T");
    if (rec.residual < opt.tol) {
      converged = true;
      break;
    }
    if (it > 1 && rec.contraction >= 1)
      throw HorizonTooLarge("contraction factor " + std::to_string(rec.contraction) + " >= 1 at iteration " +
                            std::to_string(it) + "; reduce the horizon T");
  }
  if (!converged)
    throw HorizonTooLarge("no convergence within " + std::to_string(opt.max_iter) + " iterations; reduce the horizon T");
  sol.residual = sol.log.back().residual;
  sol.norm = sol.log.back().norm;
  sol.R.time = time;
  sol.A.time = time;
  sol.R.v.resize(time.J + 1);
  sol.A.v.resize(time.J + 1);
  parallel_for(time.J + 1, [&](std::size_t j) {
    sol.R.v[j] = ifft_all(R[j]);
    sol.A.v[j] = sol.R.v[j];
    for (int k = 0; k < dim; ++k)
      for (std::size_t p = 0; p < sol.A.v[j][k].v.size(); ++p) sol.A.v[j][k].v[p] += S.v[j][k].v[p];
  });
  return sol;
}

SpaceTimeField reference_timestepper(const VecField& x0, double T, const Nonlinearity& nl, int steps) {
  check_vec(x0, nl.dim());
  if (steps < 1) throw DomainError("step count must be >= 1");
  const TimeGrid time = TimeGrid::graded(T, steps, 1.0);
  const GridSpec grid = x0[0].grid;
  auto modes = mode_table(grid);
  const double h = T / steps;
  const auto E = radial(grid, [](double z, double) { return std::exp(z); }, h);
  const auto W1 = radial(grid, [](double z, double hh) { return hh * phi1(z); }, h);
  const auto W2 = radial(grid, [](double z, double hh) { return hh * phi2(z); }, h);
  auto rhs = [&](const std::vector<Spectrum>& u) { return fft_all(nl.eval(ifft_all(u), gradient_spectral(u))); };

  SpaceTimeField out;
  out.time = time;
  out.v.resize(steps + 1);
  out.v[0] = x0;
  std::vector<Spectrum> u = fft_all(x0);
  const double blowup = 1e8 * std::max(1.0, sup_norm(x0));
  for (int s = 1; s <= steps; ++s) {
    auto Nu = rhs(u);
    std::vector<Spectrum> a = u;
    for (std::size_t k = 0; k < a.size(); ++k)
      for (std::size_t i = 0; i < a[k].c.size(); ++i)
        a[k].c[i] = E[modes->q[i]] * u[k].c[i] + W1[modes->q[i]] * Nu[k].c[i];
    auto Na = rhs(a);
    for (std::size_t k = 0; k < a.size(); ++k)
      for (std::size_t i = 0; i < a[k].c.size(); ++i) a[k].c[i] += W2[modes->q[i]] * (Na[k].c[i] - Nu[k].c[i]);
    u = std::move(a);
    out.v[s] = ifft_all(u);
    const double sup = sup_norm(out.v[s]);
    if (!std::isfinite(sup) || sup > blowup)
      throw DomainError("reference stepper became unstable at step " + std::to_string(s) + "; increase the step count");
  }
  return out;
}

SpaceTimeField reference_timestepper(const Field& x0, double T, const Nonlinearity& nl, int steps) {
  return reference_timestepper(VecField{x0}, T, nl, steps);
}

CalibrationResult calibrate_smallness(const CalibrationConfig& cfg, const Nonlinearity& nl) {
  if (cfg.seeds.empty()) throw DomainError("calibration needs at least one seed");
  if (!(cfg.safety > 0 && cfg.safety <= 1)) throw DomainError("safety factor must lie in (0, 1]");
  const ParameterSet params = default_parameters(cfg.d, cfg.kappa);
  const SolverExponents e = solver_exponents(check_ci(params));
  const GridSpec grid{2, cfg.M};
  const CovarianceSpec cov{cfg.d};
  SolverOptions opt;
  opt.eps_c = std::numeric_limits<double>::infinity();
  CalibrationResult res;
  double best = std::numeric_limits<double>::infinity();
  for (auto seed : cfg.seeds) {
    VecField x;
    for (int k = 0; k < nl.dim(); ++k)
      x.push_back(mollify(sample_gff(grid, cov, seed * 1000003ull + k), Mollifier{cfg.eps}));
    SolverOptions o = opt;
    o.K = ball_radius(x, params, nl, cfg.J);
    auto contracts = [&](double T) {
      try {
        solve_remainder(picard_terms(x, params, nl, TimeGrid::graded(T, cfg.J)), e, nl, o);
        return true;
      } catch (const HorizonTooLarge&) {
        return false;
      }
    };
    double lo = 1e-10, hi = 0.99;
    if (!contracts(lo)) throw DomainError("solver fails even at T = 1e-10 on the calibration data");
    if (contracts(hi)) {
      lo = hi;
    } else {
      for (int i = 0; i < cfg.bisection_steps; ++i) {
        const double mid = std::sqrt(lo * hi);
        (contracts(mid) ? lo : hi) = mid;
      }
    }
    res.critical_T.push_back(lo);
    res.K.push_back(o.K);
    best = std::min(best, std::pow(lo, e.kappa_hat) * o.K * o.K);
  }
  res.eps_c = cfg.safety * best;
  return res;
}

}  // namespace wildlab
