#include <doctest.h>

#include "wildlab/errors.hpp"
#include "wildlab/heat.hpp"

#include <boost/math/quadrature/tanh_sinh.hpp>

#include <cmath>
#include <functional>
#include <numbers>
#include <random>

using namespace wildlab;

namespace {

constexpr double kPi = std::numbers::pi;

Field from_function(const GridSpec& g, const std::function<double(double, double)>& f) {
  Field x = Field::zeros(g);
  for (int i = 0; i < g.M; ++i)
    for (int j = 0; j < g.M; ++j) x.v[x.index({i, j})] = f(double(i) / g.M, double(j) / g.M);
  return x;
}

double max_diff(const Field& a, const Field& b) {
  double r = 0;
  for (std::size_t i = 0; i < a.v.size(); ++i) r = std::max(r, std::abs(a.v[i] - b.v[i]));
  return r;
}

Field smooth_field(const GridSpec& g, double phase = 0) {
  return from_function(g, [&](double x, double y) {
    return 0.8 * std::cos(2 * kPi * x + phase) + 0.5 * std::sin(2 * kPi * (x + y)) + 0.2 * std::cos(4 * kPi * y);
  });
}

SpaceTimeField separable_source(const TimeGrid& tg, const Field& g, const std::function<double(double)>& f) {
  SpaceTimeField s = SpaceTimeField::zeros(tg, g.grid, 1);
  for (int j = 1; j <= tg.J; ++j)
    for (std::size_t i = 0; i < g.v.size(); ++i) s.v[j][0].v[i] = f(tg.t[j]) * g.v[i];
  return s;
}

SpaceTimeField difference(const SpaceTimeField& a, const SpaceTimeField& b) {
  SpaceTimeField d = a;
  for (std::size_t j = 0; j < d.v.size(); ++j)
    for (std::size_t k = 0; k < d.v[j].size(); ++k)
      for (std::size_t i = 0; i < d.v[j][k].v.size(); ++i) d.v[j][k].v[i] -= b.v[j][k].v[i];
  return d;
}

struct D3 {
  ParameterSet params = default_parameters(3.0, 0.01);
  SolverExponents exps = solver_exponents(check_ci(params));
  Nonlinearity nl = Nonlinearity::scalar(2);
};

}  // namespace

TEST_CASE("graded time grid") {
  auto g = TimeGrid::graded(0.5, 8, 2.0);
  REQUIRE(g.t.size() == 9);
  CHECK(g.t[0] == 0);
  CHECK(g.t[8] == 0.5);
  CHECK(g.t[2] == doctest::Approx(0.5 * 4.0 / 64).epsilon(1e-15));
  CHECK_THROWS_AS(TimeGrid::graded(0.5, 8, 0.5), DomainError);
  CHECK_THROWS_AS(TimeGrid::graded(0.0, 8), DomainError);
  CHECK_THROWS_AS(TimeGrid::graded(1.0, 0), DomainError);
}

TEST_CASE("heat semigroup") {
  GridSpec g{2, 32};
  Field x = sample_gff(g, {3.0}, 5);
  CHECK(max_diff(heat_semigroup(x, 0.0), x) == 0);
  CHECK_THROWS_AS(heat_semigroup(x, -1e-3), DomainError);

  SUBCASE("single mode decays at rate 4 pi^2 |m|^2") {
    const double t = 0.003;
    Field m = from_function(g, [](double a, double b) { return 1.7 * std::cos(2 * kPi * (3 * a - 2 * b)); });
    Field expect = m;
    for (double& v : expect.v) v *= std::exp(-4 * kPi * kPi * 13 * t);
    CHECK(max_diff(heat_semigroup(m, t), expect) < 1e-13);
  }
  SUBCASE("semigroup property") {
    for (auto [s, t] : {std::pair{1e-4, 3e-3}, std::pair{0.01, 0.02}, std::pair{0.0, 0.1}})
      CHECK(max_diff(heat_semigroup(heat_semigroup(x, s), t), heat_semigroup(x, s + t)) < 1e-12);
  }
}

TEST_CASE("heat smoothing estimate holds with one fitted constant") {
  GridSpec g{2, 64};
  const double eta = -0.6;
  const std::vector<double> times = {1e-4, 1e-3, 1e-2};
  for (double gamma : {0.5, 1.0}) {
    auto ratio = [&](int seed, double t) {
      Field x = sample_gff(g, {3.0}, 1000 + seed);
      return std::pow(t, gamma / 2) * besov_norm(heat_semigroup(x, t), eta + gamma) / besov_norm(x, eta);
    };
    double C = 0;
    for (int s = 0; s < 10; ++s)
      for (double t : times) C = std::max(C, ratio(s, t));
    C *= 1.5;
    int violations = 0;
    for (int s = 10; s < 100; ++s)
      for (double t : times) violations += ratio(s, t) > C;
    CHECK(violations == 0);
  }
}

TEST_CASE("Duhamel integral") {
  GridSpec g{2, 16};
  auto tg = TimeGrid::graded(0.1, 32);

  SUBCASE("zero and empty sources") {
    auto u = duhamel(SpaceTimeField::zeros(tg, g, 1));
    for (const auto& vf : u.v) CHECK(vf[0].sup_norm() == 0);
    SpaceTimeField empty;
    empty.time = tg;
    CHECK_THROWS_AS(duhamel(empty), DomainError);
  }
  SUBCASE("constant source matches the closed form per mode") {
    Field c = sample_gff(g, {2.5}, 3);
    for (double& v : c.v) v += 0.7;
    auto u = duhamel(separable_source(tg, c, [](double) { return 1.0; }));
    auto modes = mode_table(g);
    for (int j : {1, 5, 32}) {
      Spectrum got = fft(u.v[j][0]), src = fft(c);
      const double t = tg.t[j];
      double err = 0;
      for (std::size_t i = 0; i < got.c.size(); ++i) {
        const double lam = 4 * kPi * kPi * modes->q[i];
        const double w = lam == 0 ? t : -std::expm1(-lam * t) / lam;
        err = std::max(err, std::abs(got.c[i] - w * src.c[i]));
      }
      CHECK(err < 1e-14);
    }
  }
  SUBCASE("smooth source converges at second order") {
    Field m = from_function(g, [](double a, double b) { return std::cos(2 * kPi * (a + b)); });
    const double lam = 8 * kPi * kPi, om = 30.0, T = 0.1;
    const double exact = (lam * std::cos(om * T) + om * std::sin(om * T) - lam * std::exp(-lam * T)) / (lam * lam + om * om);
    std::vector<double> err;
    for (int J : {16, 32, 64, 128}) {
      auto t = TimeGrid::graded(T, J);
      auto u = duhamel(separable_source(t, m, [&](double s) { return std::cos(om * s); }));
      err.push_back(std::abs(u.v[J][0].v[0] - exact));
    }
    for (std::size_t i = 1; i < err.size(); ++i) CHECK(std::log2(err[i - 1] / err[i]) > 1.8);
  }
  SUBCASE("t^-delta source converges at rate 2(1 - delta) on the graded grid") {
    Field m = from_function(g, [](double a, double) { return std::cos(2 * kPi * a); });
    Field one = Field::constant(g, 1.0);
    const double lam = 4 * kPi * kPi, T = 0.1;
    boost::math::quadrature::tanh_sinh<double> ts;
    for (double delta : {0.5, 0.75}) {
      const double exact_mode = ts.integrate([&](double s) { return std::exp(-lam * (T - s)) * std::pow(s, -delta); },
                                             0.0, T);
      const double exact_mean = std::pow(T, 1 - delta) / (1 - delta);
      std::vector<double> em, e0;
      for (int J : {128, 256, 512, 1024}) {
        auto t = TimeGrid::graded(T, J);
        auto f = [&](double s) { return std::pow(s, -delta); };
        em.push_back(std::abs(duhamel(separable_source(t, m, f)).v[J][0].v[0] - exact_mode));
        e0.push_back(std::abs(duhamel(separable_source(t, one, f)).v[J][0].v[0] - exact_mean));
      }
      const double rate = 2 * (1 - delta);
      for (std::size_t i = 1; i < em.size(); ++i) {
        CHECK(std::log2(em[i - 1] / em[i]) == doctest::Approx(rate).epsilon(0.15));
        CHECK(std::log2(e0[i - 1] / e0[i]) == doctest::Approx(rate).epsilon(0.15));
      }
    }
  }
}

TEST_CASE("nonlinearity tensors") {
  GridSpec g{2, 8};
  std::mt19937_64 rng(9);
  std::normal_distribution<double> N01;
  const int e = 2;
  std::vector<double> B(e * e * e * 2), P(e * e * e * e), Q1(e * e * e), Q2(e * e * 2), L(e * e), c(e);
  for (auto* t : {&B, &P, &Q1, &Q2, &L, &c})
    for (double& v : *t) v = N01(rng);
  Nonlinearity nl(e, 2, B, P, Q1, Q2, L, c);

  SUBCASE("P is symmetrised") {
    const auto& S = nl.P();
    for (int i = 0; i < e; ++i)
      for (int j = 0; j < e; ++j)
        for (int k = 0; k < e; ++k)
          for (int l = 0; l < e; ++l) {
            const double v = S[((i * e + j) * e + k) * e + l];
            CHECK(v == doctest::Approx(S[((i * e + k) * e + j) * e + l]));
            CHECK(v == doctest::Approx(S[((i * e + l) * e + k) * e + j]));
            CHECK(v == doctest::Approx(S[((i * e + j) * e + l) * e + k]));
          }
    double sum_in = 0, sum_out = 0;
    for (double v : P) sum_in += v;
    for (double v : S) sum_out += v;
    CHECK(sum_out == doctest::Approx(sum_in));
  }
  SUBCASE("pointwise evaluation matches a direct loop") {
    VecField A{sample_gff(g, {3.0}, 1), sample_gff(g, {3.0}, 2)};
    auto dA = gradient(A);
    VecField F = nl.eval(A, dA);
    const auto& S = nl.P();
    for (std::size_t p : {0u, 17u, 63u}) {
      for (int i = 0; i < e; ++i) {
        double v = c[i];
        for (int j = 0; j < e; ++j) {
          v += L[i * e + j] * A[j].v[p];
          for (int a = 0; a < 2; ++a) v += Q2[(i * e + j) * 2 + a] * dA[a][j].v[p];
          for (int k = 0; k < e; ++k) {
            v += Q1[(i * e + j) * e + k] * A[j].v[p] * A[k].v[p];
            for (int a = 0; a < 2; ++a) v += B[((i * e + j) * e + k) * 2 + a] * A[j].v[p] * dA[a][k].v[p];
            for (int l = 0; l < e; ++l) v += S[((i * e + j) * e + k) * e + l] * A[j].v[p] * A[k].v[p] * A[l].v[p];
          }
        }
        CHECK(F[i].v[p] == doctest::Approx(v).epsilon(1e-12));
      }
    }
  }
  SUBCASE("trilinear term is invariant under argument permutation") {
    VecField x{sample_gff(g, {3.0}, 3), sample_gff(g, {3.0}, 4)};
    VecField y{sample_gff(g, {3.0}, 5), sample_gff(g, {3.0}, 6)};
    VecField z{sample_gff(g, {3.0}, 7), sample_gff(g, {3.0}, 8)};
    auto a = nl.trilinear(x, y, z), b = nl.trilinear(z, x, y), d = nl.trilinear(y, z, x);
    for (int i = 0; i < e; ++i) {
      CHECK(max_diff(a[i], b[i]) < 1e-12);
      CHECK(max_diff(a[i], d[i]) < 1e-12);
    }
  }
  SUBCASE("validation") {
    CHECK_THROWS_AS(Nonlinearity(2, 2, {1.0}, {}, {}, {}, {}, {}), DomainError);
    CHECK_THROWS_AS(Nonlinearity(0, 2), DomainError);
    CHECK_THROWS_AS(nl.eval(VecField{Field::zeros(g)}, {}), DomainError);
  }
  CHECK(Nonlinearity(1, 2).is_zero());
  CHECK_FALSE(Nonlinearity::scalar(2).is_zero());
}

TEST_CASE("Picard tree terms") {
  GridSpec g{2, 32};
  D3 c;
  auto tg = TimeGrid::graded(0.02, 16);

  SUBCASE("single mode closed form for I(X)I'(X)") {
    const double a = 0.9, b = 1.3;
    Field x = from_function(g, [&](double u, double v) { return a * std::cos(2 * kPi * (2 * u + v)); });
    auto nl = Nonlinearity::scalar(2, b, 0.0);
    auto bundle = picard_terms(x, c.params, nl, tg);
    REQUIRE(bundle.codes.size() == 1);
    const int k = bundle.find(canonical_form(LabelledTree::parse("I(X)I'(X)")));
    REQUIRE(k == 0);
    for (int j = 1; j <= tg.J; ++j) {
      const double t = tg.t[j];
      Field expect = from_function(g, [&](double u, double v) {
        const double ph = 2 * kPi * (2 * u + v);
        return -b * a * a * 2 * kPi * 2 * std::exp(-8 * kPi * kPi * 5 * t) * std::cos(ph) * std::sin(ph);
      });
      CHECK(max_diff(bundle.source[k].v[j][0], expect) < 1e-8);
    }
  }
  SUBCASE("cubic tree is P applied to the heat flow") {
    const double d = 3.4;
    auto params = default_parameters(d, kappa_guard(d) / 2);
    REQUIRE(params.N == 3);
    auto nl = Nonlinearity::scalar(2, 1.0, -0.7);
    Field x = mollify(sample_gff(g, {d}, 4), Mollifier{4.0 / 32});
    auto bundle = picard_terms(x, params, nl, tg);
    const int k = bundle.find(canonical_form(LabelledTree::parse("I(X)I(X)I(X)")));
    REQUIRE(k >= 0);
    for (int j : {1, 7, 16}) {
      Field h = heat_semigroup(x, tg.t[j]);
      Field expect = h;
      for (double& v : expect.v) v = -0.7 * v * v * v;
      CHECK(max_diff(bundle.source[k].v[j][0], expect) < 1e-12);
    }
  }
  SUBCASE("recursion consistency over every tree") {
    const double d = 3.6;
    auto params = default_parameters(d, kappa_guard(d) / 2);
    GridSpec small{2, 16};
    auto nl = Nonlinearity::scalar(2);
    Field x = mollify(sample_gff(small, {d}, 8), Mollifier{4.0 / 16});
    auto t4 = TimeGrid::graded(0.01, 6);
    auto bundle = picard_terms(x, params, nl, t4);
    CHECK(bundle.trees.size() == enumerate_trees(params.N).size() - 1);
    for (std::size_t ti = 0; ti < bundle.trees.size(); ++ti) {
      const auto& t = bundle.trees[ti];
      CHECK(bundle.coeff[ti] == doctest::Approx(boost::rational_cast<double>(symmetry_factor(t))));
      auto heat = duhamel(bundle.source[ti]);
      std::vector<std::string> plain, deriv;
      for (auto [label, child] : t.children(t.root()))
        (label == EdgeLabel::I ? plain : deriv).push_back(canonical_form(t.branch(child)));
      for (int j = 1; j <= t4.J; ++j) {
        CHECK(max_diff(heat.v[j][0], bundle.heat[ti].v[j][0]) < 1e-12);
        VecField expect = plain.size() == 3 ? nl.trilinear(bundle.heat_of(plain[0]).v[j], bundle.heat_of(plain[1]).v[j],
                                                           bundle.heat_of(plain[2]).v[j])
                                            : nl.bilinear(bundle.heat_of(plain[0]).v[j],
                                                          gradient(bundle.heat_of(deriv[0]).v[j]));
        CHECK(max_diff(expect[0], bundle.source[ti].v[j][0]) < 1e-12);
      }
    }
  }
  SUBCASE("single-tree evaluation matches the bundle") {
    const double d = 3.6;
    auto params = default_parameters(d, kappa_guard(d) / 2);
    GridSpec small{2, 16};
    auto nl = Nonlinearity::scalar(2, 0.8, -1.1);
    Field x = mollify(sample_gff(small, {d}, 21), Mollifier{4.0 / 16});
    auto t4 = TimeGrid::graded(0.01, 5);
    auto bundle = picard_terms(x, params, nl, t4);
    for (std::size_t ti = 0; ti < bundle.trees.size(); ++ti) {
      auto term = tree_term(bundle.trees[ti], x, nl, t4);
      for (int j = 1; j <= t4.J; ++j) CHECK(max_diff(term.v[j][0], bundle.source[ti].v[j][0]) == 0);
    }
    CHECK_THROWS_AS(tree_term(LabelledTree::xi(), x, nl, t4), DomainError);
  }
  SUBCASE("zero data gives zero terms") {
    auto bundle = picard_terms(Field::zeros(g), c.params, c.nl, tg);
    for (const auto& s : bundle.source)
      for (const auto& vf : s.v) CHECK(vf[0].sup_norm() == 0);
  }
  SUBCASE("validation") {
    CHECK_THROWS_AS(picard_terms(VecField{}, c.params, c.nl, tg), DomainError);
    CHECK_THROWS_AS(picard_terms(Field::zeros(GridSpec{3, 8}), c.params, c.nl, tg), DomainError);
  }
}

TEST_CASE("truncated expansion") {
  GridSpec g{2, 32};
  auto nl = Nonlinearity::scalar(2);
  auto tg = TimeGrid::graded(0.02, 12);
  Field x = mollify(sample_gff(g, {3.0}, 2), Mollifier{4.0 / 32});

  SUBCASE("N = 1 keeps only the noise") {
    auto p = default_parameters(2.5, 0.01);
    REQUIRE(p.N == 1);
    auto b = picard_terms(x, p, nl, tg);
    CHECK(b.trees.empty());
    auto S = truncated_expansion(b);
    for (int j = 0; j <= tg.J; ++j) CHECK(max_diff(S.v[j][0], heat_semigroup(x, tg.t[j])) == 0);
  }
  SUBCASE("d = 3 adds I(X)I'(X) with coefficient 1") {
    auto b = picard_terms(x, default_parameters(3.0, 0.01), nl, tg);
    REQUIRE(b.codes.size() == 1);
    CHECK(b.codes[0] == canonical_form(LabelledTree::parse("I(X)I'(X)")));
    CHECK(b.coeff[0] == 1.0);
    auto S = truncated_expansion(b);
    for (int j = 1; j <= tg.J; ++j) {
      Field expect = heat_semigroup(x, tg.t[j]);
      for (std::size_t i = 0; i < expect.v.size(); ++i) expect.v[i] += b.heat[0].v[j][0].v[i];
      CHECK(max_diff(S.v[j][0], expect) < 1e-14);
    }
    SUBCASE("linear in each term") {
      auto doubled = b;
      for (auto& vf : doubled.heat[0].v)
        for (double& v : vf[0].v) v *= 2;
      for (auto& vf : doubled.source[0].v)
        for (double& v : vf[0].v) v *= 2;
      auto S2 = truncated_expansion(doubled);
      auto src = truncated_source(b), src2 = truncated_source(doubled);
      for (int j = 1; j <= tg.J; ++j) {
        Field lhs = S2.v[j][0], rhs = S.v[j][0];
        for (std::size_t i = 0; i < lhs.v.size(); ++i) rhs.v[i] += b.heat[0].v[j][0].v[i];
        CHECK(max_diff(lhs, rhs) < 1e-13);
        Field twice = src.v[j][0];
        for (double& v : twice.v) v *= 2;
        CHECK(max_diff(src2.v[j][0], twice) < 1e-13);
      }
    }
  }
}

TEST_CASE("theta metric") {
  GridSpec g{2, 32};
  D3 c;
  auto tg = TimeGrid::graded(0.05, 12);
  std::vector<PicardBundle> b;
  for (int s = 0; s < 3; ++s) b.push_back(picard_terms(mollify(sample_gff(g, {3.0}, 40 + s), Mollifier{0.125}), c.params, c.nl, tg));
  CHECK(theta_distance(b[0], b[0]) == 0);
  const double d01 = theta_distance(b[0], b[1]), d10 = theta_distance(b[1], b[0]);
  const double d12 = theta_distance(b[1], b[2]), d02 = theta_distance(b[0], b[2]);
  CHECK(d01 > 0);
  CHECK(d01 == doctest::Approx(d10).epsilon(1e-14));
  CHECK(d02 <= d01 + d12 + 1e-12);
  CHECK(d01 <= d02 + d12 + 1e-12);
  auto other = picard_terms(b[0].x, default_parameters(3.0, 0.02), c.nl, tg);
  CHECK_THROWS_AS(theta_distance(b[0], other), DomainError);
}

TEST_CASE("theta distance between dyadic mollifications decreases (seed mean)") {
  GridSpec g{2, 256};
  auto p = default_parameters(3.0, 0.15);
  auto nl = Nonlinearity::scalar(2);
  auto tg = TimeGrid::graded(1.0, 16);
  const std::vector<double> eps = {1.0 / 8, 1.0 / 16, 1.0 / 32, 1.0 / 64};
  std::vector<double> mean(eps.size(), 0.0);
  const int seeds = 6;
  for (int s = 1; s <= seeds; ++s) {
    Field raw = sample_gff(g, {3.0}, s);
    for (std::size_t i = 0; i < eps.size(); ++i) {
      auto a = picard_terms(mollify(raw, Mollifier{eps[i]}), p, nl, tg);
      auto b = picard_terms(mollify(raw, Mollifier{eps[i] / 2}), p, nl, tg);
      mean[i] += theta_distance(a, b) / seeds;
    }
  }
  for (std::size_t i = 1; i < mean.size(); ++i) CHECK(mean[i] < mean[i - 1]);
}

TEST_CASE("remainder fixed point") {
  GridSpec g{2, 32};
  D3 c;

  SUBCASE("zero nonlinearity gives R = 0 in one iteration") {
    Nonlinearity zero(1, 2);
    auto b = picard_terms(sample_gff(g, {3.0}, 1), c.params, zero, TimeGrid::graded(0.01, 16));
    auto sol = solve_remainder(b, c.exps, zero);
    REQUIRE(sol.log.size() == 1);
    for (const auto& vf : sol.R.v) CHECK(vf[0].sup_norm() == 0);
  }
  SUBCASE("smooth data agrees with the reference stepper") {
    const double T = 0.05;
    const int J = 64, m = 2;
    Field x = smooth_field(g);
    auto b = picard_terms(x, c.params, c.nl, TimeGrid::graded(T, J));
    auto sol = solve_remainder(b, c.exps, c.nl);
    CHECK(sol.residual < 1e-10);
    CHECK(sol.norm <= sol.K);
    for (std::size_t i = 1; i < sol.log.size(); ++i) CHECK(sol.log[i].contraction < 1);
    auto ref = reference_timestepper(x, T, c.nl, m * J * J);
    double err = 0, scale = 0;
    for (int j = 1; j <= J; ++j) {
      if (b.time.t[j] < T / 4) continue;
      err = std::max(err, max_diff(sol.A.v[j][0], ref.v[m * j * j][0]));
      scale = std::max(scale, ref.v[m * j * j][0].sup_norm());
    }
    CHECK(err / scale < 1e-3);
  }
  SUBCASE("1-Lipschitz in the theta distance") {
    for (int s = 1; s <= 4; ++s) {
      Field x = mollify(sample_gff(g, {3.0}, 70 + s), Mollifier{2.0 / 32});
      Field y = x;
      for (std::size_t i = 0; i < y.v.size(); ++i) y.v[i] += 0.05 * std::sin(2 * kPi * (s * i) / y.v.size() + s);
      y = mollify(y, Mollifier{2.0 / 32});
      SolverOptions o;
      o.K = std::max(ball_radius({x}, c.params, c.nl), ball_radius({y}, c.params, c.nl));
      auto tg = TimeGrid::graded(admissible_horizon(c.exps, o.K), 32);
      auto bx = picard_terms(x, c.params, c.nl, tg), by = picard_terms(y, c.params, c.nl, tg);
      auto rx = solve_remainder(bx, c.exps, c.nl, o), ry = solve_remainder(by, c.exps, c.nl, o);
      CHECK(bt_norm(difference(rx.R, ry.R), c.exps.theta_remainder) <= theta_distance(bx, by));
    }
  }
  SUBCASE("unique within the ball") {
    Field x = mollify(sample_gff(g, {3.0}, 9), Mollifier{2.0 / 32});
    SolverOptions o;
    o.K = ball_radius({x}, c.params, c.nl);
    auto b = picard_terms(x, c.params, c.nl, TimeGrid::graded(admissible_horizon(c.exps, o.K), 32));
    auto a = solve_remainder(b, c.exps, c.nl, o);
    o.initial = a.R;
    for (auto& vf : o.initial.v)
      for (std::size_t i = 0; i < vf[0].v.size(); ++i) vf[0].v[i] = -0.5 * vf[0].v[i] + 0.01 * std::cos(0.1 * i);
    o.initial.v[0][0] = Field::zeros(g);
    auto b2 = solve_remainder(b, c.exps, c.nl, o);
    CHECK(bt_norm(difference(a.R, b2.R), c.exps.theta_remainder) < 1e-8);
  }
  SUBCASE("the solution approaches the data as t decreases") {
    Field x = mollify(sample_gff(g, {3.0}, 12), Mollifier{2.0 / 32});
    const double K = ball_radius({x}, c.params, c.nl);
    auto b = picard_terms(x, c.params, c.nl, TimeGrid::graded(admissible_horizon(c.exps, K), 64));
    auto sol = solve_remainder(b, c.exps, c.nl);
    const double omega = check_ci(c.params).omega_min;
    double prev = 0;
    for (int j : {8, 16, 32, 64}) {
      Field d = sol.A.v[j][0];
      for (std::size_t i = 0; i < d.v.size(); ++i) d.v[i] -= x.v[i];
      const double v = besov_norm(d, omega);
      CHECK(v > prev);
      prev = v;
    }
  }
  SUBCASE("B_T norm is monotone in the horizon") {
    Field x = mollify(sample_gff(g, {3.0}, 13), Mollifier{2.0 / 32});
    auto b = picard_terms(x, c.params, c.nl, TimeGrid::graded(1e-3, 32));
    auto sol = solve_remainder(b, c.exps, c.nl);
    double prev = 0;
    for (int j = 1; j <= 32; ++j) {
      const double v = bt_norm(sol.R, c.exps.theta_remainder, b.time.t[j]);
      CHECK(v >= prev);
      prev = v;
    }
    CHECK(prev == doctest::Approx(sol.norm).epsilon(1e-12));
  }
  SUBCASE("horizon too large") {
    Field x = smooth_field(g);
    auto b = picard_terms(x, c.params, c.nl, TimeGrid::graded(0.5, 16));
    SolverOptions o;
    o.eps_c = 1e-3;
    CHECK_THROWS_AS(solve_remainder(b, c.exps, c.nl, o), HorizonTooLarge);
    auto strong = Nonlinearity::scalar(2, 40.0, 0.0);
    Field big = x;
    for (double& v : big.v) v *= 5;
    auto bb = picard_terms(big, c.params, strong, TimeGrid::graded(0.9, 16));
    o.eps_c = std::numeric_limits<double>::infinity();
    o.K = 1e6;
    CHECK_THROWS_AS(solve_remainder(bb, c.exps, strong, o), HorizonTooLarge);
    CHECK(admissible_horizon(c.exps, 1.0) < 1);
    CHECK(std::pow(admissible_horizon(c.exps, 3.0), c.exps.kappa_hat) < kDefaultSmallness / 9);
  }
}

TEST_CASE("saturated term has mean zero") {
  GridSpec g{2, 32};
  D3 c;
  auto nl = Nonlinearity::scalar(2, 1.0, 0.0);
  const std::vector<std::size_t> probes = {0, 37, 500};
  const double t = 2e-3;
  std::vector<double> sum(probes.size(), 0.0), sum2(probes.size(), 0.0);
  const int n = 300;
  for (int s = 0; s < n; ++s) {
    Field h = heat_semigroup(mollify(sample_gff(g, {3.0}, 5000 + s), Mollifier{4.0 / 32}), t);
    VecField v = nl.bilinear({h}, gradient({h}));
    for (std::size_t k = 0; k < probes.size(); ++k) {
      sum[k] += v[0].v[probes[k]];
      sum2[k] += v[0].v[probes[k]] * v[0].v[probes[k]];
    }
  }
  for (std::size_t k = 0; k < probes.size(); ++k) {
    const double mean = sum[k] / n, sd = std::sqrt(sum2[k] / n - mean * mean);
    CHECK(std::abs(mean) < 3 * sd / std::sqrt(double(n)));
  }
}

TEST_CASE("reference time stepper") {
  GridSpec g{2, 32};
  SUBCASE("zero nonlinearity is the heat flow") {
    Field x = sample_gff(g, {3.0}, 3);
    auto out = reference_timestepper(x, 0.01, Nonlinearity(1, 2), 10);
    for (int k : {1, 5, 10}) CHECK(max_diff(out.v[k][0], heat_semigroup(x, 0.001 * k)) < 1e-12);
  }
  SUBCASE("manufactured solution") {
    Nonlinearity nl(1, 2, {0.0, 2.0}, {}, {}, {}, {}, {0.3});
    Field x = from_function(g, [](double a, double) { return std::cos(2 * kPi * a); });
    const double T = 0.02;
    auto out = reference_timestepper(x, T, nl, 40);
    for (int k : {1, 20, 40}) {
      const double t = T * k / 40;
      Field exact = from_function(g, [&](double a, double) { return std::exp(-4 * kPi * kPi * t) * std::cos(2 * kPi * a) + 0.3 * t; });
      CHECK(max_diff(out.v[k][0], exact) < 1e-6);
    }
  }
  SUBCASE("step halving converges at order >= 1") {
    Field x = smooth_field(g, 0.3);
    auto nl = Nonlinearity::scalar(2);
    const double T = 0.05;
    Field fine = reference_timestepper(x, T, nl, 3200).v.back()[0];
    std::vector<double> err;
    for (int s : {25, 50, 100}) err.push_back(max_diff(reference_timestepper(x, T, nl, s).v.back()[0], fine));
    for (std::size_t i = 1; i < err.size(); ++i) CHECK(std::log2(err[i - 1] / err[i]) >= 1.0);
  }
  CHECK_THROWS_AS(reference_timestepper(Field::zeros(g), 0.1, Nonlinearity::scalar(2), 0), DomainError);
}

TEST_CASE("stored smallness constant does not exceed its calibration") {
  auto r = calibrate_smallness(CalibrationConfig{}, Nonlinearity::scalar(2));
  REQUIRE(r.critical_T.size() == 3);
  CHECK(kDefaultSmallness <= r.eps_c);
  CHECK(kDefaultSmallness >= 0.99 * r.eps_c);
}
