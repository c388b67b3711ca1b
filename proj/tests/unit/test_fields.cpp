#include <doctest.h>
#include <cstring>
#include <functional>

#include "wildlab/errors.hpp"
#include "wildlab/fields.hpp"

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <numbers>

using namespace wildlab;

namespace {

constexpr double kPi = std::numbers::pi;

Field from_function(const GridSpec& g, const std::function<double(double, double)>& f) {
  Field x = Field::zeros(g);
  for (int i = 0; i < g.M; ++i)
    for (int j = 0; j < g.M; ++j) x.v[x.index({i, j})] = f(double(i) / g.M, double(j) / g.M);
  return x;
}

// Independent radial quadrature of the bump transform.
double bump_hankel(double s, int n) {
  const int K = 20000;
  double num = 0, den = 0;
  for (int i = 1; i < K; ++i) {
    double r = 0.5 * i / K;
    double psi = std::exp(-1 / (1 - 4 * r * r));
    double w = n == 2 ? r : r * r;
    double kernel = n == 2 ? std::cyl_bessel_j(0.0, 2 * kPi * s * r)
                           : (s == 0 ? 1.0 : std::sin(2 * kPi * s * r) / (2 * kPi * s * r));
    num += psi * w * kernel;
    den += psi * w;
  }
  return num / den;
}

double fit_slope(const std::vector<double>& x, const std::vector<double>& y) {
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) mx += std::log(x[i]), my += std::log(y[i]);
  mx /= x.size();
  my /= x.size();
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (std::log(x[i]) - mx) * (std::log(y[i]) - my);
    sxx += (std::log(x[i]) - mx) * (std::log(x[i]) - mx);
  }
  return sxy / sxx;
}

}  // namespace

TEST_CASE("grid validation") {
  CHECK_THROWS_AS((GridSpec{2, 12}.validate()), DomainError);
  CHECK_THROWS_AS((GridSpec{1, 16}.validate()), DomainError);
  CHECK_THROWS_AS((GridSpec{2, 4}.validate()), DomainError);
  CHECK_NOTHROW((GridSpec{3, 8}.validate()));
  CHECK_THROWS_AS(CovarianceSpec{4.5}.validate(2), DomainError);
}

TEST_CASE("FFT round trip") {
  for (GridSpec g : {GridSpec{2, 64}, GridSpec{3, 16}}) {
    Field x = ifft(sample_gff_spectrum(g, CovarianceSpec{3.0}, 1));
    for (std::size_t i = 0; i < x.v.size(); ++i) x.v[i] += std::sin(0.1 * i);
    Field y = ifft(fft(x));
    double err = 0, nrm = 0;
    for (std::size_t i = 0; i < x.v.size(); ++i) err = std::max(err, std::abs(x.v[i] - y.v[i])), nrm = std::max(nrm, std::abs(x.v[i]));
    CHECK(err / nrm < 1e-10);
  }
}

TEST_CASE("single Fourier mode") {
  GridSpec g{2, 32};
  Field x = from_function(g, [](double a, double b) { return std::cos(2 * kPi * (3 * a - 2 * b)); });
  Spectrum s = fft(x);
  auto modes = mode_table(g);
  for (std::size_t i = 0; i < s.c.size(); ++i) {
    bool hit = (modes->component(i, 0) == 3 && modes->component(i, 1) == -2) ||
               (modes->component(i, 0) == -3 && modes->component(i, 1) == 2);
    CHECK(std::abs(s.c[i] - Complex(hit ? 0.5 : 0.0)) < 1e-12);
  }
  Field dx = derivative(x, 0);
  Field expect = from_function(g, [](double a, double b) { return -6 * kPi * std::sin(2 * kPi * (3 * a - 2 * b)); });
  for (std::size_t i = 0; i < dx.v.size(); ++i) CHECK(dx.v[i] == doctest::Approx(expect.v[i]).epsilon(1e-9));
}

TEST_CASE("GFF samples are mean zero, Hermitian and deterministic") {
  GridSpec g{2, 64};
  CovarianceSpec cov{2.5};
  Field a = sample_gff(g, cov, 42);
  Field b = sample_gff(g, cov, 42);
  Field c = sample_gff(g, cov, 43);
  CHECK(std::abs(a.mean()) < 1e-15);
  CHECK(std::memcmp(a.v.data(), b.v.data(), a.v.size() * sizeof(double)) == 0);
  CHECK(a.v != c.v);
  Spectrum s = sample_gff_spectrum(g, cov, 42);
  Spectrum back = fft(ifft(s));
  for (std::size_t i = 0; i < s.c.size(); ++i) CHECK(std::abs(back.c[i] - s.c[i]) < 1e-12);
  CHECK(s.c[0] == Complex(0));
}

TEST_CASE("GFF sampling does not depend on the worker count") {
  GridSpec g{2, 64};
  setenv("WILDLAB_THREADS", "1", 1);
  Field a = sample_gff(g, CovarianceSpec{3.0}, 9);
  setenv("WILDLAB_THREADS", "4", 1);
  Field b = sample_gff(g, CovarianceSpec{3.0}, 9);
  unsetenv("WILDLAB_THREADS");
  CHECK(std::memcmp(a.v.data(), b.v.data(), a.v.size() * sizeof(double)) == 0);
}

TEST_CASE("per-mode variance matches the multiplier") {
  GridSpec g{2, 16};
  CovarianceSpec cov{3.0};
  const int N = 1000;
  auto var = gff_variance_table(g, cov);
  auto modes = mode_table(g);
  std::vector<double> acc(g.spectral_size(), 0.0);
  for (int k = 0; k < N; ++k) {
    Spectrum s = sample_gff_spectrum(g, cov, 1000 + k);
    for (std::size_t i = 0; i < s.c.size(); ++i) acc[i] += std::norm(s.c[i]);
  }
  int tested = 0, outside = 0;
  double pooled = 0;
  for (std::size_t i = 0; i < acc.size(); ++i) {
    double sigma2 = var[modes->q[i]];
    if (sigma2 == 0) continue;
    // |X|^2 / sigma^2 is Exp(1) (complex modes) or chi^2_1 (real modes).
    bool real_mode = std::abs(std::imag(sample_gff_spectrum(g, cov, 5).c[i])) == 0;
    double sd = real_mode ? std::sqrt(2.0) : 1.0;
    double z = (acc[i] / N / sigma2 - 1) / (sd / std::sqrt(N));
    ++tested;
    if (std::abs(z) > 3) ++outside;
    pooled += z;
  }
  CHECK(tested > 100);
  CHECK(outside <= tested / 100 + 1);
  CHECK(std::abs(pooled / std::sqrt(tested)) < 3);
}

TEST_CASE("bump transform matches radial quadrature") {
  for (int n : {2, 3}) {
    CHECK(bump_transform(0, n) == doctest::Approx(1).epsilon(1e-14));
    for (double s : {0.3, 1.0, 2.5, 6.0, 15.0}) CHECK(bump_transform(s, n) == doctest::Approx(bump_hankel(s, n)).epsilon(1e-6).scale(1));
  }
}

TEST_CASE("mollification") {
  GridSpec g{2, 64};
  Mollifier m{0.1};
  Field c = Field::constant(g, 2.5);
  Field mc = mollify(c, m);
  for (double v : mc.v) CHECK(v == doctest::Approx(2.5).epsilon(1e-13));
  Field x = sample_gff(g, CovarianceSpec{3.0}, 3);
  Field r = x;
  for (int i = 0; i < g.M; ++i)
    for (int j = 0; j < g.M; ++j) r.v[r.index({i, j})] = x.v[x.index({-i, -j})];
  Field mx = mollify(x, m), mr = mollify(r, m);
  for (int i = 0; i < g.M; ++i)
    for (int j = 0; j < g.M; ++j) CHECK(mr.v[mr.index({i, j})] == doctest::Approx(mx.v[mx.index({-i, -j})]).epsilon(1e-10).scale(1));
  Field odd = from_function(g, [](double a, double b) { return std::sin(2 * kPi * a) * std::cos(4 * kPi * b); });
  Field mo = mollify(odd, m);
  for (int i = 0; i < g.M; ++i)
    for (int j = 0; j < g.M; ++j) CHECK(mo.v[mo.index({i, j})] == doctest::Approx(-mo.v[mo.index({-i, j})]).scale(1));
  CHECK_THROWS_AS(mollify(x, Mollifier{1.0 / 64}), DomainError);
}

TEST_CASE("exact covariance agrees with Monte Carlo") {
  GridSpec g{2, 32};
  CovarianceSpec cov{2.5};
  const double eps = 0.125, eps_bar = 0.0625;
  auto exact = covariance_exact(g, cov, eps, eps_bar);
  auto zero = covariance_exact(g, cov, eps, eps);
  for (double v : zero.diff.v) CHECK(v == 0);
  const int N = 400;
  std::vector<std::size_t> probes{0, 3, 5 * 32 + 1, 8 * 32 + 8};
  std::vector<double> s1(probes.size()), s2(probes.size()), d1(probes.size()), d2(probes.size());
  for (int k = 0; k < N; ++k) {
    Spectrum x = sample_gff_spectrum(g, cov, 77 + k);
    Spectrum xe = mollify(x, Mollifier{eps}), xb = mollify(x, Mollifier{eps_bar});
    Field a = ifft(xe), diff = a;
    Field b = ifft(xb);
    for (std::size_t i = 0; i < diff.v.size(); ++i) diff.v[i] -= b.v[i];
    // Pointwise products averaged over the torus give one estimate per sample.
    Field ca = autocovariance(fft(a)), cd = autocovariance(fft(diff));
    for (std::size_t p = 0; p < probes.size(); ++p) {
      s1[p] += ca.v[probes[p]];
      s2[p] += ca.v[probes[p]] * ca.v[probes[p]];
      d1[p] += cd.v[probes[p]];
      d2[p] += cd.v[probes[p]] * cd.v[probes[p]];
    }
  }
  for (std::size_t p = 0; p < probes.size(); ++p) {
    double m = s1[p] / N, se = std::sqrt((s2[p] / N - m * m) / N);
    CHECK(std::abs(m - exact.cov.v[probes[p]]) < 3 * se);
    double md = d1[p] / N, sed = std::sqrt((d2[p] / N - md * md) / N);
    CHECK(std::abs(md - exact.diff.v[probes[p]]) < 3 * sed);
  }
}

TEST_CASE("exact covariance decays like |x|^(2-d) after removing the constant") {
  GridSpec g{2, 256};
  for (double d : {2.5, 3.0}) {
    auto c = covariance_exact(g, CovarianceSpec{d}, 0, 0).cov;
    std::vector<double> r, y;
    for (int k = 4; k <= 32; ++k) {
      r.push_back(double(k) / g.M);
      y.push_back(c.v[c.index({k, 0})] - c.v[c.index({2 * k, 0})]);
    }
    CHECK(fit_slope(r, y) == doctest::Approx(2 - d).epsilon(0.05).scale(1));
    // Unmollified, the derivative kernel is dominated by truncation ringing.
    auto dc = covariance_exact(g, CovarianceSpec{d}, 4.0 / g.M, 0, 0).cov;
    std::vector<double> rr, dy;
    for (int k = 8; k <= 32; ++k) {
      rr.push_back(double(k) / g.M);
      dy.push_back(-dc.v[dc.index({k, 0})]);
    }
    CHECK(fit_slope(rr, dy) == doctest::Approx(1 - d).epsilon(0.1).scale(1));
  }
}

TEST_CASE("Besov surrogate") {
  GridSpec g{2, 64};
  CHECK(besov_norm(Field::zeros(g), 0.5) == 0);
  for (double eta : {-0.6, 0.0, 0.7}) {
    Field x = from_function(g, [](double a, double) { return 3 * std::cos(2 * kPi * 8 * a); });
    CHECK(besov_norm(x, eta) == doctest::Approx(3 * std::pow(2.0, 3 * eta)).epsilon(1e-10));
  }
  Field low = Field::constant(g, 1.0);
  CHECK(besov_norm(low, 1.0) == doctest::Approx(1.0));
  CHECK_THROWS_AS(besov_norm(low, 3.5), DomainError);
}

TEST_CASE("test-function pairing") {
  GridSpec g{2, 64};
  Field c = Field::constant(g, -1.5);
  CHECK(test_function_pairing(c, 0.25, 17) == doctest::Approx(-1.5).epsilon(1e-13));
  Field x = from_function(g, [](double a, double b) { return std::cos(2 * kPi * a) + 0.5 * std::sin(2 * kPi * (a + b)); });
  std::size_t z = x.index({5, 9});
  double prev = 1e9;
  for (double lam : {0.5, 0.25, 0.125}) {
    double err = std::abs(test_function_pairing(x, lam, z) - x.v[z]);
    CHECK(err < prev);
    prev = err;
  }
  // Direct grid quadrature against phi^lambda sampled in space.
  const double lam = 1.0;
  double norm = 0, val = 0;
  for (int i = -g.M / 2; i < g.M / 2; ++i)
    for (int j = -g.M / 2; j < g.M / 2; ++j) {
      double r2 = (i * i + j * j) / double(g.M * g.M) / (lam * lam / 4);
      double w = r2 < 0.25 ? std::exp(-1 / (1 - 4 * r2)) : 0.0;
      norm += w;
      val += w * x.v[x.index({5 + i, 9 + j})];
    }
  CHECK(test_function_pairing(x, lam, z) == doctest::Approx(val / norm).epsilon(1e-5));
  CHECK_THROWS_AS(test_function_pairing(x, 2.0 / 64, z), DomainError);
}

TEST_CASE("field files round trip") {
  GridSpec g{2, 16};
  Field x = sample_gff(g, CovarianceSpec{3.0}, 5);
  auto dir = std::filesystem::temp_directory_path() / "wildlab_field_test";
  std::filesystem::create_directories(dir);
  auto path = (dir / "x.f64").string();
  save_field(x, path, R"({"d": 3.0, "seed": 5})");
  Field y = load_field(path);
  CHECK(y.grid == g);
  CHECK(y.v == x.v);
  std::filesystem::remove_all(dir);
}
