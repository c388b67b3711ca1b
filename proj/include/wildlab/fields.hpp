#pragma once

#include <complex>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace wildlab {

using Complex = std::complex<double>;

// Uniform grid on the unit torus [-1/2, 1/2)^n with M points per axis.
// Grid index j on an axis sits at x = j/M (mod 1).
struct GridSpec {
  int n = 2;
  int M = 64;

  void validate() const;  // n in {2, 3}, M >= 8 a power of two
  std::size_t size() const;           // M^n
  std::size_t spectral_size() const;  // M^(n-1) * (M/2 + 1)
  double spacing() const { return 1.0 / M; }
  bool operator==(const GridSpec& o) const { return n == o.n && M == o.M; }
};

// Covariance (-Laplacian)^(-beta_cov) on mean-zero functions,
// beta_cov = (n + 2 - d)/2.
struct CovarianceSpec {
  double d = 3.0;

  double beta_cov(int n) const { return (n + 2 - d) / 2; }
  void validate(int n) const;
};

// Signed modes of the half spectrum (last axis 0..M/2). Shared per grid.
struct ModeTable {
  GridSpec grid;
  std::vector<std::int64_t> q;         // |m|^2
  std::vector<std::int16_t> m;         // n signed components per entry
  std::vector<std::uint8_t> nyquist;   // bit a set if |m_a| = M/2
  std::int64_t q_max = 0;

  int component(std::size_t i, int axis) const { return m[i * grid.n + axis]; }
};

std::shared_ptr<const ModeTable> mode_table(const GridSpec& grid);

// Fourier coefficients X^_m with X(x) = sum_m X^_m e^{2 pi i m.x}, stored
// on the half spectrum in FFTW r2c layout.
struct Spectrum {
  GridSpec grid;
  std::vector<Complex> c;

  static Spectrum zeros(const GridSpec& grid);
};

// Real grid data, row-major with the last axis fastest.
struct Field {
  GridSpec grid;
  std::vector<double> v;

  static Field zeros(const GridSpec& grid);
  static Field constant(const GridSpec& grid, double value);
  std::size_t index(const std::vector<int>& j) const;
  double mean() const;
  double sup_norm() const;
};

Spectrum fft(const Field& x);
Field ifft(const Spectrum& s);

// Multiplies each coefficient by table[|m|^2].
void scale_radial(Spectrum& s, const std::vector<double>& table);
// Multiplies by 2 pi i m_axis; the Nyquist component is dropped.
void differentiate(Spectrum& s, int axis);
Field derivative(const Field& x, int axis);

// Fourier transform of the unit-mass radial bump exp(-1/(1 - 4|x|^2)) on
// |x| < 1/2, as a function of |xi|.
double bump_transform(double s, int n);
// bump_transform(scale * sqrt(q)) for q = 0..q_max of the grid, cached.
std::shared_ptr<const std::vector<double>> bump_table(const GridSpec& grid, double scale);

struct Mollifier {
  double eps = 0.1;
  void validate(const GridSpec& grid) const;  // eps in [2/M, 1)
};

// Per-mode variance (4 pi^2 |m|^2)^(-beta_cov), zero mode 0.
std::vector<double> gff_variance_table(const GridSpec& grid, const CovarianceSpec& cov);

Spectrum sample_gff_spectrum(const GridSpec& grid, const CovarianceSpec& cov, std::uint64_t seed);
Field sample_gff(const GridSpec& grid, const CovarianceSpec& cov, std::uint64_t seed);

Spectrum mollify(const Spectrum& x, const Mollifier& m);
Field mollify(const Field& x, const Mollifier& m);

struct ExactCovariance {
  Field cov;   // E[X^eps(0) X^eps(x)]
  Field diff;  // covariance of X^eps - X^eps_bar
};

// Mollification scales of 0 mean no mollification. deriv_axis >= 0 gives
// the covariance between X at 0 and the derivative d_axis X at x.
ExactCovariance covariance_exact(const GridSpec& grid, const CovarianceSpec& cov, double eps, double eps_bar,
                                 int deriv_axis = -1);

// (1/M^n) sum_y x(y) x(y + .), the empirical two-point function of one sample.
Field autocovariance(const Spectrum& x);
// Cross version: (1/M^n) sum_y x(y) y(y + .).
Field cross_covariance(const Spectrum& x, const Spectrum& y);

// Dyadic-block surrogate: block 0 holds |m| < 2, block j >= 1 holds
// 2^j <= |m| < 2^(j+1); returns max_j 2^(j eta) |block_j|_inf.
double besov_norm(const Field& x, double eta);
double besov_norm(const Spectrum& x, double eta);

// <x, phi^lambda_z> for every grid point z, phi a unit-mass bump supported in
// |x| <= 1/4 (the mollifier profile at half scale).
Field pairing_field(const Spectrum& x, double lambda);
double test_function_pairing(const Field& x, double lambda, std::size_t z);

// Little-endian float64 payload plus <path>.json sidecar with grid and meta.
void save_field(const Field& x, const std::string& path, const std::string& meta_json);
Field load_field(const std::string& path);

// Version string of the FFT backend.
const char* fft_library_version();

}  // namespace wildlab
