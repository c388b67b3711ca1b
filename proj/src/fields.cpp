#include "wildlab/fields.hpp"

#include "wildlab/errors.hpp"
#include "wildlab/parallel.hpp"

#include <boost/math/quadrature/gauss.hpp>
#include <fftw3.h>
#include <json.hpp>

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <mutex>
#include <numbers>

namespace wildlab {

namespace {

constexpr double kPi = std::numbers::pi;

std::mutex& fftw_mutex() {
  static std::mutex m;
  return m;
}

// Plans are created once per (grid, direction) and executed through the
// new-array interface, which FFTW documents as thread safe.
fftw_plan plan_for(const GridSpec& g, bool forward) {
  static std::map<std::tuple<int, int, bool>, fftw_plan> plans;
  std::lock_guard<std::mutex> lock(fftw_mutex());
  auto key = std::make_tuple(g.n, g.M, forward);
  auto it = plans.find(key);
  if (it != plans.end()) return it->second;
  std::vector<int> dims(g.n, g.M);
  double* real = fftw_alloc_real(g.size());
  fftw_complex* cplx = fftw_alloc_complex(g.spectral_size());
  const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
  fftw_plan p = forward ? fftw_plan_dft_r2c(g.n, dims.data(), real, cplx, flags)
                        : fftw_plan_dft_c2r(g.n, dims.data(), cplx, real, flags);
  fftw_free(real);
  fftw_free(cplx);
  if (!p) throw std::runtime_error("FFTW plan creation failed");
  plans.emplace(key, p);
  return p;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

// Two independent standard normals from the counter key.
std::pair<double, double> normal_pair(std::uint64_t key) {
  const double scale = 0x1.0p-53;
  double u1 = (static_cast<double>(splitmix64(key ^ 0x1ull) >> 11) + 1.0) * scale;
  double u2 = static_cast<double>(splitmix64(key ^ 0x2ull) >> 11) * scale;
  double r = std::sqrt(-2.0 * std::log(u1));
  return {r * std::cos(2 * kPi * u2), r * std::sin(2 * kPi * u2)};
}

void require_same_grid(const GridSpec& a, const GridSpec& b) {
  if (!(a == b)) throw DomainError("fields live on different grids");
}

// Abel projection of the radial bump onto one axis, sampled on x_j = j/(2K).
const std::vector<double>& bump_projection(int n) {
  static std::map<int, std::vector<double>> cache;
  static std::mutex mutex;
  std::lock_guard<std::mutex> lock(mutex);
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;
  constexpr int K = 512;
  std::vector<double> p(K + 1, 0.0);
  auto psi = [](double r2) {
    double u = 1 - 4 * r2;
    return u > 0 ? std::exp(-1 / u) : 0.0;
  };
  for (int j = 0; j < K; ++j) {
    double x = 0.5 * j / K;
    double R = std::sqrt(std::max(0.0, 0.25 - x * x));
    auto integrand = [&](double rho) { return psi(x * x + rho * rho) * std::pow(rho, n - 2); };
    p[j] = boost::math::quadrature::gauss<double, 40>::integrate(integrand, 0.0, R);
  }
  return cache.emplace(n, std::move(p)).first->second;
}

}  // namespace

void GridSpec::validate() const {
  if (n != 2 && n != 3) throw DomainError("grid dimension must be 2 or 3");
  if (M < 8 || (M & (M - 1)) != 0) throw DomainError("points per axis must be a power of two >= 8");
}

std::size_t GridSpec::size() const {
  std::size_t s = 1;
  for (int a = 0; a < n; ++a) s *= static_cast<std::size_t>(M);
  return s;
}

std::size_t GridSpec::spectral_size() const { return size() / M * (M / 2 + 1); }

void CovarianceSpec::validate(int n) const {
  if (!(d > 2 && d < 4)) throw DomainError("d must lie in (2,4)");
  double b = beta_cov(n);
  if (!(2 * b > 0 && 2 * b < n)) throw DomainError("covariance exponent outside (0, n/2)");
}

std::shared_ptr<const ModeTable> mode_table(const GridSpec& grid) {
  grid.validate();
  static std::map<std::pair<int, int>, std::shared_ptr<const ModeTable>> cache;
  static std::mutex mutex;
  std::lock_guard<std::mutex> lock(mutex);
  auto key = std::make_pair(grid.n, grid.M);
  if (auto it = cache.find(key); it != cache.end()) return it->second;
  auto t = std::make_shared<ModeTable>();
  t->grid = grid;
  const std::size_t S = grid.spectral_size();
  const int M = grid.M, H = M / 2 + 1;
  t->q.resize(S);
  t->m.resize(S * grid.n);
  t->nyquist.resize(S);
  for (std::size_t i = 0; i < S; ++i) {
    std::size_t rest = i;
    int coords[3];
    coords[grid.n - 1] = static_cast<int>(rest % H);
    rest /= H;
    for (int a = grid.n - 2; a >= 0; --a) {
      coords[a] = static_cast<int>(rest % M);
      rest /= M;
    }
    std::int64_t q = 0;
    std::uint8_t nyq = 0;
    for (int a = 0; a < grid.n; ++a) {
      int m = coords[a] < M / 2 ? coords[a] : coords[a] - M;
      if (a == grid.n - 1) m = coords[a];
      if (std::abs(m) == M / 2) nyq |= static_cast<std::uint8_t>(1u << a);
      t->m[i * grid.n + a] = static_cast<std::int16_t>(m);
      q += static_cast<std::int64_t>(m) * m;
    }
    t->q[i] = q;
    t->nyquist[i] = nyq;
    t->q_max = std::max(t->q_max, q);
  }
  cache.emplace(key, t);
  return t;
}

Spectrum Spectrum::zeros(const GridSpec& grid) {
  grid.validate();
  return {grid, std::vector<Complex>(grid.spectral_size())};
}

Field Field::zeros(const GridSpec& grid) {
  grid.validate();
  return {grid, std::vector<double>(grid.size(), 0.0)};
}

Field Field::constant(const GridSpec& grid, double value) {
  Field f = zeros(grid);
  std::fill(f.v.begin(), f.v.end(), value);
  return f;
}

std::size_t Field::index(const std::vector<int>& j) const {
  if (static_cast<int>(j.size()) != grid.n) throw DomainError("index has wrong dimension");
  std::size_t i = 0;
  for (int a = 0; a < grid.n; ++a) i = i * grid.M + static_cast<std::size_t>(((j[a] % grid.M) + grid.M) % grid.M);
  return i;
}

double Field::mean() const {
  double s = 0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double Field::sup_norm() const {
  double s = 0;
  for (double x : v) s = std::max(s, std::abs(x));
  return s;
}

Spectrum fft(const Field& x) {
  x.grid.validate();
  Spectrum s = Spectrum::zeros(x.grid);
  std::vector<double> in(x.v);
  fftw_execute_dft_r2c(plan_for(x.grid, true), in.data(), reinterpret_cast<fftw_complex*>(s.c.data()));
  const double inv = 1.0 / static_cast<double>(x.grid.size());
  for (auto& c : s.c) c *= inv;
  return s;
}

Field ifft(const Spectrum& s) {
  Field x = Field::zeros(s.grid);
  std::vector<Complex> in(s.c);
  fftw_execute_dft_c2r(plan_for(s.grid, false), reinterpret_cast<fftw_complex*>(in.data()), x.v.data());
  return x;
}

void scale_radial(Spectrum& s, const std::vector<double>& table) {
  auto modes = mode_table(s.grid);
  if (static_cast<std::int64_t>(table.size()) <= modes->q_max) throw DomainError("radial table too short");
  for (std::size_t i = 0; i < s.c.size(); ++i) s.c[i] *= table[modes->q[i]];
}

void differentiate(Spectrum& s, int axis) {
  if (axis < 0 || axis >= s.grid.n) throw DomainError("derivative axis out of range");
  auto modes = mode_table(s.grid);
  for (std::size_t i = 0; i < s.c.size(); ++i) {
    if (modes->nyquist[i] & (1u << axis)) {
      s.c[i] = 0;
      continue;
    }
    s.c[i] *= Complex(0, 2 * kPi * modes->component(i, axis));
  }
}

Field derivative(const Field& x, int axis) {
  Spectrum s = fft(x);
  differentiate(s, axis);
  return ifft(s);
}

double bump_transform(double s, int n) {
  const auto& p = bump_projection(n);
  const int K = static_cast<int>(p.size()) - 1;
  double num = p[0], den = p[0];
  for (int j = 1; j < K; ++j) {
    double x = 0.5 * j / K;
    num += 2 * p[j] * std::cos(2 * kPi * s * x);
    den += 2 * p[j];
  }
  return num / den;
}

std::shared_ptr<const std::vector<double>> bump_table(const GridSpec& grid, double scale) {
  auto modes = mode_table(grid);
  static std::map<std::tuple<int, int, double>, std::shared_ptr<const std::vector<double>>> cache;
  static std::mutex mutex;
  auto key = std::make_tuple(grid.n, grid.M, scale);
  {
    std::lock_guard<std::mutex> lock(mutex);
    if (auto it = cache.find(key); it != cache.end()) return it->second;
  }
  auto t = std::make_shared<std::vector<double>>(modes->q_max + 1);
  bump_projection(grid.n);
  parallel_for(t->size(), [&](std::size_t q) { (*t)[q] = bump_transform(scale * std::sqrt(static_cast<double>(q)), grid.n); });
  std::lock_guard<std::mutex> lock(mutex);
  return cache.emplace(key, t).first->second;
}

void Mollifier::validate(const GridSpec& grid) const {
  if (!(eps < 1)) throw DomainError("mollification scale must be < 1");
  if (eps < 2.0 / grid.M - 1e-15) throw DomainError("mollification scale below 2/M is not resolved by the grid");
}

std::vector<double> gff_variance_table(const GridSpec& grid, const CovarianceSpec& cov) {
  cov.validate(grid.n);
  auto modes = mode_table(grid);
  std::vector<double> var(modes->q_max + 1, 0.0);
  const double b = cov.beta_cov(grid.n);
  for (std::int64_t q = 1; q <= modes->q_max; ++q) var[q] = std::pow(4 * kPi * kPi * static_cast<double>(q), -b);
  return var;
}

Spectrum sample_gff_spectrum(const GridSpec& grid, const CovarianceSpec& cov, std::uint64_t seed) {
  auto var = gff_variance_table(grid, cov);
  auto modes = mode_table(grid);
  Spectrum s = Spectrum::zeros(grid);
  const int n = grid.n, M = grid.M, H = M / 2 + 1;
  parallel_for(s.c.size(), [&](std::size_t i) {
    const std::int64_t q = modes->q[i];
    if (q == 0) return;
    // Wrapped coordinates of this entry and of its conjugate partner.
    int own[3], partner[3];
    std::size_t rest = i;
    own[n - 1] = static_cast<int>(rest % H);
    rest /= H;
    for (int a = n - 2; a >= 0; --a) {
      own[a] = static_cast<int>(rest % M);
      rest /= M;
    }
    bool conj = false, self = false;
    const int k = own[n - 1];
    if (k == 0 || k == M / 2) {
      for (int a = 0; a < n - 1; ++a) partner[a] = (M - own[a]) % M;
      partner[n - 1] = k;
      int cmp = 0;
      for (int a = 0; a < n - 1 && cmp == 0; ++a) cmp = (own[a] > partner[a]) - (own[a] < partner[a]);
      self = cmp == 0;
      conj = cmp > 0;
    }
    const int* canon = conj ? partner : own;
    std::uint64_t key = splitmix64(seed);
    for (int a = 0; a < n; ++a) key = splitmix64(key ^ static_cast<std::uint64_t>(canon[a]) ^ (static_cast<std::uint64_t>(a) << 40));
    auto [z1, z2] = normal_pair(key);
    const double sigma = std::sqrt(var[q]);
    if (self)
      s.c[i] = sigma * z1;
    else
      s.c[i] = sigma * Complex(z1, conj ? -z2 : z2) / std::sqrt(2.0);
  });
  return s;
}

Field sample_gff(const GridSpec& grid, const CovarianceSpec& cov, std::uint64_t seed) {
  Field x = ifft(sample_gff_spectrum(grid, cov, seed));
  // The zero mode is absent; remove the round-off residue so the mean is 0.
  const double m = x.mean();
  for (double& v : x.v) v -= m;
  return x;
}

Spectrum mollify(const Spectrum& x, const Mollifier& m) {
  m.validate(x.grid);
  Spectrum out = x;
  scale_radial(out, *bump_table(x.grid, m.eps));
  return out;
}

Field mollify(const Field& x, const Mollifier& m) { return ifft(mollify(fft(x), m)); }

ExactCovariance covariance_exact(const GridSpec& grid, const CovarianceSpec& cov, double eps, double eps_bar,
                                 int deriv_axis) {
  auto var = gff_variance_table(grid, cov);
  auto modes = mode_table(grid);
  auto multiplier = [&](double e) {
    if (e == 0) return std::make_shared<const std::vector<double>>(var.size(), 1.0);
    Mollifier{e}.validate(grid);
    return bump_table(grid, e);
  };
  auto be = multiplier(eps), bb = multiplier(eps_bar);
  Spectrum c = Spectrum::zeros(grid), d = Spectrum::zeros(grid);
  for (std::size_t i = 0; i < c.c.size(); ++i) {
    const auto q = modes->q[i];
    c.c[i] = var[q] * (*be)[q] * (*be)[q];
    const double diff = (*be)[q] - (*bb)[q];
    d.c[i] = var[q] * diff * diff;
  }
  if (deriv_axis >= 0) {
    differentiate(c, deriv_axis);
    differentiate(d, deriv_axis);
  }
  return {ifft(c), ifft(d)};
}

Field autocovariance(const Spectrum& x) { return cross_covariance(x, x); }

Field cross_covariance(const Spectrum& x, const Spectrum& y) {
  require_same_grid(x.grid, y.grid);
  Spectrum s = Spectrum::zeros(x.grid);
  for (std::size_t i = 0; i < s.c.size(); ++i) s.c[i] = std::conj(x.c[i]) * y.c[i];
  return ifft(s);
}

double besov_norm(const Field& x, double eta) { return besov_norm(fft(x), eta); }

double besov_norm(const Spectrum& x, double eta) {
  if (!(eta > -3 && eta < 3)) throw DomainError("regularity index outside (-3, 3)");
  auto modes = mode_table(x.grid);
  auto block_of = [](std::int64_t q) {
    if (q < 4) return 0;
    int j = 1;
    while (static_cast<std::int64_t>(1) << (2 * (j + 1)) <= q) ++j;
    return j;
  };
  int blocks = block_of(modes->q_max) + 1;
  double norm = 0;
  for (int j = 0; j < blocks; ++j) {
    Spectrum b = Spectrum::zeros(x.grid);
    bool any = false;
    for (std::size_t i = 0; i < b.c.size(); ++i)
      if (block_of(modes->q[i]) == j && x.c[i] != Complex(0)) {
        b.c[i] = x.c[i];
        any = true;
      }
    if (!any) continue;
    norm = std::max(norm, std::pow(2.0, j * eta) * ifft(b).sup_norm());
  }
  return norm;
}

Field pairing_field(const Spectrum& x, double lambda) {
  if (!(lambda > 0 && lambda <= 1)) throw DomainError("lambda must lie in (0,1]");
  if (lambda < 4.0 / x.grid.M - 1e-15) throw DomainError("lambda below 4/M is not resolved by the grid");
  Spectrum s = x;
  scale_radial(s, *bump_table(x.grid, lambda / 2));
  return ifft(s);
}

double test_function_pairing(const Field& x, double lambda, std::size_t z) {
  if (z >= x.v.size()) throw DomainError("pairing point outside the grid");
  return pairing_field(fft(x), lambda).v[z];
}

void save_field(const Field& x, const std::string& path, const std::string& meta_json) {
  static_assert(std::endian::native == std::endian::little, "field files are little-endian");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DomainError("cannot write " + path);
  out.write(reinterpret_cast<const char*>(x.v.data()), static_cast<std::streamsize>(x.v.size() * sizeof(double)));
  nlohmann::json meta = meta_json.empty() ? nlohmann::json::object() : nlohmann::json::parse(meta_json);
  meta["n"] = x.grid.n;
  meta["M"] = x.grid.M;
  meta["dtype"] = "float64-le";
  std::ofstream side(path + ".json");
  side << meta.dump(2) << "\n";
}

Field load_field(const std::string& path) {
  std::ifstream side(path + ".json");
  if (!side) throw DomainError("missing sidecar " + path + ".json");
  auto meta = nlohmann::json::parse(side);
  GridSpec g{meta.at("n").get<int>(), meta.at("M").get<int>()};
  Field x = Field::zeros(g);
  std::ifstream in(path, std::ios::binary);
  in.read(reinterpret_cast<char*>(x.v.data()), static_cast<std::streamsize>(x.v.size() * sizeof(double)));
  if (!in) throw DomainError("truncated field file " + path);
  return x;
}

const char* fft_library_version() { return fftw_version; }

}  // namespace wildlab
