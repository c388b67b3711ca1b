#pragma once

#include "wildlab/fields.hpp"
#include "wildlab/params.hpp"
#include "wildlab/trees.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace wildlab {

// One Field per component of the model space E.
using VecField = std::vector<Field>;

// Nodes t_0 = 0 < t_1 < ... < t_J = T with t_j = T (j/J)^q.
struct TimeGrid {
  double T = 0.01;
  int J = 64;
  double q = 2.0;
  std::vector<double> t;

  static TimeGrid graded(double T, int J = 64, double q = 2.0);
  void validate() const;
  bool operator==(const TimeGrid& o) const { return t == o.t; }
};

// v[j] is the value at t_j; v[0] is the t = 0 slice (zero for Duhamel
// integrals and unused for sources).
struct SpaceTimeField {
  TimeGrid time;
  std::vector<VecField> v;

  static SpaceTimeField zeros(const TimeGrid& time, const GridSpec& grid, int dim);
  int dim() const { return v.empty() ? 0 : static_cast<int>(v[0].size()); }
  const GridSpec& grid() const { return v.at(0).at(0).grid; }
};

// F(x, y) = B(x, y) + P(x, x, x) + Q1(x, x) + Q2(y) + L x + c for x in E,
// y in E^n. Flattened row-major tensors:
//   B[i][j][k][a]: out_i += B x_j y_{k,a}   (y_{k,a} = d_a x_k)
//   P[i][j][k][l], Q1[i][j][k], Q2[i][k][a], L[i][j], c[i].
class Nonlinearity {
 public:
  Nonlinearity() : Nonlinearity(1, 2) {}
  Nonlinearity(int dim, int n);
  // Symmetrises P over its last three indices.
  Nonlinearity(int dim, int n, std::vector<double> B, std::vector<double> P, std::vector<double> Q1,
               std::vector<double> Q2, std::vector<double> L, std::vector<double> c);

  // b x d_1 x + p x^3 on scalar E.
  static Nonlinearity scalar(int n, double b = 1.0, double p = -1.0);

  int dim() const { return dim_; }
  int n() const { return n_; }
  const std::vector<double>& B() const { return B_; }
  const std::vector<double>& P() const { return P_; }
  const std::vector<double>& Q1() const { return Q1_; }
  const std::vector<double>& Q2() const { return Q2_; }
  const std::vector<double>& L() const { return L_; }
  const std::vector<double>& c() const { return c_; }
  bool is_zero() const;

  // dA[a][k] = d_a A_k.
  VecField eval(const VecField& A, const std::vector<VecField>& dA) const;
  VecField bilinear(const VecField& x, const std::vector<VecField>& dy) const;
  VecField trilinear(const VecField& x, const VecField& y, const VecField& z) const;

 private:
  int dim_, n_;
  std::vector<double> B_, P_, Q1_, Q2_, L_, c_;
};

// e^{t Delta} by the multiplier exp(-4 pi^2 |m|^2 t).
Field heat_semigroup(const Field& x, double t);
void heat_semigroup_inplace(Spectrum& s, double t);

// (P * source)_t by exponential integration with the source linearly
// interpolated between nodes; on (0, t_1] it is held at t_1.
SpaceTimeField duhamel(const SpaceTimeField& source);
// Spectral form: src[j][component], j = 0..J; output index 0 is zero.
std::vector<std::vector<Spectrum>> duhamel_spectral(const TimeGrid& time,
                                                    const std::vector<std::vector<Spectrum>>& src);

std::vector<VecField> gradient(const VecField& x);  // [axis][component]

struct PicardBundle {
  ParameterSet params;
  TimeGrid time;
  VecField x;                          // X^eps
  SpaceTimeField heat_x;               // P_t X^eps
  std::vector<LabelledTree> trees;     // T^N without the noise, canonical order
  std::vector<std::string> codes;
  std::vector<double> coeff;           // c_tau
  std::vector<SpaceTimeField> source;  // X^tau
  std::vector<SpaceTimeField> heat;    // P * X^tau

  int find(const std::string& code) const;  // -1 if absent
  // P_t X for the noise, P * X^tau otherwise.
  const SpaceTimeField& heat_of(const std::string& code) const;
};

PicardBundle picard_terms(const VecField& xeps, const ParameterSet& params, const Nonlinearity& nl,
                          const TimeGrid& time);
PicardBundle picard_terms(const Field& xeps, const ParameterSet& params, const Nonlinearity& nl,
                          const TimeGrid& time);

// X^tau for one tree of the singular grammar, independent of any truncation
// level; branches are integrated on the same time grid.
SpaceTimeField tree_term(const LabelledTree& tau, const VecField& xeps, const Nonlinearity& nl, const TimeGrid& time);
SpaceTimeField tree_term(const LabelledTree& tau, const Field& xeps, const Nonlinearity& nl, const TimeGrid& time);

// P * S^N_Xi X = P_t X + sum_tau c_tau P * X^tau.
SpaceTimeField truncated_expansion(const PicardBundle& b);
// S^N X = sum_tau c_tau X^tau (the source subtracted in the fixed point).
SpaceTimeField truncated_source(const PicardBundle& b);

// Max over components.
double besov_norm(const VecField& x, double eta);
double sup_norm(const VecField& x);

double theta_distance(const PicardBundle& x, const PicardBundle& y);
double theta_norm(const PicardBundle& x);
// max(Theta(X), 1) with the time sup over (0, 1], i.e. on a unit-horizon bundle.
double ball_radius(const VecField& xeps, const ParameterSet& params, const Nonlinearity& nl, int J = 64);

// sup_t t^{-theta}|R_t|_inf + t^{1/2-theta}|R_t|_{C^1} over nodes with
// t_j <= upto, where |R|_{C^1} = |R|_inf + max_a |d_a R|_inf.
double bt_norm(const SpaceTimeField& R, double theta, double upto = -1);

// Smallness constant of the horizon condition T^kappa_hat < eps_c K^-2,
// calibrated at d = 3, M = 128 (see calibrate_smallness).
constexpr double kDefaultSmallness = 7.57;

double admissible_horizon(const SolverExponents& e, double K, double eps_c = kDefaultSmallness);

struct SolverOptions {
  double K = 0;  // ball radius; 0 selects ball_radius(b.x, ...)
  double eps_c = kDefaultSmallness;
  double tol = 1e-10;
  int max_iter = 200;
  SpaceTimeField initial;  // starting iterate; empty means R = 0
};

struct IterationRecord {
  int iteration = 0;
  double residual = 0;     // |M(R) - R|_{B_T}
  double contraction = 0;  // residual / previous residual, 0 on the first step
  double norm = 0;         // |M(R)|_{B_T}
};

struct RemainderSolution {
  SpaceTimeField R;
  SpaceTimeField A;
  double T = 0;
  double K = 0;
  double theta = 0;
  double norm = 0;
  double residual = 0;
  std::vector<IterationRecord> log;
};

// Banach iteration of R -> P * F(A, DA) - P * S^N X, A = R + P * S^N_Xi X,
// on the bundle's time grid (horizon b.time.T). Throws HorizonTooLarge when
// the horizon condition fails, the iteration stops contracting, leaves the
// ball of radius K, or runs out of iterations.
RemainderSolution solve_remainder(const PicardBundle& b, const SolverExponents& e, const Nonlinearity& nl,
                                  const SolverOptions& opt = {});

// ETD2RK on A_t = Delta A + F(A, DA) with `steps` uniform steps; nodes at
// k T / steps.
SpaceTimeField reference_timestepper(const VecField& x0, double T, const Nonlinearity& nl, int steps);
SpaceTimeField reference_timestepper(const Field& x0, double T, const Nonlinearity& nl, int steps);

struct CalibrationConfig {
  double d = 3.0;
  double kappa = 0.01;
  int M = 128;
  double eps = 2.0 / 128;
  int J = 64;
  std::vector<std::uint64_t> seeds = {1, 2, 3};
  double safety = 0.5;
  int bisection_steps = 24;
};

struct CalibrationResult {
  double eps_c = 0;
  std::vector<double> critical_T;  // per seed
  std::vector<double> K;           // per seed
};

// Per seed, bisects log T for the largest horizon on which the solver
// contracts, converts it to eps_c = T^kappa_hat K^2, and returns the minimum
// over seeds times `safety`.
CalibrationResult calibrate_smallness(const CalibrationConfig& cfg, const Nonlinearity& nl);

}  // namespace wildlab
