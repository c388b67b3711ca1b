#pragma once

#include "wildlab/trees.hpp"

#include <map>
#include <string>
#include <vector>

namespace wildlab {

constexpr double kExponentTol = 1e-12;
constexpr double kDefaultKappaMax = 0.2;

// Exponent bookkeeping over the singular trees with at most N leaves.
// Values are held per noise level (every tree with m leaves shares them)
// plus optional per-tree overrides keyed by canonical form; near d = 4 the
// tree sets are far too large to materialise.
struct ParameterSet {
  double d = 3.0;
  int n = 2;
  int N = 1;
  double kappa = 0.0;
  double omega_xi = 0.0;
  std::vector<double> beta_level;   // index m = 2..N
  std::vector<double> delta_level;  // index m = 2..N
  std::map<std::string, double> beta_override;
  std::map<std::string, double> delta_override;

  double beta(const LabelledTree& t) const;
  double delta(const LabelledTree& t) const;
  // beta - 2 delta + 2, or omega_xi for the single vertex.
  double omega(const LabelledTree& t) const;

  void set_beta(const LabelledTree& t, double value);
  void set_delta(const LabelledTree& t, double value);
};

int noise_bound(double d);

// The exponent choice used to close the fixed point for d in (2,4).
ParameterSet default_parameters(double d, double kappa, int n = 2, double kappa_max = kDefaultKappaMax);

struct TreeCheck {
  std::string tree;  // canonical form, or a representative for a level default
  int noise = 0;
  bool level_default = false;
  std::uint64_t multiplicity = 1;  // trees sharing these values
  double beta = 0, delta = 0, omega = 0;
  bool beta_ok = false, delta_ok = false, omega_ok = false;
};

struct CiReport {
  double omega_min = 0;
  double alpha = 0;
  double gamma = 0;
  std::vector<TreeCheck> per_tree;
  bool pass = false;
  std::vector<std::string> omega_witness;
  std::vector<std::string> alpha_witness;
  std::vector<std::string> gamma_witness;
  int alpha_noise_sum = 0;
  int gamma_noise_sum = 0;
};

CiReport check_ci(const ParameterSet& p);

struct SolverExponents {
  double theta_remainder = 0;
  double kappa_hat = 0;
};

SolverExponents solver_exponents(const CiReport& report);

// Largest kappa in (0, kappa_max] for which default_parameters(d, kappa) passes.
double kappa_guard(double d, int n = 2, double kappa_max = kDefaultKappaMax);

}  // namespace wildlab
