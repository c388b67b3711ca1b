#pragma once

#include "wildlab/experiments.hpp"

#include <json.hpp>

#include <iosfwd>
#include <string>
#include <vector>

namespace wildlab {

struct OutputFile {
  std::string path;  // relative to the run directory
  std::string sha256;
  std::uintmax_t bytes = 0;
};

struct RunManifest {
  std::string command;
  nlohmann::json config = nlohmann::json::object();
  std::vector<std::uint64_t> seeds;
  std::string started;
  std::string finished;
  std::vector<OutputFile> outputs;
};

std::string sha256_file(const std::string& path);

// Hashes each listed output and writes <dir>/manifest.json through a
// temporary file and rename, so it only appears once complete.
void write_manifest(RunManifest run, const std::string& dir, const std::vector<std::string>& outputs);

struct VerifyResult {
  bool ok = true;
  std::vector<std::string> problems;
};

// Recomputes the digests listed in <dir>/manifest.json.
VerifyResult verify_run(const std::string& dir);

// JSON object with one key per StudyConfig field. Reading rejects unknown
// keys and fills missing ones from default_config(kind).
nlohmann::json study_config_json(const StudyConfig& c);
StudyConfig study_config_from_json(const nlohmann::json& j, StudyKind kind);
nlohmann::json study_report_json(const StudyResult& r);

struct SolveConfig {
  double d = 3.0;
  double kappa = 0.01;
  int n = 2;
  int M = 128;
  double eps = 1.0 / 32;
  std::uint64_t seed = 1;
  double T = 0;  // 0 selects the admissible horizon
  int J = 64;
  double q = 2.0;
  double b = 1.0;
  double p_cubic = -1.0;
  double eps_c = kDefaultSmallness;
  double tol = 1e-10;
  int max_iter = 200;
  std::vector<int> snapshots;  // node indices; empty means J/4, J/2, J
};

nlohmann::json solve_config_json(const SolveConfig& c);
SolveConfig solve_config_from_json(const nlohmann::json& j);

// Parameter-condition report for default_parameters(d, kappa, n), with the
// solver exponents when the conditions hold.
nlohmann::json params_report_json(double d, double kappa, int n = 2);

// One entry per pairing of the two-point forest of `tree`; kind is "plain",
// "eps-diff" or "time-diff". Safe pairings carry a certificate with its trace.
nlohmann::json certify_json(const std::string& tree, double d, double kappa, const std::string& kind,
                            const std::string& theta, int n = 2);

// Entry point of the wildlab tool. Exit codes: 0 success, 1 domain or
// configuration error (error JSON on err), 2 usage error.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace wildlab
