#pragma once

#include "wildlab/affine.hpp"
#include "wildlab/trees.hpp"

#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace wildlab {

// Numeric point at which symbolic decorations are compared.
struct Binding {
  double d = 3.0;
  double kappa = 0.0;
};

struct ForestVertex {
  int parent = -1;  // -1 for the two roots
  int tree = 0;     // 0: rho-tree, 1: rho-bar-tree
  bool alive = true;
  Affine beta;
  // Decorations of the edge (parent, this vertex); unused on roots.
  Affine gamma;
  std::vector<int> k;  // multi-index, length n

  int k_order() const;
};

struct ContractingEdge {
  int u = -1;
  int v = -1;
  Affine a;
};

// Two rooted trees with vertex, edge and contraction decorations. Vertex ids
// are indices into `vertices` and survive reductions (deleted vertices are
// marked dead).
class DecoratedForest {
 public:
  int n = 2;
  std::vector<ForestVertex> vertices;
  int root[2] = {-1, -1};
  std::vector<ContractingEdge> contraction;

  int add_root(int tree, Affine beta = Affine());
  int add_child(int parent, Affine beta, Affine gamma = Affine(), int k_order = 0);

  bool is_root(int v) const { return v == root[0] || v == root[1]; }
  std::vector<int> children(int v) const;
  bool is_leaf(int v) const;
  // Non-root leaf with beta = -1.
  bool is_dirac(int v) const;
  std::vector<int> alive_vertices() const;
  std::vector<int> leaves() const;           // all leaves, including isolated roots
  std::vector<int> non_root_leaves() const;
  std::vector<int> branch(int v) const;      // vertices of the branch rooted at v
  std::vector<int> branch_leaves(int v) const;
  bool in_branch(int v, int x) const;        // x descends from (or is) v
  int edge_count() const;
  std::optional<std::size_t> pair_of(int leaf) const;  // index into contraction
  Affine leaf_weight(int leaf) const;                  // b_l

  // Throws if the contraction pairs non-leaves, reuses a leaf, or the shape is invalid.
  void validate() const;
};

std::vector<std::vector<std::pair<int, int>>> enumerate_pairings(const std::vector<int>& leaves);
std::vector<std::vector<std::pair<int, int>>> enumerate_pairings(const DecoratedForest& f);

struct Classification {
  bool safe = true;
  int saturated_root = -1;
};

// Reports the smallest saturated branch (fewest vertices, then lowest root id).
Classification classify_contraction(const DecoratedForest& f);

struct DeletionChoice {
  std::size_t index = 0;  // into f.contraction
  bool safe = false;
};

std::vector<int> minimal_branches(const DecoratedForest& f);
std::optional<DeletionChoice> find_safe_deletion(const DecoratedForest& f, const Binding& at);

// Closed form sum over the branch; equals the child recursion.
Affine lambda_of(const DecoratedForest& f, int branch_root);
Affine lambda_recursive(const DecoratedForest& f, int branch_root);

struct VertexCondition {
  int vertex = -1;
  Affine value;
  double numeric = 0;
  bool applies = false;
  bool ok = true;
};

struct ConditionReport {
  std::vector<VertexCondition> z;       // condition (a), every non-root vertex
  std::vector<VertexCondition> branch;  // condition (b), inner non-root vertices
  std::vector<VertexCondition> range;   // condition (c), per contracting edge
  bool pass_a = true, pass_b = true, pass_c = true;
  Affine theta_max;
  double theta_max_value = 0;
  bool pass() const { return pass_a && pass_b && pass_c; }
};

// Affine z_v; max over contracting edges with exactly one end below v.
Affine z_value(const DecoratedForest& f, int v, const Binding& at);
ConditionReport verify_conditions(const DecoratedForest& f, const Binding& at);

enum class ForestKind { plain, eps_diff, time_diff };

struct ForestFamilyMember {
  std::vector<std::pair<int, int>> pairing;
  int distinguished_leaf = -1;  // eps_diff only, leaf of the rho-tree
  DecoratedForest forest;
};

// Two isomorphic copies of tau; leaves Dirac, inner beta 0, gamma 0, |k| = 1
// on I' edges. Contracting weights are d-2, shifted for the eps-difference
// leaf; in that case the kappa symbol stands for min(kappa, 1).
std::vector<ForestFamilyMember> build_two_point_forest(const LabelledTree& tau, ForestKind kind, int n = 2);
// The vertex of the rho-bar copy matching vertex v of the rho copy.
int mirror_vertex(const DecoratedForest& f, int v);

struct DecorationUpdate {
  int vertex = -1;
  Affine before;
  Affine after;
};

enum class StepKind { base1, base2, case1, case2, case3 };
const char* step_name(StepKind k);

struct TraceStep {
  StepKind kind = StepKind::base1;
  std::vector<int> removed_vertices;
  std::vector<std::pair<int, int>> removed_edges;
  std::vector<std::pair<int, int>> removed_contractions;
  std::vector<std::pair<int, int>> added_contractions;
  std::vector<DecorationUpdate> updates;
  bool safe_deletion = false;
  Affine zeta_consumed;
  Affine theta_max_after;
};

struct TimeDifferenceQuery {
  std::set<int> U;
  std::set<int> W;
  Affine kappa;
  Affine kappa_bar;
};

struct BoundCertificate {
  bool ok = true;
  std::string failure;
  int failed_step = -1;
  Affine theta;
  Affine theta_max;
  Affine lambda_rho, lambda_rho_bar;  // on the input forest
  Affine exponent_rho, exponent_rho_bar;
  Affine spatial_exponent;
  bool time_difference = false;
  Affine zeta;
  Affine time_exponent;  // Lambda(F) + theta/2 - zeta
  std::vector<TraceStep> trace;
};

BoundCertificate power_count(const DecoratedForest& f, const Affine& theta, const Binding& at);
BoundCertificate power_count_time_diff(const DecoratedForest& f, const TimeDifferenceQuery& q, const Affine& theta,
                                       const Binding& at);

// Children of the roots reached through derivative edges; the choice of U
// for the time increment of a two-point forest.
TimeDifferenceQuery derivative_children_query(const DecoratedForest& f);

}  // namespace wildlab
