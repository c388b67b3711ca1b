#pragma once

#include "wildlab/affine.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace wildlab {

enum class EdgeLabel { I, Iprime };

struct TreeEdge {
  int parent;
  int child;
  EdgeLabel label;
};

// Rooted tree with I / I' labelled edges. Vertex ids are arbitrary distinct
// integers; validation happens at construction.
class LabelledTree {
 public:
  // The single-vertex tree (the noise symbol).
  LabelledTree();
  LabelledTree(std::vector<int> vertices, int root, std::vector<TreeEdge> edges);

  static LabelledTree xi() { return {}; }
  // Joins the roots of the given trees to a fresh root by labelled edges.
  static LabelledTree graft(const std::vector<std::pair<EdgeLabel, LabelledTree>>& children);
  // Parses the canonical text encoding (also accepts any child order).
  static LabelledTree parse(const std::string& text);

  const std::vector<int>& vertices() const { return vertices_; }
  int root() const { return root_; }
  const std::vector<TreeEdge>& edges() const { return edges_; }

  std::vector<int> leaves() const;
  // (label, child) pairs in edge order.
  std::vector<std::pair<EdgeLabel, int>> children(int v) const;
  // The subtree hanging below v, with v as root.
  LabelledTree branch(int v) const;

 private:
  std::vector<int> vertices_;
  int root_ = 0;
  std::vector<TreeEdge> edges_;
};

// Children sorted by (label, code); equal strings iff isomorphic preserving
// roots and labels. The single vertex encodes as "X".
std::string canonical_form(const LabelledTree& t);

// Grammar membership: X, I(a)I(b)I(c), or I(a)I'(b) with a, b, c members.
bool is_singular(const LabelledTree& t);

struct TreeStats {
  int noise = 0;         // leaf count m
  int deriv_edges = 0;   // number of I' edges k
  Affine homogeneity;    // affine in d
  double homogeneity_value = 0.0;
  bool parity_odd = false;
};

TreeStats tree_stats(const LabelledTree& t, double d);

// |tau| by the edge recursion, affine in d.
Affine homogeneity_recursive(const LabelledTree& t);
// m(2-d)/2 + m - 3.
Affine homogeneity_closed_form(int noise);

Rational symmetry_factor(const LabelledTree& t);

int noise_count(const LabelledTree& t);

constexpr int kDefaultTreeCap = 8;

// One representative per isomorphism class with noise <= n_max, ordered by
// (noise, canonical form).
std::vector<LabelledTree> enumerate_trees(int n_max, int cap = kDefaultTreeCap);
// Trees with exactly `noise` leaves, canonical order.
std::vector<LabelledTree> enumerate_level(int noise, int cap = kDefaultTreeCap);

// |T_m| for m = 0..n_max without materialising trees.
std::vector<std::uint64_t> count_trees_by_noise(int n_max);

// A fixed member with the given noise: X, then I(X)I'(previous).
LabelledTree comb_tree(int noise);

}  // namespace wildlab
