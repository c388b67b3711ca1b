#include "wildlab/diagrams.hpp"

#include "wildlab/errors.hpp"

#include <algorithm>
#include <functional>
#include <map>

namespace wildlab {

namespace {

constexpr double kTol = 1e-12;

const Affine kMinusOne = Affine(-1);

Affine contraction_weight_d_minus_2() { return Affine(-2, 1, 0); }

}  // namespace

int ForestVertex::k_order() const {
  int s = 0;
  for (int x : k) s += x;
  return s;
}

int DecoratedForest::add_root(int tree, Affine beta) {
  if (tree != 0 && tree != 1) throw DomainError("tree index must be 0 or 1");
  if (root[tree] >= 0) throw DomainError("root already present");
  ForestVertex v;
  v.tree = tree;
  v.beta = beta;
  v.k.assign(n, 0);
  vertices.push_back(v);
  root[tree] = static_cast<int>(vertices.size()) - 1;
  return root[tree];
}

int DecoratedForest::add_child(int parent, Affine beta, Affine gamma, int k_order) {
  if (parent < 0 || parent >= static_cast<int>(vertices.size())) throw DomainError("unknown parent vertex");
  if (k_order < 0) throw DomainError("negative derivative order");
  ForestVertex v;
  v.parent = parent;
  v.tree = vertices[parent].tree;
  v.beta = beta;
  v.gamma = gamma;
  v.k.assign(n, 0);
  v.k[0] = k_order;
  vertices.push_back(v);
  return static_cast<int>(vertices.size()) - 1;
}

std::vector<int> DecoratedForest::children(int v) const {
  std::vector<int> out;
  for (int i = 0; i < static_cast<int>(vertices.size()); ++i)
    if (vertices[i].alive && vertices[i].parent == v) out.push_back(i);
  return out;
}

bool DecoratedForest::is_leaf(int v) const { return vertices[v].alive && children(v).empty(); }

bool DecoratedForest::is_dirac(int v) const { return !is_root(v) && is_leaf(v) && vertices[v].beta == kMinusOne; }

std::vector<int> DecoratedForest::alive_vertices() const {
  std::vector<int> out;
  for (int i = 0; i < static_cast<int>(vertices.size()); ++i)
    if (vertices[i].alive) out.push_back(i);
  return out;
}

std::vector<int> DecoratedForest::leaves() const {
  std::vector<int> out;
  for (int v : alive_vertices())
    if (is_leaf(v)) out.push_back(v);
  return out;
}

std::vector<int> DecoratedForest::non_root_leaves() const {
  std::vector<int> out;
  for (int v : leaves())
    if (!is_root(v)) out.push_back(v);
  return out;
}

bool DecoratedForest::in_branch(int v, int x) const {
  while (x >= 0) {
    if (x == v) return true;
    x = vertices[x].parent;
  }
  return false;
}

std::vector<int> DecoratedForest::branch(int v) const {
  std::vector<int> out;
  for (int x : alive_vertices())
    if (in_branch(v, x)) out.push_back(x);
  return out;
}

std::vector<int> DecoratedForest::branch_leaves(int v) const {
  std::vector<int> out;
  for (int x : branch(v))
    if (is_leaf(x)) out.push_back(x);
  return out;
}

int DecoratedForest::edge_count() const {
  int e = 0;
  for (int v : alive_vertices())
    if (!is_root(v)) ++e;
  return e;
}

std::optional<std::size_t> DecoratedForest::pair_of(int leaf) const {
  for (std::size_t i = 0; i < contraction.size(); ++i)
    if (contraction[i].u == leaf || contraction[i].v == leaf) return i;
  return std::nullopt;
}

Affine DecoratedForest::leaf_weight(int leaf) const {
  auto p = pair_of(leaf);
  return p ? contraction[*p].a : Affine();
}

void DecoratedForest::validate() const {
  if (root[0] < 0 || root[1] < 0) throw DomainError("forest needs two roots");
  for (int v : alive_vertices()) {
    const auto& x = vertices[v];
    if (static_cast<int>(x.k.size()) != n) throw DomainError("multi-index length differs from n");
    if (is_root(v)) continue;
    if (x.parent < 0 || !vertices[x.parent].alive) throw DomainError("vertex with dead or missing parent");
    if (vertices[x.parent].tree != x.tree) throw DomainError("edge crosses trees");
  }
  std::set<int> used;
  for (const auto& e : contraction) {
    for (int x : {e.u, e.v}) {
      if (x < 0 || x >= static_cast<int>(vertices.size()) || !is_leaf(x))
        throw DomainError("contraction must pair leaves");
      if (!used.insert(x).second) throw DomainError("leaf contracted twice");
    }
    if (e.u == e.v) throw DomainError("contracting edge joins a leaf to itself");
  }
}

std::vector<std::vector<std::pair<int, int>>> enumerate_pairings(const std::vector<int>& leaves) {
  if (leaves.size() % 2 != 0) throw DomainError("odd number of leaves admits no complete pairing");
  std::vector<std::vector<std::pair<int, int>>> out;
  std::vector<std::pair<int, int>> cur;
  std::function<void(std::vector<int>)> rec = [&](std::vector<int> rest) {
    if (rest.empty()) {
      out.push_back(cur);
      return;
    }
    int first = rest[0];
    for (std::size_t j = 1; j < rest.size(); ++j) {
      cur.emplace_back(first, rest[j]);
      std::vector<int> next;
      for (std::size_t i = 1; i < rest.size(); ++i)
        if (i != j) next.push_back(rest[i]);
      rec(next);
      cur.pop_back();
    }
  };
  rec(leaves);
  return out;
}

std::vector<std::vector<std::pair<int, int>>> enumerate_pairings(const DecoratedForest& f) {
  return enumerate_pairings(f.non_root_leaves());
}

namespace {

int induced_count(const DecoratedForest& f, int v) {
  int c = 0;
  for (const auto& e : f.contraction)
    if (f.in_branch(v, e.u) && f.in_branch(v, e.v)) ++c;
  return c;
}

// Contracting edges with exactly one end in the branch at v.
std::vector<std::size_t> crossing(const DecoratedForest& f, int v) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < f.contraction.size(); ++i)
    if (f.in_branch(v, f.contraction[i].u) != f.in_branch(v, f.contraction[i].v)) out.push_back(i);
  return out;
}

std::pair<int, int> ordered(int a, int b) { return a < b ? std::make_pair(a, b) : std::make_pair(b, a); }

}  // namespace

Classification classify_contraction(const DecoratedForest& f) {
  Classification c;
  std::size_t best = 0;
  for (int v : f.alive_vertices()) {
    auto leaves = f.branch_leaves(v);
    if (2 * static_cast<std::size_t>(induced_count(f, v)) != leaves.size()) continue;
    std::size_t size = f.branch(v).size();
    if (c.safe || size < best) {
      c.safe = false;
      c.saturated_root = v;
      best = size;
    }
  }
  return c;
}

std::vector<int> minimal_branches(const DecoratedForest& f) {
  std::map<int, int> count;
  for (int v : f.alive_vertices()) count[v] = induced_count(f, v);
  std::vector<int> out;
  for (int v : f.alive_vertices()) {
    if (count[v] == 0) continue;
    bool minimal = true;
    for (int x : f.branch(v))
      if (x != v && count[x] > 0) minimal = false;
    if (minimal) out.push_back(v);
  }
  return out;
}

std::optional<DeletionChoice> find_safe_deletion(const DecoratedForest& f, const Binding& at) {
  if (f.contraction.empty()) return std::nullopt;
  auto mins = minimal_branches(f);
  std::optional<DeletionChoice> best;
  std::pair<int, int> best_key{};
  for (std::size_t i = 0; i < f.contraction.size(); ++i) {
    const auto& e = f.contraction[i];
    bool safe = std::any_of(mins.begin(), mins.end(), [&](int m) { return f.in_branch(m, e.u) && f.in_branch(m, e.v); });
    if (!safe) continue;
    auto key = ordered(e.u, e.v);
    if (!best || key < best_key) {
      best = DeletionChoice{i, true};
      best_key = key;
    }
  }
  if (best) return best;
  double best_a = 0;
  for (std::size_t i = 0; i < f.contraction.size(); ++i) {
    const auto& e = f.contraction[i];
    double a = e.a.eval(at.d, at.kappa);
    auto key = ordered(e.u, e.v);
    if (!best || a < best_a - kTol || (std::abs(a - best_a) <= kTol && key < best_key)) {
      best = DeletionChoice{i, false};
      best_a = a;
      best_key = key;
    }
  }
  return best;
}

Affine lambda_of(const DecoratedForest& f, int branch_root) {
  Affine sum;
  for (int x : f.branch(branch_root)) {
    const auto& v = f.vertices[x];
    sum += v.beta;
    if (x != branch_root) sum += Affine(1) + v.gamma - Affine(Rational(v.k_order(), 2));
    if (f.is_leaf(x)) sum -= f.leaf_weight(x) * Rational(1, 4);
  }
  return sum;
}

Affine lambda_recursive(const DecoratedForest& f, int branch_root) {
  const auto& v = f.vertices[branch_root];
  if (f.is_leaf(branch_root)) return v.beta - f.leaf_weight(branch_root) * Rational(1, 4);
  Affine sum = v.beta;
  for (int c : f.children(branch_root)) {
    const auto& w = f.vertices[c];
    sum += lambda_recursive(f, c) + Affine(1) + w.gamma - Affine(Rational(w.k_order(), 2));
  }
  return sum;
}

Affine z_value(const DecoratedForest& f, int v, const Binding& at) {
  const auto& x = f.vertices[v];
  Affine mx;
  double mx_val = 0;
  bool any = false;
  for (std::size_t i : crossing(f, v)) {
    Affine a = f.contraction[i].a * Rational(1, 4);
    double val = a.eval(at.d, at.kappa);
    if (!any || val > mx_val) {
      mx = a;
      mx_val = val;
      any = true;
    }
  }
  return -mx - Affine(Rational(x.k_order(), 2)) + x.gamma;
}

ConditionReport verify_conditions(const DecoratedForest& f, const Binding& at) {
  f.validate();
  for (const auto& e : f.contraction)
    if (f.is_root(e.u) || f.is_root(e.v)) throw DomainError("contraction touches a root");
  ConditionReport r;
  for (int v : f.alive_vertices()) {
    if (f.is_root(v)) continue;
    VertexCondition z;
    z.vertex = v;
    z.value = z_value(f, v, at);
    z.numeric = z.value.eval(at.d, at.kappa);
    z.applies = !f.is_dirac(v);
    z.ok = !z.applies || z.numeric > -1 + kTol;
    r.pass_a = r.pass_a && z.ok;
    r.z.push_back(z);
    if (f.is_leaf(v)) continue;
    VertexCondition b;
    b.vertex = v;
    Affine mn;
    double mn_val = 0;
    bool any = false;
    for (std::size_t i : crossing(f, v)) {
      Affine a = f.contraction[i].a * Rational(1, 4);
      double val = a.eval(at.d, at.kappa);
      if (!any || val < mn_val) {
        mn = a;
        mn_val = val;
        any = true;
      }
    }
    b.value = lambda_of(f, v) + mn;
    b.numeric = b.value.eval(at.d, at.kappa);
    b.applies = true;
    b.ok = b.numeric > -1 + kTol;
    r.pass_b = r.pass_b && b.ok;
    r.branch.push_back(b);
  }
  bool any = false;
  for (std::size_t i = 0; i < f.contraction.size(); ++i) {
    const auto& e = f.contraction[i];
    VertexCondition c;
    c.vertex = static_cast<int>(i);
    c.value = e.a;
    c.numeric = e.a.eval(at.d, at.kappa);
    c.applies = true;
    c.ok = c.numeric > kTol && c.numeric < f.n - kTol;
    r.pass_c = r.pass_c && c.ok;
    r.range.push_back(c);
    if (f.vertices[e.u].tree != f.vertices[e.v].tree && (!any || c.numeric > r.theta_max_value)) {
      r.theta_max = e.a;
      r.theta_max_value = c.numeric;
      any = true;
    }
  }
  return r;
}

namespace {

void copy_tree(DecoratedForest& f, const LabelledTree& tau, int tree) {
  std::map<int, std::vector<std::pair<EdgeLabel, int>>> kids;
  for (const auto& e : tau.edges()) kids[e.parent].emplace_back(e.label, e.child);
  for (auto& [v, list] : kids)
    std::sort(list.begin(), list.end(), [&](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first == EdgeLabel::I;
      return canonical_form(tau.branch(a.second)) < canonical_form(tau.branch(b.second));
    });
  auto beta_of = [&](int v) { return kids.count(v) ? Affine() : kMinusOne; };
  int r = f.add_root(tree, Affine());
  std::function<void(int, int)> walk = [&](int tv, int fv) {
    for (auto [label, c] : kids[tv]) {
      int child = f.add_child(fv, beta_of(c), Affine(), label == EdgeLabel::Iprime ? 1 : 0);
      walk(c, child);
    }
  };
  walk(tau.root(), r);
}

}  // namespace

int mirror_vertex(const DecoratedForest& f, int v) {
  int offset = f.root[1] - f.root[0];
  return f.vertices[v].tree == 0 ? v + offset : v - offset;
}

std::vector<ForestFamilyMember> build_two_point_forest(const LabelledTree& tau, ForestKind kind, int n) {
  if (!is_singular(tau)) throw DomainError("tree " + canonical_form(tau) + " is not a singular tree");
  DecoratedForest base;
  base.n = n;
  copy_tree(base, tau, 0);
  copy_tree(base, tau, 1);
  auto leaves = base.non_root_leaves();
  auto pairings = enumerate_pairings(leaves);
  std::vector<int> distinguished{-1};
  if (kind == ForestKind::eps_diff) {
    distinguished.clear();
    for (int l : leaves)
      if (base.vertices[l].tree == 0) distinguished.push_back(l);
  }
  const Affine plain_a = contraction_weight_d_minus_2();
  std::vector<ForestFamilyMember> out;
  for (int u : distinguished)
    for (const auto& p : pairings) {
      ForestFamilyMember m;
      m.pairing = p;
      m.distinguished_leaf = u;
      m.forest = base;
      int ubar = u >= 0 ? mirror_vertex(base, u) : -1;
      for (auto [a, b] : p) {
        Affine w = plain_a;
        if (u >= 0) {
          bool hit_u = a == u || b == u, hit_ubar = a == ubar || b == ubar;
          if (hit_u && hit_ubar)
            w += Affine::kappa();
          else if (hit_u || hit_ubar)
            w += Affine::kappa() * Rational(1, 2);
        }
        m.forest.contraction.push_back({a, b, w});
      }
      out.push_back(std::move(m));
    }
  return out;
}

const char* step_name(StepKind k) {
  switch (k) {
    case StepKind::base1: return "base1";
    case StepKind::base2: return "base2";
    case StepKind::case1: return "case1";
    case StepKind::case2: return "case2";
    case StepKind::case3: return "case3";
  }
  return "?";
}

TimeDifferenceQuery derivative_children_query(const DecoratedForest& f) {
  TimeDifferenceQuery q;
  for (int side = 0; side < 2; ++side)
    for (int c : f.children(f.root[side]))
      if (f.vertices[c].k_order() > 0) {
        q.U.insert(c);
        q.W.insert(c);
        break;
      }
  return q;
}

namespace {

struct Reducer {
  DecoratedForest f;
  Binding at;
  bool timed = false;
  std::set<int> U, W;
  Affine kappa_side[2];

  Affine zeta_of(int v) const { return U.count(v) ? kappa_side[f.vertices[v].tree] : Affine(); }

  bool base2() const {
    if (f.contraction.empty()) return false;
    for (int side = 0; side < 2; ++side) {
      auto kids = f.children(f.root[side]);
      if (kids.size() != 1 || !f.is_leaf(kids[0])) return false;
    }
    return true;
  }

  void remove_vertex(TraceStep& s, int v) {
    f.vertices[v].alive = false;
    s.removed_vertices.push_back(v);
    s.removed_edges.emplace_back(f.vertices[v].parent, v);
    U.erase(v);
    W.erase(v);
  }

  void update_beta(TraceStep& s, int v, const Affine& delta) {
    DecorationUpdate u{v, f.vertices[v].beta, f.vertices[v].beta + delta};
    f.vertices[v].beta = u.after;
    s.updates.push_back(u);
  }

  Affine edge_gain(int v) const {
    const auto& x = f.vertices[v];
    return Affine(1) + x.beta + x.gamma - Affine(Rational(x.k_order(), 2));
  }

  // Returns false when no reduction case applies (a base case is reached).
  bool step(TraceStep& s) {
    for (int v : f.non_root_leaves()) {
      if (f.pair_of(v)) continue;
      s.kind = StepKind::case1;
      int u = f.vertices[v].parent;
      Affine z = zeta_of(v);
      s.zeta_consumed = z;
      update_beta(s, u, edge_gain(v) - z);
      remove_vertex(s, v);
      return true;
    }
    for (int u : f.alive_vertices()) {
      if (f.is_root(u) || f.is_leaf(u)) continue;
      auto kids = f.children(u);
      if (kids.size() != 1 || !f.is_leaf(kids[0])) continue;
      int v = kids[0];
      std::size_t idx = *f.pair_of(v);
      auto& e = f.contraction[idx];
      int w = e.u == v ? e.v : e.u;
      s.kind = StepKind::case2;
      s.removed_contractions.push_back(ordered(e.u, e.v));
      s.added_contractions.push_back(ordered(u, w));
      e.u = u;
      e.v = w;
      update_beta(s, u, edge_gain(v));
      remove_vertex(s, v);
      return true;
    }
    auto choice = find_safe_deletion(f, at);
    if (!choice) return false;
    s.kind = StepKind::case3;
    s.safe_deletion = choice->safe;
    ContractingEdge e = f.contraction[choice->index];
    f.contraction.erase(f.contraction.begin() + static_cast<std::ptrdiff_t>(choice->index));
    s.removed_contractions.push_back(ordered(e.u, e.v));
    const Affine quarter = e.a * Rational(1, 4);
    int pu = f.vertices[e.u].parent, pv = f.vertices[e.v].parent;
    Affine zu = zeta_of(e.u), zv = zeta_of(e.v);
    s.zeta_consumed = zu + zv;
    if (pu != pv) {
      update_beta(s, pu, edge_gain(e.u) - quarter - zu);
      update_beta(s, pv, edge_gain(e.v) - quarter - zv);
    } else {
      update_beta(s, pu, edge_gain(e.u) + edge_gain(e.v) - quarter - quarter - zu - zv);
    }
    remove_vertex(s, e.u);
    remove_vertex(s, e.v);
    return true;
  }
};

BoundCertificate reduce(const DecoratedForest& input, const TimeDifferenceQuery* q, const Affine& theta,
                        const Binding& at) {
  ConditionReport pre = verify_conditions(input, at);
  if (!pre.pass()) throw DomainError("forest violates the power-counting hypotheses");
  double th = theta.eval(at.d, at.kappa);
  if (th < -kTol || th > pre.theta_max_value + kTol)
    throw DomainError("theta must lie in [0, theta_max] = [0, " + std::to_string(pre.theta_max_value) + "]");

  BoundCertificate cert;
  cert.theta = theta;
  cert.theta_max = pre.theta_max;
  cert.lambda_rho = lambda_of(input, input.root[0]);
  cert.lambda_rho_bar = lambda_of(input, input.root[1]);
  cert.spatial_exponent = -theta;

  Reducer red;
  red.f = input;
  red.at = at;
  if (q) {
    cert.time_difference = true;
    red.timed = true;
    red.U = q->U;
    red.W = q->W;
    red.kappa_side[0] = q->kappa;
    red.kappa_side[1] = q->kappa_bar;
    int per_side[2] = {0, 0};
    for (int u : q->U) {
      if (!q->W.count(u)) throw DomainError("U must be contained in W");
      if (u < 0 || u >= static_cast<int>(input.vertices.size()) || !input.vertices[u].alive) throw DomainError("U names an unknown vertex");
    }
    for (int w : q->W) {
      if (w < 0 || w >= static_cast<int>(input.vertices.size()) || !input.vertices[w].alive || input.is_root(w) ||
          !input.is_root(input.vertices[w].parent))
        throw DomainError("W must consist of children of the roots");
    }
    for (int u : q->U) ++per_side[input.vertices[u].tree];
    if (per_side[0] > 1 || per_side[1] > 1) throw DomainError("U holds at most one child per root");
    for (int side = 0; side < 2; ++side) {
      double k = red.kappa_side[side].eval(at.d, at.kappa);
      if (k < -kTol || k > 1 + kTol) throw DomainError("time-increment exponents must lie in [0,1]");
    }
    for (int u : q->U) {
      if (input.is_dirac(u)) continue;
      double z = z_value(input, u, at).eval(at.d, at.kappa);
      double k = red.kappa_side[input.vertices[u].tree].eval(at.d, at.kappa);
      if (!(k < 1 + z - kTol)) throw DomainError("time-increment exponent violates kappa < 1 + z for a non-Dirac child");
    }
    for (int u : q->U) cert.zeta += red.kappa_side[input.vertices[u].tree];
  }

  Affine consumed;
  double theta_max_prev = pre.theta_max_value;
  const int bound = input.edge_count() + static_cast<int>(input.contraction.size()) + 1;
  for (int iter = 0; iter <= bound; ++iter) {
    TraceStep s;
    if (red.f.edge_count() == 0) {
      s.kind = StepKind::base1;
      s.theta_max_after = pre.theta_max;
      cert.trace.push_back(s);
      break;
    }
    if (red.base2()) {
      s.kind = StepKind::base2;
      s.theta_max_after = verify_conditions(red.f, at).theta_max;
      cert.trace.push_back(s);
      break;
    }
    std::map<int, Affine> before;
    for (int v : red.f.alive_vertices()) before[v] = lambda_of(red.f, v);
    if (!red.step(s)) {
      cert.ok = false;
      cert.failure = "no reduction case applies";
      cert.failed_step = static_cast<int>(cert.trace.size());
      return cert;
    }
    consumed += s.zeta_consumed;
    ConditionReport now = verify_conditions(red.f, at);
    s.theta_max_after = now.theta_max;
    cert.trace.push_back(s);
    auto fail = [&](const std::string& why) {
      cert.ok = false;
      cert.failure = why;
      cert.failed_step = static_cast<int>(cert.trace.size()) - 1;
      return cert;
    };
    if (!now.pass()) return fail("reduced forest violates the hypotheses");
    if (now.theta_max_value < theta_max_prev - kTol) return fail("theta_max decreased");
    theta_max_prev = now.theta_max_value;
    for (int v : red.f.alive_vertices()) {
      Affine expect = before[v];
      // A consumed time increment lowers its root branch by that side's share.
      if (q && red.f.is_root(v))
        for (int r : s.removed_vertices)
          if (q->U.count(r) && red.f.vertices[r].parent == v) expect -= red.kappa_side[red.f.vertices[v].tree];
      if (lambda_of(red.f, v) != expect) return fail("Lambda not preserved at vertex " + std::to_string(v));
    }
  }
  if (cert.trace.empty() || (cert.trace.back().kind != StepKind::base1 && cert.trace.back().kind != StepKind::base2)) {
    cert.ok = false;
    cert.failure = "reduction did not terminate";
    return cert;
  }

  const Affine quarter_theta = theta * Rational(1, 4);
  Affine end_rho = lambda_of(red.f, red.f.root[0]);
  Affine end_bar = lambda_of(red.f, red.f.root[1]);
  if (!q) {
    cert.exponent_rho = end_rho + quarter_theta;
    cert.exponent_rho_bar = end_bar + quarter_theta;
    if (cert.exponent_rho != cert.lambda_rho + quarter_theta || cert.exponent_rho_bar != cert.lambda_rho_bar + quarter_theta) {
      cert.ok = false;
      cert.failure = "final exponents differ from Lambda of the input";
    }
  } else {
    Affine remaining;
    for (int u : red.U) remaining += red.kappa_side[red.f.vertices[u].tree];
    cert.exponent_rho = cert.lambda_rho + quarter_theta;
    cert.exponent_rho_bar = cert.lambda_rho_bar + quarter_theta;
    cert.time_exponent = end_rho + end_bar - remaining + theta * Rational(1, 2);
    Affine expect = cert.lambda_rho + cert.lambda_rho_bar + theta * Rational(1, 2) - cert.zeta;
    if (cert.time_exponent != expect || consumed + remaining != cert.zeta) {
      cert.ok = false;
      cert.failure = "time-increment bookkeeping does not close";
    }
  }
  return cert;
}

}  // namespace

BoundCertificate power_count(const DecoratedForest& f, const Affine& theta, const Binding& at) {
  return reduce(f, nullptr, theta, at);
}

BoundCertificate power_count_time_diff(const DecoratedForest& f, const TimeDifferenceQuery& q, const Affine& theta,
                                       const Binding& at) {
  return reduce(f, &q, theta, at);
}

}  // namespace wildlab
