#include "wildlab/trees.hpp"

#include "wildlab/errors.hpp"

#include <algorithm>
#include <functional>
#include <map>
#include <set>

namespace wildlab {

LabelledTree::LabelledTree() : vertices_{0}, root_(0) {}

LabelledTree::LabelledTree(std::vector<int> vertices, int root, std::vector<TreeEdge> edges)
    : vertices_(std::move(vertices)), root_(root), edges_(std::move(edges)) {
  std::set<int> ids(vertices_.begin(), vertices_.end());
  if (ids.size() != vertices_.size()) throw DomainError("malformed tree: duplicate vertex ids");
  if (!ids.count(root_)) throw DomainError("malformed tree: root is not a vertex");
  if (edges_.size() + 1 != vertices_.size()) throw DomainError("malformed tree: edge count must be |V| - 1");
  std::map<int, int> parent;
  for (const auto& e : edges_) {
    if (!ids.count(e.parent) || !ids.count(e.child)) throw DomainError("malformed tree: edge endpoint is not a vertex");
    if (e.child == root_) throw DomainError("malformed tree: root has a parent");
    if (!parent.emplace(e.child, e.parent).second) throw DomainError("malformed tree: vertex with two parents");
  }
  // Every vertex must reach the root without revisiting.
  for (int v : vertices_) {
    int cur = v;
    std::size_t steps = 0;
    while (cur != root_) {
      auto it = parent.find(cur);
      if (it == parent.end() || ++steps > vertices_.size()) throw DomainError("malformed tree: not connected to root");
      cur = it->second;
    }
  }
}

LabelledTree LabelledTree::graft(const std::vector<std::pair<EdgeLabel, LabelledTree>>& children) {
  std::vector<int> vertices{0};
  std::vector<TreeEdge> edges;
  int next = 1;
  for (const auto& [label, sub] : children) {
    std::map<int, int> relabel;
    for (int v : sub.vertices()) relabel[v] = next++;
    for (int v : sub.vertices()) vertices.push_back(relabel[v]);
    edges.push_back({0, relabel[sub.root()], label});
    for (const auto& e : sub.edges()) edges.push_back({relabel[e.parent], relabel[e.child], e.label});
  }
  return {std::move(vertices), 0, std::move(edges)};
}

namespace {

struct Parser {
  const std::string& s;
  std::size_t pos = 0;

  [[noreturn]] void fail(const std::string& why) const {
    throw DomainError("cannot parse tree '" + s + "' at offset " + std::to_string(pos) + ": " + why);
  }

  bool consume(const std::string& tok) {
    if (s.compare(pos, tok.size(), tok) == 0) {
      pos += tok.size();
      return true;
    }
    return false;
  }

  LabelledTree node() {
    if (consume("X") || consume("\xce\x9e")) return LabelledTree::xi();
    std::vector<std::pair<EdgeLabel, LabelledTree>> kids;
    while (pos < s.size() && s[pos] != ')') {
      if (!consume("I")) fail("expected X, I( or I'(");
      EdgeLabel label = EdgeLabel::I;
      if (consume("'") || consume("\xe2\x80\xb2")) label = EdgeLabel::Iprime;
      if (!consume("(")) fail("expected '('");
      kids.emplace_back(label, node());
      if (!consume(")")) fail("expected ')'");
    }
    if (kids.empty()) fail("empty product");
    return LabelledTree::graft(kids);
  }
};

std::map<int, std::vector<std::pair<EdgeLabel, int>>> child_map(const LabelledTree& t) {
  std::map<int, std::vector<std::pair<EdgeLabel, int>>> out;
  for (const auto& e : t.edges()) out[e.parent].emplace_back(e.label, e.child);
  return out;
}

}  // namespace

LabelledTree LabelledTree::parse(const std::string& text) {
  std::string s;
  for (char c : text)
    if (c != ' ' && c != '\t' && c != '\n') s += c;
  Parser p{s};
  LabelledTree t = p.node();
  if (p.pos != s.size()) p.fail("trailing characters");
  return t;
}

std::vector<int> LabelledTree::leaves() const {
  std::set<int> has_child;
  for (const auto& e : edges_) has_child.insert(e.parent);
  std::vector<int> out;
  for (int v : vertices_)
    if (!has_child.count(v)) out.push_back(v);
  return out;
}

std::vector<std::pair<EdgeLabel, int>> LabelledTree::children(int v) const {
  std::vector<std::pair<EdgeLabel, int>> out;
  for (const auto& e : edges_)
    if (e.parent == v) out.emplace_back(e.label, e.child);
  return out;
}

LabelledTree LabelledTree::branch(int v) const {
  auto kids = child_map(*this);
  std::vector<int> vs;
  std::vector<TreeEdge> es;
  std::function<void(int)> walk = [&](int u) {
    vs.push_back(u);
    for (auto [label, c] : kids[u]) {
      es.push_back({u, c, label});
      walk(c);
    }
  };
  walk(v);
  return {std::move(vs), v, std::move(es)};
}

std::string canonical_form(const LabelledTree& t) {
  auto kids = child_map(t);
  std::function<std::string(int)> code = [&](int v) -> std::string {
    auto it = kids.find(v);
    if (it == kids.end()) return "X";
    std::vector<std::pair<int, std::string>> parts;
    for (auto [label, c] : it->second) parts.emplace_back(label == EdgeLabel::I ? 0 : 1, code(c));
    std::sort(parts.begin(), parts.end());
    std::string out;
    for (const auto& [label, sub] : parts) out += (label == 0 ? "I(" : "I'(") + sub + ")";
    return out;
  };
  return code(t.root());
}

bool is_singular(const LabelledTree& t) {
  auto kids = child_map(t);
  std::function<bool(int)> ok = [&](int v) -> bool {
    auto it = kids.find(v);
    if (it == kids.end()) return true;
    const auto& ch = it->second;
    int n_i = 0, n_ip = 0;
    for (auto [label, c] : ch) (label == EdgeLabel::I ? n_i : n_ip)++;
    bool shape = (n_i == 3 && n_ip == 0) || (n_i == 1 && n_ip == 1);
    if (!shape) return false;
    for (auto [label, c] : ch)
      if (!ok(c)) return false;
    return true;
  };
  return ok(t.root());
}

int noise_count(const LabelledTree& t) { return static_cast<int>(t.leaves().size()); }

Affine homogeneity_recursive(const LabelledTree& t) {
  auto kids = child_map(t);
  const Affine xi = Affine(Rational(1)) - Affine::d() * Rational(1, 2) - Affine(2);
  std::function<Affine(int)> h = [&](int v) -> Affine {
    auto it = kids.find(v);
    if (it == kids.end()) return xi;
    Affine sum;
    for (auto [label, c] : it->second) sum += h(c) + Affine(label == EdgeLabel::I ? 2 : 1);
    return sum;
  };
  return h(t.root());
}

Affine homogeneity_closed_form(int noise) {
  Rational m(noise);
  return Affine(m * Rational(1) + m - 3, -m / 2, 0);
}

TreeStats tree_stats(const LabelledTree& t, double d) {
  if (!is_singular(t)) throw DomainError("tree " + canonical_form(t) + " is not a singular tree");
  TreeStats s;
  s.noise = noise_count(t);
  for (const auto& e : t.edges())
    if (e.label == EdgeLabel::Iprime) ++s.deriv_edges;
  s.homogeneity = homogeneity_recursive(t);
  if (s.homogeneity != homogeneity_closed_form(s.noise))
    throw std::logic_error("homogeneity recursion disagrees with closed form for " + canonical_form(t));
  s.homogeneity_value = s.homogeneity.eval(d, 0.0);
  s.parity_odd = (s.noise + s.deriv_edges) % 2 == 1;
  return s;
}

Rational symmetry_factor(const LabelledTree& t) {
  if (!is_singular(t)) throw DomainError("tree " + canonical_form(t) + " is not a singular tree");
  auto kids = child_map(t);
  std::function<Rational(int)> c = [&](int v) -> Rational {
    auto it = kids.find(v);
    if (it == kids.end()) return 1;
    Rational prod = 1;
    std::set<std::string> distinct;
    for (auto [label, ch] : it->second) {
      prod *= c(ch);
      distinct.insert(canonical_form(t.branch(ch)));
    }
    if (it->second.size() == 3) {
      static const std::int64_t fact[] = {1, 1, 2, 6, 24};
      prod *= Rational(6, fact[4 - distinct.size()]);
    }
    return prod;
  };
  return c(t.root());
}

namespace {

std::vector<std::vector<std::string>> codes_by_noise(int n_max) {
  std::vector<std::vector<std::string>> level(n_max + 1);
  if (n_max >= 1) level[1] = {"X"};
  for (int m = 2; m <= n_max; ++m) {
    std::set<std::string> out;
    for (int a = 1; a < m; ++a)
      for (const auto& x : level[a])
        for (const auto& y : level[m - a]) out.insert("I(" + x + ")I'(" + y + ")");
    // Unordered triples: sizes a <= b <= c and codes non-decreasing when sizes tie.
    for (int a = 1; 3 * a <= m; ++a)
      for (int b = a; a + 2 * b <= m; ++b) {
        int c = m - a - b;
        for (const auto& x : level[a])
          for (const auto& y : level[b])
            for (const auto& z : level[c]) {
              std::vector<std::string> p{x, y, z};
              std::sort(p.begin(), p.end());
              out.insert("I(" + p[0] + ")I(" + p[1] + ")I(" + p[2] + ")");
            }
      }
    level[m].assign(out.begin(), out.end());
  }
  return level;
}

void check_cap(int n, int cap) {
  if (n < 1) throw DomainError("noise bound must be >= 1");
  if (n > cap) throw ConfigError("tree enumeration bound " + std::to_string(n) + " exceeds cap " + std::to_string(cap));
}

}  // namespace

std::vector<LabelledTree> enumerate_level(int noise, int cap) {
  check_cap(noise, cap);
  auto level = codes_by_noise(noise);
  std::vector<LabelledTree> out;
  for (const auto& c : level[noise]) out.push_back(LabelledTree::parse(c));
  return out;
}

std::vector<LabelledTree> enumerate_trees(int n_max, int cap) {
  check_cap(n_max, cap);
  auto level = codes_by_noise(n_max);
  std::vector<LabelledTree> out;
  for (int m = 1; m <= n_max; ++m)
    for (const auto& c : level[m]) out.push_back(LabelledTree::parse(c));
  return out;
}

std::vector<std::uint64_t> count_trees_by_noise(int n_max) {
  std::vector<std::uint64_t> c(n_max + 1, 0);
  if (n_max >= 1) c[1] = 1;
  for (int m = 2; m <= n_max; ++m) {
    unsigned __int128 pairs = 0, cube = 0, mixed = 0, diag = 0;
    for (int a = 1; a < m; ++a) pairs += static_cast<unsigned __int128>(c[a]) * c[m - a];
    for (int a = 1; a < m; ++a)
      for (int b = 1; a + b < m; ++b) cube += static_cast<unsigned __int128>(c[a]) * c[b] * c[m - a - b];
    for (int a = 1; 2 * a < m; ++a) mixed += static_cast<unsigned __int128>(c[a]) * c[m - 2 * a];
    if (m % 3 == 0) diag = c[m / 3];
    // Multisets of size three via the cycle index of S3.
    unsigned __int128 triples = (cube + 3 * mixed + 2 * diag) / 6;
    c[m] = static_cast<std::uint64_t>(pairs + triples);
  }
  return c;
}

LabelledTree comb_tree(int noise) {
  if (noise < 1) throw DomainError("noise must be >= 1");
  LabelledTree t;
  for (int m = 2; m <= noise; ++m) t = LabelledTree::graft({{EdgeLabel::I, LabelledTree::xi()}, {EdgeLabel::Iprime, t}});
  return t;
}

}  // namespace wildlab
