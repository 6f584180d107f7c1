#include "elyte/chem.hpp"

#include <algorithm>
#include <array>
#include <numeric>

#include "elyte/errors.hpp"

namespace elyte {

namespace {

struct ElementInfo {
  const char* symbol;
  int neutral_valence;
};

constexpr std::array<ElementInfo, kElementCount> kElements = {{
    {"B", 3},
    {"C", 4},
    {"N", 3},
    {"O", 2},
    {"S", 6},
    {"P", 5},
    {"F", 1},
    {"Cl", 1},
    {"Br", 1},
    {"I", 1},
    {"Li", 1},
    {"Na", 1},
    {"K", 1},
}};

}  // namespace

const char* element_symbol(Element e) { return kElements[static_cast<std::size_t>(e)].symbol; }

std::optional<Element> element_from_symbol(std::string_view s) {
  for (int i = 0; i < kElementCount; ++i) {
    if (s == kElements[static_cast<std::size_t>(i)].symbol) return static_cast<Element>(i);
  }
  return std::nullopt;
}

bool organic_subset(Element e) {
  switch (e) {
    case Element::Li:
    case Element::Na:
    case Element::K:
      return false;
    default:
      return true;
  }
}

int max_valence(Element e, int formal_charge) {
  if (e == Element::N && formal_charge == 1) return 4;
  if (e == Element::O && formal_charge == -1) return 1;
  if (e == Element::B && formal_charge == -1) return 4;
  return kElements[static_cast<std::size_t>(e)].neutral_valence;
}

int MolGraph::add_atom(Atom atom) {
  atoms_.push_back(atom);
  return static_cast<int>(atoms_.size()) - 1;
}

void MolGraph::add_bond(int a, int b, int order) {
  if (a < 0 || b < 0 || a >= atom_count() || b >= atom_count())
    throw ValidationError("bond endpoint out of range");
  if (order < 1 || order > 3) throw ValidationError("bond order must be 1, 2 or 3");
  if (a == b) throw SyntaxError("self-loop bond on atom " + std::to_string(a));
  if (a > b) std::swap(a, b);
  if (bond_order_between(a, b) != 0)
    throw SyntaxError("duplicate bond between atoms " + std::to_string(a) + " and " +
                      std::to_string(b));
  bonds_.push_back({a, b, order});
}

int MolGraph::bond_order_between(int a, int b) const {
  if (a > b) std::swap(a, b);
  for (const Bond& bond : bonds_) {
    if (bond.a == a && bond.b == b) return bond.order;
  }
  return 0;
}

int MolGraph::used_valence(int i) const {
  int used = atoms_[static_cast<std::size_t>(i)].explicit_h.value_or(0);
  for (const Bond& bond : bonds_) {
    if (bond.a == i || bond.b == i) used += bond.order;
  }
  return used;
}

std::vector<std::pair<int, int>> MolGraph::neighbors(int i) const {
  std::vector<std::pair<int, int>> out;
  for (const Bond& bond : bonds_) {
    if (bond.a == i) out.emplace_back(bond.b, bond.order);
    if (bond.b == i) out.emplace_back(bond.a, bond.order);
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::vector<int>> MolGraph::components() const {
  const int n = atom_count();
  std::vector<int> comp(static_cast<std::size_t>(n), -1);
  int count = 0;
  for (int start = 0; start < n; ++start) {
    if (comp[static_cast<std::size_t>(start)] != -1) continue;
    std::vector<int> stack{start};
    comp[static_cast<std::size_t>(start)] = count;
    while (!stack.empty()) {
      const int v = stack.back();
      stack.pop_back();
      for (const auto& [u, order] : neighbors(v)) {
        (void)order;
        if (comp[static_cast<std::size_t>(u)] == -1) {
          comp[static_cast<std::size_t>(u)] = count;
          stack.push_back(u);
        }
      }
    }
    ++count;
  }
  std::vector<std::vector<int>> out(static_cast<std::size_t>(count));
  for (int i = 0; i < n; ++i) out[static_cast<std::size_t>(comp[static_cast<std::size_t>(i)])].push_back(i);
  return out;
}

void validate_valence(const MolGraph& g) {
  for (int i = 0; i < g.atom_count(); ++i) {
    const Atom& a = g.atom(i);
    const int used = g.used_valence(i);
    const int cap = max_valence(a.element, a.formal_charge);
    if (used > cap) {
      throw ValenceError(std::string("atom ") + std::to_string(i) + " (" +
                         element_symbol(a.element) + ") uses valence " + std::to_string(used) +
                         " > " + std::to_string(cap));
    }
  }
}

bool valence_ok(const MolGraph& g) {
  try {
    validate_valence(g);
    return true;
  } catch (const ValenceError&) {
    return false;
  }
}

namespace {

// Per-atom signature used both for the quick reject and for candidate pruning.
struct AtomSig {
  Element element;
  int charge;
  std::vector<int> incident_orders;  // sorted

  bool operator==(const AtomSig& o) const {
    return element == o.element && charge == o.charge && incident_orders == o.incident_orders;
  }
  bool operator<(const AtomSig& o) const {
    if (element != o.element) return element < o.element;
    if (charge != o.charge) return charge < o.charge;
    return incident_orders < o.incident_orders;
  }
};

AtomSig signature(const MolGraph& g, int i) {
  AtomSig s;
  s.element = g.atom(i).element;
  s.charge = g.atom(i).formal_charge;
  for (const auto& [nbr, order] : g.neighbors(i)) {
    (void)nbr;
    s.incident_orders.push_back(order);
  }
  std::sort(s.incident_orders.begin(), s.incident_orders.end());
  return s;
}

struct IsoState {
  const MolGraph& a;
  const MolGraph& b;
  std::vector<std::vector<std::pair<int, int>>> nb_a;
  std::vector<std::vector<std::pair<int, int>>> nb_b;
  std::vector<int> map_ab;   // a-index -> b-index or -1
  std::vector<bool> used_b;
  std::vector<int> order;    // order in which a-atoms are matched

  bool extend(std::size_t depth) {
    if (depth == order.size()) return true;
    const int va = order[depth];
    for (int vb = 0; vb < b.atom_count(); ++vb) {
      if (used_b[static_cast<std::size_t>(vb)]) continue;
      if (a.atom(va).element != b.atom(vb).element) continue;
      if (a.atom(va).formal_charge != b.atom(vb).formal_charge) continue;
      if (nb_a[static_cast<std::size_t>(va)].size() != nb_b[static_cast<std::size_t>(vb)].size())
        continue;
      // Bonds to already-mapped neighbors must agree in order.
      bool ok = true;
      for (const auto& [ua, ord] : nb_a[static_cast<std::size_t>(va)]) {
        const int ub = map_ab[static_cast<std::size_t>(ua)];
        if (ub == -1) continue;
        if (b.bond_order_between(ub, vb) != ord) {
          ok = false;
          break;
        }
      }
      if (!ok) continue;
      map_ab[static_cast<std::size_t>(va)] = vb;
      used_b[static_cast<std::size_t>(vb)] = true;
      if (extend(depth + 1)) return true;
      map_ab[static_cast<std::size_t>(va)] = -1;
      used_b[static_cast<std::size_t>(vb)] = false;
    }
    return false;
  }
};

}  // namespace

bool graph_isomorphic(const MolGraph& a, const MolGraph& b) {
  if (a.atom_count() != b.atom_count()) return false;
  if (a.bonds().size() != b.bonds().size()) return false;

  std::vector<AtomSig> sa, sb;
  for (int i = 0; i < a.atom_count(); ++i) sa.push_back(signature(a, i));
  for (int i = 0; i < b.atom_count(); ++i) sb.push_back(signature(b, i));
  {
    auto ca = sa;
    auto cb = sb;
    std::sort(ca.begin(), ca.end());
    std::sort(cb.begin(), cb.end());
    if (!(ca == cb)) return false;
  }

  IsoState st{a, b, {}, {}, {}, {}, {}};
  st.nb_a.resize(static_cast<std::size_t>(a.atom_count()));
  st.nb_b.resize(static_cast<std::size_t>(b.atom_count()));
  for (int i = 0; i < a.atom_count(); ++i) st.nb_a[static_cast<std::size_t>(i)] = a.neighbors(i);
  for (int i = 0; i < b.atom_count(); ++i) st.nb_b[static_cast<std::size_t>(i)] = b.neighbors(i);
  st.map_ab.assign(static_cast<std::size_t>(a.atom_count()), -1);
  st.used_b.assign(static_cast<std::size_t>(b.atom_count()), false);

  // Match connected, rarest-signature-first: keeps the prefix of the search
  // anchored so the bond-consistency check prunes early.
  st.order.resize(static_cast<std::size_t>(a.atom_count()));
  std::iota(st.order.begin(), st.order.end(), 0);
  std::vector<int> sig_count(static_cast<std::size_t>(a.atom_count()), 0);
  for (int i = 0; i < a.atom_count(); ++i) {
    for (int j = 0; j < a.atom_count(); ++j) {
      if (sa[static_cast<std::size_t>(i)] == sa[static_cast<std::size_t>(j)])
        ++sig_count[static_cast<std::size_t>(i)];
    }
  }
  std::vector<bool> placed(static_cast<std::size_t>(a.atom_count()), false);
  std::vector<int> order;
  order.reserve(static_cast<std::size_t>(a.atom_count()));
  while (static_cast<int>(order.size()) < a.atom_count()) {
    int best = -1;
    bool best_adjacent = false;
    for (int i = 0; i < a.atom_count(); ++i) {
      if (placed[static_cast<std::size_t>(i)]) continue;
      bool adjacent = false;
      for (const auto& [u, ord] : st.nb_a[static_cast<std::size_t>(i)]) {
        (void)ord;
        if (placed[static_cast<std::size_t>(u)]) {
          adjacent = true;
          break;
        }
      }
      if (best == -1 || (adjacent && !best_adjacent) ||
          (adjacent == best_adjacent && sig_count[static_cast<std::size_t>(i)] <
                                            sig_count[static_cast<std::size_t>(best)])) {
        best = i;
        best_adjacent = adjacent;
      }
    }
    placed[static_cast<std::size_t>(best)] = true;
    order.push_back(best);
  }
  st.order = order;
  return st.extend(0);
}

namespace {

// Dense ranks (0-based, equal keys share a rank) in key order.
template <typename Key>
std::vector<int> rank_keys(const std::vector<Key>& keys) {
  std::vector<int> idx(keys.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
  std::sort(idx.begin(), idx.end(), [&](int a, int b) {
    return keys[static_cast<std::size_t>(a)] < keys[static_cast<std::size_t>(b)];
  });
  std::vector<int> ranks(keys.size());
  int r = 0;
  for (std::size_t k = 0; k < idx.size(); ++k) {
    if (k > 0 && keys[static_cast<std::size_t>(idx[k - 1])] < keys[static_cast<std::size_t>(idx[k])])
      ++r;
    ranks[static_cast<std::size_t>(idx[k])] = r;
  }
  return ranks;
}

// Neighborhood color refinement to a fixed point.
std::vector<int> refine_colors(const MolGraph& g, std::vector<int> colors) {
  for (;;) {
    std::vector<std::pair<int, std::vector<std::pair<int, int>>>> keys;
    keys.reserve(colors.size());
    for (int i = 0; i < g.atom_count(); ++i) {
      std::vector<std::pair<int, int>> nbr;
      for (const auto& [n, order] : g.neighbors(i))
        nbr.emplace_back(order, colors[static_cast<std::size_t>(n)]);
      std::sort(nbr.begin(), nbr.end());
      keys.emplace_back(colors[static_cast<std::size_t>(i)], std::move(nbr));
    }
    std::vector<int> next = rank_keys(keys);
    if (next == colors) return colors;
    colors = std::move(next);
  }
}

// Relabeled adjacency signature used to pick among tie-break branches.
// colors must be a full ranking (all distinct).
std::vector<long> order_signature(const MolGraph& g, const std::vector<int>& colors) {
  std::vector<int> inv(colors.size());
  for (std::size_t a = 0; a < colors.size(); ++a)
    inv[static_cast<std::size_t>(colors[a])] = static_cast<int>(a);
  std::vector<long> sig;
  for (int k = 0; k < g.atom_count(); ++k) {
    const Atom& at = g.atom(inv[static_cast<std::size_t>(k)]);
    sig.push_back(static_cast<long>(at.element));
    sig.push_back(at.formal_charge);
  }
  std::vector<std::array<long, 3>> edges;
  for (const Bond& b : g.bonds()) {
    const long x = colors[static_cast<std::size_t>(b.a)];
    const long y = colors[static_cast<std::size_t>(b.b)];
    edges.push_back({std::min(x, y), std::max(x, y), static_cast<long>(b.order)});
  }
  std::sort(edges.begin(), edges.end());
  for (const auto& e : edges) sig.insert(sig.end(), e.begin(), e.end());
  return sig;
}

struct CanonSearch {
  const MolGraph& g;
  std::vector<long> best_sig;
  std::vector<int> best_colors;
  bool have_best = false;

  // Individualize each member of the first tied class and keep the branch
  // with the smallest relabeled signature.
  void walk(const std::vector<int>& colors) {
    int tied_color = -1;
    std::vector<int> counts(colors.size(), 0);
    for (const int c : colors) ++counts[static_cast<std::size_t>(c)];
    for (std::size_t c = 0; c < counts.size(); ++c) {
      if (counts[c] > 1) {
        tied_color = static_cast<int>(c);
        break;
      }
    }
    if (tied_color == -1) {
      std::vector<long> sig = order_signature(g, colors);
      if (!have_best || sig < best_sig) {
        best_sig = std::move(sig);
        best_colors = colors;
        have_best = true;
      }
      return;
    }
    for (int a = 0; a < g.atom_count(); ++a) {
      if (colors[static_cast<std::size_t>(a)] != tied_color) continue;
      std::vector<std::pair<int, int>> keys;
      keys.reserve(colors.size());
      for (std::size_t i = 0; i < colors.size(); ++i)
        keys.emplace_back(colors[i], static_cast<int>(i) == a ? 0 : 1);
      walk(refine_colors(g, rank_keys(keys)));
    }
  }
};

}  // namespace

std::vector<int> canonical_atom_order(const MolGraph& g) {
  if (g.atom_count() == 0) return {};
  std::vector<std::pair<int, int>> initial;
  initial.reserve(static_cast<std::size_t>(g.atom_count()));
  for (const Atom& a : g.atoms())
    initial.emplace_back(static_cast<int>(a.element), a.formal_charge);
  CanonSearch search{g, {}, {}, false};
  search.walk(refine_colors(g, rank_keys(initial)));
  std::vector<int> order(static_cast<std::size_t>(g.atom_count()));
  for (int a = 0; a < g.atom_count(); ++a)
    order[static_cast<std::size_t>(search.best_colors[static_cast<std::size_t>(a)])] = a;
  return order;
}

MolGraph apply_atom_order(const MolGraph& g, const std::vector<int>& order) {
  std::vector<int> pos(order.size());
  for (std::size_t k = 0; k < order.size(); ++k)
    pos[static_cast<std::size_t>(order[k])] = static_cast<int>(k);
  MolGraph out;
  for (const int orig : order) out.add_atom(g.atom(orig));
  for (const Bond& b : g.bonds())
    out.add_bond(pos[static_cast<std::size_t>(b.a)], pos[static_cast<std::size_t>(b.b)],
                 b.order);
  return out;
}

}  // namespace elyte
