#include "elyte/smiles.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <string>
#include <vector>

#include "elyte/errors.hpp"

namespace elyte {

namespace {

[[noreturn]] void syntax_fail(std::string_view text, std::size_t pos, const std::string& what) {
  throw SyntaxError("SMILES \"" + std::string(text) + "\": " + what + " at position " +
                    std::to_string(pos));
}

struct PendingBond {
  int order = 0;  // 0 = no explicit symbol
  std::size_t pos = 0;
};

struct RingOpening {
  int atom = -1;
  int order = 0;  // explicit symbol at the opening end, 0 if none
};

struct RawBond {
  int a;
  int b;
  int order;      // 0 marks an aromatic bond to be kekulized
};

std::pair<int, int> edge_key(int a, int b) { return {std::min(a, b), std::max(a, b)}; }

struct Parser {
  explicit Parser(std::string_view t) : text(t) {}

  std::string_view text;
  std::size_t i = 0;

  MolGraph graph;
  std::vector<bool> aromatic;         // per atom
  std::vector<RawBond> raw_bonds;
  std::map<char, RingOpening> open_rings;
  std::vector<int> branch_stack;
  int prev = -1;
  PendingBond pending;

  char peek() const { return i < text.size() ? text[i] : '\0'; }
  char take() { return text[i++]; }
  bool done() const { return i >= text.size(); }

  void run() {
    if (text.empty()) throw SyntaxError("empty SMILES input");
    while (!done()) step();
    if (pending.order != 0) syntax_fail(text, pending.pos, "dangling bond symbol");
    if (prev == -1) syntax_fail(text, text.size(), "expected an atom after '.'");
    if (!branch_stack.empty()) syntax_fail(text, text.size(), "unclosed '('");
    if (!open_rings.empty())
      syntax_fail(text, text.size(),
                  std::string("unclosed ring closure '") + open_rings.begin()->first + "'");
    kekulize();
    for (const RawBond& b : raw_bonds) graph.add_bond(b.a, b.b, b.order);
    validate_valence(graph);
  }

  void step() {
    const char c = peek();
    if (c == '-' || c == '=' || c == '#') {
      if (pending.order != 0) syntax_fail(text, i, "two bond symbols in a row");
      pending = {c == '-' ? 1 : c == '=' ? 2 : 3, i};
      take();
    } else if (c == '(') {
      if (prev == -1) syntax_fail(text, i, "branch before any atom");
      if (pending.order != 0) syntax_fail(text, i, "bond symbol before '('");
      branch_stack.push_back(prev);
      take();
    } else if (c == ')') {
      if (branch_stack.empty()) syntax_fail(text, i, "unmatched ')'");
      if (pending.order != 0) syntax_fail(text, i, "bond symbol before ')'");
      prev = branch_stack.back();
      branch_stack.pop_back();
      take();
    } else if (c == '.') {
      if (pending.order != 0) syntax_fail(text, i, "bond symbol before '.'");
      if (prev == -1) syntax_fail(text, i, "'.' must follow an atom");
      if (!branch_stack.empty()) syntax_fail(text, i, "'.' inside a branch");
      prev = -1;
      take();
    } else if (c >= '1' && c <= '9') {
      ring_digit(take());
    } else if (c == '[') {
      bracket_atom();
    } else if (std::isalpha(static_cast<unsigned char>(c))) {
      shorthand_atom();
    } else {
      syntax_fail(text, i, std::string("unexpected character '") + c + "'");
    }
  }

  void attach(int atom, bool atom_is_aromatic) {
    if (prev == -1 && pending.order != 0)
      syntax_fail(text, pending.pos, "bond symbol before the first atom of a fragment");
    if (prev != -1) {
      int order = pending.order;
      if (order == 0)
        order = (aromatic[static_cast<std::size_t>(prev)] && atom_is_aromatic) ? 0 : 1;
      raw_bonds.push_back({prev, atom, order});
    }
    pending = {};
    prev = atom;
  }

  void ring_digit(char d) {
    if (prev == -1) syntax_fail(text, i - 1, "ring closure before any atom");
    auto it = open_rings.find(d);
    if (it == open_rings.end()) {
      open_rings[d] = {prev, pending.order};
      pending = {};
      return;
    }
    const RingOpening opening = it->second;
    open_rings.erase(it);
    if (opening.atom == prev) syntax_fail(text, i - 1, "ring closure bonds an atom to itself");
    int order = 0;
    if (opening.order != 0 && pending.order != 0 && opening.order != pending.order)
      syntax_fail(text, i - 1, "conflicting bond symbols on ring closure");
    order = opening.order != 0 ? opening.order : pending.order;
    if (order == 0)
      order = (aromatic[static_cast<std::size_t>(opening.atom)] &&
               aromatic[static_cast<std::size_t>(prev)])
                  ? 0
                  : 1;
    for (const RawBond& b : raw_bonds)
      if (edge_key(b.a, b.b) == edge_key(opening.atom, prev))
        syntax_fail(text, i - 1, "ring closure duplicates an existing bond");
    raw_bonds.push_back({opening.atom, prev, order});
    pending = {};
  }

  void shorthand_atom() {
    const std::size_t start = i;
    // Two-letter symbols first.
    if (text.substr(i, 2) == "Cl" || text.substr(i, 2) == "Br") {
      const auto e = element_from_symbol(text.substr(i, 2));
      i += 2;
      add_atom(*e, 0, std::nullopt, false);
      return;
    }
    const char c = take();
    static const std::string kShorthand = "BCNOSPFI";
    static const std::string kAromatic = "bcnosp";
    if (kShorthand.find(c) != std::string::npos) {
      add_atom(*element_from_symbol(std::string_view(&c, 1)), 0, std::nullopt, false);
      return;
    }
    if (kAromatic.find(c) != std::string::npos) {
      const char upper = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
      add_atom(*element_from_symbol(std::string_view(&upper, 1)), 0, std::nullopt, true);
      return;
    }
    syntax_fail(text, start, std::string("unknown atom symbol '") + c + "'");
  }

  void bracket_atom() {
    const std::size_t start = i;
    take();  // '['
    if (done()) syntax_fail(text, start, "unterminated bracket atom");
    if (std::islower(static_cast<unsigned char>(peek())))
      syntax_fail(text, i, "aromatic bracket atoms are not supported");

    std::optional<Element> elem;
    if (i + 1 < text.size()) elem = element_from_symbol(text.substr(i, 2));
    if (elem) {
      i += 2;
    } else {
      elem = element_from_symbol(text.substr(i, 1));
      if (!elem) syntax_fail(text, i, "unknown element in bracket atom");
      i += 1;
    }

    int h_count = 0;
    if (peek() == 'H') {
      take();
      h_count = 1;
      if (std::isdigit(static_cast<unsigned char>(peek()))) h_count = take() - '0';
    }

    int charge = 0;
    if (peek() == '+' || peek() == '-') {
      const int sign = take() == '+' ? 1 : -1;
      int magnitude = 1;
      if (std::isdigit(static_cast<unsigned char>(peek()))) {
        magnitude = take() - '0';
      } else {
        while (peek() == (sign > 0 ? '+' : '-')) {
          take();
          ++magnitude;
        }
      }
      charge = sign * magnitude;
      if (charge < -2 || charge > 2)
        syntax_fail(text, start, "formal charge outside [-2, +2]");
    }

    if (peek() != ']') syntax_fail(text, i, "expected ']'");
    take();
    add_atom(*elem, charge, h_count, false);
  }

  void add_atom(Element e, int charge, std::optional<int> explicit_h, bool is_aromatic) {
    const int idx = graph.add_atom({e, charge, explicit_h});
    aromatic.push_back(is_aromatic);
    attach(idx, is_aromatic);
  }

  // Resolve aromatic bonds into Kekule alternation. Only isolated aromatic
  // 6-cycles are accepted.
  void kekulize() {
    std::vector<RawBond*> arom;
    for (RawBond& b : raw_bonds)
      if (b.order == 0) arom.push_back(&b);

    std::vector<std::vector<std::pair<int, RawBond*>>> adj(
        static_cast<std::size_t>(graph.atom_count()));
    for (RawBond* b : arom) {
      adj[static_cast<std::size_t>(b->a)].emplace_back(b->b, b);
      adj[static_cast<std::size_t>(b->b)].emplace_back(b->a, b);
    }
    for (auto& v : adj) std::sort(v.begin(), v.end());

    for (int a = 0; a < graph.atom_count(); ++a) {
      if (aromatic[static_cast<std::size_t>(a)] && adj[static_cast<std::size_t>(a)].empty())
        throw SyntaxError("aromatic atom " + std::to_string(a) + " is not in an aromatic ring");
    }

    std::vector<bool> seen(static_cast<std::size_t>(graph.atom_count()), false);
    for (int start = 0; start < graph.atom_count(); ++start) {
      if (adj[static_cast<std::size_t>(start)].empty() || seen[static_cast<std::size_t>(start)])
        continue;
      // Walk the cycle starting at the lowest index.
      std::vector<int> cycle{start};
      std::vector<RawBond*> cycle_bonds;
      seen[static_cast<std::size_t>(start)] = true;
      if (adj[static_cast<std::size_t>(start)].size() != 2)
        throw SyntaxError("unsupported aromatic system (atom degree != 2)");
      int cur = start;
      int next = adj[static_cast<std::size_t>(start)].front().first;
      cycle_bonds.push_back(adj[static_cast<std::size_t>(start)].front().second);
      while (next != start) {
        if (seen[static_cast<std::size_t>(next)])
          throw SyntaxError("unsupported aromatic system (fused rings)");
        seen[static_cast<std::size_t>(next)] = true;
        if (adj[static_cast<std::size_t>(next)].size() != 2)
          throw SyntaxError("unsupported aromatic system (atom degree != 2)");
        cycle.push_back(next);
        const auto& nb = adj[static_cast<std::size_t>(next)];
        const int following = nb[0].first == cur ? nb[1].first : nb[0].first;
        cycle_bonds.push_back(nb[0].first == cur ? nb[1].second : nb[0].second);
        cur = next;
        next = following;
      }
      if (cycle.size() != 6)
        throw SyntaxError("only 6-membered aromatic rings are supported (found " +
                          std::to_string(cycle.size()) + ")");

      // Two possible alternations; pick the first that fits every valence.
      bool assigned = false;
      for (int first_order : {2, 1}) {
        for (std::size_t k = 0; k < 6; ++k)
          cycle_bonds[k]->order = (k % 2 == 0) ? first_order : 3 - first_order;
        bool ok = true;
        for (int atom : cycle) {
          int used = graph.atom(atom).explicit_h.value_or(0);
          for (const RawBond& b : raw_bonds)
            if (b.a == atom || b.b == atom) used += b.order;
          if (used > max_valence(graph.atom(atom).element, graph.atom(atom).formal_charge)) {
            ok = false;
            break;
          }
        }
        if (ok) {
          assigned = true;
          break;
        }
      }
      if (!assigned)
        throw ValenceError("no Kekule assignment fits the aromatic ring at atom " +
                           std::to_string(start));
    }
  }
};

const char* bond_symbol(int order) {
  switch (order) {
    case 2:
      return "=";
    case 3:
      return "#";
    default:
      return "";
  }
}

std::string atom_text(const Atom& a) {
  const bool bracket = !organic_subset(a.element) || a.formal_charge != 0 || a.explicit_h;
  if (!bracket) return element_symbol(a.element);
  std::string out = "[";
  out += element_symbol(a.element);
  if (a.explicit_h && *a.explicit_h > 0) {
    out += 'H';
    if (*a.explicit_h > 1) out += std::to_string(*a.explicit_h);
  }
  if (a.formal_charge != 0) {
    out += a.formal_charge > 0 ? '+' : '-';
    if (std::abs(a.formal_charge) > 1) out += std::to_string(std::abs(a.formal_charge));
  }
  out += ']';
  return out;
}

struct Writer {
  const MolGraph& g;
  std::vector<std::vector<std::pair<int, int>>> tree_children;  // (child, order)
  std::vector<std::vector<std::pair<int, int>>> closures;       // (other end, order)
  std::map<std::pair<int, int>, char> open_digit;
  std::vector<char> free_digits;
  std::string out;

  explicit Writer(const MolGraph& graph) : g(graph) {
    const auto n = static_cast<std::size_t>(g.atom_count());
    tree_children.resize(n);
    closures.resize(n);
    for (char d = '9'; d >= '1'; --d) free_digits.push_back(d);
  }

  // Pass 1: spanning-tree DFS; non-tree edges become ring closures recorded
  // at both endpoints.
  void classify(int root) {
    std::vector<bool> visited(static_cast<std::size_t>(g.atom_count()), false);
    visited[static_cast<std::size_t>(root)] = true;
    std::map<std::pair<int, int>, bool> edge_seen;
    // Explicit stack DFS in ascending-neighbor order.
    struct Frame {
      int atom;
      int parent;
      std::vector<std::pair<int, int>> nbrs;
      std::size_t next = 0;
    };
    std::vector<Frame> frames{{root, -1, g.neighbors(root)}};
    while (!frames.empty()) {
      Frame& f = frames.back();
      if (f.next >= f.nbrs.size()) {
        frames.pop_back();
        continue;
      }
      const auto [nbr, order] = f.nbrs[f.next++];
      if (nbr == f.parent) continue;
      const auto key = edge_key(f.atom, nbr);
      if (edge_seen[key]) continue;
      edge_seen[key] = true;
      if (!visited[static_cast<std::size_t>(nbr)]) {
        visited[static_cast<std::size_t>(nbr)] = true;
        tree_children[static_cast<std::size_t>(f.atom)].emplace_back(nbr, order);
        frames.push_back({nbr, f.atom, g.neighbors(nbr)});
      } else {
        closures[static_cast<std::size_t>(f.atom)].emplace_back(nbr, order);
        closures[static_cast<std::size_t>(nbr)].emplace_back(f.atom, order);
      }
    }
  }

  void write_fragment(int root) {
    classify(root);
    write_atom(root);
  }

  void write_atom(int atom) {
    out += atom_text(g.atom(atom));
    for (const auto& [other, order] : closures[static_cast<std::size_t>(atom)]) {
      const auto key = edge_key(atom, other);
      if (auto it = open_digit.find(key); it != open_digit.end()) {
        out += bond_symbol(order);
        out += it->second;
        free_digits.push_back(it->second);
        open_digit.erase(it);
      } else {
        if (free_digits.empty())
          throw UnsupportedFeatureError("more than 9 simultaneously open ring closures");
        const char d = free_digits.back();
        free_digits.pop_back();
        open_digit[key] = d;
        out += bond_symbol(order);
        out += d;
      }
    }
    const auto& children = tree_children[static_cast<std::size_t>(atom)];
    for (std::size_t k = 0; k < children.size(); ++k) {
      const auto [child, order] = children[k];
      const bool last = (k + 1 == children.size());
      if (!last) out += '(';
      out += bond_symbol(order);
      write_atom(child);
      if (!last) out += ')';
    }
  }
};

}  // namespace

MolGraph parse_smiles(std::string_view text) {
  Parser p(text);
  p.run();
  return std::move(p.graph);
}

std::string write_smiles(const MolGraph& g) {
  if (g.atom_count() == 0) throw ValidationError("cannot serialize an empty graph");
  Writer w(g);
  const auto comps = g.components();
  for (std::size_t c = 0; c < comps.size(); ++c) {
    if (c > 0) w.out += '.';
    w.write_fragment(comps[c].front());
  }
  return std::move(w.out);
}

}  // namespace elyte
