#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace elyte {

// Supported element alphabet: the organic subset plus the alkali metals that
// show up in electrolyte salts.
enum class Element : std::uint8_t { B, C, N, O, S, P, F, Cl, Br, I, Li, Na, K };

inline constexpr int kElementCount = 13;

const char* element_symbol(Element e);
std::optional<Element> element_from_symbol(std::string_view s);

// True for elements the SMILES organic subset may write without brackets.
bool organic_subset(Element e);

// Maximum total bond order. Charge adjustments: N+ -> 4, O- -> 1, B- -> 4;
// every other charged case keeps the neutral value.
int max_valence(Element e, int formal_charge);

struct Atom {
  Element element = Element::C;
  int formal_charge = 0;
  // Hydrogen count declared in a bracket atom; nullopt means implicit
  // (hydrogens fill whatever valence the bonds leave unused).
  std::optional<int> explicit_h;
};

struct Bond {
  int a = 0;  // always a < b
  int b = 0;
  int order = 1;  // 1, 2 or 3
};

// Labeled multigraph-free molecular graph. Hydrogens are never atoms here;
// they live in the valence slack (or the bracket H count).
class MolGraph {
 public:
  int add_atom(Atom atom);
  // Throws SyntaxError on self-loops or duplicate pairs, ValidationError on
  // bad order/index.
  void add_bond(int a, int b, int order);

  const std::vector<Atom>& atoms() const { return atoms_; }
  const std::vector<Bond>& bonds() const { return bonds_; }
  int atom_count() const { return static_cast<int>(atoms_.size()); }

  const Atom& atom(int i) const { return atoms_[static_cast<std::size_t>(i)]; }
  Atom& atom(int i) { return atoms_[static_cast<std::size_t>(i)]; }

  // 0 when absent.
  int bond_order_between(int a, int b) const;

  // Sum of bond orders at the atom plus any bracket H count.
  int used_valence(int i) const;

  // neighbor -> bond order pairs, ascending neighbor index.
  std::vector<std::pair<int, int>> neighbors(int i) const;

  // Indices of connected components, one vector per component, each sorted;
  // components ordered by smallest member.
  std::vector<std::vector<int>> components() const;

 private:
  std::vector<Atom> atoms_;
  std::vector<Bond> bonds_;
};

// Throws ValenceError naming the first offending atom.
void validate_valence(const MolGraph& g);
bool valence_ok(const MolGraph& g);

// Exact backtracking isomorphism over (element, formal charge, bond orders).
bool graph_isomorphic(const MolGraph& a, const MolGraph& b);

// Canonical atom ordering: isomorphic graphs yield the same relabeled graph.
// order[k] is the original index of the atom at canonical position k.
// Explicit H counts are ignored, matching graph_isomorphic.
std::vector<int> canonical_atom_order(const MolGraph& g);

// Copy of g with atoms renumbered so that order[k] becomes atom k.
MolGraph apply_atom_order(const MolGraph& g, const std::vector<int>& order);

}  // namespace elyte
