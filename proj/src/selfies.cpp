#include "elyte/selfies.hpp"

#include <algorithm>
#include <array>
#include <limits>
#include <map>
#include <optional>
#include <unordered_map>
#include <utility>

#include "elyte/errors.hpp"

namespace elyte {

namespace {

enum class TokenKind { Atom, BranchOp, RingOp, IndexOnly };

struct TokenInfo {
  TokenKind kind;
  int bond_order = 1;  // atom/op prefix: 1 2 3, or 0 for the '.' atom prefix
  Element element = Element::C;
  int charge = 0;
};

// The 16-entry index table. Tokens read in index position map to 0..15;
// anything else counts as 0.
const std::array<const char*, 16> kIndexTable = {
    "[C]",        "[Ring1]",    "[Ring2]",    "[Branch1]",
    "[=Branch1]", "[#Branch1]", "[Branch2]",  "[=Branch2]",
    "[#Branch2]", "[O]",        "[N]",        "[=N]",
    "[=C]",       "[#C]",       "[S]",        "[P]",
};

int index_of_token(std::string_view text) {
  for (std::size_t q = 0; q < kIndexTable.size(); ++q)
    if (text == kIndexTable[q]) return static_cast<int>(q);
  return 0;
}

[[noreturn]] void grammar_fail(std::string_view token, const std::string& what) {
  throw TokenGrammarError("token \"" + std::string(token) + "\": " + what);
}

TokenInfo parse_token(std::string_view token) {
  if (token.size() < 3 || token.front() != '[' || token.back() != ']')
    grammar_fail(token, "not of the form [ ... ]");
  std::string_view body = token.substr(1, token.size() - 2);

  TokenInfo info;
  if (body.front() == '=' || body.front() == '#' || body.front() == '.') {
    info.bond_order = body.front() == '=' ? 2 : body.front() == '#' ? 3 : 0;
    body.remove_prefix(1);
    if (body.empty()) grammar_fail(token, "bond prefix without a core");
  }

  if (body == "Branch1" || body == "Ring1") {
    if (info.bond_order == 0) grammar_fail(token, "'.' prefix is only valid on atoms");
    info.kind = body == "Branch1" ? TokenKind::BranchOp : TokenKind::RingOp;
    return info;
  }
  if (body == "Branch2") {
    if (info.bond_order == 0) grammar_fail(token, "'.' prefix is only valid on atoms");
    info.kind = TokenKind::IndexOnly;
    return info;
  }
  if (body == "Ring2") {
    if (info.bond_order != 1) grammar_fail(token, "Ring2 takes no bond prefix");
    info.kind = TokenKind::IndexOnly;
    return info;
  }

  info.kind = TokenKind::Atom;
  std::optional<Element> elem;
  if (body.size() >= 2) elem = element_from_symbol(body.substr(0, 2));
  if (elem) {
    body.remove_prefix(2);
  } else {
    elem = element_from_symbol(body.substr(0, 1));
    if (!elem) grammar_fail(token, "unknown element or symbol");
    body.remove_prefix(1);
  }
  info.element = *elem;

  if (!body.empty()) {
    if (body.size() != 2 || (body[0] != '+' && body[0] != '-') ||
        (body[1] != '1' && body[1] != '2'))
      grammar_fail(token, "charge must be +1 +2 -1 or -2");
    info.charge = (body[0] == '+' ? 1 : -1) * (body[1] - '0');
  }
  return info;
}

std::string make_atom_token(int bond_order, Element e, int charge) {
  std::string out = "[";
  if (bond_order == 0) out += '.';
  if (bond_order == 2) out += '=';
  if (bond_order == 3) out += '#';
  out += element_symbol(e);
  if (charge != 0) {
    out += charge > 0 ? '+' : '-';
    out += static_cast<char>('0' + std::abs(charge));
  }
  out += ']';
  return out;
}

const char* order_prefix(int order) {
  switch (order) {
    case 2:
      return "=";
    case 3:
      return "#";
    default:
      return "";
  }
}

}  // namespace

const std::vector<std::string>& selfies_alphabet() {
  static const std::vector<std::string> alphabet = [] {
    std::vector<std::string> out;
    for (const char* t : kIndexTable) out.emplace_back(t);
    out.emplace_back("[=Ring1]");
    out.emplace_back("[#Ring1]");
    const std::array<int, 4> prefixes = {1, 2, 3, 0};
    const std::array<int, 5> charges = {0, 1, -1, 2, -2};
    for (const int p : prefixes)
      for (int e = 0; e < kElementCount; ++e)
        for (const int c : charges) {
          std::string t = make_atom_token(p, static_cast<Element>(e), c);
          if (std::find(out.begin(), out.end(), t) == out.end()) out.push_back(std::move(t));
        }
    return out;
  }();
  return alphabet;
}

std::vector<std::string> split_selfies(std::string_view text) {
  std::vector<std::string> tokens;
  std::size_t pos = 0;
  while (pos < text.size()) {
    if (text[pos] != '[')
      throw TokenGrammarError("expected '[' at position " + std::to_string(pos) + " of \"" +
                              std::string(text) + "\"");
    const std::size_t close = text.find(']', pos);
    if (close == std::string_view::npos)
      throw TokenGrammarError("unterminated token at position " + std::to_string(pos) + " of \"" +
                              std::string(text) + "\"");
    std::string token(text.substr(pos, close - pos + 1));
    parse_token(token);  // validate eagerly so split implies grammar-valid
    tokens.push_back(std::move(token));
    pos = close + 1;
  }
  return tokens;
}

// ---------------------------------------------------------------------------
// Decoding. One linear pass; branch bodies are token windows tracked with
// counters, so index consumption and atom placement depend only on the token
// sequence, never on valence state.
// ---------------------------------------------------------------------------

MolGraph decode_selfies(std::string_view text) {
  const std::vector<std::string> tokens = split_selfies(text);

  MolGraph g;
  std::vector<int> remaining;
  int attach = -1;
  int cap_next = std::numeric_limits<int>::max();  // branch first-bond cap

  struct Frame {
    int saved_attach;
    long tokens_left;  // includes the index token that opened the frame
  };
  std::vector<Frame> frames;

  // 0 = none, 1 = branch, 2 = ring; order of the pending op's prefix.
  int pending_kind = 0;
  int pending_order = 1;

  for (const std::string& token : tokens) {
    if (pending_kind != 0) {
      const int q = index_of_token(token);
      if (pending_kind == 1) {
        frames.push_back({attach, static_cast<long>(q) + 2});
        cap_next = pending_order;
      } else if (attach != -1) {
        const int target = std::max(0, attach - (q + 1));
        const int order = std::min({pending_order, cap_next, remaining[static_cast<std::size_t>(
                                                                 attach)],
                                    remaining[static_cast<std::size_t>(target)]});
        if (target != attach && order >= 1 && g.bond_order_between(target, attach) == 0) {
          g.add_bond(target, attach, order);
          remaining[static_cast<std::size_t>(target)] -= order;
          remaining[static_cast<std::size_t>(attach)] -= order;
        }
        cap_next = std::numeric_limits<int>::max();
      }
      pending_kind = 0;
    } else {
      const TokenInfo info = parse_token(token);
      switch (info.kind) {
        case TokenKind::Atom: {
          const int cap = max_valence(info.element, info.charge);
          const int idx = g.add_atom({info.element, info.charge, std::nullopt});
          remaining.push_back(cap);
          int order = std::min(info.bond_order, cap_next);
          if (attach == -1 || order < 1) order = 0;
          if (order > 0) {
            order = std::min({order, remaining[static_cast<std::size_t>(attach)], cap});
          }
          if (order >= 1) {
            g.add_bond(attach, idx, order);
            remaining[static_cast<std::size_t>(attach)] -= order;
            remaining[static_cast<std::size_t>(idx)] -= order;
          }
          attach = idx;
          cap_next = std::numeric_limits<int>::max();
          break;
        }
        case TokenKind::BranchOp:
          pending_kind = 1;
          pending_order = info.bond_order;
          break;
        case TokenKind::RingOp:
          pending_kind = 2;
          pending_order = info.bond_order;
          break;
        case TokenKind::IndexOnly:
          break;
      }
    }

    // Every token, of any kind, advances every open branch window.
    for (Frame& f : frames) --f.tokens_left;
    while (!frames.empty() && frames.back().tokens_left <= 0) {
      attach = frames.back().saved_attach;
      frames.pop_back();
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// Encoding. Spanning-tree DFS per component; the child with the largest
// emitted subtree continues the chain, the rest become branches; non-tree
// edges become Ring1 closures at their later-placed endpoint.
// ---------------------------------------------------------------------------

namespace {

struct Encoder {
  const MolGraph& g;
  std::vector<std::vector<std::pair<int, int>>> children;   // (child, order)
  std::vector<std::vector<std::pair<int, int>>> back_edges; // at later endpoint: (ancestor, order)
  std::vector<int> subtree_tokens;
  std::vector<int> placement;
  int place_counter = 0;

  explicit Encoder(const MolGraph& graph) : g(graph) {
    const auto n = static_cast<std::size_t>(g.atom_count());
    children.resize(n);
    back_edges.resize(n);
    subtree_tokens.assign(n, 0);
    placement.assign(n, -1);
  }

  void classify(int root) {
    std::vector<bool> visited(static_cast<std::size_t>(g.atom_count()), false);
    visited[static_cast<std::size_t>(root)] = true;
    std::map<std::pair<int, int>, bool> edge_seen;
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
      const std::pair<int, int> key{std::min(f.atom, nbr), std::max(f.atom, nbr)};
      if (edge_seen[key]) continue;
      edge_seen[key] = true;
      if (!visited[static_cast<std::size_t>(nbr)]) {
        visited[static_cast<std::size_t>(nbr)] = true;
        children[static_cast<std::size_t>(f.atom)].emplace_back(nbr, order);
        frames.push_back({nbr, f.atom, g.neighbors(nbr)});
      } else {
        // nbr was visited first, so it is the ancestor; f.atom closes the ring.
        back_edges[static_cast<std::size_t>(f.atom)].emplace_back(nbr, order);
      }
    }
  }

  // Emitted token count of the subtree rooted at v: its atom token, two
  // tokens per ring closing here, child subtrees, and a two-token branch
  // wrapper for every child but one.
  int count_tokens(int v) {
    int total = 1 + 2 * static_cast<int>(back_edges[static_cast<std::size_t>(v)].size());
    const auto& kids = children[static_cast<std::size_t>(v)];
    for (const auto& [child, order] : kids) total += count_tokens(child);
    if (!kids.empty()) total += 2 * (static_cast<int>(kids.size()) - 1);
    subtree_tokens[static_cast<std::size_t>(v)] = total;
    return total;
  }

  // idxtok(q) is the q-th entry of the index table.
  static std::string index_token(int q, const std::string& context) {
    if (q < 0 || q > 15)
      throw UnsupportedFeatureError(context + " needs index " + std::to_string(q) +
                                    ", beyond the 16-entry index table");
    return kIndexTable[static_cast<std::size_t>(q)];
  }

  void emit(int v, int bond_to_parent, std::vector<std::string>& out) {
    const Atom& a = g.atom(v);
    out.push_back(make_atom_token(bond_to_parent, a.element, a.formal_charge));
    placement[static_cast<std::size_t>(v)] = place_counter++;

    auto backs = back_edges[static_cast<std::size_t>(v)];
    std::sort(backs.begin(), backs.end(), [&](const auto& x, const auto& y) {
      return placement[static_cast<std::size_t>(x.first)] <
             placement[static_cast<std::size_t>(y.first)];
    });
    for (const auto& [target, order] : backs) {
      const int span = placement[static_cast<std::size_t>(v)] -
                       placement[static_cast<std::size_t>(target)] - 1;
      out.push_back(std::string("[") + order_prefix(order) + "Ring1]");
      out.push_back(index_token(span, "ring closure"));
    }

    auto kids = children[static_cast<std::size_t>(v)];
    std::sort(kids.begin(), kids.end(), [&](const auto& x, const auto& y) {
      const int tx = subtree_tokens[static_cast<std::size_t>(x.first)];
      const int ty = subtree_tokens[static_cast<std::size_t>(y.first)];
      return tx != ty ? tx < ty : x.first < y.first;
    });
    for (std::size_t k = 0; k < kids.size(); ++k) {
      const auto [child, order] = kids[k];
      if (k + 1 == kids.size()) {
        emit(child, order, out);
      } else {
        std::vector<std::string> body;
        emit(child, order, body);
        out.push_back(std::string("[") + order_prefix(order) + "Branch1]");
        out.push_back(index_token(static_cast<int>(body.size()) - 1, "branch body"));
        for (auto& t : body) out.push_back(std::move(t));
      }
    }
  }
};

}  // namespace

std::string encode_selfies(const MolGraph& input) {
  // Canonical relabeling first, so isomorphic graphs produce identical text.
  const MolGraph g = apply_atom_order(input, canonical_atom_order(input));
  Encoder enc(g);
  std::vector<std::string> tokens;
  const auto comps = g.components();
  for (std::size_t c = 0; c < comps.size(); ++c) {
    const int root = comps[c].front();
    enc.classify(root);
    enc.count_tokens(root);
    // Later fragments start with a '.'-prefixed (unbonded) atom token.
    enc.emit(root, c == 0 ? 1 : 0, tokens);
  }
  std::string out;
  for (const auto& t : tokens) out += t;
  return out;
}

}  // namespace elyte
