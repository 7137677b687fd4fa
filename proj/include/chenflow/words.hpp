#pragma once

// Alphabets, words, and the right-factor partial order whose DFS enumeration
// indexes every Chen-series matrix in the library.

#include <algorithm>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace chenflow {

using Letter = std::uint8_t;

/// Letters x_0..x_m. x_0 is the drift letter; a driftless alphabet omits it
/// (the single-input learning demo uses X = {x_1}).
class Alphabet {
 public:
  static Alphabet with_drift(std::size_t m) { return Alphabet(m, true); }
  static Alphabet driftless(std::size_t m) {
    if (m == 0) throw std::invalid_argument("driftless alphabet needs m >= 1");
    return Alphabet(m, false);
  }

  std::size_t m() const { return m_; }
  bool has_drift() const { return drift_; }
  std::size_t size() const { return letters_.size(); }
  const std::vector<Letter>& letters() const { return letters_; }
  bool contains(Letter a) const { return a <= m_ && (drift_ || a != 0); }

  /// card(X^{<=J}) for this alphabet.
  std::size_t word_count(std::size_t degree) const {
    std::size_t total = 0, power = 1;
    for (std::size_t k = 0; k <= degree; ++k) {
      total += power;
      power *= size();
    }
    return total;
  }

  bool operator==(const Alphabet&) const = default;

 private:
  Alphabet(std::size_t m, bool drift) : m_(m), drift_(drift) {
    if (m > 254) throw std::invalid_argument("alphabet too large");
    for (std::size_t a = drift ? 0 : 1; a <= m; ++a) letters_.push_back(static_cast<Letter>(a));
  }

  std::size_t m_;
  bool drift_;
  std::vector<Letter> letters_;
};

/// Sum_{k=0..J} (m+1)^k, the number of words of length <= J over x_0..x_m.
inline std::size_t card_words(std::size_t m, std::size_t degree) {
  return Alphabet::with_drift(m).word_count(degree);
}

/// A word x_{i_1}...x_{i_k}, stored leftmost letter first.
class Word {
 public:
  Word() = default;
  explicit Word(std::vector<Letter> letters) : letters_(std::move(letters)) {}
  Word(std::initializer_list<Letter> letters) : letters_(letters) {}

  static Word letter(Letter a) { return Word{a}; }

  std::size_t size() const { return letters_.size(); }
  bool empty() const { return letters_.empty(); }
  Letter operator[](std::size_t i) const { return letters_[i]; }
  const std::vector<Letter>& letters() const { return letters_; }

  /// Right concatenation: this -> this * x_a.
  Word& append(Letter a) {
    letters_.push_back(a);
    return *this;
  }

  /// Left concatenation x_a * this, i.e. the child of this node in the
  /// Hasse diagram along the edge colored a.
  Word prepended(Letter a) const {
    std::vector<Letter> out;
    out.reserve(letters_.size() + 1);
    out.push_back(a);
    out.insert(out.end(), letters_.begin(), letters_.end());
    return Word(std::move(out));
  }

  /// True iff `suffix` is a right factor of this word.
  bool ends_with(const Word& suffix) const {
    if (suffix.size() > size()) return false;
    return std::equal(suffix.letters_.begin(), suffix.letters_.end(),
                      letters_.end() - static_cast<std::ptrdiff_t>(suffix.size()));
  }

  friend Word operator*(const Word& lhs, const Word& rhs) {
    std::vector<Letter> out(lhs.letters_);
    out.insert(out.end(), rhs.letters_.begin(), rhs.letters_.end());
    return Word(std::move(out));
  }

  auto operator<=>(const Word&) const = default;
  bool operator==(const Word&) const = default;

 private:
  std::vector<Letter> letters_;
};

/// Renders as "x1x0"; the empty word renders as "e".
inline std::string to_string(const Word& w) {
  if (w.empty()) return "e";
  std::string out;
  for (Letter a : w.letters()) {
    out += 'x';
    out += std::to_string(static_cast<unsigned>(a));
  }
  return out;
}

inline Word parse_word(std::string_view text) {
  if (text == "e" || text.empty()) return {};
  std::vector<Letter> letters;
  std::size_t i = 0;
  while (i < text.size()) {
    if (text[i] != 'x') throw std::invalid_argument("malformed word: " + std::string(text));
    ++i;
    unsigned value = 0;
    std::size_t digits = 0;
    while (i < text.size() && text[i] >= '0' && text[i] <= '9') {
      value = value * 10 + static_cast<unsigned>(text[i] - '0');
      ++i;
      ++digits;
    }
    if (digits == 0 || value > 254) throw std::invalid_argument("malformed word: " + std::string(text));
    letters.push_back(static_cast<Letter>(value));
  }
  return Word(std::move(letters));
}

struct WordHash {
  std::size_t operator()(const Word& w) const noexcept {
    std::size_t h = 0xcbf29ce484222325ull;
    for (Letter a : w.letters()) {
      h ^= static_cast<std::size_t>(a) + 1;
      h *= 0x100000001b3ull;
    }
    return h ^ w.size();
  }
};

/// zeta ⪯ eta iff eta = gamma * zeta for some word gamma.
inline bool preceq(const Word& zeta, const Word& eta) { return eta.ends_with(zeta); }

/// Depth-first enumeration of X^{<=J}:
///   chi^0 = [e],  chi^{J+1} = [e, chi^J x_0, chi^J x_1, ..., chi^J x_m].
/// Fixes the index of every regressor, coefficient and S-matrix entry.
class OrderVector {
 public:
  OrderVector(Alphabet alphabet, std::size_t degree) : alphabet_(std::move(alphabet)), degree_(degree) {
    entries_ = {Word{}};
    for (std::size_t d = 0; d < degree_; ++d) {
      std::vector<Word> next;
      next.reserve(1 + alphabet_.size() * entries_.size());
      next.emplace_back();
      for (Letter a : alphabet_.letters()) {
        for (const Word& w : entries_) {
          Word extended = w;
          next.push_back(std::move(extended.append(a)));
        }
      }
      entries_ = std::move(next);
    }
    index_.reserve(entries_.size());
    for (std::size_t i = 0; i < entries_.size(); ++i) index_.emplace(entries_[i], i);
  }

  static std::shared_ptr<const OrderVector> make(const Alphabet& alphabet, std::size_t degree) {
    return std::make_shared<const OrderVector>(alphabet, degree);
  }

  const Alphabet& alphabet() const { return alphabet_; }
  std::size_t degree() const { return degree_; }
  std::size_t size() const { return entries_.size(); }
  const Word& operator[](std::size_t i) const { return entries_[i]; }
  const std::vector<Word>& entries() const { return entries_; }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  std::optional<std::size_t> find(const Word& w) const {
    auto it = index_.find(w);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  std::size_t index_of(const Word& w) const {
    auto found = find(w);
    if (!found) throw std::out_of_range("word not in order vector: " + to_string(w));
    return *found;
  }

  bool operator==(const OrderVector& other) const {
    return alphabet_ == other.alphabet_ && degree_ == other.degree_;
  }

 private:
  Alphabet alphabet_;
  std::size_t degree_;
  std::vector<Word> entries_;
  std::unordered_map<Word, std::size_t, WordHash> index_;
};

/// The Hasse diagram of (X*, ⪯) cut at a finite level: root e, the child of
/// eta along color k is x_k eta, leaves are exactly X^depth.
class ColoredTree {
 public:
  struct Node {
    Word label;
    Letter color = 0;  // color of the edge from the parent; unused at the root
    std::vector<Node> children;

    bool operator==(const Node&) const = default;
  };

  ColoredTree(Alphabet alphabet, std::size_t depth) : alphabet_(std::move(alphabet)), depth_(depth) {
    root_ = grow(Word{}, 0, depth_);
  }

  const Alphabet& alphabet() const { return alphabet_; }
  std::size_t depth() const { return depth_; }
  const Node& root() const { return root_; }

  std::size_t node_count() const { return count(root_); }

  std::vector<Word> leaves() const {
    std::vector<Word> out;
    collect_leaves(root_, out);
    return out;
  }

  /// C_i † C_j: every leaf beta of this tree is replaced by `rhs` with all of
  /// its labels right-concatenated with beta.
  ColoredTree dagger(const ColoredTree& rhs) const {
    if (!(alphabet_ == rhs.alphabet_)) throw std::invalid_argument("dagger: alphabet mismatch");
    ColoredTree out(alphabet_, depth_ + rhs.depth_, root_);
    substitute(out.root_, rhs.root_);
    return out;
  }

  bool operator==(const ColoredTree& other) const {
    return alphabet_ == other.alphabet_ && depth_ == other.depth_ && root_ == other.root_;
  }

 private:
  ColoredTree(Alphabet alphabet, std::size_t depth, Node root)
      : alphabet_(std::move(alphabet)), depth_(depth), root_(std::move(root)) {}

  Node grow(const Word& label, Letter color, std::size_t remaining) const {
    Node node{label, color, {}};
    if (remaining == 0) return node;
    node.children.reserve(alphabet_.size());
    for (Letter a : alphabet_.letters()) node.children.push_back(grow(label.prepended(a), a, remaining - 1));
    return node;
  }

  static Node relabel(const Node& node, const Word& beta) {
    Node out{node.label * beta, node.color, {}};
    out.children.reserve(node.children.size());
    for (const Node& child : node.children) out.children.push_back(relabel(child, beta));
    return out;
  }

  static void substitute(Node& node, const Node& graft) {
    if (node.children.empty()) {
      Letter color = node.color;
      node = relabel(graft, node.label);
      node.color = color;
      return;
    }
    for (Node& child : node.children) substitute(child, graft);
  }

  static std::size_t count(const Node& node) {
    std::size_t total = 1;
    for (const Node& child : node.children) total += count(child);
    return total;
  }

  static void collect_leaves(const Node& node, std::vector<Word>& out) {
    if (node.children.empty()) {
      out.push_back(node.label);
      return;
    }
    for (const Node& child : node.children) collect_leaves(child, out);
  }

  Alphabet alphabet_;
  std::size_t depth_;
  Node root_;
};

inline ColoredTree dagger(const ColoredTree& a, const ColoredTree& b) { return a.dagger(b); }

}  // namespace chenflow
