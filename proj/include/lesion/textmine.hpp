#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "lesion/ontology.hpp"

namespace lesion {

struct CharSpan {
  std::size_t begin = 0;
  std::size_t end = 0;  // exclusive

  friend bool operator==(const CharSpan&, const CharSpan&) = default;
};

// A report sentence with the positions of its bookmark (hyperlink) markers.
struct Sentence {
  std::string text;
  std::vector<CharSpan> bookmark_spans;

  // Marks every case-insensitive occurrence of the literal "BOOKMARK" token.
  static Sentence from_text(std::string text);
};

struct Token {
  std::string surface;
  std::string lemma;
  CharSpan span;
  bool marker = false;  // bookmark token; never part of a match
};

struct TermMatch {
  LabelId label = 0;
  std::size_t first_token = 0;
  std::size_t last_token = 0;  // exclusive

  friend bool operator==(const TermMatch&, const TermMatch&) = default;
};

struct MatchResult {
  LabelSet label_ids;
  std::vector<TermMatch> matches;
};

using LabelVector = std::vector<std::uint8_t>;

// Splits on whitespace and punctuation. Runs of letters/digits form tokens;
// a '.' or ',' between two digits stays inside a numeric token ("2.1").
// Bytes >= 0x80 are treated as letters so UTF-8 words are kept intact.
std::vector<Token> tokenize(std::string_view text);

// Exception table first, then suffix rules: -ies -> -y, -es -> "" after
// ss/x/z/ch/sh, -s -> "" unless the word ends in ss/us/is. Idempotent.
std::string lemmatize(std::string_view token);

void lemmatize_all(std::vector<Token>& tokens);

// Space-joined lemmas of a lexicon term; the key used for matching.
std::string term_key(std::string_view term);

// Greedy left-to-right scan taking the longest lexicon term at each start.
MatchResult match_labels(const std::vector<Token>& tokens, const Ontology& o);

LabelVector to_label_vector(const LabelSet& ids, std::size_t k);
LabelSet from_label_vector(const LabelVector& y);

LabelSet mine_labels(const Sentence& s, const Ontology& o);
LabelVector mine_sentence(const Sentence& s, const Ontology& o);

}  // namespace lesion
