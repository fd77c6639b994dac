#include "lesion/textmine.hpp"

#include <algorithm>
#include <cctype>
#include <unordered_map>

namespace lesion {

namespace {

bool is_word_byte(unsigned char c) { return std::isalnum(c) != 0 || c >= 0x80; }

bool is_digit(unsigned char c) { return std::isdigit(c) != 0; }

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

bool all_alpha(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) {
    return std::isalpha(static_cast<unsigned char>(c)) != 0;
  });
}

// Every value must itself be a fixed point of lemmatize().
const std::unordered_map<std::string_view, std::string_view>& exceptions() {
  static const std::unordered_map<std::string_view, std::string_view> table = {
      {"masses", "mass"},
      {"metastases", "metastasis"},
      {"calcifications", "calcification"},
      {"analyses", "analysis"},
      {"diagnoses", "diagnosis"},
      {"stenoses", "stenosis"},
      {"axes", "axis"},
      {"bases", "base"},
      {"foci", "focus"},
      {"bronchi", "bronchus"},
      {"calculi", "calculus"},
      {"hila", "hilum"},
      {"vertebrae", "vertebra"},
      {"diverticula", "diverticulum"},
      {"indices", "index"},
      {"appendices", "appendix"},
      {"pancreas", "pancreas"},
      {"gas", "gas"},
      {"lymphadenopathies", "lymphadenopathy"},
      {"ovaries", "ovary"},
  };
  return table;
}

}  // namespace

Sentence Sentence::from_text(std::string text) {
  Sentence s;
  s.text = std::move(text);
  for (const auto& tok : tokenize(s.text)) {
    if (tok.marker) s.bookmark_spans.push_back(tok.span);
  }
  return s;
}

std::vector<Token> tokenize(std::string_view text) {
  std::vector<Token> tokens;
  std::size_t i = 0;
  const auto at = [&](std::size_t k) { return static_cast<unsigned char>(text[k]); };
  while (i < text.size()) {
    if (!is_word_byte(at(i))) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < text.size()) {
      if (is_word_byte(at(j))) {
        ++j;
      } else if ((text[j] == '.' || text[j] == ',') && j > i && is_digit(at(j - 1)) &&
                 j + 1 < text.size() && is_digit(at(j + 1))) {
        ++j;
      } else {
        break;
      }
    }
    Token t;
    t.surface = std::string(text.substr(i, j - i));
    t.span = {i, j};
    t.marker = lower(t.surface) == "bookmark";
    tokens.push_back(std::move(t));
    i = j;
  }
  return tokens;
}

namespace {

std::string strip_suffix(std::string w) {
  if (!all_alpha(w)) return w;
  if (w.size() > 4 && ends_with(w, "ies")) return w.substr(0, w.size() - 3) + "y";
  if (w.size() > 3 && ends_with(w, "es")) {
    const std::string_view stem = std::string_view(w).substr(0, w.size() - 2);
    if (ends_with(stem, "ss") || ends_with(stem, "x") || ends_with(stem, "z") ||
        ends_with(stem, "ch") || ends_with(stem, "sh")) {
      return std::string(stem);
    }
  }
  if (w.size() > 3 && ends_with(w, "s") && !ends_with(w, "ss") && !ends_with(w, "us") &&
      !ends_with(w, "is")) {
    return w.substr(0, w.size() - 1);
  }
  return w;
}

}  // namespace

std::string lemmatize(std::string_view token) {
  const auto& table = exceptions();
  std::string w = lower(token);
  if (auto it = table.find(w); it != table.end()) return std::string(it->second);
  w = strip_suffix(std::move(w));
  // A stripped form can land on a table key ("vertebraes" -> "vertebrae").
  if (auto it = table.find(w); it != table.end()) return std::string(it->second);
  return w;
}

void lemmatize_all(std::vector<Token>& tokens) {
  for (auto& t : tokens) t.lemma = lemmatize(t.surface);
}

std::string term_key(std::string_view term) {
  std::string key;
  for (const auto& t : tokenize(term)) {
    if (!key.empty()) key.push_back(' ');
    key += lemmatize(t.surface);
  }
  return key;
}

MatchResult match_labels(const std::vector<Token>& tokens, const Ontology& o) {
  MatchResult result;
  const auto& index = o.term_index();
  std::size_t i = 0;
  while (i < tokens.size()) {
    std::size_t matched = 0;
    LabelId label = 0;
    std::string key;
    for (std::size_t len = 1; len <= o.max_term_tokens() && i + len <= tokens.size(); ++len) {
      const Token& t = tokens[i + len - 1];
      if (t.marker) break;
      if (len > 1) key.push_back(' ');
      key += t.lemma.empty() ? lemmatize(t.surface) : t.lemma;
      if (auto it = index.find(key); it != index.end()) {
        matched = len;
        label = it->second;
      }
    }
    if (matched == 0) {
      ++i;
      continue;
    }
    result.label_ids.insert(label);
    result.matches.push_back({label, i, i + matched});
    i += matched;
  }
  return result;
}

LabelVector to_label_vector(const LabelSet& ids, std::size_t k) {
  LabelVector y(k, 0);
  for (LabelId id : ids) y.at(id) = 1;
  return y;
}

LabelSet from_label_vector(const LabelVector& y) {
  LabelSet out;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i]) out.insert(static_cast<LabelId>(i));
  }
  return out;
}

LabelSet mine_labels(const Sentence& s, const Ontology& o) {
  auto tokens = tokenize(s.text);
  for (auto& t : tokens) {
    for (const auto& b : s.bookmark_spans) {
      if (t.span.begin >= b.begin && t.span.end <= b.end) t.marker = true;
    }
  }
  lemmatize_all(tokens);
  return o.expand(match_labels(tokens, o).label_ids);
}

LabelVector mine_sentence(const Sentence& s, const Ontology& o) {
  return to_label_vector(mine_labels(s, o), o.size());
}

}  // namespace lesion
