#include "lesion/ontology.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <functional>
#include <sstream>

#include "lesion/error.hpp"
#include "lesion/textmine.hpp"

namespace lesion {

std::string_view to_string(Category c) {
  switch (c) {
    case Category::body_part:
      return "body_part";
    case Category::finding_type:
      return "finding_type";
    case Category::attribute:
      return "attribute";
  }
  return "?";
}

std::optional<Category> parse_category(std::string_view s) {
  if (s == "body_part") return Category::body_part;
  if (s == "finding_type" || s == "type") return Category::finding_type;
  if (s == "attribute") return Category::attribute;
  return std::nullopt;
}

namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

bool is_punct(char c) { return std::ispunct(static_cast<unsigned char>(c)) != 0; }

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.emplace_back(s.substr(start, pos == std::string_view::npos ? pos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

}  // namespace

std::string normalize_term(std::string_view term) {
  std::string out;
  std::size_t i = 0;
  while (i < term.size()) {
    while (i < term.size() && is_space(term[i])) ++i;
    std::size_t j = i;
    while (j < term.size() && !is_space(term[j])) ++j;
    std::size_t b = i, e = j;
    while (b < e && is_punct(term[b])) ++b;
    while (e > b && is_punct(term[e - 1])) --e;
    if (b < e) {
      if (!out.empty()) out.push_back(' ');
      for (std::size_t k = b; k < e; ++k) {
        out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(term[k]))));
      }
    }
    i = j;
  }
  return out;
}

Ontology Ontology::build(std::vector<Entry> entries) {
  if (entries.empty()) throw OntologyError("", "ontology has no labels");

  Ontology o;
  o.labels_.reserve(entries.size());
  for (std::size_t i = 0; i < entries.size(); ++i) {
    LabelDef def;
    def.id = static_cast<LabelId>(i);
    def.name = normalize_term(entries[i].name);
    def.category = entries[i].category;
    if (def.name.empty()) throw OntologyError(entries[i].name, "empty label name");
    if (!o.by_name_.emplace(def.name, def.id).second) {
      throw OntologyError(def.name, "duplicate label name");
    }
    for (const auto& syn : entries[i].synonyms) {
      auto n = normalize_term(syn);
      if (n.empty() || n == def.name) continue;
      if (std::find(def.synonyms.begin(), def.synonyms.end(), n) == def.synonyms.end()) {
        def.synonyms.push_back(std::move(n));
      }
    }
    o.labels_.push_back(std::move(def));
  }

  // Names and synonyms share one namespace, both as written and after
  // lemmatisation (the form actually matched).
  std::unordered_map<std::string, LabelId> surface;
  for (const auto& def : o.labels_) {
    auto claim = [&](std::unordered_map<std::string, LabelId>& index, const std::string& key,
                     const std::string& term) {
      auto [it, inserted] = index.emplace(key, def.id);
      if (!inserted && it->second != def.id) {
        throw OntologyError(def.name, "synonym \"" + term + "\" already belongs to label \"" +
                                          o.labels_[it->second].name + "\"");
      }
    };
    auto add = [&](const std::string& term) {
      claim(surface, term, term);
      const auto key = term_key(term);
      if (key.empty()) throw OntologyError(def.name, "term \"" + term + "\" has no tokens");
      claim(o.term_index_, key, term);
      const auto n_tokens = static_cast<std::size_t>(std::count(key.begin(), key.end(), ' ')) + 1;
      o.max_term_tokens_ = std::max(o.max_term_tokens_, n_tokens);
    };
    add(def.name);
    for (const auto& syn : def.synonyms) add(syn);
  }

  for (std::size_t i = 0; i < entries.size(); ++i) {
    auto& def = o.labels_[i];
    for (const auto& p : entries[i].parents) {
      const auto name = normalize_term(p);
      if (name.empty()) continue;
      auto it = o.by_name_.find(name);
      if (it == o.by_name_.end()) {
        throw OntologyError(def.name, "parent \"" + name + "\" is not defined");
      }
      if (it->second == def.id) throw OntologyError(def.name, "label is its own parent");
      if (std::find(def.parents.begin(), def.parents.end(), it->second) == def.parents.end()) {
        def.parents.push_back(it->second);
      }
    }
  }

  // Three-colour DFS for cycles.
  std::vector<int> colour(o.labels_.size(), 0);
  std::function<void(LabelId)> visit = [&](LabelId id) {
    colour[id] = 1;
    for (LabelId p : o.labels_[id].parents) {
      if (colour[p] == 1) {
        throw OntologyError(o.labels_[id].name,
                            "parent cycle through \"" + o.labels_[p].name + "\"");
      }
      if (colour[p] == 0) visit(p);
    }
    colour[id] = 2;
  };
  for (const auto& def : o.labels_) {
    if (colour[def.id] == 0) visit(def.id);
  }
  return o;
}

std::optional<LabelId> Ontology::find(std::string_view name) const {
  auto it = by_name_.find(normalize_term(name));
  if (it == by_name_.end()) return std::nullopt;
  return it->second;
}

LabelSet Ontology::ancestors(LabelId id) const {
  LabelSet out;
  std::vector<LabelId> stack(label(id).parents);
  while (!stack.empty()) {
    const LabelId p = stack.back();
    stack.pop_back();
    if (out.insert(p).second) {
      for (LabelId q : labels_[p].parents) stack.push_back(q);
    }
  }
  return out;
}

LabelSet Ontology::expand(const LabelSet& ids) const {
  LabelSet out = ids;
  for (LabelId id : ids) out.merge(ancestors(id));
  return out;
}

std::size_t Ontology::depth() const {
  std::vector<std::size_t> memo(labels_.size(), SIZE_MAX);
  std::function<std::size_t(LabelId)> d = [&](LabelId id) -> std::size_t {
    if (memo[id] != SIZE_MAX) return memo[id];
    std::size_t best = 0;
    for (LabelId p : labels_[id].parents) best = std::max(best, d(p) + 1);
    return memo[id] = best;
  };
  std::size_t best = 0;
  for (const auto& def : labels_) best = std::max(best, d(def.id));
  return best;
}

std::vector<LabelId> Ontology::children(LabelId id) const {
  std::vector<LabelId> out;
  for (const auto& def : labels_) {
    if (std::find(def.parents.begin(), def.parents.end(), id) != def.parents.end()) {
      out.push_back(def.id);
    }
  }
  return out;
}

Ontology parse_ontology(std::istream& in) {
  std::vector<Ontology::Entry> entries;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;
    auto cols = split(line, '\t');
    if (cols.size() < 2 || cols.size() > 4) {
      throw DataError("lexicon line " + std::to_string(line_no) + ": expected 2-4 tab-separated columns");
    }
    cols.resize(4);
    Ontology::Entry e;
    e.name = cols[0];
    const auto cat = parse_category(normalize_term(cols[1]));
    if (!cat) {
      throw OntologyError(normalize_term(cols[0]), "unknown category \"" + cols[1] +
                                                       "\" on line " + std::to_string(line_no));
    }
    e.category = *cat;
    for (auto& s : split(cols[2], '|')) {
      if (!normalize_term(s).empty()) e.synonyms.push_back(std::move(s));
    }
    for (auto& p : split(cols[3], '|')) {
      if (!normalize_term(p).empty()) e.parents.push_back(std::move(p));
    }
    entries.push_back(std::move(e));
  }
  return Ontology::build(std::move(entries));
}

Ontology load_ontology(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open lexicon " + path.string());
  return parse_ontology(in);
}

void write_ontology(std::ostream& out, const Ontology& o) {
  out << "# name\tcategory\tsynonyms\tparents\n";
  for (const auto& def : o.labels()) {
    out << def.name << '\t' << to_string(def.category) << '\t';
    for (std::size_t i = 0; i < def.synonyms.size(); ++i) out << (i ? "|" : "") << def.synonyms[i];
    out << '\t';
    for (std::size_t i = 0; i < def.parents.size(); ++i) {
      out << (i ? "|" : "") << o.label(def.parents[i]).name;
    }
    out << '\n';
  }
}

}  // namespace lesion
