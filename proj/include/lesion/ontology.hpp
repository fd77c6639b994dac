#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace lesion {

using LabelId = std::uint32_t;
using LabelSet = std::set<LabelId>;

enum class Category { body_part, finding_type, attribute };

std::string_view to_string(Category c);
std::optional<Category> parse_category(std::string_view s);

struct LabelDef {
  LabelId id = 0;
  std::string name;
  Category category = Category::body_part;
  std::vector<std::string> synonyms;  // excludes the name itself
  std::vector<LabelId> parents;
};

// Lowercases, collapses whitespace and strips punctuation at token
// boundaries: "  Ground-Glass  Opacity, " -> "ground-glass opacity".
std::string normalize_term(std::string_view term);

// Hierarchical label lexicon. Immutable after construction; ids follow
// definition order.
class Ontology {
 public:
  struct Entry {
    std::string name;
    Category category = Category::body_part;
    std::vector<std::string> synonyms;
    std::vector<std::string> parents;
  };

  // Validates and indexes. Throws OntologyError on an empty list, duplicate
  // names/synonyms, dangling parents or parent cycles.
  static Ontology build(std::vector<Entry> entries);

  std::size_t size() const noexcept { return labels_.size(); }
  const LabelDef& label(LabelId id) const { return labels_.at(id); }
  std::span<const LabelDef> labels() const noexcept { return labels_; }
  std::optional<LabelId> find(std::string_view name) const;

  // Index from lemmatized term (space-joined lemmas) to label id; covers
  // names and synonyms.
  const std::unordered_map<std::string, LabelId>& term_index() const noexcept {
    return term_index_;
  }
  std::size_t max_term_tokens() const noexcept { return max_term_tokens_; }

  // Transitive parents, excluding the label itself.
  LabelSet ancestors(LabelId id) const;
  // Smallest ancestor-closed superset.
  LabelSet expand(const LabelSet& ids) const;

  // Longest parent chain (a root has depth 0).
  std::size_t depth() const;
  std::vector<LabelId> children(LabelId id) const;

 private:
  std::vector<LabelDef> labels_;
  std::unordered_map<std::string, LabelId> by_name_;
  std::unordered_map<std::string, LabelId> term_index_;
  std::size_t max_term_tokens_ = 0;
};

Ontology load_ontology(const std::filesystem::path& path);
Ontology parse_ontology(std::istream& in);
void write_ontology(std::ostream& out, const Ontology& o);

}  // namespace lesion
