#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lesion/ontology.hpp"
#include "lesion/textmine.hpp"

namespace lesion {

// Axis-aligned box, x0 < x1 and y0 < y1.
struct Box {
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;

  double width() const { return x1 - x0; }
  double height() const { return y1 - y0; }
  double center_x() const { return 0.5 * (x0 + x1); }
  double center_y() const { return 0.5 * (y0 + y1); }
  bool valid() const { return x0 < x1 && y0 < y1; }

  friend bool operator==(const Box&, const Box&) = default;
};

struct LesionRecord {
  std::string lesion_id;
  std::string patient_id;
  Sentence sentence;
  // Millimetres in the record's image frame: the patch frame for patch-file
  // corpora, the volume's physical in-plane frame when volume_ref is set.
  Box bbox_mm;
  double slice_mm = 0.0;
  std::optional<std::string> volume_ref;
  // Complete label names (synthetic corpora only).
  std::optional<std::vector<std::string>> truth_labels;
};

// Throws DataError when a record breaks the LesionRecord invariants.
void validate(const LesionRecord& r);

struct CorpusEntry {
  LesionRecord record;
  LabelVector labels;
};

using Corpus = std::vector<CorpusEntry>;

Corpus build_corpus(std::span<const LesionRecord> records, const Ontology& o, unsigned threads = 1);

struct Split {
  Corpus train;
  Corpus test;
};

// Patient-disjoint split. Patients are shuffled with `seed` and assigned to
// the test side greedily whenever that moves the test lesion count closer to
// round(test_fraction * N). Entries keep their corpus order on both sides.
Split patient_split(const Corpus& corpus, double test_fraction, std::uint64_t seed);

struct LabelStats {
  std::vector<std::size_t> n_pos;
  std::vector<std::size_t> n_neg;

  std::size_t size() const { return n_pos.size(); }
};

LabelStats label_stats(std::span<const LabelVector> train);
LabelStats label_stats(const Corpus& train);

// Retained labels, in increasing original-id order.
struct LabelSelection {
  std::vector<LabelId> kept;

  std::size_t size() const { return kept.size(); }
  LabelVector apply(const LabelVector& full) const;
};

// Keeps labels whose positive count in `test` is strictly greater than
// min_count. When `train` is given, a label must also have more than
// min_train_count training positives. Throws DataError if nothing survives.
LabelSelection filter_labels(const Corpus& test, const Ontology& o, std::size_t min_count,
                             const Corpus* train = nullptr, std::size_t min_train_count = 0);

// Resolves truth_labels to an ancestor-closed vector; nullopt when absent.
std::optional<LabelVector> truth_vector(const LesionRecord& r, const Ontology& o);

}  // namespace lesion
