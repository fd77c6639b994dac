#include "lesion/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <map>
#include <stdexcept>

#include "lesion/error.hpp"
#include "lesion/parallel.hpp"
#include "lesion/rng.hpp"

namespace lesion {

void validate(const LesionRecord& r) {
  if (r.lesion_id.empty()) throw DataError("record has an empty lesion_id");
  if (r.patient_id.empty()) throw DataError("record " + r.lesion_id + " has an empty patient_id");
  if (!r.bbox_mm.valid()) throw DataError("record " + r.lesion_id + " has a degenerate bbox");
  for (const auto& b : r.sentence.bookmark_spans) {
    if (b.begin > b.end || b.end > r.sentence.text.size()) {
      throw DataError("record " + r.lesion_id + " has a bookmark span outside the sentence");
    }
  }
}

Corpus build_corpus(std::span<const LesionRecord> records, const Ontology& o, unsigned threads) {
  Corpus corpus(records.size());
  parallel_for(records.size(), threads, [&](std::size_t i) {
    corpus[i].record = records[i];
    corpus[i].labels = mine_sentence(records[i].sentence, o);
  });
  return corpus;
}

Split patient_split(const Corpus& corpus, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw std::invalid_argument("test_fraction must lie in (0, 1)");
  }
  std::map<std::string, std::size_t> lesions_per_patient;
  for (const auto& e : corpus) ++lesions_per_patient[e.record.patient_id];
  if (lesions_per_patient.size() < 2) {
    throw DataError("patient split needs at least 2 distinct patients");
  }

  std::vector<std::string> patients;
  for (const auto& [id, n] : lesions_per_patient) patients.push_back(id);
  Rng rng(seed);
  rng.shuffle(std::span(patients));

  const auto target = static_cast<long>(std::llround(test_fraction * static_cast<double>(corpus.size())));
  std::map<std::string, bool> in_test;
  long test_count = 0;
  for (const auto& p : patients) {
    const long n = static_cast<long>(lesions_per_patient[p]);
    const bool take = std::labs(test_count + n - target) < std::labs(test_count - target);
    in_test[p] = take;
    if (take) test_count += n;
  }
  // Both sides must be non-empty.
  if (test_count == 0) {
    in_test[patients.front()] = true;
  } else if (test_count == static_cast<long>(corpus.size())) {
    in_test[patients.back()] = false;
  }

  Split out;
  for (const auto& e : corpus) {
    (in_test[e.record.patient_id] ? out.test : out.train).push_back(e);
  }
  return out;
}

LabelStats label_stats(std::span<const LabelVector> train) {
  LabelStats st;
  if (train.empty()) return st;
  const std::size_t k = train.front().size();
  st.n_pos.assign(k, 0);
  st.n_neg.assign(k, 0);
  for (const auto& y : train) {
    if (y.size() != k) throw std::invalid_argument("label vectors differ in length");
    for (std::size_t c = 0; c < k; ++c) (y[c] ? st.n_pos : st.n_neg)[c]++;
  }
  return st;
}

LabelStats label_stats(const Corpus& train) {
  std::vector<LabelVector> ys;
  ys.reserve(train.size());
  for (const auto& e : train) ys.push_back(e.labels);
  return label_stats(ys);
}

LabelVector LabelSelection::apply(const LabelVector& full) const {
  LabelVector out(kept.size());
  for (std::size_t i = 0; i < kept.size(); ++i) out[i] = full.at(kept[i]);
  return out;
}

LabelSelection filter_labels(const Corpus& test, const Ontology& o, std::size_t min_count,
                             const Corpus* train, std::size_t min_train_count) {
  std::vector<std::size_t> test_pos(o.size(), 0), train_pos(o.size(), 0);
  for (const auto& e : test) {
    for (std::size_t c = 0; c < o.size(); ++c) test_pos[c] += e.labels.at(c);
  }
  if (train) {
    for (const auto& e : *train) {
      for (std::size_t c = 0; c < o.size(); ++c) train_pos[c] += e.labels.at(c);
    }
  }
  LabelSelection sel;
  for (std::size_t c = 0; c < o.size(); ++c) {
    if (test_pos[c] <= min_count) continue;
    if (train && train_pos[c] <= min_train_count) continue;
    sel.kept.push_back(static_cast<LabelId>(c));
  }
  if (sel.kept.empty()) {
    throw DataError("no label has more than " + std::to_string(min_count) + " test positives");
  }
  return sel;
}

std::optional<LabelVector> truth_vector(const LesionRecord& r, const Ontology& o) {
  if (!r.truth_labels) return std::nullopt;
  LabelSet ids;
  for (const auto& name : *r.truth_labels) {
    auto id = o.find(name);
    if (!id) throw DataError("record " + r.lesion_id + ": unknown truth label \"" + name + "\"");
    ids.insert(*id);
  }
  return to_label_vector(o.expand(ids), o.size());
}

}  // namespace lesion
