#pragma once

#include <cstdint>
#include <vector>

#include "lesion/dataset.hpp"
#include "lesion/io.hpp"
#include "lesion/ontology.hpp"

namespace lesion {

struct SynthConfig {
  std::size_t n_labels = 40;
  std::size_t n_train = 5000;
  std::size_t n_test = 1000;
  double missing_rate = 0.3;
  double spurious_rate = 0.05;
  std::uint64_t seed = 0;

  void validate() const;  // throws ConfigError
};

struct SynthStats {
  std::size_t leaves = 0;    // truth leaf labels over all records
  std::size_t dropped = 0;   // leaves not mentioned themselves
  std::size_t replaced = 0;  // subset of dropped mentioned through a parent
  std::size_t spurious = 0;  // records with an irrelevant label mention

  double dropped_fraction() const { return leaves ? static_cast<double>(dropped) / static_cast<double>(leaves) : 0.0; }
};

struct SynthCorpus {
  Ontology ontology;
  std::vector<LesionRecord> train, test;  // patient-disjoint
  PatchStore train_patches, test_patches;  // aligned with the records
  SynthStats stats;
};

// Number of labels in the built-in radiology vocabulary the generator draws from.
std::size_t synth_vocabulary_size();

// Layered ontology (regions -> organs -> sub-parts, coarse and organ-specific
// finding types, attributes) with the n most common labels of the vocabulary.
Ontology synth_ontology(std::size_t n_labels);

// Each lesion gets a complete ground-truth label set. Its sentence mentions
// each truth leaf with probability 1 - missing_rate, its parent with
// probability missing_rate / 2 and nothing otherwise, plus one irrelevant
// label with probability spurious_rate. The rendered patch encodes the truth
// deterministically: region in the background level, organ in a texture
// orientation, sub-part in a landmark position, finding type in blob shape
// and size, attributes in intensity, edge, spicules, calcification, rim.
SynthCorpus synth_generate(const SynthConfig& cfg);

}  // namespace lesion
