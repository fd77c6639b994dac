#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lesion/loss.hpp"
#include "lesion/model.hpp"
#include "lesion/synth.hpp"
#include "lesion/train.hpp"

namespace lesion {

// `key = value` lines; `#` starts a comment. Relative path values are
// resolved against the directory of the file that set them.
class KeyValues {
 public:
  void load_file(const std::filesystem::path& path);
  void set(const std::string& key, const std::string& value, const std::filesystem::path& base = {});
  // "key=value" from the command line; paths resolve against the cwd.
  void set_override(const std::string& assignment);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  std::optional<std::string> get(const std::string& key) const;
  std::filesystem::path base_of(const std::string& key) const;
  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
  std::map<std::string, std::filesystem::path> bases_;
};

struct EvalOptions {
  std::size_t k = 5;
  std::size_t min_count = 5;        // test positives must exceed this
  std::size_t min_train_count = 0;  // training positives must exceed this
  bool use_truth = true;            // score against truth_labels when records carry them
};

struct RunConfig {
  std::filesystem::path lexicon;
  std::filesystem::path train_corpus, test_corpus;
  std::filesystem::path train_patches, test_patches;  // empty: build from volume_ref
  double split_test_fraction = 0.2;
  std::uint64_t split_seed = 0;
  SynthConfig synth;
  NetworkConfig network;
  std::uint64_t init_seed = 0;
  LossConfig loss;
  Schedule schedule;
  EvalOptions eval;
  unsigned threads = 1;

  // Unknown keys and malformed values throw ConfigError.
  static RunConfig from(const KeyValues& kv);
  // Canonical `key = value` text covering every field (paths as given).
  std::string to_text() const;
};

}  // namespace lesion
