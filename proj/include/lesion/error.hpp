#pragma once

#include <stdexcept>
#include <string>

namespace lesion {

// Malformed or inconsistent input data (lexicon, corpus, volumes, checkpoints).
// The CLI maps this to exit code 2.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class OntologyError : public DataError {
 public:
  OntologyError(const std::string& label, const std::string& what)
      : DataError(what + " (label \"" + label + "\")"), label_(label) {}

  const std::string& label() const noexcept { return label_; }

 private:
  std::string label_;
};

class ConfigError : public DataError {
 public:
  using DataError::DataError;
};

// Non-finite loss or parameters during optimisation.
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace lesion
