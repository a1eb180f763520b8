#pragma once

#include <stdexcept>
#include <string>

namespace hindicap {

// Base of every error raised by the library. The CLI maps these onto exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ArgumentError : public Error {
 public:
  using Error::Error;
};

class LoadError : public Error {
 public:
  using Error::Error;
};

// Corrupt, truncated or inconsistent on-disk data.
class IntegrityError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class VocabularyError : public Error {
 public:
  VocabularyError(const std::string& what, std::string word)
      : Error(what), word_(std::move(word)) {}
  const std::string& word() const { return word_; }

 private:
  std::string word_;
};

class TrainingError : public Error {
 public:
  using Error::Error;
};

} // namespace hindicap
