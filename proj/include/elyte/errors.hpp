#pragma once

#include <stdexcept>
#include <string>

namespace elyte {

// Base for everything thrown by this library.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad user input (malformed strings, files, configs). CLI exit code 1.
struct ValidationError : Error {
  using Error::Error;
};

// Bugs and broken environment assumptions. CLI exit code 2.
struct InternalError : Error {
  using Error::Error;
};

// smiles
struct SyntaxError : ValidationError {
  using ValidationError::ValidationError;
};
struct ValenceError : ValidationError {
  using ValidationError::ValidationError;
};

// selfies
struct TokenGrammarError : ValidationError {
  using ValidationError::ValidationError;
};
struct UnsupportedFeatureError : ValidationError {
  using ValidationError::ValidationError;
};

// tokenizer
struct EmptyCorpusError : ValidationError {
  using ValidationError::ValidationError;
};
struct IdOutOfRangeError : ValidationError {
  using ValidationError::ValidationError;
};
struct NothingToMaskError : ValidationError {
  using ValidationError::ValidationError;
};

// transformer
struct ConfigError : ValidationError {
  using ValidationError::ValidationError;
};
struct SequenceTooLongError : ValidationError {
  using ValidationError::ValidationError;
};
struct EmptySequenceError : ValidationError {
  using ValidationError::ValidationError;
};

// featurizer
struct FractionSumError : ValidationError {
  using ValidationError::ValidationError;
};
struct MissingTargetError : ValidationError {
  using ValidationError::ValidationError;
};

// gbt
struct DimensionMismatchError : ValidationError {
  using ValidationError::ValidationError;
};
struct EmptyInputError : ValidationError {
  using ValidationError::ValidationError;
};

// pipeline
struct SchemaError : ValidationError {
  using ValidationError::ValidationError;
};
struct InconsistentTargetError : ValidationError {
  using ValidationError::ValidationError;
};
struct FractionError : ValidationError {
  using ValidationError::ValidationError;
};
struct TooFewSamplesError : ValidationError {
  using ValidationError::ValidationError;
};
struct EmptyReportError : ValidationError {
  using ValidationError::ValidationError;
};
struct IoError : ValidationError {
  using ValidationError::ValidationError;
};

}  // namespace elyte
