#pragma once

#include <stdexcept>
#include <string>

namespace prefpo {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A caller violated an operation's precondition.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

/// A persisted document could not be decoded into a domain value.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Gateway errors.
class TransportError : public Error {
 public:
  using Error::Error;
};
class AuthError : public Error {
 public:
  using Error::Error;
};
class MalformedResponse : public Error {
 public:
  using Error::Error;
};
/// Non-retryable HTTP status other than 401/403.
class RequestRejected : public Error {
 public:
  using Error::Error;
};
class ScriptExhausted : public Error {
 public:
  using Error::Error;
};

/// Structured model output could not be parsed (judge verdicts, optimizer JSON).
class ParseError : public Error {
 public:
  using Error::Error;
};

class EmptyCriteria : public PreconditionError {
 public:
  using PreconditionError::PreconditionError;
};
class MismatchedSamples : public PreconditionError {
 public:
  using PreconditionError::PreconditionError;
};
class TemplateError : public Error {
 public:
  using Error::Error;
};

// Engine errors.
class PoolTooSmall : public PreconditionError {
 public:
  using PreconditionError::PreconditionError;
};
class UnknownPromptId : public Error {
 public:
  using Error::Error;
};
class VariantGenerationFailed : public Error {
 public:
  using Error::Error;
};
class AbortedRun : public Error {
 public:
  using Error::Error;
};

// Evaluation errors.
class UnknownKind : public Error {
 public:
  using Error::Error;
};
class MissingValidation : public PreconditionError {
 public:
  using PreconditionError::PreconditionError;
};
class MissingScore : public Error {
 public:
  using Error::Error;
};

// Statistics errors.
class EmptyInput : public PreconditionError {
 public:
  using PreconditionError::PreconditionError;
};
class TooFewValues : public PreconditionError {
 public:
  using PreconditionError::PreconditionError;
};
class EmptySeed : public PreconditionError {
 public:
  using PreconditionError::PreconditionError;
};

}  // namespace prefpo
