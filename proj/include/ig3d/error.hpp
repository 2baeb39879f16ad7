#pragma once

#include <stdexcept>
#include <string>

namespace ig3d {

/// Bad input: invalid arguments, malformed files, violated invariants.
/// The CLI maps these to exit code 2.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Failure while running an otherwise valid request (divergence, I/O,
/// non-finite state). The CLI maps these to exit code 3.
class RuntimeFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class OutOfBoundsError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class ShapeMismatchError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// Errors raised while talking to a score provider.
class ProviderError : public RuntimeFailure {
 public:
  enum class Kind { kTransport, kProtocolVersion, kShape, kServer, kBackend };

  ProviderError(Kind kind, const std::string& what) : RuntimeFailure(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

class DatasetError : public ValidationError {
 public:
  enum class Kind { kMissingFile, kMalformedManifest, kInvalidPose };

  DatasetError(Kind kind, const std::string& what) : ValidationError(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

}  // namespace ig3d
