#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace lyricdet {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A caller violated an operation's precondition (empty input, single class, ...).
class PreconditionError : public Error {
 public:
  using Error::Error;
};

class AudioError : public Error {
 public:
  using Error::Error;
};

/// Audio shorter than the minimum duration a transcriber accepts.
class EmptyAudioError : public AudioError {
 public:
  using AudioError::AudioError;
};

class BackendError : public Error {
 public:
  using Error::Error;
};

class EncoderError : public Error {
 public:
  using Error::Error;
};

/// Model/cache file has an unknown schema version or fails its checksum.
class FormatError : public Error {
 public:
  using Error::Error;
};

struct ItemFailure {
  std::string id;
  std::string message;
};

/// Aggregate of per-item failures from a batch operation.
class BatchError : public Error {
 public:
  BatchError(const std::string& what, std::vector<ItemFailure> failures)
      : Error(what), failures_(std::move(failures)) {}

  const std::vector<ItemFailure>& failures() const noexcept { return failures_; }

 private:
  std::vector<ItemFailure> failures_;
};

}  // namespace lyricdet
