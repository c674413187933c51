#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace unetkit {

// Base class for every error the toolkit raises on purpose.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Shape/axis mismatch between tensors or between a tensor and an operation.
struct DimensionError : Error {
  using Error::Error;
};

// Invalid argument values (thresholds out of range, non-binary targets, ...).
struct ValueError : Error {
  using Error::Error;
};

// Bad run configuration: unusable ratios, empty splits, malformed key=value files.
struct ConfigError : Error {
  using Error::Error;
};

// Dataset layout problems: unpaired stems, duplicate stems, missing directories.
struct ManifestError : Error {
  using Error::Error;
};

// Filesystem failures: unreadable/unwritable paths, undecodable images.
struct IoError : Error {
  using Error::Error;
};

// Artifact incompatibility: wrong magic, unsupported version, schema mismatch.
struct FormatError : Error {
  using Error::Error;
};

// Truncated or damaged artifact; carries the byte offset where reading failed.
struct CorruptionError : FormatError {
  CorruptionError(const std::string& msg, std::size_t byte_offset)
      : FormatError(msg + " (at byte offset " + std::to_string(byte_offset) + ")"),
        offset(byte_offset) {}
  std::size_t offset;
};

// Non-finite values where finite ones are required (NaN loss, Inf gradient).
struct NumericError : Error {
  using Error::Error;
};

}  // namespace unetkit
