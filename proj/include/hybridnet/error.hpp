// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace hybridnet {

/// Root of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor extents disagree with what an operation requires.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A value is outside the domain an operation accepts (bad keep-prob, bad label).
class ValueError : public Error {
 public:
  using Error::Error;
};

/// Network transformation cannot be carried out (partitioned input into a conv,
/// non-divisible shard).
class PartitionError : public Error {
 public:
  using Error::Error;
};

/// A collective could not complete: inconsistent metadata, aborted fabric.
class FabricError : public Error {
 public:
  using Error::Error;
};

/// Operation invoked out of protocol order (bprop without fprop).
class StateError : public Error {
 public:
  using Error::Error;
};

/// Invalid run configuration; detected before any worker starts.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed input file.
class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace hybridnet
