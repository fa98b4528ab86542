// SPDX-License-Identifier: Apache-2.0
//
// Run configuration. Files hold one `key = value` per line, `#` starts a
// comment. Keys: workers, mp, batch, avg_period, ccr_threshold, lr, epochs,
// steps, seed, scalar (32|64|float|double), net, dataset, mode, out.
#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "hybridnet/models.hpp"
#include "hybridnet/partitioner.hpp"

namespace hybridnet {

enum class Mode { Train, OracleCheck, PlanOnly, VolumeSweep };

const char* to_string(Mode mode);
Mode parse_mode(const std::string& text);

struct DatasetSpec {
  enum class Kind { Synthetic, Cifar10Binary };
  Kind kind = Kind::Synthetic;
  std::string path;
  /// Synthetic only.
  std::size_t num_examples = 2048;
  double noise = 1.0;
};

/// "synthetic", "synthetic:<n>", "synthetic:<n>:<noise>" or "cifar10:<path>".
DatasetSpec parse_dataset(const std::string& text);

struct RunConfig {
  std::size_t workers = 1;
  /// MP group size K.
  std::size_t mp = 1;
  std::size_t batch = 8;
  std::size_t avg_period = 1;
  double ccr_threshold = 0.0;
  double lr = 0.05;
  std::size_t epochs = 1;
  /// When nonzero, overrides epochs.
  std::size_t steps = 0;
  std::uint64_t seed = 1;
  std::size_t scalar_bits = 32;
  std::string net = "toy";
  std::string dataset = "synthetic";
  std::string out = "hybridnet-out";
  Mode mode = Mode::Train;
};

/// Sets one key. Throws ConfigError for an unknown key or a malformed value.
void apply_setting(RunConfig& config, const std::string& key, const std::string& value);

/// Applies every line of a key=value stream on top of `config`. Errors carry
/// the line number.
void read_config(std::istream& in, RunConfig& config);
/// Throws FormatError when the file cannot be opened.
void read_config_file(const std::string& path, RunConfig& config);

struct ValidatedRun {
  ModelSpec model;
  DatasetSpec dataset;
  /// One plan per group offset.
  std::vector<PartitionedNet> plans;
};

/// Checks every runtime precondition before anything runs: K divides N and
/// B, positive sizes, a known scalar width, a loadable model whose partition
/// succeeds at every offset, a dataset matching the model input. Throws
/// ConfigError (or PartitionError from the partitioner).
ValidatedRun validate(const RunConfig& config);

/// Human-readable dump, one key per line.
std::string describe(const RunConfig& config);

}  // namespace hybridnet
