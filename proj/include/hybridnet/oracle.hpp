// SPDX-License-Identifier: Apache-2.0
//
// Deferred-update equivalence check. One train step runs with updates and
// dropout off, then the hybrid execution's gradients are compared with the
// single unpartitioned network:
//   conv side: worker i's gradients vs the single model on worker i's batch;
//   FC side:   the group's split gradients stacked by row range, accumulated
//              over the K modulo iterations and divided by K, vs the single
//              model on the union of the group's batches.
#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "hybridnet/models.hpp"

namespace hybridnet {

struct OracleCase {
  std::size_t workers = 2;
  std::size_t group_size = 2;
  std::size_t batch = 4;
  std::uint64_t seed = 0;
  double ccr_threshold = 0.0;
};

struct OracleReport {
  OracleCase config;
  /// Max relative error over the conv-side parameters, per worker.
  std::vector<double> conv_error;
  /// Max relative error over the FC-side parameters, per group.
  std::vector<double> fc_error;
  /// Parameters compared on each side of one worker.
  std::size_t conv_tensors = 0;
  std::size_t fc_tensors = 0;

  double max_conv_error() const;
  double max_fc_error() const;
  bool passed(double tolerance) const { return max_conv_error() <= tolerance && max_fc_error() <= tolerance; }
  std::string summary() const;
};

/// Runs the check in 64-bit arithmetic on random inputs derived from the
/// case seed.
OracleReport check_deferred_equivalence(const ModelSpec& model, const OracleCase& config);

}  // namespace hybridnet
