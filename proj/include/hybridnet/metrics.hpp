// SPDX-License-Identifier: Apache-2.0
//
// Parameter memory per worker and the closed-form communication volume of a
// hybrid run, plus the exact comparison of that model with measured fabric
// counters.
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "hybridnet/comm_stats.hpp"
#include "hybridnet/layer_spec.hpp"
#include "hybridnet/partitioner.hpp"

namespace hybridnet {

struct LayerWeights {
  std::string name;
  LayerKind kind = LayerKind::Conv;
  std::size_t weights = 0;
};

/// Weight-only counts (biases excluded).
struct MemoryReport {
  std::vector<LayerWeights> layers;
  std::size_t conv_total = 0;
  std::size_t fc_total = 0;
  std::size_t total = 0;
  /// fc_total / total in percent.
  double fc_share = 0.0;
  std::size_t group_size = 1;
  /// conv_total + fc_total / K.
  std::size_t per_worker = 0;
  /// 1 - per_worker / total in percent.
  double savings = 0.0;
};

/// Throws PartitionError when K does not divide fc_total.
MemoryReport memory_report(const LayerSpec& root, std::size_t group_size);

/// Weights actually held by one worker under `plan`, split by side.
struct WorkerWeights {
  std::size_t conv = 0;
  std::size_t fc = 0;
};
WorkerWeights worker_weights(const PartitionedNet& plan);

/// Columns: layer,kind,weights then subtotal rows, then one row per K.
void write_memory_csv(std::ostream& os, const LayerSpec& root, const std::vector<std::size_t>& group_sizes);

/// Predicted counters of every worker for a run of `steps` train steps.
struct VolumeModel {
  std::size_t workers = 1;
  std::size_t group_size = 1;
  std::size_t batch = 1;
  std::size_t avg_period = 1;
  std::size_t steps = 1;
  /// [worker][phase]
  std::vector<std::array<Counters, kPhaseCount>> counters;

  Counters at(Phase phase, WorkerId worker) const { return counters.at(worker)[static_cast<std::size_t>(phase)]; }
  Counters total(Phase phase) const;
  /// Sum of scalars sent over the MODULO and SHARD phases by all workers.
  std::uint64_t mp_scalars() const;
};

/// Closed forms for the peer-to-peer schedule, per worker and step:
///   MODULO fprop and bprop: K (K-1) messages, (K-1) B F scalars each way;
///   SHARD fprop, per iteration: K-1 messages, sends B d (K-1), receives
///   B (F-d); bprop swaps the directions;
///   DP_AVG, per averaging round: (N-1) P_conv + (N/K-1) P_fc scalars.
/// `plan` is any offset's plan (all offsets have the same widths).
VolumeModel predict_volume(const PartitionedNet& plan, std::size_t batch, std::size_t group_size,
                           std::size_t workers, std::size_t avg_period, std::size_t steps = 1);

struct ReconcileRow {
  Phase phase = Phase::DpAvg;
  WorkerId worker = 0;
  Counters predicted;
  Counters measured;
  bool match() const { return predicted == measured; }
};

struct ReconcileReport {
  std::vector<ReconcileRow> rows;
  std::uint64_t cross_group_mp_scalars = 0;
  bool ok() const;
  /// Failing rows name the phase, worker and the delta of each counter.
  std::string text() const;
};

ReconcileReport reconcile(const VolumeModel& model, const CommStats& stats, const Topology& topology);

/// phase,worker,messages,scalars_sent,scalars_received for every row of a
/// model; used for volume_by_phase.csv.
void write_volume_csv(std::ostream& os, const std::vector<VolumeModel>& models);

}  // namespace hybridnet
