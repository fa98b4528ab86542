// SPDX-License-Identifier: Apache-2.0
//
// Hybrid data/model-parallel training of one network on N worker threads
// forming N/K model-parallel groups of K.
#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

#include "hybridnet/fabric.hpp"
#include "hybridnet/network.hpp"
#include "hybridnet/partitioner.hpp"
#include "hybridnet/runtime.hpp"

namespace hybridnet {

struct SessionOptions {
  std::size_t workers = 1;
  /// MP group size K.
  std::size_t group_size = 1;
  /// Local mini-batch B per worker.
  std::size_t batch = 1;
  /// DP averaging every this many train steps.
  std::size_t avg_period = 1;
  double ccr_threshold = 0.0;
  bool mp_enabled = true;
  double learning_rate = 0.01;
  std::uint64_t seed = 0;
  bool dropout = true;
  /// When false, gradients accumulate unscaled and nothing is updated or
  /// averaged (deferred-update mode).
  bool apply_updates = true;
};

template <typename T>
struct WorkerBatch {
  /// (B, input...) images.
  Tensor<T> images;
  std::vector<std::size_t> labels;
};

struct StepResult {
  /// Mean loss over the batches this worker ran its top layer on.
  std::vector<double> loss;
  /// Wall-clock seconds each worker spent in the step.
  std::vector<double> seconds;
};

/// The executable network of one worker: the replicated stack below the
/// MODULO layer and the (partly split) stack above it.
template <typename T>
struct WorkerModel {
  struct UpperItem {
    std::unique_ptr<Layer<T>> layer;
    std::optional<ShardState<T>> shard;
    /// SHARD only: its consumer is replicated, so every member back-propagates
    /// the same full gradient and the reduction must average instead of sum.
    bool replicated_consumer = false;
    /// Layer sees this worker's slice of a split activation.
    bool partitioned = false;
  };

  WorkerModel(const PartitionedNet& plan, const Topology& topology, WorkerId self, std::size_t batch,
              std::uint64_t seed);

  WorkerId self;
  const PartitionedNet* plan;
  LayerStack<T> lower;
  std::optional<ModuloState<T>> modulo;
  std::vector<UpperItem> upper;

  std::vector<Parameter<T>*> lower_parameters() { return lower.parameters(); }
  std::vector<Parameter<T>*> upper_parameters();
  /// The compute layer built from user leaf `origin`, or nullptr.
  Layer<T>* find(std::size_t origin);
};

template <typename T>
class Session {
 public:
  /// Validates the options, partitions the network for every group offset
  /// and builds the workers. Throws ConfigError or PartitionError.
  Session(const LayerSpec& root, const Shape& input, SessionOptions options);

  /// One training step; `batches` holds one local batch per worker. Worker
  /// failures abort the fabric and the first root-cause error is rethrown.
  StepResult train_step(const std::vector<WorkerBatch<T>>& batches);

  /// Clears every gradient on every worker.
  void zero_grad();

  /// Full network of group `gid` with values and gradients copied in: split
  /// FC layers are stacked from the group members, replicated layers come
  /// from `lower_from` (default: the group's first member).
  Network<T> assemble(std::size_t gid, std::optional<WorkerId> lower_from = std::nullopt) const;

  const SessionOptions& options() const { return options_; }
  const Topology& topology() const { return fabric_->topology(); }
  Fabric<T>& fabric() { return *fabric_; }
  const CommStats& stats() const { return fabric_->stats(); }
  const PartitionedNet& plan(std::size_t offset) const { return plans_.at(offset); }
  WorkerModel<T>& worker(WorkerId w) { return *workers_.at(w); }
  std::size_t step() const { return step_; }

 private:
  double run_worker(WorkerId w, const std::vector<WorkerBatch<T>>& batches);
  void average(WorkerId w);

  LayerSpec root_;
  Shape input_;
  SessionOptions options_;
  std::unique_ptr<Fabric<T>> fabric_;
  std::vector<PartitionedNet> plans_;
  std::vector<std::unique_ptr<WorkerModel<T>>> workers_;
  std::size_t step_ = 0;
  bool broken_ = false;
};

}  // namespace hybridnet
