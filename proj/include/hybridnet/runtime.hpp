// SPDX-License-Identifier: Apache-2.0
//
// The two communication layers of a model-parallel group.
//
// MODULO sits between the replicated conv stack and the split FC stack. Each
// worker holds B local examples; iteration k of K broadcasts the block
// [k*B/K, (k+1)*B/K) of every member so that all members run the FC stack on
// the same assembled batch of B examples, member o's block in slots
// [o*B/K, (o+1)*B/K). In bprop the gradients of each block are summed over
// the members and returned to the block's owner.
//
// SHARD reassembles the full width of a row-split FC output (fprop) and sums
// the members' gradients for this worker's columns (bprop).
#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "hybridnet/fabric.hpp"
#include "hybridnet/partitioner.hpp"
#include "hybridnet/tensor.hpp"
#include "hybridnet/topology.hpp"

namespace hybridnet {

/// Worker that owns slot b of the assembled batch seen by worker i_proc.
/// Without GMP (one group, K == N) the owner is b / (B/K); with GMP it is
/// gid*K + b / (B/K), always inside the caller's group.
std::size_t modulo_slot_owner(std::size_t b, std::size_t batch, std::size_t group_size, std::size_t i_proc,
                              std::size_t workers, bool gmp);

/// Local example rows [begin, end) broadcast at modulo iteration k.
RowRange modulo_local_block(std::size_t k, std::size_t batch, std::size_t group_size);

template <typename T>
struct ModuloState {
  /// Throws ConfigError unless K divides the batch.
  ModuloState(const Topology& topology, WorkerId self, std::size_t batch);

  std::vector<WorkerId> group;
  WorkerId self = 0;
  std::size_t offset = 0;
  std::size_t workers = 1;
  std::size_t K = 1;
  std::size_t B = 0;
  std::size_t size = 0;
  std::size_t k = 0;
  bool fprop_pending = false;
  /// Reduced gradients of the local batch, filled block by block.
  Tensor<T> accumulator;
  std::size_t blocks_done = 0;

  /// True once all K blocks of the local gradient are in the accumulator.
  bool gradient_ready() const { return blocks_done == K; }
  /// Hands out the full local-batch gradient and resets for the next step.
  Tensor<T> take_gradient();
};

template <typename T>
struct ShardState {
  ShardState(const Topology& topology, WorkerId self, std::size_t dim, std::size_t dim_full);

  std::vector<WorkerId> group;
  WorkerId self = 0;
  std::size_t offset = 0;
  std::size_t dim = 0;
  std::size_t dim_full = 0;
  /// Column range of every member, in offset order.
  std::vector<RowRange> ranges;
  /// Position in the transformed network; only used to label collectives.
  std::size_t layer = 0;
  bool fprop_pending = false;
  std::size_t calls = 0;
};

/// Assembled batch for the current iteration. `local` is the (B, ...) conv
/// output of this worker.
template <typename T>
Tensor<T> modulo_fprop(ModuloState<T>& state, const Tensor<T>& local, Fabric<T>& fabric);

/// Reduced gradient (B/K, ...) of this worker's block for the current
/// iteration; also stored into the accumulator. Advances k.
template <typename T>
Tensor<T> modulo_bprop(ModuloState<T>& state, const Tensor<T>& upstream, Fabric<T>& fabric);

template <typename T>
Tensor<T> shard_fprop(ShardState<T>& state, const Tensor<T>& partial, Fabric<T>& fabric);

/// Sum over all members of their full_grad restricted to this worker's
/// columns.
template <typename T>
Tensor<T> shard_bprop(ShardState<T>& state, const Tensor<T>& full_grad, Fabric<T>& fabric);

/// grad / K elementwise.
template <typename T>
Tensor<T> fc_gradient_scale(Tensor<T> grad, std::size_t group_size);

}  // namespace hybridnet
