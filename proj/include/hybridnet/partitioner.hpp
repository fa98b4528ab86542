// SPDX-License-Identifier: Apache-2.0
//
// Automatic transformation of a sequential CNN into the per-worker network of
// a model-parallel group. The walk tracks two per-example shapes: the
// partitioned shape this worker holds and the full shape the unpartitioned
// network would hold. Qualifying FC layers are split by output rows across the
// K group members, a MODULO layer is inserted before the first split, and a
// SHARD layer before any layer that needs the full width of a split output.
#pragma once

#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "hybridnet/layer_spec.hpp"

namespace hybridnet {

inline constexpr std::size_t kInserted = std::numeric_limits<std::size_t>::max();

struct PartitionOptions {
  /// MP group size K.
  std::size_t group_size = 1;
  bool mp_enabled = true;
  /// FC layers are split only when ccr() exceeds this value.
  double ccr_threshold = 0.0;
  /// Mini-batch size B used by the CCR estimate.
  std::size_t batch = 1;
  /// This worker's position inside its group, 0..K-1.
  std::size_t offset = 0;
};

struct PartitionContext {
  /// Per-example shape of the previous output as held by this worker.
  Shape dim;
  /// Per-example shape the unpartitioned network would produce.
  Shape dim_full;
  std::size_t group_size = 1;
  bool mp_enabled = true;
  double ccr_threshold = 0.0;
  std::size_t batch = 1;
  std::size_t offset = 0;
  /// Leaf index of the next user layer.
  std::size_t next_origin = 0;
  bool modulo_inserted = false;

  bool partitioned() const { return dim != dim_full; }
};

/// Half-open output-row range [begin, end).
struct RowRange {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const { return end - begin; }
  friend bool operator==(const RowRange&, const RowRange&) = default;
};

struct PartitionedNet {
  std::vector<LayerSpec> layers;
  /// Leaf index in the user network, or kInserted for MODULO/SHARD.
  std::vector<std::size_t> origin;
  /// Per-example shapes seen by this worker.
  std::vector<Shape> input_shapes;
  std::vector<Shape> output_shapes;
  Shape input;
  std::size_t group_size = 1;
  std::size_t offset = 0;
  double ccr_threshold = 0.0;

  std::size_t size() const { return layers.size(); }
  std::optional<std::size_t> modulo_index() const;
  std::vector<std::size_t> shard_indices() const;
  /// Transformed positions of a user leaf (empty if absent).
  std::vector<std::size_t> transformed(std::size_t origin_index) const;
  /// Rows of the full output owned by this worker for the layer at `index`
  /// (the whole range for unsplit layers).
  RowRange owned_rows(std::size_t index) const;
  /// Column range of each group member for the SHARD at `index`.
  std::vector<RowRange> shard_member_ranges(std::size_t index) const;
};

/// Computation-to-communication ratio of splitting a FC layer K ways at
/// batch B. Numerator: fprop plus both bprop products, 3 * B * in * out
/// multiply-adds. Denominator: scalars this worker exchanges for the layer's
/// input (scatter + gather of B * in * (K-1)/K in each direction), which is
/// the same for the MODULO and the SHARD case. Returns 0 for an empty layer
/// and +inf when K == 1.
double ccr(const LinearSpec& layer, std::size_t batch, std::size_t group_size);

/// Rows [offset * out/K, (offset+1) * out/K) of `layer`, keeping the full
/// input width. Throws PartitionError if out_dim is not divisible by K.
LayerSpec split_linear(const LayerSpec& layer, std::size_t group_size, std::size_t offset);

/// One step of the transformation; recurses through SEQ.
void partition(const LayerSpec& layer, PartitionContext& ctx, PartitionedNet& net);

/// Transforms a whole user network for one worker offset.
PartitionedNet partition_network(const LayerSpec& root, const Shape& input, const PartitionOptions& options);

/// Human-readable layer table: kind, shapes, owned rows, inserted layers.
std::string plan_report(const PartitionedNet& net);

}  // namespace hybridnet
