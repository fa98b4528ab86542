// SPDX-License-Identifier: Apache-2.0
#include "hybridnet/partitioner.hpp"

#include <iomanip>
#include <sstream>

#include "hybridnet/error.hpp"

namespace hybridnet {

namespace {

void push(PartitionedNet& net, LayerSpec layer, std::size_t origin, const Shape& in, const Shape& out) {
  net.layers.push_back(std::move(layer));
  net.origin.push_back(origin);
  net.input_shapes.push_back(in);
  net.output_shapes.push_back(out);
}

std::string label(const LayerSpec& layer) {
  return std::string(to_string(layer.kind())) + (layer.name.empty() ? "" : " '" + layer.name + "'");
}

}  // namespace

std::optional<std::size_t> PartitionedNet::modulo_index() const {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].kind() == LayerKind::Modulo) return i;
  }
  return std::nullopt;
}

std::vector<std::size_t> PartitionedNet::shard_indices() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].kind() == LayerKind::Shard) out.push_back(i);
  }
  return out;
}

std::vector<std::size_t> PartitionedNet::transformed(std::size_t origin_index) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < origin.size(); ++i) {
    if (origin[i] == origin_index) out.push_back(i);
  }
  return out;
}

RowRange PartitionedNet::owned_rows(std::size_t index) const {
  const auto& layer = layers.at(index);
  if (layer.kind() == LayerKind::Linear) {
    const auto& l = layer.as<LinearSpec>();
    return {l.row_offset, l.row_offset + l.out_dim};
  }
  const std::size_t width = output_shapes.at(index).numel();
  return {0, width};
}

std::vector<RowRange> PartitionedNet::shard_member_ranges(std::size_t index) const {
  const auto& s = layers.at(index).as<ShardSpec>();
  std::vector<RowRange> ranges;
  for (std::size_t m = 0; m < group_size; ++m) ranges.push_back({m * s.dim, (m + 1) * s.dim});
  return ranges;
}

double ccr(const LinearSpec& layer, std::size_t batch, std::size_t group_size) {
  const double ops = 3.0 * static_cast<double>(batch) * static_cast<double>(layer.in_dim) *
                     static_cast<double>(layer.full_out);
  if (ops == 0.0) return 0.0;
  if (group_size <= 1) return std::numeric_limits<double>::infinity();
  const double k = static_cast<double>(group_size);
  const double scalars = 2.0 * static_cast<double>(batch) * static_cast<double>(layer.in_dim) * (k - 1.0) / k;
  return ops / scalars;
}

LayerSpec split_linear(const LayerSpec& layer, std::size_t group_size, std::size_t offset) {
  if (layer.kind() != LayerKind::Linear) throw PartitionError("split_linear: " + label(layer) + " is not LINEAR");
  if (group_size == 0 || offset >= group_size) {
    throw PartitionError("split_linear: offset " + std::to_string(offset) + " outside group of " +
                         std::to_string(group_size));
  }
  if (group_size == 1) return layer;
  const auto& l = layer.as<LinearSpec>();
  if (l.is_split()) throw PartitionError("split_linear: " + label(layer) + " is already partitioned");
  if (l.out_dim % group_size != 0) {
    throw PartitionError("cannot split " + label(layer) + ": out_dim " + std::to_string(l.out_dim) +
                         " is not divisible by MP group size " + std::to_string(group_size));
  }
  const std::size_t rows = l.out_dim / group_size;
  LayerSpec out = layer;
  out.params = LinearSpec{l.in_dim, rows, l.out_dim, offset * rows};
  return out;
}

void partition(const LayerSpec& layer, PartitionContext& ctx, PartitionedNet& net) {
  const std::size_t k = ctx.group_size;
  switch (layer.kind()) {
    case LayerKind::Seq:
      for (const auto& child : layer.as<SeqSpec>().children) partition(child, ctx, net);
      return;

    case LayerKind::Reshape:
    case LayerKind::Pad:
    case LayerKind::Conv:
    case LayerKind::Pooling: {
      if (ctx.partitioned()) {
        throw PartitionError("Partitioned input unsupported: " + label(layer) + " receives partitioned input " +
                             ctx.dim.str() + " of " + ctx.dim_full.str());
      }
      const Shape in = ctx.dim;
      ctx.dim = ctx.dim_full = output_shape(layer, in);
      push(net, layer, ctx.next_origin++, in, ctx.dim);
      return;
    }

    case LayerKind::Dropout:
    case LayerKind::Relu: {
      const Shape in = ctx.dim;
      ctx.dim = output_shape(layer, in);
      push(net, layer, ctx.next_origin++, in, ctx.dim);
      return;
    }

    case LayerKind::Linear: {
      LayerSpec current = layer;
      const auto& spec = layer.as<LinearSpec>();
      // The layer must accept the full width whichever branch runs.
      output_shape(layer, ctx.dim_full);
      const bool mp = ctx.mp_enabled && k > 1;
      if (!ctx.partitioned()) {
        if (mp && ccr(spec, ctx.batch, k) > ctx.ccr_threshold) {
          if (!ctx.modulo_inserted) {
            push(net, LayerSpec::modulo(ctx.dim_full.numel()), kInserted, ctx.dim_full, ctx.dim_full);
            ctx.modulo_inserted = true;
          }
          current = split_linear(layer, k, ctx.offset);
        }
      } else {
        const std::size_t part = ctx.dim.numel();
        const std::size_t full = ctx.dim_full.numel();
        if (part * k != full) {
          throw PartitionError("SHARD before " + label(layer) + ": partition width " + std::to_string(part) + " x " +
                               std::to_string(k) + " does not cover " + std::to_string(full));
        }
        push(net, LayerSpec::shard(part, full), kInserted, ctx.dim, ctx.dim_full);
        if (ccr(spec, ctx.batch, k) > ctx.ccr_threshold) current = split_linear(layer, k, ctx.offset);
      }
      const Shape in = ctx.dim_full;
      ctx.dim_full = Shape{spec.out_dim};
      ctx.dim = Shape{current.as<LinearSpec>().out_dim};
      push(net, std::move(current), ctx.next_origin++, in, ctx.dim);
      return;
    }

    case LayerKind::LogSoftmax: {
      if (ctx.partitioned()) {
        const std::size_t part = ctx.dim.numel();
        const std::size_t full = ctx.dim_full.numel();
        if (part * k != full) throw PartitionError("SHARD before LOG_SOFTMAX does not cover the full width");
        push(net, LayerSpec::shard(part, full), kInserted, ctx.dim, ctx.dim_full);
        ctx.dim = ctx.dim_full;
      }
      const Shape in = ctx.dim;
      ctx.dim = ctx.dim_full = output_shape(layer, in);
      push(net, layer, ctx.next_origin++, in, ctx.dim);
      return;
    }

    case LayerKind::Modulo:
    case LayerKind::Shard:
      throw PartitionError(label(layer) + " cannot appear in a user network");
  }
}

PartitionedNet partition_network(const LayerSpec& root, const Shape& input, const PartitionOptions& options) {
  if (options.group_size == 0) throw PartitionError("MP group size must be positive");
  if (options.offset >= options.group_size) throw PartitionError("worker offset outside its MP group");
  PartitionContext ctx;
  ctx.dim = input;
  ctx.dim_full = input;
  ctx.group_size = options.group_size;
  ctx.mp_enabled = options.mp_enabled;
  ctx.ccr_threshold = options.ccr_threshold;
  ctx.batch = options.batch;
  ctx.offset = options.offset;
  PartitionedNet net;
  net.input = input;
  net.group_size = options.group_size;
  net.offset = options.offset;
  net.ccr_threshold = options.ccr_threshold;
  partition(root, ctx, net);
  if (ctx.partitioned()) {
    throw PartitionError("network ends with a partitioned output " + ctx.dim.str() + " of " + ctx.dim_full.str() +
                         "; the last layer must see the full width");
  }
  return net;
}

std::string plan_report(const PartitionedNet& net) {
  std::ostringstream os;
  os << "partition plan: MP group size K=" << net.group_size << ", worker offset " << net.offset
     << ", ccr threshold " << net.ccr_threshold << '\n';
  os << std::left << std::setw(5) << "idx" << std::setw(13) << "kind" << std::setw(10) << "layer" << std::setw(16)
     << "input" << std::setw(16) << "output" << "detail\n";
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const auto& layer = net.layers[i];
    std::string detail;
    if (net.origin[i] == kInserted) {
      detail = "inserted: " + describe(layer);
      if (layer.kind() == LayerKind::Shard) {
        const auto r = net.shard_member_ranges(i);
        detail += ", owns cols [" + std::to_string(r[net.offset].begin) + "," + std::to_string(r[net.offset].end) + ")";
      }
    } else {
      detail = describe(layer);
    }
    os << std::left << std::setw(5) << i << std::setw(13) << to_string(layer.kind()) << std::setw(10)
       << (layer.name.empty() ? "-" : layer.name) << std::setw(16) << net.input_shapes[i].str() << std::setw(16)
       << net.output_shapes[i].str() << detail << '\n';
  }
  return os.str();
}

}  // namespace hybridnet
