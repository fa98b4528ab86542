// SPDX-License-Identifier: Apache-2.0
#include "hybridnet/runtime.hpp"

#include "hybridnet/error.hpp"

namespace hybridnet {

namespace {

std::string iter_tag(const char* what, std::size_t k) { return std::string(what) + "[k=" + std::to_string(k) + "]"; }

template <typename T>
std::string shard_tag(const char* what, const ShardState<T>& s) {
  return std::string(what) + "[layer=" + std::to_string(s.layer) + ",n=" + std::to_string(s.calls) + "]";
}

Shape with_rows(const Shape& s, std::size_t rows) { return s.drop_front().prepend(rows); }

}  // namespace

std::size_t modulo_slot_owner(std::size_t b, std::size_t batch, std::size_t group_size, std::size_t i_proc,
                              std::size_t /*workers*/, bool gmp) {
  const std::size_t size = batch / group_size;
  if (!gmp) return b / size;
  const std::size_t gid = i_proc / group_size;
  return gid * group_size + b / size;
}

RowRange modulo_local_block(std::size_t k, std::size_t batch, std::size_t group_size) {
  const std::size_t size = batch / group_size;
  return {k * size, (k + 1) * size};
}

template <typename T>
ModuloState<T>::ModuloState(const Topology& topology, WorkerId self_id, std::size_t batch)
    : group(topology.group(topology.gid(self_id))),
      self(self_id),
      offset(topology.offset(self_id)),
      workers(topology.workers()),
      K(topology.group_size()),
      B(batch) {
  if (batch == 0 || batch % K != 0) {
    throw ConfigError("batch size " + std::to_string(batch) + " is not a positive multiple of MP group size " +
                      std::to_string(K));
  }
  size = B / K;
}

template <typename T>
Tensor<T> ModuloState<T>::take_gradient() {
  if (!gradient_ready()) {
    throw StateError("modulo: local gradient requested after " + std::to_string(blocks_done) + " of " +
                     std::to_string(K) + " iterations");
  }
  blocks_done = 0;
  return std::move(accumulator);
}

template <typename T>
ShardState<T>::ShardState(const Topology& topology, WorkerId self_id, std::size_t d, std::size_t d_full)
    : group(topology.group(topology.gid(self_id))),
      self(self_id),
      offset(topology.offset(self_id)),
      dim(d),
      dim_full(d_full) {
  std::size_t covered = 0;
  for (std::size_t o = 0; o < group.size(); ++o) {
    ranges.push_back({o * dim, (o + 1) * dim});
    covered += dim;
  }
  if (covered != dim_full) {
    throw PartitionError("shard ranges cover " + std::to_string(covered) + " of " + std::to_string(dim_full) +
                         " columns");
  }
}

template <typename T>
Tensor<T> modulo_fprop(ModuloState<T>& s, const Tensor<T>& local, Fabric<T>& fabric) {
  if (local.rank() < 2 || local.dim(0) != s.B) {
    throw ShapeError("modulo fprop: expected " + std::to_string(s.B) + " local examples, got " + local.shape().str());
  }
  if (s.fprop_pending) throw StateError("modulo fprop at k=" + std::to_string(s.k) + " twice without bprop");
  const RowRange mine = modulo_local_block(s.k, s.B, s.K);
  Tensor<T> block = local.slice_rows(mine.begin, mine.end);

  std::vector<Envelope<T>> sends;
  std::vector<Expect> expects;
  for (std::size_t o = 0; o < s.K; ++o) {
    const WorkerId peer = s.group[o];
    if (peer == s.self) continue;
    sends.push_back({s.self, peer, s.offset, block});
    expects.push_back({peer, o});
  }
  auto inbox = fabric.scatter_gather(s.group, s.self, Phase::ModuloFprop, iter_tag("modulo.fprop", s.k),
                                     std::move(sends), expects);

  Tensor<T> assembled(local.shape());
  for (std::size_t o = 0; o < s.K; ++o) {
    const std::size_t slot = o * s.size;
    const WorkerId owner = modulo_slot_owner(slot, s.B, s.K, s.self, s.workers, true);
    if (owner == s.self) {
      assembled.assign_rows(slot, block);
      continue;
    }
    for (const auto& e : inbox) {
      if (e.src == owner) {
        require_same_shape(e.payload.shape(), block.shape(), "modulo fprop block");
        assembled.assign_rows(slot, e.payload);
      }
    }
  }
  s.fprop_pending = true;
  return assembled;
}

template <typename T>
Tensor<T> modulo_bprop(ModuloState<T>& s, const Tensor<T>& upstream, Fabric<T>& fabric) {
  if (!s.fprop_pending) throw StateError("modulo bprop at k=" + std::to_string(s.k) + " without prior fprop");
  if (upstream.rank() < 2 || upstream.dim(0) != s.B) {
    throw ShapeError("modulo bprop: expected " + std::to_string(s.B) + " gradient rows, got " +
                     upstream.shape().str());
  }
  std::vector<Envelope<T>> sends;
  std::vector<Expect> expects;
  for (std::size_t o = 0; o < s.K; ++o) {
    const WorkerId peer = s.group[o];
    if (peer == s.self) continue;
    sends.push_back({s.self, peer, o, upstream.slice_rows(o * s.size, (o + 1) * s.size)});
    expects.push_back({peer, s.offset});
  }
  auto inbox = fabric.scatter_gather(s.group, s.self, Phase::ModuloBprop, iter_tag("modulo.bprop", s.k),
                                     std::move(sends), expects);

  const Tensor<T> own = upstream.slice_rows(s.offset * s.size, (s.offset + 1) * s.size);
  std::vector<const Tensor<T>*> parts;
  std::size_t next = 0;
  for (WorkerId w : s.group) parts.push_back(w == s.self ? &own : &inbox[next++].payload);
  Tensor<T> reduced = sum_in_order(parts);

  if (s.blocks_done == 0) s.accumulator = Tensor<T>(with_rows(upstream.shape(), s.B));
  s.accumulator.assign_rows(modulo_local_block(s.k, s.B, s.K).begin, reduced);
  ++s.blocks_done;
  s.fprop_pending = false;
  s.k = (s.k + 1) % s.K;
  return reduced;
}

template <typename T>
Tensor<T> shard_fprop(ShardState<T>& s, const Tensor<T>& partial, Fabric<T>& fabric) {
  if (partial.rank() != 2 || partial.dim(1) != s.dim) {
    throw ShapeError("shard fprop: expected (B, " + std::to_string(s.dim) + "), got " + partial.shape().str());
  }
  if (s.fprop_pending) throw StateError("shard fprop twice without bprop");
  std::vector<Envelope<T>> sends;
  std::vector<Expect> expects;
  for (std::size_t o = 0; o < s.group.size(); ++o) {
    const WorkerId peer = s.group[o];
    if (peer == s.self) continue;
    sends.push_back({s.self, peer, s.offset, partial});
    expects.push_back({peer, o});
  }
  auto inbox = fabric.scatter_gather(s.group, s.self, Phase::ShardFprop, shard_tag("shard.fprop", s),
                                     std::move(sends), expects);
  Tensor<T> full(Shape{partial.dim(0), s.dim_full});
  std::size_t next = 0;
  for (std::size_t o = 0; o < s.group.size(); ++o) {
    const Tensor<T>& part = s.group[o] == s.self ? partial : inbox[next++].payload;
    require_same_shape(part.shape(), partial.shape(), "shard fprop partition");
    full.assign_cols(s.ranges[o].begin, part);
  }
  s.fprop_pending = true;
  return full;
}

template <typename T>
Tensor<T> shard_bprop(ShardState<T>& s, const Tensor<T>& full_grad, Fabric<T>& fabric) {
  if (!s.fprop_pending) throw StateError("shard bprop without prior fprop");
  if (full_grad.rank() != 2 || full_grad.dim(1) != s.dim_full) {
    throw ShapeError("shard bprop: expected (B, " + std::to_string(s.dim_full) + "), got " +
                     full_grad.shape().str());
  }
  std::vector<Envelope<T>> sends;
  std::vector<Expect> expects;
  for (std::size_t o = 0; o < s.group.size(); ++o) {
    const WorkerId peer = s.group[o];
    if (peer == s.self) continue;
    sends.push_back({s.self, peer, o, full_grad.slice_cols(s.ranges[o].begin, s.ranges[o].end)});
    expects.push_back({peer, s.offset});
  }
  auto inbox = fabric.scatter_gather(s.group, s.self, Phase::ShardBprop, shard_tag("shard.bprop", s),
                                     std::move(sends), expects);
  const Tensor<T> own = full_grad.slice_cols(s.ranges[s.offset].begin, s.ranges[s.offset].end);
  std::vector<const Tensor<T>*> parts;
  std::size_t next = 0;
  for (WorkerId w : s.group) parts.push_back(w == s.self ? &own : &inbox[next++].payload);
  s.fprop_pending = false;
  ++s.calls;
  return sum_in_order(parts);
}

template <typename T>
Tensor<T> fc_gradient_scale(Tensor<T> grad, std::size_t group_size) {
  if (group_size == 1) return grad;
  const T k = static_cast<T>(group_size);
  for (auto& v : grad.data()) v /= k;
  return grad;
}

#define HYBRIDNET_INSTANTIATE(T)                                                       \
  template struct ModuloState<T>;                                                      \
  template struct ShardState<T>;                                                       \
  template Tensor<T> modulo_fprop(ModuloState<T>&, const Tensor<T>&, Fabric<T>&);      \
  template Tensor<T> modulo_bprop(ModuloState<T>&, const Tensor<T>&, Fabric<T>&);      \
  template Tensor<T> shard_fprop(ShardState<T>&, const Tensor<T>&, Fabric<T>&);        \
  template Tensor<T> shard_bprop(ShardState<T>&, const Tensor<T>&, Fabric<T>&);        \
  template Tensor<T> fc_gradient_scale(Tensor<T>, std::size_t);

HYBRIDNET_INSTANTIATE(float)
HYBRIDNET_INSTANTIATE(double)

#undef HYBRIDNET_INSTANTIATE

}  // namespace hybridnet
