// SPDX-License-Identifier: Apache-2.0
#include "hybridnet/session.hpp"

#include <chrono>
#include <exception>
#include <mutex>
#include <string>
#include <thread>

#include "hybridnet/error.hpp"
#include "hybridnet/kernels.hpp"

namespace hybridnet {

namespace {

template <typename T>
Tensor<T> pack(const std::vector<Parameter<T>*>& params) {
  std::size_t total = 0;
  for (auto* p : params) total += p->value.size();
  std::vector<T> flat;
  flat.reserve(total);
  for (auto* p : params) flat.insert(flat.end(), p->value.data().begin(), p->value.data().end());
  return Tensor<T>(Shape{total}, std::move(flat));
}

template <typename T>
void unpack(const Tensor<T>& flat, const std::vector<Parameter<T>*>& params) {
  std::size_t at = 0;
  for (auto* p : params) {
    auto dst = p->value.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = flat[at++];
  }
}

template <typename T>
std::size_t count(const std::vector<Parameter<T>*>& params) {
  std::size_t n = 0;
  for (auto* p : params) n += p->value.size();
  return n;
}

}  // namespace

template <typename T>
WorkerModel<T>::WorkerModel(const PartitionedNet& p, const Topology& topology, WorkerId w, std::size_t batch,
                            std::uint64_t seed)
    : self(w), plan(&p) {
  const auto modulo_at = p.modulo_index();
  const std::size_t split_from = modulo_at ? *modulo_at : p.size();
  for (std::size_t i = 0; i < split_from; ++i) {
    lower.push(make_layer<T>(p.layers[i], p.origin[i], layer_init_seed(seed, p.origin[i])));
  }
  if (!modulo_at) return;
  modulo.emplace(topology, w, batch);
  bool partitioned = false;
  for (std::size_t i = split_from + 1; i < p.size(); ++i) {
    const auto& spec = p.layers[i];
    UpperItem item;
    if (spec.kind() == LayerKind::Shard) {
      const auto& s = spec.as<ShardSpec>();
      item.shard.emplace(topology, w, s.dim, s.dim_full);
      item.shard->layer = i;
      const bool next_split = i + 1 < p.size() && p.layers[i + 1].kind() == LayerKind::Linear &&
                              p.layers[i + 1].as<LinearSpec>().is_split();
      item.replicated_consumer = !next_split;
      partitioned = false;
    } else {
      if (spec.kind() == LayerKind::Modulo) throw PartitionError("second MODULO layer at position " + std::to_string(i));
      item.layer = make_layer<T>(spec, p.origin[i], layer_init_seed(seed, p.origin[i]));
      if (spec.kind() == LayerKind::Linear) partitioned = spec.as<LinearSpec>().is_split();
      item.partitioned = partitioned;
    }
    upper.push_back(std::move(item));
  }
}

template <typename T>
std::vector<Parameter<T>*> WorkerModel<T>::upper_parameters() {
  std::vector<Parameter<T>*> out;
  for (auto& item : upper) {
    if (!item.layer) continue;
    for (auto& p : item.layer->parameters()) out.push_back(&p);
  }
  return out;
}

template <typename T>
Layer<T>* WorkerModel<T>::find(std::size_t origin) {
  for (std::size_t i = 0; i < lower.size(); ++i) {
    if (lower[i].origin() == origin) return &lower[i];
  }
  for (auto& item : upper) {
    if (item.layer && item.layer->origin() == origin) return item.layer.get();
  }
  return nullptr;
}

template <typename T>
Session<T>::Session(const LayerSpec& root, const Shape& input, SessionOptions options)
    : root_(root), input_(input), options_(options) {
  Topology topology(options_.workers, options_.group_size);
  const std::size_t k = options_.group_size;
  if (options_.batch == 0 || options_.batch % k != 0) {
    throw ConfigError("batch size " + std::to_string(options_.batch) + " is not a positive multiple of MP group size " +
                      std::to_string(k));
  }
  if (options_.avg_period == 0) throw ConfigError("averaging period must be at least 1");
  fabric_ = std::make_unique<Fabric<T>>(topology);
  for (std::size_t o = 0; o < k; ++o) {
    PartitionOptions po;
    po.group_size = k;
    po.mp_enabled = options_.mp_enabled;
    po.ccr_threshold = options_.ccr_threshold;
    po.batch = options_.batch;
    po.offset = o;
    plans_.push_back(partition_network(root_, input_, po));
  }
  for (WorkerId w = 0; w < options_.workers; ++w) {
    workers_.push_back(
        std::make_unique<WorkerModel<T>>(plans_[topology.offset(w)], topology, w, options_.batch, options_.seed));
  }
}

template <typename T>
void Session<T>::zero_grad() {
  for (auto& w : workers_) {
    w->lower.zero_grad();
    for (auto* p : w->upper_parameters()) p->grad.fill(T{0});
  }
}

template <typename T>
StepResult Session<T>::train_step(const std::vector<WorkerBatch<T>>& batches) {
  if (broken_) throw StateError("session is unusable after a failed step");
  const std::size_t n = options_.workers;
  if (batches.size() != n) {
    throw ShapeError("train_step: " + std::to_string(batches.size()) + " batches for " + std::to_string(n) +
                     " workers");
  }
  const Shape expected = input_.prepend(options_.batch);
  for (std::size_t w = 0; w < n; ++w) {
    if (batches[w].images.shape() != expected || batches[w].labels.size() != options_.batch) {
      throw ShapeError("train_step: worker " + std::to_string(w) + " batch " + batches[w].images.shape().str() +
                       " with " + std::to_string(batches[w].labels.size()) + " labels, expected " + expected.str());
    }
  }

  StepResult result;
  result.loss.assign(n, 0.0);
  result.seconds.assign(n, 0.0);
  std::vector<std::exception_ptr> errors(n);
  auto body = [&](WorkerId w) {
    try {
      const auto start = std::chrono::steady_clock::now();
      result.loss[w] = run_worker(w, batches);
      result.seconds[w] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    } catch (const std::exception& e) {
      errors[w] = std::current_exception();
      fabric_->abort("worker " + std::to_string(w) + " failed: " + e.what());
    } catch (...) {
      errors[w] = std::current_exception();
      fabric_->abort("worker " + std::to_string(w) + " failed");
    }
  };
  if (n == 1) {
    body(0);
  } else {
    std::vector<std::thread> threads;
    threads.reserve(n);
    for (WorkerId w = 0; w < n; ++w) threads.emplace_back(body, w);
    for (auto& t : threads) t.join();
  }

  // Prefer the error that caused the abort over the aborts it triggered.
  std::exception_ptr first;
  for (auto& e : errors) {
    if (!e) continue;
    try {
      std::rethrow_exception(e);
    } catch (const FabricError& fe) {
      if (std::string(fe.what()).rfind("fabric aborted", 0) != 0 && !first) first = e;
    } catch (...) {
      if (!first) first = e;
    }
  }
  if (!first) {
    for (auto& e : errors) {
      if (e && !first) first = e;
    }
  }
  if (first) {
    broken_ = true;
    std::rethrow_exception(first);
  }
  ++step_;
  return result;
}

template <typename T>
double Session<T>::run_worker(WorkerId w, const std::vector<WorkerBatch<T>>& batches) {
  WorkerModel<T>& model = *workers_[w];
  const Topology& topo = fabric_->topology();
  const std::size_t n = topo.workers();
  const std::size_t k_size = topo.group_size();
  const T lr = static_cast<T>(options_.learning_rate);

  StepContext lower_ctx{true, options_.dropout, options_.seed, w, step_, 0};
  Tensor<T> local = model.lower.forward(batches[w].images, lower_ctx);

  double loss = 0.0;
  if (!model.modulo) {
    if (local.rank() != 2) throw ShapeError("network output " + local.shape().str() + " is not (batch, classes)");
    loss = kernels::nll_loss(local, std::span<const std::size_t>(batches[w].labels));
    model.lower.backward(kernels::nll_loss_backward<T>(local.shape(), batches[w].labels));
  } else {
    ModuloState<T>& ms = *model.modulo;
    const std::size_t size = ms.size;
    std::vector<std::size_t> targets(options_.batch);
    for (std::size_t k = 0; k < k_size; ++k) {
      Tensor<T> a = modulo_fprop(ms, local, *fabric_);
      const RowRange block = modulo_local_block(k, options_.batch, k_size);
      for (std::size_t o = 0; o < k_size; ++o) {
        const WorkerId owner = modulo_slot_owner(o * size, options_.batch, k_size, w, n, true);
        for (std::size_t j = 0; j < size; ++j) targets[o * size + j] = batches[owner].labels[block.begin + j];
      }

      for (auto& item : model.upper) {
        if (item.shard) {
          a = shard_fprop(*item.shard, a, *fabric_);
        } else {
          const std::size_t key = item.partitioned ? n * (2 + ms.offset) + topo.gid(w) : n + topo.gid(w);
          StepContext ctx{true, options_.dropout, options_.seed, key, step_, k};
          a = item.layer->forward(a, ctx);
        }
      }
      if (a.rank() != 2) throw ShapeError("network output " + a.shape().str() + " is not (batch, classes)");
      loss += static_cast<double>(kernels::nll_loss(a, std::span<const std::size_t>(targets)));
      Tensor<T> g = kernels::nll_loss_backward<T>(a.shape(), targets);
      for (std::size_t i = model.upper.size(); i-- > 0;) {
        auto& item = model.upper[i];
        if (item.shard) {
          if (item.replicated_consumer) g = fc_gradient_scale(std::move(g), k_size);
          g = shard_bprop(*item.shard, g, *fabric_);
        } else {
          g = item.layer->backward(g);
        }
      }
      modulo_bprop(ms, g, *fabric_);
      if (options_.apply_updates) {
        for (auto* p : model.upper_parameters()) {
          p->grad = fc_gradient_scale(std::move(p->grad), k_size);
          auto v = p->value.data();
          auto gr = p->grad.data();
          for (std::size_t i = 0; i < v.size(); ++i) v[i] -= lr * gr[i];
          p->grad.fill(T{0});
        }
      }
    }
    loss /= static_cast<double>(k_size);
    model.lower.backward(ms.take_gradient());
  }

  if (options_.apply_updates) {
    model.lower.sgd_step(lr);
    if ((step_ + 1) % options_.avg_period == 0) average(w);
  }
  return loss;
}

template <typename T>
void Session<T>::average(WorkerId w) {
  WorkerModel<T>& model = *workers_[w];
  const Topology& topo = fabric_->topology();
  const std::string when = "[step=" + std::to_string(step_) + "]";
  const auto lower = model.lower_parameters();
  if (topo.workers() > 1 && count(lower) > 0) {
    unpack(fabric_->all_average(topo.all(), w, Phase::DpAvg, "dp.lower" + when, pack(lower)), lower);
  }
  const auto upper = model.upper_parameters();
  if (topo.groups() > 1 && count(upper) > 0) {
    unpack(fabric_->all_average(topo.same_offset(topo.offset(w)), w, Phase::DpAvg, "dp.upper" + when, pack(upper)),
           upper);
  }
}

template <typename T>
Network<T> Session<T>::assemble(std::size_t gid, std::optional<WorkerId> lower_from) const {
  const Topology& topo = fabric_->topology();
  if (gid >= topo.groups()) throw ValueError("group " + std::to_string(gid) + " does not exist");
  const WorkerId base = lower_from.value_or(topo.worker(gid, 0));
  if (topo.gid(base) != gid) throw ValueError("worker " + std::to_string(base) + " is not in group " + std::to_string(gid));

  Network<T> net(root_, input_, options_.seed, static_cast<T>(options_.learning_rate));
  for (std::size_t origin = 0; origin < net.size(); ++origin) {
    auto dst = net.layer(origin).parameters();
    if (dst.empty()) continue;
    Layer<T>* src = workers_[base]->find(origin);
    if (!src) throw StateError("assemble: leaf " + std::to_string(origin) + " missing on worker " + std::to_string(base));
    const auto& spec = src->spec();
    if (spec.kind() == LayerKind::Linear && spec.template as<LinearSpec>().is_split()) {
      for (std::size_t o = 0; o < topo.group_size(); ++o) {
        Layer<T>* part = workers_[topo.worker(gid, o)]->find(origin);
        const std::size_t row = part->spec().template as<LinearSpec>().row_offset;
        auto ps = part->parameters();
        for (std::size_t j = 0; j < dst.size(); ++j) {
          dst[j].value.assign_rows(row, ps[j].value);
          dst[j].grad.assign_rows(row, ps[j].grad);
        }
      }
    } else {
      auto ps = src->parameters();
      for (std::size_t j = 0; j < dst.size(); ++j) {
        require_same_shape(ps[j].value.shape(), dst[j].value.shape(), "assembled parameter");
        dst[j].value = ps[j].value;
        dst[j].grad = ps[j].grad;
      }
    }
  }
  return net;
}

template struct WorkerModel<float>;
template struct WorkerModel<double>;
template class Session<float>;
template class Session<double>;

}  // namespace hybridnet
