// SPDX-License-Identifier: Apache-2.0
#include "hybridnet/fabric.hpp"

#include <algorithm>
#include <set>
#include <tuple>

#include "hybridnet/error.hpp"

namespace hybridnet {

namespace {

std::size_t member_index(const std::vector<WorkerId>& group, WorkerId w) {
  const auto it = std::find(group.begin(), group.end(), w);
  if (it == group.end()) return group.size();
  return static_cast<std::size_t>(it - group.begin());
}

std::string group_str(const std::vector<WorkerId>& group) {
  std::string s = "{";
  for (std::size_t i = 0; i < group.size(); ++i) s += (i ? "," : "") + std::to_string(group[i]);
  return s + "}";
}

std::string worker_str(WorkerId w) { return "worker " + std::to_string(w); }

}  // namespace

template <typename T>
Fabric<T>::Fabric(Topology topology) : topology_(topology), stats_(topology.workers(), sizeof(T)) {}

template <typename T>
bool Fabric<T>::aborted() const {
  std::lock_guard lock(mutex_);
  return aborted_;
}

template <typename T>
void Fabric<T>::abort(const std::string& reason) {
  {
    std::lock_guard lock(mutex_);
    if (!aborted_) {
      aborted_ = true;
      abort_reason_ = reason;
    }
  }
  cv_.notify_all();
}

template <typename T>
void Fabric<T>::complete(const std::vector<WorkerId>& group, Round& round) {
  const std::size_t n = group.size();
  round.inboxes.assign(n, {});
  round.error.clear();

  const Deposit& first = *round.deposits[0];
  for (std::size_t i = 1; i < n; ++i) {
    const Deposit& d = *round.deposits[i];
    if (d.phase != first.phase || d.tag != first.tag) {
      round.error = "collective mismatch in group " + group_str(group) + ": " + worker_str(group[0]) + " is at " +
                    to_string(first.phase) + " '" + first.tag + "' but " + worker_str(group[i]) + " is at " +
                    to_string(d.phase) + " '" + d.tag + "'";
      return;
    }
  }

  std::vector<std::set<Expect>> delivered(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (const auto& e : round.deposits[i]->sends) {
      const std::size_t j = member_index(group, e.dst);
      if (e.src != group[i] || j == n || j == i) {
        round.error = "bad envelope from " + worker_str(group[i]) + " to " + worker_str(e.dst) + " in '" + first.tag +
                      "' for group " + group_str(group);
        return;
      }
      if (!delivered[j].insert(Expect{e.src, e.slot}).second) {
        round.error = "duplicate slot " + std::to_string(e.slot) + " from " + worker_str(e.src) + " to " +
                      worker_str(e.dst) + " in '" + first.tag + "'";
        return;
      }
    }
  }
  for (std::size_t j = 0; j < n; ++j) {
    const auto& want = round.deposits[j]->expects;
    const std::set<Expect> expected(want.begin(), want.end());
    if (expected == delivered[j]) continue;
    // Name the first pair on which receiver and sender disagree.
    std::vector<Expect> diff;
    std::set_symmetric_difference(expected.begin(), expected.end(), delivered[j].begin(), delivered[j].end(),
                                  std::back_inserter(diff));
    const Expect& e = diff.front();
    const bool missing = expected.count(e) != 0;
    round.error = "slot metadata mismatch in '" + first.tag + "': " + worker_str(group[j]) +
                  (missing ? " expects slot " : " does not expect slot ") + std::to_string(e.slot) + " from " +
                  worker_str(e.src) + (missing ? ", which did not send it" : ", which sent it");
    return;
  }

  for (std::size_t i = 0; i < n; ++i) {
    for (auto& e : round.deposits[i]->sends) {
      stats_.record(first.phase, e.src, e.dst, e.payload.size());
      round.inboxes[member_index(group, e.dst)].push_back(std::move(e));
    }
  }
  for (auto& inbox : round.inboxes) {
    std::sort(inbox.begin(), inbox.end(),
              [](const Envelope<T>& a, const Envelope<T>& b) { return std::tie(a.src, a.slot) < std::tie(b.src, b.slot); });
  }
}

template <typename T>
std::vector<Envelope<T>> Fabric<T>::scatter_gather(const std::vector<WorkerId>& group, WorkerId self, Phase phase,
                                                   const std::string& tag, std::vector<Envelope<T>> sends,
                                                   const std::vector<Expect>& expects) {
  if (group.empty() || !std::is_sorted(group.begin(), group.end()) ||
      std::adjacent_find(group.begin(), group.end()) != group.end()) {
    throw FabricError("group must be a non-empty ascending list of distinct workers, got " + group_str(group));
  }
  if (group.back() >= topology_.workers()) throw FabricError("group " + group_str(group) + " names an unknown worker");
  const std::size_t idx = member_index(group, self);
  if (idx == group.size()) throw FabricError(worker_str(self) + " is not a member of group " + group_str(group));

  std::unique_lock lock(mutex_);
  Round& round = rounds_[group];
  if (round.deposits.empty()) round.deposits.resize(group.size());
  cv_.wait(lock, [&] { return aborted_ || !round.completing; });
  if (aborted_) throw FabricError("fabric aborted: " + abort_reason_);
  if (round.deposits[idx]) throw FabricError(worker_str(self) + " entered '" + tag + "' twice");

  round.deposits[idx] = Deposit{phase, tag, std::move(sends), expects};
  const std::uint64_t generation = round.generation;
  if (++round.arrived == group.size()) {
    complete(group, round);
    round.completing = true;
    ++round.generation;
    cv_.notify_all();
  } else {
    cv_.wait(lock, [&] { return aborted_ || round.generation != generation; });
    if (round.generation == generation) {
      // Aborted while waiting: withdraw so the round stays consistent.
      round.deposits[idx].reset();
      --round.arrived;
      throw FabricError("fabric aborted: " + abort_reason_);
    }
  }

  std::vector<Envelope<T>> inbox = std::move(round.inboxes[idx]);
  const std::string error = round.error;
  if (++round.departed == group.size()) {
    for (auto& d : round.deposits) d.reset();
    round.arrived = 0;
    round.departed = 0;
    round.completing = false;
    cv_.notify_all();
  }
  if (!error.empty()) throw FabricError(error);
  return inbox;
}

template <typename T>
void Fabric<T>::barrier(const std::vector<WorkerId>& group, WorkerId self, const std::string& tag) {
  scatter_gather(group, self, Phase::Control, tag, {}, {});
}

template <typename T>
std::optional<Tensor<T>> Fabric<T>::reduce_sum(const std::vector<WorkerId>& group, WorkerId self, Phase phase,
                                               const std::string& tag, WorkerId owner, const Tensor<T>& contribution) {
  std::vector<Envelope<T>> sends;
  std::vector<Expect> expects;
  if (self == owner) {
    for (WorkerId w : group) {
      if (w != self) expects.push_back({w, 0});
    }
  } else {
    sends.push_back({self, owner, 0, contribution});
  }
  auto inbox = scatter_gather(group, self, phase, tag, std::move(sends), expects);
  if (self != owner) return std::nullopt;

  std::vector<const Tensor<T>*> parts;
  std::size_t next = 0;
  for (WorkerId w : group) {
    if (w == self) {
      parts.push_back(&contribution);
    } else {
      parts.push_back(&inbox[next++].payload);
    }
  }
  return sum_in_order(parts);
}

template <typename T>
Tensor<T> Fabric<T>::all_average(const std::vector<WorkerId>& group, WorkerId self, Phase phase,
                                 const std::string& tag, const Tensor<T>& local) {
  std::vector<Envelope<T>> sends;
  std::vector<Expect> expects;
  for (WorkerId w : group) {
    if (w == self) continue;
    sends.push_back({self, w, 0, local});
    expects.push_back({w, 0});
  }
  auto inbox = scatter_gather(group, self, phase, tag, std::move(sends), expects);
  std::vector<const Tensor<T>*> parts;
  std::size_t next = 0;
  for (WorkerId w : group) parts.push_back(w == self ? &local : &inbox[next++].payload);
  Tensor<T> mean = sum_in_order(parts);
  const T count = static_cast<T>(group.size());
  for (auto& v : mean.data()) v /= count;
  return mean;
}

template <typename T>
Tensor<T> sum_in_order(const std::vector<const Tensor<T>*>& parts) {
  if (parts.empty()) throw ShapeError("sum of zero tensors");
  Tensor<T> sum = *parts.front();
  for (std::size_t i = 1; i < parts.size(); ++i) {
    require_same_shape(parts[i]->shape(), sum.shape(), "reduction contribution");
    sum += *parts[i];
  }
  return sum;
}

template class Fabric<float>;
template class Fabric<double>;
template Tensor<float> sum_in_order(const std::vector<const Tensor<float>*>&);
template Tensor<double> sum_in_order(const std::vector<const Tensor<double>*>&);

}  // namespace hybridnet
