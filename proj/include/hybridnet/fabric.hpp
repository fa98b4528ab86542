// SPDX-License-Identifier: Apache-2.0
//
// In-process message fabric shared by the worker threads of one session.
// Every collective is a rendezvous of a fixed member list: each member
// deposits its outgoing envelopes and the (src, slot) pairs it expects, the
// last arrival checks that all members agree on the collective and routes the
// payloads, then everybody leaves with its inbox. Nothing is delivered unless
// the whole group agreed, so a protocol slip surfaces as a FabricError on all
// members instead of a hang.
#pragma once

#include <condition_variable>
#include <cstdint>
#include <cstddef>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "hybridnet/comm_stats.hpp"
#include "hybridnet/tensor.hpp"
#include "hybridnet/topology.hpp"

namespace hybridnet {

template <typename T>
struct Envelope {
  WorkerId src = 0;
  WorkerId dst = 0;
  std::size_t slot = 0;
  Tensor<T> payload;
};

struct Expect {
  WorkerId src = 0;
  std::size_t slot = 0;
  friend auto operator<=>(const Expect&, const Expect&) = default;
};

template <typename T>
class Fabric {
 public:
  explicit Fabric(Topology topology);

  Fabric(const Fabric&) = delete;
  Fabric& operator=(const Fabric&) = delete;

  const Topology& topology() const { return topology_; }
  CommStats& stats() { return stats_; }
  const CommStats& stats() const { return stats_; }

  /// Collective over `group` (ascending worker ids, `self` among them). All
  /// members must pass the same phase and tag. Sends must originate at self
  /// and target another member. Returns the envelopes addressed to self,
  /// ordered by (src, slot). Throws FabricError naming the disagreeing
  /// workers when tags, phases or expected deliveries do not line up.
  std::vector<Envelope<T>> scatter_gather(const std::vector<WorkerId>& group, WorkerId self, Phase phase,
                                          const std::string& tag, std::vector<Envelope<T>> sends,
                                          const std::vector<Expect>& expects);

  void barrier(const std::vector<WorkerId>& group, WorkerId self, const std::string& tag);

  /// Sum of all members' contributions, accumulated in group order, returned
  /// at `owner`; other members get nullopt.
  std::optional<Tensor<T>> reduce_sum(const std::vector<WorkerId>& group, WorkerId self, Phase phase,
                                      const std::string& tag, WorkerId owner, const Tensor<T>& contribution);

  /// Arithmetic mean of all members' tensors, summed in group order, at every
  /// member. Each member sends its tensor to every peer.
  Tensor<T> all_average(const std::vector<WorkerId>& group, WorkerId self, Phase phase, const std::string& tag,
                        const Tensor<T>& local);

  /// Wakes every waiting member with a FabricError; later calls fail too.
  void abort(const std::string& reason);
  bool aborted() const;

 private:
  struct Deposit {
    Phase phase = Phase::Control;
    std::string tag;
    std::vector<Envelope<T>> sends;
    std::vector<Expect> expects;
  };

  struct Round {
    std::vector<std::optional<Deposit>> deposits;
    std::vector<std::vector<Envelope<T>>> inboxes;
    std::size_t arrived = 0;
    std::size_t departed = 0;
    bool completing = false;
    std::uint64_t generation = 0;
    std::string error;
  };

  void complete(const std::vector<WorkerId>& group, Round& round);

  Topology topology_;
  CommStats stats_;
  mutable std::mutex mutex_;
  std::condition_variable cv_;
  std::map<std::vector<WorkerId>, Round> rounds_;
  bool aborted_ = false;
  std::string abort_reason_;
};

/// Elementwise sum of `parts` in the given order. Throws ShapeError on
/// mismatched shapes.
template <typename T>
Tensor<T> sum_in_order(const std::vector<const Tensor<T>*>& parts);

}  // namespace hybridnet
