// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <vector>

namespace hybridnet {

using WorkerId = std::size_t;

/// N workers split into N/K model-parallel groups of K consecutive ids.
/// Worker i belongs to group gid(i) = i / K at offset i mod K.
class Topology {
 public:
  /// Throws ConfigError unless 1 <= K <= N and K divides N.
  Topology(std::size_t workers, std::size_t group_size);

  std::size_t workers() const { return workers_; }
  std::size_t group_size() const { return group_size_; }
  std::size_t groups() const { return workers_ / group_size_; }

  std::size_t gid(WorkerId w) const { return w / group_size_; }
  std::size_t offset(WorkerId w) const { return w % group_size_; }
  WorkerId worker(std::size_t gid, std::size_t offset) const { return gid * group_size_ + offset; }

  /// Members of group `gid` in offset order.
  std::vector<WorkerId> group(std::size_t gid) const;
  /// Workers holding the same shard offset, one per group, in group order.
  std::vector<WorkerId> same_offset(std::size_t offset) const;
  std::vector<WorkerId> all() const;

 private:
  std::size_t workers_;
  std::size_t group_size_;
};

}  // namespace hybridnet
