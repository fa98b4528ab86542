// SPDX-License-Identifier: Apache-2.0
#include "hybridnet/topology.hpp"

#include <string>

#include "hybridnet/error.hpp"

namespace hybridnet {

Topology::Topology(std::size_t workers, std::size_t group_size) : workers_(workers), group_size_(group_size) {
  if (workers == 0) throw ConfigError("worker count must be positive");
  if (group_size == 0 || group_size > workers) {
    throw ConfigError("MP group size " + std::to_string(group_size) + " must be in [1, " + std::to_string(workers) + "]");
  }
  if (workers % group_size != 0) {
    throw ConfigError("MP group size " + std::to_string(group_size) + " does not divide worker count " +
                      std::to_string(workers));
  }
}

std::vector<WorkerId> Topology::group(std::size_t g) const {
  std::vector<WorkerId> out;
  for (std::size_t o = 0; o < group_size_; ++o) out.push_back(worker(g, o));
  return out;
}

std::vector<WorkerId> Topology::same_offset(std::size_t o) const {
  std::vector<WorkerId> out;
  for (std::size_t g = 0; g < groups(); ++g) out.push_back(worker(g, o));
  return out;
}

std::vector<WorkerId> Topology::all() const {
  std::vector<WorkerId> out;
  for (WorkerId w = 0; w < workers_; ++w) out.push_back(w);
  return out;
}

}  // namespace hybridnet
