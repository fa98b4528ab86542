// SPDX-License-Identifier: Apache-2.0
#include "hybridnet/comm_stats.hpp"

#include <ostream>

#include "hybridnet/error.hpp"

namespace hybridnet {

const char* to_string(Phase phase) {
  switch (phase) {
    case Phase::DpAvg: return "DP_AVG";
    case Phase::ModuloFprop: return "MODULO_FPROP";
    case Phase::ModuloBprop: return "MODULO_BPROP";
    case Phase::ShardFprop: return "SHARD_FPROP";
    case Phase::ShardBprop: return "SHARD_BPROP";
    case Phase::Control: return "CONTROL";
  }
  return "?";
}

CommStats::CommStats(std::size_t workers, std::size_t scalar_bytes)
    : workers_(workers),
      scalar_bytes_(scalar_bytes),
      counters_(kPhaseCount * workers),
      matrix_(kPhaseCount * workers * workers, 0) {}

CommStats::CommStats(const CommStats& other) {
  std::lock_guard lock(other.mutex_);
  workers_ = other.workers_;
  scalar_bytes_ = other.scalar_bytes_;
  counters_ = other.counters_;
  matrix_ = other.matrix_;
}

CommStats& CommStats::operator=(const CommStats& other) {
  if (this == &other) return *this;
  std::scoped_lock lock(mutex_, other.mutex_);
  workers_ = other.workers_;
  scalar_bytes_ = other.scalar_bytes_;
  counters_ = other.counters_;
  matrix_ = other.matrix_;
  return *this;
}

void CommStats::record(Phase phase, WorkerId src, WorkerId dst, std::uint64_t scalars) {
  if (src >= workers_ || dst >= workers_) throw FabricError("comm stats: worker id out of range");
  std::lock_guard lock(mutex_);
  auto& s = counters_[index(phase, src)];
  s.messages += 1;
  s.scalars_sent += scalars;
  counters_[index(phase, dst)].scalars_received += scalars;
  matrix_[(static_cast<std::size_t>(phase) * workers_ + src) * workers_ + dst] += scalars;
}

Counters CommStats::at(Phase phase, WorkerId worker) const {
  std::lock_guard lock(mutex_);
  return counters_.at(index(phase, worker));
}

Counters CommStats::total(Phase phase) const {
  std::lock_guard lock(mutex_);
  Counters sum;
  for (WorkerId w = 0; w < workers_; ++w) sum += counters_[index(phase, w)];
  return sum;
}

std::uint64_t CommStats::traffic(Phase phase, WorkerId src, WorkerId dst) const {
  std::lock_guard lock(mutex_);
  return matrix_.at((static_cast<std::size_t>(phase) * workers_ + src) * workers_ + dst);
}

std::uint64_t CommStats::cross_group_mp_scalars(const Topology& topo) const {
  std::uint64_t sum = 0;
  for (Phase p : kAccountedPhases) {
    if (!is_mp_phase(p)) continue;
    for (WorkerId s = 0; s < workers_; ++s) {
      for (WorkerId d = 0; d < workers_; ++d) {
        if (topo.gid(s) != topo.gid(d)) sum += traffic(p, s, d);
      }
    }
  }
  return sum;
}

void CommStats::reset() {
  std::lock_guard lock(mutex_);
  std::fill(counters_.begin(), counters_.end(), Counters{});
  std::fill(matrix_.begin(), matrix_.end(), 0);
}

void CommStats::write_csv(std::ostream& os) const {
  os << "phase,worker,messages,scalars\n";
  for (Phase p : kAccountedPhases) {
    for (WorkerId w = 0; w < workers_; ++w) {
      const Counters c = at(p, w);
      os << to_string(p) << ',' << w << ',' << c.messages << ',' << c.scalars_sent << '\n';
    }
  }
}

bool operator==(const CommStats& a, const CommStats& b) {
  if (&a == &b) return true;
  std::scoped_lock lock(a.mutex_, b.mutex_);
  return a.workers_ == b.workers_ && a.scalar_bytes_ == b.scalar_bytes_ && a.counters_ == b.counters_ &&
         a.matrix_ == b.matrix_;
}

}  // namespace hybridnet
