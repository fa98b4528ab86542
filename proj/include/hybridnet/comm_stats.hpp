// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <mutex>
#include <string>
#include <vector>

#include "hybridnet/topology.hpp"

namespace hybridnet {

enum class Phase : std::size_t { DpAvg, ModuloFprop, ModuloBprop, ShardFprop, ShardBprop, Control };

inline constexpr std::size_t kPhaseCount = 6;
inline constexpr std::array<Phase, 5> kAccountedPhases{Phase::DpAvg, Phase::ModuloFprop, Phase::ModuloBprop,
                                                      Phase::ShardFprop, Phase::ShardBprop};

const char* to_string(Phase phase);

/// True for the phases that carry model-parallel traffic.
constexpr bool is_mp_phase(Phase p) { return p != Phase::DpAvg && p != Phase::Control; }

struct Counters {
  std::uint64_t messages = 0;
  std::uint64_t scalars_sent = 0;
  std::uint64_t scalars_received = 0;

  Counters& operator+=(const Counters& o) {
    messages += o.messages;
    scalars_sent += o.scalars_sent;
    scalars_received += o.scalars_received;
    return *this;
  }
  friend bool operator==(const Counters&, const Counters&) = default;
};

/// Message and payload counters per (phase, worker), plus a per-phase
/// sender x receiver scalar matrix for locality checks. Counts are integers
/// updated under a lock, so totals do not depend on thread interleaving.
class CommStats {
 public:
  CommStats(std::size_t workers, std::size_t scalar_bytes);

  CommStats(const CommStats& other);
  CommStats& operator=(const CommStats& other);

  void record(Phase phase, WorkerId src, WorkerId dst, std::uint64_t scalars);

  std::size_t workers() const { return workers_; }
  std::size_t scalar_bytes() const { return scalar_bytes_; }

  Counters at(Phase phase, WorkerId worker) const;
  Counters total(Phase phase) const;
  /// Scalars sent from src to dst in `phase`.
  std::uint64_t traffic(Phase phase, WorkerId src, WorkerId dst) const;
  std::uint64_t bytes_sent(Phase phase, WorkerId worker) const { return at(phase, worker).scalars_sent * scalar_bytes_; }

  /// Scalars moved between workers of different groups in MODULO/SHARD phases.
  std::uint64_t cross_group_mp_scalars(const Topology& topo) const;

  void reset();

  /// "phase,worker,messages,scalars" (scalars = payload scalars sent); one
  /// row per accounted phase and worker.
  void write_csv(std::ostream& os) const;

  friend bool operator==(const CommStats& a, const CommStats& b);

 private:
  std::size_t index(Phase phase, WorkerId w) const { return static_cast<std::size_t>(phase) * workers_ + w; }

  std::size_t workers_;
  std::size_t scalar_bytes_;
  mutable std::mutex mutex_;
  std::vector<Counters> counters_;
  std::vector<std::uint64_t> matrix_;
};

}  // namespace hybridnet
