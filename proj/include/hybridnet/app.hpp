// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <iosfwd>

#include "hybridnet/config.hpp"

namespace hybridnet {

enum ExitCode : int { kExitOk = 0, kExitConfig = 1, kExitOracle = 2, kExitIo = 3 };

/// Validates `config`, then runs its mode and writes the artifacts into
/// config.out:
///   train         train_log.csv, comm_stats.csv, plan.txt, reconcile.txt, summary.txt
///   oracle-check  oracle.txt
///   plan-only     plan.txt, memory_report.csv
///   volume-sweep  volume_by_phase.csv, memory_report.csv, reconcile.txt, sweep.txt
/// Progress goes to `out`, diagnostics to `err`.
int run(const RunConfig& config, std::ostream& out, std::ostream& err);

}  // namespace hybridnet
