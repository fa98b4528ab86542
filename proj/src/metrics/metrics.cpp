// SPDX-License-Identifier: Apache-2.0
#include "hybridnet/metrics.hpp"

#include <iomanip>
#include <ostream>
#include <sstream>

#include "hybridnet/error.hpp"

namespace hybridnet {

namespace {

bool is_fc(LayerKind kind) { return kind == LayerKind::Linear; }

std::string signed_delta(std::uint64_t predicted, std::uint64_t measured) {
  if (measured >= predicted) return "+" + std::to_string(measured - predicted);
  return "-" + std::to_string(predicted - measured);
}

}  // namespace

MemoryReport memory_report(const LayerSpec& root, std::size_t group_size) {
  if (group_size == 0) throw PartitionError("MP group size must be positive");
  MemoryReport r;
  r.group_size = group_size;
  for (const auto& leaf : flatten(root)) {
    const std::size_t w = weight_count(leaf);
    if (w == 0) continue;
    r.layers.push_back({leaf.name, leaf.kind(), w});
    (is_fc(leaf.kind()) ? r.fc_total : r.conv_total) += w;
  }
  r.total = r.conv_total + r.fc_total;
  if (r.fc_total % group_size != 0) {
    throw PartitionError("FC weights " + std::to_string(r.fc_total) + " do not split evenly over MP group size " +
                         std::to_string(group_size));
  }
  r.per_worker = r.conv_total + r.fc_total / group_size;
  if (r.total > 0) {
    r.fc_share = 100.0 * static_cast<double>(r.fc_total) / static_cast<double>(r.total);
    r.savings = 100.0 * (1.0 - static_cast<double>(r.per_worker) / static_cast<double>(r.total));
  }
  return r;
}

WorkerWeights worker_weights(const PartitionedNet& plan) {
  WorkerWeights w;
  for (const auto& layer : plan.layers) (is_fc(layer.kind()) ? w.fc : w.conv) += weight_count(layer);
  return w;
}

void write_memory_csv(std::ostream& os, const LayerSpec& root, const std::vector<std::size_t>& group_sizes) {
  const MemoryReport base = memory_report(root, 1);
  os << "layer,kind,weights,percent\n";
  os << std::fixed << std::setprecision(4);
  for (const auto& l : base.layers) {
    os << l.name << ',' << to_string(l.kind) << ',' << l.weights << ','
       << 100.0 * static_cast<double>(l.weights) / static_cast<double>(base.total) << '\n';
  }
  os << "conv_total,,"<< base.conv_total << ',' << 100.0 - base.fc_share << '\n';
  os << "fc_total,," << base.fc_total << ',' << base.fc_share << '\n';
  os << "total,," << base.total << ",100.0000\n";
  os << "\nmp_group_size,per_worker_weights,savings_percent\n";
  for (std::size_t k : group_sizes) {
    const MemoryReport r = memory_report(root, k);
    os << k << ',' << r.per_worker << ',' << r.savings << '\n';
  }
}

Counters VolumeModel::total(Phase phase) const {
  Counters sum;
  for (const auto& w : counters) sum += w[static_cast<std::size_t>(phase)];
  return sum;
}

std::uint64_t VolumeModel::mp_scalars() const {
  std::uint64_t sum = 0;
  for (Phase p : kAccountedPhases) {
    if (is_mp_phase(p)) sum += total(p).scalars_sent;
  }
  return sum;
}

VolumeModel predict_volume(const PartitionedNet& plan, std::size_t batch, std::size_t group_size,
                           std::size_t workers, std::size_t avg_period, std::size_t steps) {
  if (group_size == 0 || workers % group_size != 0) throw ConfigError("MP group size must divide the worker count");
  if (avg_period == 0) throw ConfigError("averaging period must be at least 1");
  VolumeModel m;
  m.workers = workers;
  m.group_size = group_size;
  m.batch = batch;
  m.avg_period = avg_period;
  m.steps = steps;

  const std::uint64_t K = group_size;
  const std::uint64_t B = batch;
  const std::uint64_t S = steps;
  std::array<Counters, kPhaseCount> per{};
  auto& mf = per[static_cast<std::size_t>(Phase::ModuloFprop)];
  auto& mb = per[static_cast<std::size_t>(Phase::ModuloBprop)];
  auto& sf = per[static_cast<std::size_t>(Phase::ShardFprop)];
  auto& sb = per[static_cast<std::size_t>(Phase::ShardBprop)];
  auto& dp = per[static_cast<std::size_t>(Phase::DpAvg)];

  std::uint64_t p_conv = 0;
  std::uint64_t p_fc = 0;
  const auto modulo_at = plan.modulo_index();
  for (std::size_t i = 0; i < plan.size(); ++i) {
    const auto& layer = plan.layers[i];
    const bool above = modulo_at && i > *modulo_at;
    (above ? p_fc : p_conv) += parameter_count(layer);
    if (layer.kind() == LayerKind::Modulo) {
      const std::uint64_t F = layer.as<ModuloSpec>().dim_full;
      for (Counters* c : {&mf, &mb}) {
        c->messages += S * K * (K - 1);
        c->scalars_sent += S * (K - 1) * B * F;
        c->scalars_received += S * (K - 1) * B * F;
      }
    } else if (layer.kind() == LayerKind::Shard) {
      const auto& s = layer.as<ShardSpec>();
      const std::uint64_t d = s.dim;
      const std::uint64_t F = s.dim_full;
      sf.messages += S * K * (K - 1);
      sf.scalars_sent += S * K * B * d * (K - 1);
      sf.scalars_received += S * K * B * (F - d);
      sb.messages += S * K * (K - 1);
      sb.scalars_sent += S * K * B * (F - d);
      sb.scalars_received += S * K * B * d * (K - 1);
    }
  }

  const std::uint64_t rounds = steps / avg_period;
  const std::uint64_t conv_peers = workers - 1;
  const std::uint64_t fc_peers = workers / group_size - 1;
  if (p_conv > 0) {
    dp.messages += rounds * conv_peers;
    dp.scalars_sent += rounds * conv_peers * p_conv;
    dp.scalars_received += rounds * conv_peers * p_conv;
  }
  if (p_fc > 0) {
    dp.messages += rounds * fc_peers;
    dp.scalars_sent += rounds * fc_peers * p_fc;
    dp.scalars_received += rounds * fc_peers * p_fc;
  }
  m.counters.assign(workers, per);
  return m;
}

bool ReconcileReport::ok() const {
  for (const auto& r : rows) {
    if (!r.match()) return false;
  }
  return cross_group_mp_scalars == 0;
}

std::string ReconcileReport::text() const {
  std::ostringstream os;
  os << std::left << std::setw(14) << "phase" << std::setw(8) << "worker" << std::setw(34) << "predicted msgs/sent/recv"
     << std::setw(34) << "measured msgs/sent/recv" << "status\n";
  std::size_t failures = 0;
  for (const auto& r : rows) {
    std::ostringstream p;
    std::ostringstream m;
    p << r.predicted.messages << '/' << r.predicted.scalars_sent << '/' << r.predicted.scalars_received;
    m << r.measured.messages << '/' << r.measured.scalars_sent << '/' << r.measured.scalars_received;
    os << std::setw(14) << to_string(r.phase) << std::setw(8) << r.worker << std::setw(34) << p.str() << std::setw(34)
       << m.str();
    if (r.match()) {
      os << "ok\n";
    } else {
      ++failures;
      os << "MISMATCH messages " << signed_delta(r.predicted.messages, r.measured.messages) << " sent "
         << signed_delta(r.predicted.scalars_sent, r.measured.scalars_sent) << " received "
         << signed_delta(r.predicted.scalars_received, r.measured.scalars_received) << '\n';
    }
  }
  os << "cross-group MODULO/SHARD scalars: " << cross_group_mp_scalars << '\n';
  os << (ok() ? "reconciled: all rows match\n" : "reconcile FAILED: " + std::to_string(failures) + " rows differ\n");
  return os.str();
}

ReconcileReport reconcile(const VolumeModel& model, const CommStats& stats, const Topology& topology) {
  if (stats.workers() != model.workers) throw ValueError("reconcile: worker counts differ");
  ReconcileReport report;
  for (Phase p : kAccountedPhases) {
    for (WorkerId w = 0; w < model.workers; ++w) report.rows.push_back({p, w, model.at(p, w), stats.at(p, w)});
  }
  report.cross_group_mp_scalars = stats.cross_group_mp_scalars(topology);
  return report;
}

void write_volume_csv(std::ostream& os, const std::vector<VolumeModel>& models) {
  os << "mp_group_size,avg_period,steps,phase,worker,messages,scalars_sent,scalars_received\n";
  for (const auto& m : models) {
    for (Phase p : kAccountedPhases) {
      for (WorkerId w = 0; w < m.workers; ++w) {
        const Counters c = m.at(p, w);
        os << m.group_size << ',' << m.avg_period << ',' << m.steps << ',' << to_string(p) << ',' << w << ','
           << c.messages << ',' << c.scalars_sent << ',' << c.scalars_received << '\n';
      }
    }
  }
}

}  // namespace hybridnet
