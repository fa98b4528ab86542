// SPDX-License-Identifier: Apache-2.0
//
// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "gradcheck.hpp"
#include "hybridnet/dataset.hpp"
#include "hybridnet/metrics.hpp"
#include "hybridnet/models.hpp"
#include "hybridnet/oracle.hpp"
#include "hybridnet/random.hpp"
#include "hybridnet/session.hpp"
#include "testing.hpp"

using namespace hybridnet;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

// Per-layer weight counts of the VGG variant as published, bias excluded.
const std::map<std::string, std::size_t> kPublishedWeights{
    {"Conv0", 1728},   {"Conv1", 36864},  {"Conv2", 73728}, {"Conv3", 147456}, {"Conv4", 294912},
    {"Conv5", 589824}, {"Conv6", 589824}, {"FC0", 4194304}, {"FC1", 1048576},  {"FC2", 10240},
};
constexpr double kPublishedFcShare = 75.17;

Outcome weight_goldens() {
  const MemoryReport r = memory_report(build_vgg_variant().root, 1);
  std::size_t matched = 0;
  std::string mismatch;
  for (const auto& l : r.layers) {
    const auto it = kPublishedWeights.find(l.name);
    if (it != kPublishedWeights.end() && it->second == l.weights) {
      ++matched;
    } else {
      mismatch += " " + l.name + "=" + std::to_string(l.weights);
    }
  }
  const bool share_ok = std::abs(r.fc_share - kPublishedFcShare) <= 0.01;
  std::ostringstream os;
  os << matched << "/" << kPublishedWeights.size() << " layer rows match, total " << r.total << ", FC share "
     << r.fc_share << "%" << mismatch;
  return {matched == kPublishedWeights.size() && r.layers.size() == kPublishedWeights.size() && share_ok, os.str()};
}

Outcome memory_savings() {
  const auto root = build_vgg_variant().root;
  const MemoryReport one = memory_report(root, 1);
  const MemoryReport eight = memory_report(root, 8);
  const MemoryReport sixteen = memory_report(root, 16);
  bool monotone = true;
  double previous = -1.0, last = 0.0;
  for (std::size_t k = 1; k <= 2048; k *= 2) {
    last = memory_report(root, k).savings;
    monotone = monotone && last > previous && last < one.fc_share;
    previous = last;
  }
  const bool ok = eight.per_worker == 2390976 && std::abs(eight.savings - 65.8) <= 0.1 && one.savings == 0.0 &&
                  monotone && one.fc_share - last < 0.05;
  std::ostringstream os;
  os << "K=8 per-worker " << eight.per_worker << " savings " << eight.savings << "%, K=16 " << sixteen.savings
     << "%, K=2048 " << last << "% (limit " << one.fc_share << "%), monotone " << (monotone ? "yes" : "no");
  return {ok, os.str()};
}

Outcome deferred_equivalence() {
  const ModelSpec toy = build_toy_cnn();
  double worst_conv = 0.0, worst_fc = 0.0;
  std::size_t runs = 0, passed = 0;
  for (const auto& [n, k] : std::vector<std::pair<std::size_t, std::size_t>>{{2, 2}, {4, 2}, {4, 4}, {8, 2}}) {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      OracleCase c;
      c.workers = n;
      c.group_size = k;
      c.batch = 4;
      c.seed = seed;
      const OracleReport r = check_deferred_equivalence(toy, c);
      ++runs;
      passed += r.passed(1e-10) && r.fc_tensors > 0 && r.conv_tensors > 0;
      worst_conv = std::max(worst_conv, r.max_conv_error());
      worst_fc = std::max(worst_fc, r.max_fc_error());
    }
  }
  std::ostringstream os;
  os << passed << "/" << runs << " runs, worst conv rel err " << worst_conv << ", worst FC rel err " << worst_fc;
  return {passed == runs, os.str()};
}

Outcome finite_differences() {
  const auto rows = testing::run_gradcheck_suite(20, 7);
  bool ok = rows.size() >= 10;
  std::ostringstream os;
  double worst = 0.0;
  for (const auto& r : rows) {
    ok = ok && r.cases == 20 && r.worst < 1e-5;
    worst = std::max(worst, r.worst);
  }
  os << rows.size() << " kernels x 20 cases, worst rel err " << worst;
  return {ok, os.str()};
}

Outcome mapping_properties() {
  std::size_t configs = 0;
  const std::string violation = testing::check_modulo_mappings(32, configs);
  return {violation.empty(), std::to_string(configs) + " (B,K,N) configurations" +
                                 (violation.empty() ? "" : ", first violation: " + violation)};
}

template <typename T>
std::vector<WorkerBatch<T>> random_batches(const ModelSpec& m, std::size_t workers, std::size_t batch, Rng& rng) {
  std::vector<WorkerBatch<T>> out(workers);
  for (auto& b : out) {
    b.images = testing::random_tensor(m.input.prepend(batch), rng.next()).template cast<T>();
    for (std::size_t j = 0; j < batch; ++j) b.labels.push_back(rng.below(m.classes));
  }
  return out;
}

Outcome volume_reconciliation() {
  const ModelSpec vgg = build_vgg_variant(8);
  const std::size_t N = 4, B = 8, steps = 4;
  std::size_t cells = 0, matched = 0;
  std::uint64_t cross = 0;
  std::ostringstream os;
  for (std::size_t k : {1u, 2u, 4u}) {
    for (std::size_t ap : {1u, 2u, 4u}) {
      SessionOptions o;
      o.workers = N;
      o.group_size = k;
      o.batch = B;
      o.avg_period = ap;
      o.ccr_threshold = 100.0;
      o.seed = 11;
      Session<float> session(vgg.root, vgg.input, o);
      Rng rng(derive_seed({k, ap}));
      for (std::size_t s = 0; s < steps; ++s) session.train_step(random_batches<float>(vgg, N, B, rng));
      const VolumeModel model = predict_volume(session.plan(0), B, k, N, ap, steps);
      const ReconcileReport rec = reconcile(model, session.stats(), session.topology());
      ++cells;
      matched += rec.ok();
      cross += rec.cross_group_mp_scalars;
      if (ap == 1) os << " K=" << k << " MP scalars " << model.mp_scalars() << ";";
    }
  }
  std::ostringstream head;
  head << matched << "/" << cells << " grid cells match scalar-for-scalar, cross-group MP scalars " << cross << ";"
       << os.str();
  return {matched == cells && cross == 0, head.str()};
}

Outcome tradeoff_ordering() {
  const ModelSpec toy = build_toy_cnn();
  const std::size_t N = 8, B = 8;
  std::vector<std::uint64_t> volume;
  std::vector<std::size_t> fc;
  std::ostringstream os;
  for (std::size_t k : {1u, 2u, 4u, 8u}) {
    SessionOptions o;
    o.workers = N;
    o.group_size = k;
    o.batch = B;
    o.seed = 5;
    Session<float> session(toy.root, toy.input, o);
    Rng rng(derive_seed({k, 0x7}));
    session.train_step(random_batches<float>(toy, N, B, rng));
    std::uint64_t mp = 0;
    for (Phase p : kAccountedPhases) {
      if (is_mp_phase(p)) mp += session.stats().total(p).scalars_sent;
    }
    volume.push_back(mp);
    fc.push_back(worker_weights(session.plan(0)).fc);
    os << " K=" << k << " mp " << mp << " fc/worker " << fc.back() << ";";
  }
  bool ok = true;
  for (std::size_t i = 1; i < volume.size(); ++i) ok = ok && volume[i] > volume[i - 1] && fc[i] < fc[i - 1];
  return {ok, "measured at N=8:" + os.str()};
}

double train_accuracy(std::size_t workers, std::size_t group, std::size_t batch, std::size_t steps, double lr,
                      const Dataset& data, const ModelSpec& m) {
  SessionOptions o;
  o.workers = workers;
  o.group_size = group;
  o.batch = batch;
  o.learning_rate = lr;
  o.seed = 21;
  Session<float> session(m.root, m.input, o);
  EpochSharder sharder(data.size(), workers, batch, 21);
  for (std::size_t s = 0; s < steps; ++s) {
    std::vector<WorkerBatch<float>> batches;
    for (WorkerId w = 0; w < workers; ++w) batches.push_back(make_batch<float>(data, sharder.batch(w, s)));
    session.train_step(batches);
  }
  Network<float> net = session.assemble(0);
  std::vector<std::size_t> all(data.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  const auto b = make_batch<float>(data, all);
  return accuracy(net.fprop(b.images, StepContext{false, false}), std::span<const std::size_t>(b.labels));
}

Outcome training_smoke() {
  const ModelSpec toy = build_toy_cnn();
  const Dataset data = generate_synthetic(2048, toy.input, toy.classes, 33, 3.0);
  const std::size_t steps = 500, B = 8;
  const double hybrid = train_accuracy(4, 2, B, steps, 0.02, data, toy);
  // Same examples per step as the four-worker run.
  const double single = train_accuracy(1, 1, 4 * B, steps, 0.02, data, toy);
  std::ostringstream os;
  os << "N=4,K=2 train accuracy " << hybrid * 100 << "% after " << steps << " steps; N=1,K=1 with batch " << 4 * B
     << ": " << single * 100 << "%";
  return {hybrid >= 0.90 && std::abs(hybrid - single) <= 0.05, os.str()};
}

}  // namespace

int main() {
  struct Criterion {
    const char* id;
    double budget_seconds;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria{
      {"AC1", 1, weight_goldens},          {"AC2", 1, memory_savings},
      {"AC3", 60, deferred_equivalence},   {"AC4", 30, finite_differences},
      {"AC5", 10, mapping_properties},     {"AC6", 120, volume_reconciliation},
      {"AC7", 60, tradeoff_ordering},      {"AC8", 300, training_smoke},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto start = Clock::now();
    Outcome out;
    try {
      out = c.run();
    } catch (const std::exception& e) {
      out = {false, std::string("exception: ") + e.what()};
    }
    const double seconds = std::chrono::duration<double>(Clock::now() - start).count();
    const bool in_time = seconds <= c.budget_seconds;
    const bool pass = out.pass && in_time;
    failures += !pass;
    std::printf("%s %s (%.2fs of %.0fs) %s%s\n", c.id, pass ? "PASS" : "FAIL", seconds, c.budget_seconds,
                out.detail.c_str(), in_time ? "" : " [over time budget]");
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
