// SPDX-License-Identifier: Apache-2.0
#include "hybridnet/app.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <memory>
#include <set>
#include <ostream>
#include <sstream>

#include "hybridnet/dataset.hpp"
#include "hybridnet/error.hpp"
#include "hybridnet/metrics.hpp"
#include "hybridnet/oracle.hpp"
#include "hybridnet/session.hpp"

namespace hybridnet {

namespace fs = std::filesystem;

namespace {

constexpr double kOracleTolerance = 1e-10;
constexpr std::size_t kOracleSeeds = 5;
constexpr std::size_t kEvalExamples = 2048;

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot write " + path.string());
  f << content;
  if (!f) throw FormatError("short write to " + path.string());
}

Dataset load_dataset(const RunConfig& c, const ValidatedRun& v) {
  if (v.dataset.kind == DatasetSpec::Kind::Cifar10Binary) return load_cifar10_binary(v.dataset.path);
  return generate_synthetic(v.dataset.num_examples, v.model.input, v.model.classes, c.seed, v.dataset.noise);
}

SessionOptions session_options(const RunConfig& c, std::size_t group_size) {
  SessionOptions o;
  o.workers = c.workers;
  o.group_size = group_size;
  o.batch = c.batch;
  o.avg_period = c.avg_period;
  o.ccr_threshold = c.ccr_threshold;
  o.learning_rate = c.lr;
  o.seed = c.seed;
  return o;
}

std::string plans_text(const std::vector<PartitionedNet>& plans) {
  std::string text;
  for (const auto& p : plans) text += plan_report(p) + "\n";
  return text;
}

// Divisors of N plus powers of two up to 16, wherever the FC weights split evenly.
std::vector<std::size_t> memory_group_sizes(const ModelSpec& model, std::size_t workers) {
  const MemoryReport base = memory_report(model.root, 1);
  std::set<std::size_t> ks{1, 2, 4, 8, 16};
  for (std::size_t k = 1; k <= workers; ++k) {
    if (workers % k == 0) ks.insert(k);
  }
  std::vector<std::size_t> out;
  for (std::size_t k : ks) {
    if (base.fc_total % k == 0) out.push_back(k);
  }
  return out;
}

template <typename T>
double evaluate(Network<T>& net, const Dataset& data) {
  const std::size_t n = std::min(data.size(), kEvalExamples);
  std::size_t hits = 0;
  const StepContext ctx{false, false, 0, 0, 0, 0};
  for (std::size_t begin = 0; begin < n; begin += 256) {
    std::vector<std::size_t> idx;
    for (std::size_t i = begin; i < std::min(n, begin + 256); ++i) idx.push_back(i);
    const WorkerBatch<T> b = make_batch<T>(data, idx);
    const Tensor<T> out = net.fprop(b.images, ctx);
    hits += static_cast<std::size_t>(std::lround(accuracy(out, b.labels) * static_cast<double>(idx.size())));
  }
  return n == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(n);
}

template <typename T>
int run_train(const RunConfig& c, const ValidatedRun& v, const fs::path& dir, std::ostream& out) {
  const Dataset data = load_dataset(c, v);
  if (data.size() == 0) throw ConfigError("dataset is empty; nothing to train on");
  if (data.image != v.model.input) {
    throw ConfigError("dataset images " + data.image.str() + " do not match network input " + v.model.input.str());
  }
  EpochSharder sharder(data.size(), c.workers, c.batch, c.seed);
  const std::size_t steps = c.steps > 0 ? c.steps : c.epochs * sharder.steps_per_epoch();
  Session<T> session(v.model.root, v.model.input, session_options(c, c.mp));
  write_file(dir / "plan.txt", plans_text(v.plans));

  std::ostringstream log;
  log << "step,worker,loss,images_per_sec\n";
  log << std::setprecision(9);
  double last_loss = 0.0;
  for (std::size_t s = 0; s < steps; ++s) {
    std::vector<WorkerBatch<T>> batches;
    for (WorkerId w = 0; w < c.workers; ++w) batches.push_back(make_batch<T>(data, sharder.batch(w, s)));
    const StepResult r = session.train_step(batches);
    last_loss = 0.0;
    for (WorkerId w = 0; w < c.workers; ++w) {
      const double ips = r.seconds[w] > 0.0 ? static_cast<double>(c.batch) / r.seconds[w] : 0.0;
      log << s << ',' << w << ',' << r.loss[w] << ',' << ips << '\n';
      last_loss += r.loss[w] / static_cast<double>(c.workers);
    }
    if ((s + 1) % 50 == 0 || s + 1 == steps) out << "step " << s + 1 << "/" << steps << " loss " << last_loss << '\n';
  }
  write_file(dir / "train_log.csv", log.str());

  std::ostringstream stats;
  session.stats().write_csv(stats);
  write_file(dir / "comm_stats.csv", stats.str());
  const VolumeModel model = predict_volume(session.plan(0), c.batch, c.mp, c.workers, c.avg_period, steps);
  const ReconcileReport rec = reconcile(model, session.stats(), session.topology());
  write_file(dir / "reconcile.txt", rec.text());

  Network<T> net = session.assemble(0);
  const double acc = evaluate(net, data);
  std::ostringstream summary;
  summary << "steps " << steps << "\nfinal mean loss " << last_loss << "\ntrain accuracy (group 0, first "
          << std::min(data.size(), kEvalExamples) << " examples) " << acc << "\nvolume reconciled "
          << (rec.ok() ? "yes" : "NO") << "\nimages_per_sec in train_log.csv is wall-clock on this host only\n";
  write_file(dir / "summary.txt", summary.str());
  out << summary.str();
  return rec.ok() ? kExitOk : kExitOracle;
}

int run_oracle(const RunConfig& c, const ValidatedRun& v, const fs::path& dir, std::ostream& out) {
  std::ostringstream text;
  bool ok = true;
  for (std::size_t i = 0; i < kOracleSeeds; ++i) {
    OracleCase oc;
    oc.workers = c.workers;
    oc.group_size = c.mp;
    oc.batch = c.batch;
    oc.seed = c.seed + i;
    oc.ccr_threshold = c.ccr_threshold;
    const OracleReport r = check_deferred_equivalence(v.model, oc);
    const bool pass = r.passed(kOracleTolerance);
    ok = ok && pass;
    text << (pass ? "PASS " : "FAIL ") << r.summary() << '\n';
  }
  text << "tolerance " << kOracleTolerance << " relative, 64-bit scalars, dropout off, updates deferred\n";
  write_file(dir / "oracle.txt", text.str());
  out << text.str();
  return ok ? kExitOk : kExitOracle;
}

int run_plan(const RunConfig& c, const ValidatedRun& v, const fs::path& dir, std::ostream& out) {
  const std::string text = plans_text(v.plans);
  write_file(dir / "plan.txt", text);
  std::ostringstream mem;
  write_memory_csv(mem, v.model.root, memory_group_sizes(v.model, c.workers));
  write_file(dir / "memory_report.csv", mem.str());
  out << text;
  return kExitOk;
}

template <typename T>
int run_sweep(const RunConfig& c, const ValidatedRun& v, const fs::path& dir, std::ostream& out) {
  const Dataset data = load_dataset(c, v);
  if (data.image != v.model.input) {
    throw ConfigError("dataset images " + data.image.str() + " do not match network input " + v.model.input.str());
  }
  EpochSharder sharder(data.size(), c.workers, c.batch, c.seed);
  const std::size_t steps = c.steps > 0 ? c.steps : c.avg_period;

  std::vector<VolumeModel> models;
  std::ostringstream rec_text;
  std::ostringstream table;
  table << std::fixed << std::setprecision(1) << std::left << std::setw(6) << "K" << std::setw(18) << "mp_scalars/step" << std::setw(18) << "dp_scalars/step"
        << std::setw(16) << "conv_weights" << std::setw(16) << "fc_weights" << "reconciled\n";
  bool ok = true;
  for (std::size_t k = 1; k <= c.workers; ++k) {
    if (c.workers % k != 0) continue;
    if (c.batch % k != 0) {
      table << std::setw(6) << k << "skipped: batch not divisible\n";
      continue;
    }
    SessionOptions o = session_options(c, k);
    std::unique_ptr<Session<T>> session;
    try {
      session = std::make_unique<Session<T>>(v.model.root, v.model.input, o);
    } catch (const PartitionError& e) {
      table << std::setw(6) << k << "skipped: " << e.what() << '\n';
      continue;
    }
    for (std::size_t s = 0; s < steps; ++s) {
      std::vector<WorkerBatch<T>> batches;
      for (WorkerId w = 0; w < c.workers; ++w) batches.push_back(make_batch<T>(data, sharder.batch(w, s)));
      session->train_step(batches);
    }
    const VolumeModel model = predict_volume(session->plan(0), c.batch, k, c.workers, c.avg_period, steps);
    const ReconcileReport rec = reconcile(model, session->stats(), session->topology());
    ok = ok && rec.ok();
    rec_text << "== K=" << k << " avg_period=" << c.avg_period << " steps=" << steps << " ==\n" << rec.text() << '\n';
    const WorkerWeights ww = worker_weights(session->plan(0));
    const double per_step = static_cast<double>(steps) * static_cast<double>(c.workers);
    table << std::setw(6) << k << std::setw(18) << static_cast<double>(model.mp_scalars()) / per_step
          << std::setw(18) << static_cast<double>(model.total(Phase::DpAvg).scalars_sent) / per_step << std::setw(16)
          << ww.conv << std::setw(16) << ww.fc << (rec.ok() ? "yes" : "NO") << '\n';
    models.push_back(model);
    out << "K=" << k << " done\n";
  }
  table << "(scalars per worker per step; weights per worker)\n";
  std::ostringstream csv;
  write_volume_csv(csv, models);
  write_file(dir / "volume_by_phase.csv", csv.str());
  write_file(dir / "reconcile.txt", rec_text.str());
  write_file(dir / "sweep.txt", table.str());
  std::ostringstream mem;
  write_memory_csv(mem, v.model.root, memory_group_sizes(v.model, c.workers));
  write_file(dir / "memory_report.csv", mem.str());
  out << table.str();
  return ok ? kExitOk : kExitOracle;
}

template <typename T>
int dispatch(const RunConfig& c, const ValidatedRun& v, const fs::path& dir, std::ostream& out) {
  switch (c.mode) {
    case Mode::Train: return run_train<T>(c, v, dir, out);
    case Mode::OracleCheck: return run_oracle(c, v, dir, out);
    case Mode::PlanOnly: return run_plan(c, v, dir, out);
    case Mode::VolumeSweep: return run_sweep<T>(c, v, dir, out);
  }
  return kExitConfig;
}

}  // namespace

int run(const RunConfig& config, std::ostream& out, std::ostream& err) {
  ValidatedRun validated;
  try {
    validated = validate(config);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const PartitionError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  }
  try {
    const fs::path dir(config.out);
    fs::create_directories(dir);
    write_file(dir / "config.txt", describe(config));
    return config.scalar_bits == 64 ? dispatch<double>(config, validated, dir, out)
                                    : dispatch<float>(config, validated, dir, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const FormatError& e) {
    err << "i/o error: " << e.what() << '\n';
    return kExitIo;
  } catch (const fs::filesystem_error& e) {
    err << "i/o error: " << e.what() << '\n';
    return kExitIo;
  }
}

}  // namespace hybridnet
