// SPDX-License-Identifier: Apache-2.0
#include "hybridnet/oracle.hpp"

#include <algorithm>
#include <sstream>

#include "hybridnet/random.hpp"
#include "hybridnet/session.hpp"

namespace hybridnet {

double OracleReport::max_conv_error() const {
  return conv_error.empty() ? 0.0 : *std::max_element(conv_error.begin(), conv_error.end());
}

double OracleReport::max_fc_error() const {
  return fc_error.empty() ? 0.0 : *std::max_element(fc_error.begin(), fc_error.end());
}

std::string OracleReport::summary() const {
  std::ostringstream os;
  os << "N=" << config.workers << " K=" << config.group_size << " B=" << config.batch << " seed=" << config.seed
     << ": conv max rel err " << max_conv_error() << " over " << conv_tensors << " tensors, fc max rel err "
     << max_fc_error() << " over " << fc_tensors << " tensors";
  return os.str();
}

OracleReport check_deferred_equivalence(const ModelSpec& model, const OracleCase& config) {
  SessionOptions opt;
  opt.workers = config.workers;
  opt.group_size = config.group_size;
  opt.batch = config.batch;
  opt.ccr_threshold = config.ccr_threshold;
  opt.seed = config.seed;
  opt.dropout = false;
  opt.apply_updates = false;
  Session<double> session(model.root, model.input, opt);

  Rng rng(derive_seed({config.seed, 0x0ac1e}));
  std::vector<WorkerBatch<double>> batches(config.workers);
  for (auto& b : batches) {
    b.images = Tensor<double>(model.input.prepend(config.batch));
    for (auto& v : b.images.data()) v = rng.normal();
    for (std::size_t j = 0; j < config.batch; ++j) b.labels.push_back(rng.below(model.classes));
  }
  session.train_step(batches);

  OracleReport report;
  report.config = config;
  const Topology& topo = session.topology();
  const StepContext eval{true, false, config.seed, 0, 0, 0};

  for (WorkerId w = 0; w < topo.workers(); ++w) {
    Network<double> single(model.root, model.input, config.seed);
    single.fprop(batches[w].images, eval);
    single.bprop(batches[w].labels);
    double err = 0.0;
    std::size_t tensors = 0;
    auto& lower = session.worker(w).lower;
    for (std::size_t i = 0; i < lower.size(); ++i) {
      auto mine = lower[i].parameters();
      auto ref = single.layer(lower[i].origin()).parameters();
      for (std::size_t j = 0; j < mine.size(); ++j) {
        err = std::max(err, max_relative_error(mine[j].grad, ref[j].grad));
        ++tensors;
      }
    }
    report.conv_error.push_back(err);
    report.conv_tensors = tensors;
  }

  for (std::size_t g = 0; g < topo.groups(); ++g) {
    const auto members = topo.group(g);
    Tensor<double> images(model.input.prepend(config.batch * members.size()));
    std::vector<std::size_t> labels;
    for (std::size_t o = 0; o < members.size(); ++o) {
      images.assign_rows(o * config.batch, batches[members[o]].images);
      labels.insert(labels.end(), batches[members[o]].labels.begin(), batches[members[o]].labels.end());
    }
    Network<double> single(model.root, model.input, config.seed);
    single.fprop(images, eval);
    single.bprop(labels);
    Network<double> stacked = session.assemble(g);

    double err = 0.0;
    std::size_t tensors = 0;
    for (auto& item : session.worker(members[0]).upper) {
      if (!item.layer) continue;
      auto mine = stacked.layer(item.layer->origin()).parameters();
      auto ref = single.layer(item.layer->origin()).parameters();
      for (std::size_t j = 0; j < mine.size(); ++j) {
        err = std::max(err, max_relative_error(fc_gradient_scale(mine[j].grad, members.size()), ref[j].grad));
        ++tensors;
      }
    }
    report.fc_error.push_back(err);
    report.fc_tensors = tensors;
  }
  return report;
}

}  // namespace hybridnet
