// SPDX-License-Identifier: Apache-2.0
#include "hybridnet/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "hybridnet/error.hpp"
#include "hybridnet/net_config.hpp"
#include "hybridnet/topology.hpp"

namespace hybridnet {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename N>
N parse_number(const std::string& key, const std::string& value) {
  N out{};
  const char* first = value.data();
  const char* last = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(first, last, out);
  if (ec != std::errc() || ptr != last || value.empty() || value[0] == '-') {
    throw ConfigError(key + ": '" + value + "' is not a valid non-negative number");
  }
  return out;
}

double parse_real(const std::string& key, const std::string& value) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(value, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != value.size()) throw ConfigError(key + ": '" + value + "' is not a number");
  return out;
}

}  // namespace

const char* to_string(Mode mode) {
  switch (mode) {
    case Mode::Train: return "train";
    case Mode::OracleCheck: return "oracle-check";
    case Mode::PlanOnly: return "plan-only";
    case Mode::VolumeSweep: return "volume-sweep";
  }
  return "?";
}

Mode parse_mode(const std::string& text) {
  for (Mode m : {Mode::Train, Mode::OracleCheck, Mode::PlanOnly, Mode::VolumeSweep}) {
    if (text == to_string(m)) return m;
  }
  throw ConfigError("unknown mode '" + text + "' (train, oracle-check, plan-only, volume-sweep)");
}

DatasetSpec parse_dataset(const std::string& text) {
  DatasetSpec spec;
  if (text.rfind("cifar10:", 0) == 0) {
    spec.kind = DatasetSpec::Kind::Cifar10Binary;
    spec.path = text.substr(8);
    if (spec.path.empty()) throw ConfigError("dataset cifar10 needs a path: cifar10:<file or directory>");
    return spec;
  }
  if (text == "synthetic") return spec;
  if (text.rfind("synthetic:", 0) == 0) {
    const std::string rest = text.substr(10);
    const auto colon = rest.find(':');
    spec.num_examples = parse_number<std::size_t>("dataset", rest.substr(0, colon));
    if (colon != std::string::npos) spec.noise = parse_real("dataset noise", rest.substr(colon + 1));
    if (spec.noise < 0.0) throw ConfigError("dataset noise must be non-negative");
    return spec;
  }
  throw ConfigError("unknown dataset '" + text + "' (synthetic[:n[:noise]] or cifar10:<path>)");
}

void apply_setting(RunConfig& c, const std::string& key, const std::string& value) {
  if (key == "workers") {
    c.workers = parse_number<std::size_t>(key, value);
  } else if (key == "mp") {
    c.mp = parse_number<std::size_t>(key, value);
  } else if (key == "batch") {
    c.batch = parse_number<std::size_t>(key, value);
  } else if (key == "avg_period" || key == "avg-period") {
    c.avg_period = parse_number<std::size_t>(key, value);
  } else if (key == "ccr_threshold" || key == "ccr-threshold") {
    c.ccr_threshold = parse_real(key, value);
  } else if (key == "lr") {
    c.lr = parse_real(key, value);
  } else if (key == "epochs") {
    c.epochs = parse_number<std::size_t>(key, value);
  } else if (key == "steps") {
    c.steps = parse_number<std::size_t>(key, value);
  } else if (key == "seed") {
    c.seed = parse_number<std::uint64_t>(key, value);
  } else if (key == "scalar") {
    if (value == "32" || value == "float") {
      c.scalar_bits = 32;
    } else if (value == "64" || value == "double") {
      c.scalar_bits = 64;
    } else {
      throw ConfigError("scalar must be 32, 64, float or double, got '" + value + "'");
    }
  } else if (key == "net") {
    c.net = value;
  } else if (key == "dataset") {
    c.dataset = value;
  } else if (key == "mode") {
    c.mode = parse_mode(value);
  } else if (key == "out") {
    c.out = value;
  } else {
    throw ConfigError("unknown configuration key '" + key + "'");
  }
}

void read_config(std::istream& in, RunConfig& config) {
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(number) + ": expected key = value");
    try {
      apply_setting(config, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(number) + ": " + e.what());
    }
  }
}

void read_config_file(const std::string& path, RunConfig& config) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open config file " + path);
  try {
    read_config(in, config);
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

ValidatedRun validate(const RunConfig& c) {
  if (c.workers == 0) throw ConfigError("workers must be at least 1");
  if (c.mp == 0) throw ConfigError("mp must be at least 1");
  Topology topology(c.workers, c.mp);
  if (c.batch == 0 || c.batch % c.mp != 0) {
    throw ConfigError("batch " + std::to_string(c.batch) + " is not a positive multiple of mp " + std::to_string(c.mp));
  }
  if (c.avg_period == 0) throw ConfigError("avg_period must be at least 1");
  if (!(c.lr > 0.0)) throw ConfigError("lr must be positive");
  if (c.scalar_bits != 32 && c.scalar_bits != 64) throw ConfigError("scalar width must be 32 or 64 bits");
  if (c.mode == Mode::Train && c.epochs == 0 && c.steps == 0) throw ConfigError("train needs epochs or steps > 0");
  if (c.out.empty()) throw ConfigError("output directory must not be empty");

  ValidatedRun run;
  try {
    run.model = resolve_model(c.net);
  } catch (const FormatError& e) {
    throw ConfigError(std::string("net: ") + e.what());
  } catch (const ShapeError& e) {
    throw ConfigError(std::string("net: ") + e.what());
  }
  run.dataset = parse_dataset(c.dataset);
  if (run.dataset.kind == DatasetSpec::Kind::Cifar10Binary &&
      (run.model.input != Shape{3, 32, 32} || run.model.classes != 10)) {
    throw ConfigError("cifar10 needs a network with 3x32x32 input and 10 classes, '" + c.net + "' has " +
                      run.model.input.str() + " and " + std::to_string(run.model.classes));
  }
  if (c.mode == Mode::Train && run.dataset.kind == DatasetSpec::Kind::Synthetic &&
      run.dataset.num_examples < c.workers * c.batch) {
    throw ConfigError("synthetic dataset of " + std::to_string(run.dataset.num_examples) +
                      " examples is smaller than one step (" + std::to_string(c.workers * c.batch) + ")");
  }
  for (std::size_t o = 0; o < c.mp; ++o) {
    PartitionOptions po;
    po.group_size = c.mp;
    po.ccr_threshold = c.ccr_threshold;
    po.batch = c.batch;
    po.offset = o;
    run.plans.push_back(partition_network(run.model.root, run.model.input, po));
  }
  return run;
}

std::string describe(const RunConfig& c) {
  std::ostringstream os;
  os << "workers = " << c.workers << "\nmp = " << c.mp << "\nbatch = " << c.batch << "\navg_period = " << c.avg_period
     << "\nccr_threshold = " << c.ccr_threshold << "\nlr = " << c.lr << "\nepochs = " << c.epochs
     << "\nsteps = " << c.steps << "\nseed = " << c.seed << "\nscalar = " << c.scalar_bits << "\nnet = " << c.net
     << "\ndataset = " << c.dataset << "\nmode = " << to_string(c.mode) << "\nout = " << c.out << '\n';
  return os.str();
}

}  // namespace hybridnet
