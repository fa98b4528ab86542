// SPDX-License-Identifier: Apache-2.0
#include "hybridnet/net_config.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <vector>

#include "hybridnet/error.hpp"

namespace hybridnet {

namespace {

struct Line {
  std::size_t number;
  std::string keyword;
  std::vector<std::string> positional;
  std::map<std::string, std::string> named;
};

[[noreturn]] void fail(std::size_t line, const std::string& msg) {
  throw FormatError("net config line " + std::to_string(line) + ": " + msg);
}

std::size_t to_size(const Line& l, const std::string& text) {
  std::size_t v = 0;
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc{} || ptr != end) fail(l.number, "expected a non-negative integer, got '" + text + "'");
  return v;
}

std::size_t get(const Line& l, const std::string& key) {
  auto it = l.named.find(key);
  if (it == l.named.end()) fail(l.number, "'" + l.keyword + "' needs " + key + "=");
  return to_size(l, it->second);
}

std::size_t get_or(const Line& l, const std::string& key, std::size_t fallback) {
  auto it = l.named.find(key);
  return it == l.named.end() ? fallback : to_size(l, it->second);
}

std::string name_of(const Line& l) {
  auto it = l.named.find("name");
  return it == l.named.end() ? std::string() : it->second;
}

Line tokenize(std::size_t number, const std::string& raw) {
  std::string text = raw.substr(0, raw.find('#'));
  std::istringstream ss(text);
  Line l{number, {}, {}, {}};
  ss >> l.keyword;
  std::string tok;
  while (ss >> tok) {
    auto eq = tok.find('=');
    if (eq == std::string::npos) {
      l.positional.push_back(tok);
    } else {
      l.named[tok.substr(0, eq)] = tok.substr(eq + 1);
    }
  }
  return l;
}

}  // namespace

ModelSpec parse_net_config(std::istream& in) {
  std::vector<LayerSpec> layers;
  std::optional<Shape> input;
  std::string raw;
  std::size_t number = 0;
  while (std::getline(in, raw)) {
    ++number;
    const Line l = tokenize(number, raw);
    if (l.keyword.empty()) continue;
    const std::string name = name_of(l);
    if (l.keyword == "input") {
      std::vector<std::size_t> extents;
      for (const auto& p : l.positional) extents.push_back(to_size(l, p));
      if (extents.empty()) fail(number, "input needs extents");
      try {
        input = Shape(extents);
      } catch (const ShapeError& e) {
        fail(number, e.what());
      }
    } else if (l.keyword == "conv") {
      const std::size_t k = get_or(l, "kernel", 3);
      layers.push_back(LayerSpec::conv(get(l, "in"), get(l, "out"), k, get_or(l, "stride", 1), get_or(l, "pad", 0), name));
    } else if (l.keyword == "pool") {
      const std::size_t w = get_or(l, "window", 2);
      layers.push_back(LayerSpec::pooling(w, get_or(l, "stride", w), name));
    } else if (l.keyword == "pad") {
      layers.push_back(LayerSpec::pad(get_or(l, "size", 1), name));
    } else if (l.keyword == "relu") {
      layers.push_back(LayerSpec::relu(name));
    } else if (l.keyword == "dropout") {
      auto it = l.named.find("keep");
      double keep = 0.5;
      if (it != l.named.end()) {
        try {
          keep = std::stod(it->second);
        } catch (const std::exception&) {
          fail(number, "bad keep probability '" + it->second + "'");
        }
      }
      if (!(keep > 0.0 && keep <= 1.0)) fail(number, "keep must be in (0, 1]");
      layers.push_back(LayerSpec::dropout(keep, name));
    } else if (l.keyword == "reshape" || l.keyword == "flatten") {
      std::vector<std::size_t> extents;
      for (const auto& p : l.positional) extents.push_back(to_size(l, p));
      layers.push_back(LayerSpec::reshape(std::move(extents), name));
    } else if (l.keyword == "linear") {
      layers.push_back(LayerSpec::linear(get(l, "in"), get(l, "out"), name));
    } else if (l.keyword == "log_softmax") {
      layers.push_back(LayerSpec::log_softmax(name));
    } else {
      fail(number, "unknown layer '" + l.keyword + "'");
    }
  }
  if (!input) throw FormatError("net config: missing 'input' line");
  if (layers.empty()) throw FormatError("net config: no layers");
  ModelSpec model{LayerSpec::seq(std::move(layers)), *input, 0};
  const Shape out = output_shape(model.root, model.input);
  if (out.rank() != 1) throw ShapeError("net config: network output " + out.str() + " is not a class vector");
  model.classes = out[0];
  return model;
}

ModelSpec parse_net_config_string(const std::string& text) {
  std::istringstream ss(text);
  return parse_net_config(ss);
}

std::string to_net_config(const ModelSpec& model) {
  std::ostringstream os;
  os << "input";
  for (auto e : model.input.extents()) os << ' ' << e;
  os << '\n';
  for (const auto& layer : flatten(model.root)) {
    const std::string name = layer.name.empty() ? "" : " name=" + layer.name;
    switch (layer.kind()) {
      case LayerKind::Conv: {
        const auto& c = layer.as<ConvSpec>();
        if (c.kernel_h != c.kernel_w) throw ValueError("net config supports square kernels only");
        os << "conv in=" << c.in_channels << " out=" << c.out_channels << " kernel=" << c.kernel_h
           << " stride=" << c.stride << " pad=" << c.pad << name << '\n';
        break;
      }
      case LayerKind::Pooling: {
        const auto& p = layer.as<PoolingSpec>();
        os << "pool window=" << p.window << " stride=" << p.stride << name << '\n';
        break;
      }
      case LayerKind::Pad: os << "pad size=" << layer.as<PadSpec>().pad << name << '\n'; break;
      case LayerKind::Relu: os << "relu" << name << '\n'; break;
      case LayerKind::Dropout: os << "dropout keep=" << layer.as<DropoutSpec>().keep << name << '\n'; break;
      case LayerKind::Reshape: {
        os << "reshape";
        for (auto e : layer.as<ReshapeSpec>().extents) os << ' ' << e;
        os << name << '\n';
        break;
      }
      case LayerKind::Linear: {
        const auto& l = layer.as<LinearSpec>();
        os << "linear in=" << l.in_dim << " out=" << l.out_dim << name << '\n';
        break;
      }
      case LayerKind::LogSoftmax: os << "log_softmax" << name << '\n'; break;
      default: throw ValueError(std::string("cannot serialize ") + to_string(layer.kind()));
    }
  }
  return os.str();
}

ModelSpec resolve_model(const std::string& name) {
  if (name == "vgg") return build_vgg_variant();
  if (name.rfind("vgg:", 0) == 0) {
    std::size_t size = 0;
    const std::string arg = name.substr(4);
    auto [ptr, ec] = std::from_chars(arg.data(), arg.data() + arg.size(), size);
    if (ec != std::errc{} || ptr != arg.data() + arg.size()) throw ConfigError("bad VGG input size in '" + name + "'");
    return build_vgg_variant(size);
  }
  if (name == "toy") return build_toy_cnn();
  std::ifstream f(name);
  if (!f) throw ConfigError("unknown model '" + name + "' (not vgg, vgg:<size>, toy, or a readable file)");
  return parse_net_config(f);
}

}  // namespace hybridnet
