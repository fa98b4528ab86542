// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <string>
#include <variant>
#include <vector>

#include "hybridnet/tensor.hpp"

namespace hybridnet {

enum class LayerKind { Seq, Reshape, Pad, Conv, Pooling, Dropout, Relu, Linear, LogSoftmax, Modulo, Shard };

const char* to_string(LayerKind kind);

struct LayerSpec;

struct SeqSpec {
  std::vector<LayerSpec> children;
};

/// Flattens each example to the given extents (empty = fully flat).
struct ReshapeSpec {
  std::vector<std::size_t> extents;
};

struct PadSpec {
  std::size_t pad = 1;
};

struct ConvSpec {
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kernel_h = 3;
  std::size_t kernel_w = 3;
  std::size_t stride = 1;
  std::size_t pad = 0;
};

/// Max pooling; window == stride gives non-overlapping windows.
struct PoolingSpec {
  std::size_t window = 2;
  std::size_t stride = 2;
};

struct DropoutSpec {
  double keep = 0.5;
};

struct ReluSpec {};

/// Fully connected layer. A partitioned layer owns output rows
/// [row_offset, row_offset + out_dim) of a full_out x in_dim matrix.
struct LinearSpec {
  std::size_t in_dim = 0;
  std::size_t out_dim = 0;
  std::size_t full_out = 0;
  std::size_t row_offset = 0;

  bool is_split() const { return out_dim != full_out; }
};

struct LogSoftmaxSpec {};

/// Inserted before the first partitioned linear layer; carries the full
/// per-example feature count exchanged between group members.
struct ModuloSpec {
  std::size_t dim_full = 0;
};

/// Inserted before a layer that needs the full width of a partitioned output.
struct ShardSpec {
  std::size_t dim = 0;
  std::size_t dim_full = 0;
};

struct LayerSpec {
  using Params = std::variant<SeqSpec, ReshapeSpec, PadSpec, ConvSpec, PoolingSpec, DropoutSpec, ReluSpec, LinearSpec,
                              LogSoftmaxSpec, ModuloSpec, ShardSpec>;

  std::string name;
  Params params;

  LayerKind kind() const;

  template <typename P>
  const P& as() const {
    return std::get<P>(params);
  }
  template <typename P>
  P& as() {
    return std::get<P>(params);
  }

  static LayerSpec seq(std::vector<LayerSpec> children, std::string name = "");
  static LayerSpec reshape(std::vector<std::size_t> extents = {}, std::string name = "");
  static LayerSpec pad(std::size_t pad, std::string name = "");
  static LayerSpec conv(std::size_t in_channels, std::size_t out_channels, std::size_t kernel, std::size_t stride = 1,
                        std::size_t pad = 0, std::string name = "");
  static LayerSpec pooling(std::size_t window, std::size_t stride, std::string name = "");
  static LayerSpec dropout(double keep, std::string name = "");
  static LayerSpec relu(std::string name = "");
  static LayerSpec linear(std::size_t in_dim, std::size_t out_dim, std::string name = "");
  static LayerSpec log_softmax(std::string name = "");
  static LayerSpec modulo(std::size_t dim_full);
  static LayerSpec shard(std::size_t dim, std::size_t dim_full);
};

/// Leaf layers of a (possibly nested) SEQ in execution order.
std::vector<LayerSpec> flatten(const LayerSpec& root);

/// Per-example output shape of a leaf layer for the given per-example input
/// shape; throws ShapeError if the layer cannot accept it.
Shape output_shape(const LayerSpec& layer, const Shape& input);

/// Weight-only parameter count (no bias) of a leaf layer.
std::size_t weight_count(const LayerSpec& layer);

/// Weight + bias parameter count of a leaf layer.
std::size_t parameter_count(const LayerSpec& layer);

/// Short human-readable hyperparameter summary, e.g. "conv 3->64 k3 s1 p1".
std::string describe(const LayerSpec& layer);

}  // namespace hybridnet
