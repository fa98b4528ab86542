// SPDX-License-Identifier: Apache-2.0
#include "hybridnet/models.hpp"

#include "hybridnet/error.hpp"

namespace hybridnet {

ModelSpec build_vgg_variant(std::size_t input_size, double dropout_keep) {
  if (input_size == 0 || input_size % 8 != 0) {
    throw ValueError("VGG input size must be a positive multiple of 8, got " + std::to_string(input_size));
  }
  const std::size_t side = input_size / 8;
  using L = LayerSpec;
  std::vector<LayerSpec> layers{
      L::conv(3, 64, 3, 1, 1, "Conv0"),
      L::relu(),
      L::conv(64, 64, 3, 1, 1, "Conv1"),
      L::relu(),
      L::pooling(2, 2, "Pool0"),
      L::conv(64, 128, 3, 1, 1, "Conv2"),
      L::relu(),
      L::conv(128, 128, 3, 1, 1, "Conv3"),
      L::relu(),
      L::pooling(2, 2, "Pool1"),
      L::conv(128, 256, 3, 1, 1, "Conv4"),
      L::relu(),
      L::conv(256, 256, 3, 1, 1, "Conv5"),
      L::relu(),
      L::conv(256, 256, 3, 1, 1, "Conv6"),
      L::relu(),
      L::pooling(2, 2, "Pool2"),
      L::reshape({}, "Flatten"),
      L::linear(256 * side * side, 1024, "FC0"),
      L::relu(),
      L::dropout(dropout_keep),
      L::linear(1024, 1024, "FC1"),
      L::relu(),
      L::dropout(dropout_keep),
      L::linear(1024, 10, "FC2"),
      L::log_softmax(),
  };
  return {L::seq(std::move(layers), "vgg_variant"), Shape{3, input_size, input_size}, 10};
}

ModelSpec build_toy_cnn() {
  using L = LayerSpec;
  std::vector<LayerSpec> layers{
      L::conv(3, 8, 3, 1, 1, "Conv0"),   L::relu(), L::pooling(2, 2),
      L::conv(8, 16, 3, 1, 1, "Conv1"),  L::relu(), L::pooling(2, 2),
      L::reshape({}, "Flatten"),         L::linear(256, 192, "FC0"),
      L::relu(),                         L::linear(192, 8, "FC1"),
      L::log_softmax(),
  };
  return {L::seq(std::move(layers), "toy_cnn"), Shape{3, 16, 16}, 8};
}

}  // namespace hybridnet
