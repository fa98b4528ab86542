// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>

#include "hybridnet/layer_spec.hpp"

namespace hybridnet {

struct ModelSpec {
  LayerSpec root;
  /// Per-example input shape (channels, height, width).
  Shape input;
  std::size_t classes = 0;
};

/// VGG-style CIFAR network: seven 3x3 convolutions (3-64-64-128-128-256-256-256)
/// with a 2x2 max pool after the 2nd, 4th and 7th, then FC 4096-1024-1024-10
/// with ReLU and dropout between the FC layers. `input_size` must be a
/// multiple of 8; at 32 the first FC layer sees 256 * 4 * 4 = 4096 features.
/// Smaller inputs shrink only the first FC layer.
ModelSpec build_vgg_variant(std::size_t input_size = 32, double dropout_keep = 0.5);

/// Two conv + two FC layers (~52k parameters) on 3x16x16 inputs with 8
/// classes. Every FC width divides by 1, 2, 4 and 8.
ModelSpec build_toy_cnn();

}  // namespace hybridnet
