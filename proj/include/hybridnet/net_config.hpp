// SPDX-License-Identifier: Apache-2.0
//
// Line-oriented network description:
//
//   # comment
//   input 3 32 32
//   conv in=3 out=64 kernel=3 stride=1 pad=1 name=Conv0
//   relu
//   pool window=2 stride=2
//   pad size=1
//   dropout keep=0.5
//   reshape                 # flatten; "reshape 16 4 4" for explicit extents
//   linear in=4096 out=1024 name=FC0
//   log_softmax
#pragma once

#include <iosfwd>
#include <string>

#include "hybridnet/models.hpp"

namespace hybridnet {

/// Parses a network description. Throws FormatError with the line number on
/// malformed input and ShapeError if the layers do not chain.
ModelSpec parse_net_config(std::istream& in);
ModelSpec parse_net_config_string(const std::string& text);

/// Writes `model` in the format parse_net_config reads.
std::string to_net_config(const ModelSpec& model);

/// "vgg", "vgg:<input size>", "toy", or a path to a description file.
ModelSpec resolve_model(const std::string& name);

}  // namespace hybridnet
