// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "hybridnet/session.hpp"
#include "hybridnet/tensor.hpp"

namespace hybridnet {

/// Images stored as floats, example-major, each of shape `image`.
struct Dataset {
  Shape image;
  std::size_t classes = 0;
  std::vector<float> pixels;
  std::vector<std::uint8_t> labels;

  std::size_t size() const { return labels.size(); }
  std::size_t example_size() const { return image.numel(); }
};

inline constexpr std::size_t kCifarRecord = 3073;

/// CIFAR-10 binary batches: 3073-byte records, one label byte (0..9) then
/// 3072 pixel bytes (R, G, B planes of 32x32, row-major). Pixels are scaled
/// to [0, 1]. `path` is a file or a directory whose *.bin files are read in
/// name order. Throws FormatError on a bad length or label, with the file and
/// record index.
Dataset load_cifar10_binary(const std::string& path);

/// Inverse of the loader; pixels are rounded to the nearest byte.
void write_cifar10_binary(const std::string& path, const Dataset& data);

/// Planted linear rule: every class c has a smooth template t_c, an example
/// is x = t_c + noise for a uniform c, and its label is argmax_j <t_j, x>.
/// Deterministic in `seed`.
Dataset generate_synthetic(std::size_t n, const Shape& image, std::size_t classes, std::uint64_t seed,
                           double noise = 1.0);

/// The class templates generate_synthetic uses for the same arguments.
std::vector<std::vector<float>> synthetic_templates(const Shape& image, std::size_t classes, std::uint64_t seed);

/// Per-epoch shuffled order; each worker reads a disjoint contiguous shard of
/// it, B examples per step.
class EpochSharder {
 public:
  /// Throws ConfigError if a worker's shard holds fewer than `batch` examples.
  EpochSharder(std::size_t examples, std::size_t workers, std::size_t batch, std::uint64_t seed);

  std::size_t steps_per_epoch() const { return steps_per_epoch_; }
  /// Dataset indices of worker w's batch at global step s.
  std::vector<std::size_t> batch(std::size_t worker, std::size_t step);
  /// Shuffled order of the given epoch.
  std::vector<std::size_t> order(std::size_t epoch) const;

 private:
  std::size_t examples_;
  std::size_t workers_;
  std::size_t batch_;
  std::uint64_t seed_;
  std::size_t shard_;
  std::size_t steps_per_epoch_;
  std::size_t cached_epoch_ = static_cast<std::size_t>(-1);
  std::vector<std::size_t> cached_;
};

template <typename T>
WorkerBatch<T> make_batch(const Dataset& data, const std::vector<std::size_t>& indices);

}  // namespace hybridnet
