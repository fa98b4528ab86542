// SPDX-License-Identifier: Apache-2.0
#include "hybridnet/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>

#include "hybridnet/error.hpp"
#include "hybridnet/random.hpp"

namespace hybridnet {

namespace fs = std::filesystem;

namespace {

constexpr std::size_t kCifarPixels = 3072;

void load_file(const fs::path& file, Dataset& out) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw FormatError("cannot open " + file.string());
  const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() % kCifarRecord != 0) {
    throw FormatError(file.string() + ": length " + std::to_string(bytes.size()) + " is not a multiple of the " +
                      std::to_string(kCifarRecord) + "-byte record size");
  }
  const std::size_t records = bytes.size() / kCifarRecord;
  out.pixels.reserve(out.pixels.size() + records * kCifarPixels);
  for (std::size_t r = 0; r < records; ++r) {
    const unsigned char* rec = bytes.data() + r * kCifarRecord;
    if (rec[0] > 9) {
      throw FormatError(file.string() + ": record " + std::to_string(r) + " has label " + std::to_string(rec[0]) +
                        ", expected 0..9");
    }
    out.labels.push_back(rec[0]);
    for (std::size_t i = 1; i < kCifarRecord; ++i) out.pixels.push_back(static_cast<float>(rec[i]) / 255.0f);
  }
}

}  // namespace

Dataset load_cifar10_binary(const std::string& path) {
  Dataset data;
  data.image = Shape{3, 32, 32};
  data.classes = 10;
  std::error_code ec;
  if (fs::is_directory(path, ec)) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(path)) {
      if (entry.is_regular_file() && entry.path().extension() == ".bin") files.push_back(entry.path());
    }
    if (files.empty()) throw FormatError("no .bin files in " + path);
    std::sort(files.begin(), files.end());
    for (const auto& f : files) load_file(f, data);
  } else {
    load_file(path, data);
  }
  return data;
}

void write_cifar10_binary(const std::string& path, const Dataset& data) {
  if (data.image != Shape{3, 32, 32}) throw ShapeError("CIFAR-10 records hold 3x32x32 images, got " + data.image.str());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path);
  std::vector<char> rec(kCifarRecord);
  for (std::size_t e = 0; e < data.size(); ++e) {
    if (data.labels[e] > 9) throw ValueError("label " + std::to_string(data.labels[e]) + " does not fit CIFAR-10");
    rec[0] = static_cast<char>(data.labels[e]);
    for (std::size_t i = 0; i < kCifarPixels; ++i) {
      const float v = std::clamp(data.pixels[e * kCifarPixels + i], 0.0f, 1.0f);
      rec[i + 1] = static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0f)));
    }
    out.write(rec.data(), static_cast<std::streamsize>(rec.size()));
  }
  if (!out) throw FormatError("short write to " + path);
}

std::vector<std::vector<float>> synthetic_templates(const Shape& image, std::size_t classes, std::uint64_t seed) {
  if (image.rank() != 3) throw ShapeError("synthetic images must be (channels, height, width), got " + image.str());
  const std::size_t c = image[0], h = image[1], w = image[2];
  // Constant over 4x4 blocks so the pattern survives pooling.
  const std::size_t bh = std::max<std::size_t>(1, h / 4), bw = std::max<std::size_t>(1, w / 4);
  const std::size_t gh = (h + bh - 1) / bh, gw = (w + bw - 1) / bw;
  Rng rng(derive_seed({seed, 0x7e3a}));
  std::vector<std::vector<float>> templates(classes, std::vector<float>(image.numel()));
  for (auto& t : templates) {
    std::vector<float> grid(c * gh * gw);
    for (auto& g : grid) g = static_cast<float>(rng.normal());
    for (std::size_t ch = 0; ch < c; ++ch) {
      for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) t[(ch * h + y) * w + x] = grid[(ch * gh + y / bh) * gw + x / bw];
      }
    }
  }
  return templates;
}

Dataset generate_synthetic(std::size_t n, const Shape& image, std::size_t classes, std::uint64_t seed, double noise) {
  if (classes == 0 || classes > 256) throw ValueError("synthetic class count must be in [1, 256]");
  Dataset data;
  data.image = image;
  data.classes = classes;
  const auto templates = synthetic_templates(image, classes, seed);
  const std::size_t d = image.numel();
  Rng rng(derive_seed({seed, 0xda7a}));
  data.pixels.resize(n * d);
  data.labels.resize(n);
  for (std::size_t e = 0; e < n; ++e) {
    const std::size_t cls = rng.below(classes);
    float* x = data.pixels.data() + e * d;
    for (std::size_t i = 0; i < d; ++i) x[i] = templates[cls][i] + static_cast<float>(noise * rng.normal());
    std::size_t best = 0;
    double best_score = -INFINITY;
    for (std::size_t j = 0; j < classes; ++j) {
      double score = 0.0;
      for (std::size_t i = 0; i < d; ++i) score += static_cast<double>(templates[j][i]) * x[i];
      if (score > best_score) {
        best_score = score;
        best = j;
      }
    }
    data.labels[e] = static_cast<std::uint8_t>(best);
  }
  return data;
}

EpochSharder::EpochSharder(std::size_t examples, std::size_t workers, std::size_t batch, std::uint64_t seed)
    : examples_(examples), workers_(workers), batch_(batch), seed_(seed) {
  if (workers == 0 || batch == 0) throw ConfigError("workers and batch size must be positive");
  shard_ = examples / workers;
  steps_per_epoch_ = shard_ / batch;
  if (steps_per_epoch_ == 0) {
    throw ConfigError("dataset of " + std::to_string(examples) + " examples cannot give each of " +
                      std::to_string(workers) + " workers a batch of " + std::to_string(batch));
  }
}

std::vector<std::size_t> EpochSharder::order(std::size_t epoch) const {
  std::vector<std::size_t> idx(examples_);
  for (std::size_t i = 0; i < examples_; ++i) idx[i] = i;
  Rng rng(derive_seed({seed_, 0x5a0f, epoch}));
  for (std::size_t i = examples_; i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
  return idx;
}

std::vector<std::size_t> EpochSharder::batch(std::size_t worker, std::size_t step) {
  if (worker >= workers_) throw ValueError("worker " + std::to_string(worker) + " out of range");
  const std::size_t epoch = step / steps_per_epoch_;
  if (epoch != cached_epoch_) {
    cached_ = order(epoch);
    cached_epoch_ = epoch;
  }
  const std::size_t begin = worker * shard_ + (step % steps_per_epoch_) * batch_;
  return {cached_.begin() + static_cast<std::ptrdiff_t>(begin),
          cached_.begin() + static_cast<std::ptrdiff_t>(begin + batch_)};
}

template <typename T>
WorkerBatch<T> make_batch(const Dataset& data, const std::vector<std::size_t>& indices) {
  const std::size_t d = data.example_size();
  WorkerBatch<T> b;
  b.images = Tensor<T>(data.image.prepend(indices.size()));
  auto dst = b.images.data();
  for (std::size_t j = 0; j < indices.size(); ++j) {
    const std::size_t e = indices[j];
    if (e >= data.size()) throw ValueError("example index " + std::to_string(e) + " out of range");
    for (std::size_t i = 0; i < d; ++i) dst[j * d + i] = static_cast<T>(data.pixels[e * d + i]);
    b.labels.push_back(data.labels[e]);
  }
  return b;
}

template WorkerBatch<float> make_batch(const Dataset&, const std::vector<std::size_t>&);
template WorkerBatch<double> make_batch(const Dataset&, const std::vector<std::size_t>&);

}  // namespace hybridnet
