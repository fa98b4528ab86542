// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "hybridnet/error.hpp"
#include "hybridnet/kernels.hpp"
#include "hybridnet/layers.hpp"
#include "hybridnet/models.hpp"
#include "hybridnet/partitioner.hpp"

namespace hybridnet {
namespace {

PartitionedNet plan_vgg(std::size_t k, double threshold = 0.0, std::size_t offset = 0, bool mp = true) {
  const auto m = build_vgg_variant();
  PartitionOptions o;
  o.group_size = k;
  o.ccr_threshold = threshold;
  o.batch = 64;
  o.offset = offset;
  o.mp_enabled = mp;
  return partition_network(m.root, m.input, o);
}

std::vector<std::string> trace(const PartitionedNet& p) {
  std::vector<std::string> out;
  for (const auto& l : p.layers) {
    if (l.kind() == LayerKind::Modulo || l.kind() == LayerKind::Shard || l.kind() == LayerKind::Linear ||
        l.kind() == LayerKind::LogSoftmax) {
      out.push_back(l.kind() == LayerKind::Linear ? l.name : to_string(l.kind()));
    }
  }
  return out;
}

TEST(Partition, VggWithTwoWorkersPerGroup) {
  const auto p = plan_vgg(2);
  EXPECT_EQ(trace(p), (std::vector<std::string>{"MODULO", "FC0", "SHARD", "FC1", "SHARD", "FC2", "SHARD",
                                                "LOG_SOFTMAX"}));
  const auto fc0 = p.transformed(18);
  ASSERT_EQ(fc0.size(), 1u);
  const auto& l = p.layers[fc0[0]].as<LinearSpec>();
  EXPECT_EQ(l.in_dim, 4096u);
  EXPECT_EQ(l.out_dim, 512u);
  EXPECT_EQ(l.full_out, 1024u);
  ASSERT_TRUE(p.modulo_index().has_value());
  EXPECT_EQ(p.layers[*p.modulo_index()].as<ModuloSpec>().dim_full, 4096u);
  EXPECT_EQ(p.shard_indices().size(), 3u);
}

TEST(Partition, InsertedLayersHaveNoOrigin) {
  const auto p = plan_vgg(2);
  for (std::size_t i = 0; i < p.size(); ++i) {
    const bool inserted = p.layers[i].kind() == LayerKind::Modulo || p.layers[i].kind() == LayerKind::Shard;
    EXPECT_EQ(p.origin[i] == kInserted, inserted) << i;
  }
}

TEST(Partition, SingleWorkerGroupIsIdentity) {
  const auto m = build_vgg_variant();
  const auto flat = flatten(m.root);
  for (const auto& p : {plan_vgg(1), plan_vgg(4, 0.0, 0, false)}) {
    ASSERT_EQ(p.size(), flat.size());
    for (std::size_t i = 0; i < p.size(); ++i) {
      EXPECT_EQ(p.layers[i].kind(), flat[i].kind());
      EXPECT_EQ(weight_count(p.layers[i]), weight_count(flat[i]));
      EXPECT_EQ(p.origin[i], i);
    }
  }
}

TEST(Partition, InfiniteThresholdClosesTheGate) {
  const auto p = plan_vgg(2, std::numeric_limits<double>::infinity());
  EXPECT_EQ(trace(p), (std::vector<std::string>{"FC0", "FC1", "FC2", "LOG_SOFTMAX"}));
  EXPECT_FALSE(p.modulo_index().has_value());
  for (const auto& l : p.layers) {
    if (l.kind() == LayerKind::Linear) {
      EXPECT_FALSE(l.as<LinearSpec>().is_split());
    }
  }
}

TEST(Partition, UnsplittableClassifierFails) {
  EXPECT_THROW(plan_vgg(4), PartitionError);
}

TEST(Partition, ThresholdKeepsClassifierReplicated) {
  // FC2 has CCR 1.5*10*4/3 = 20; FC0/FC1 have 2048.
  const auto p = plan_vgg(4, 100.0);
  EXPECT_EQ(trace(p), (std::vector<std::string>{"MODULO", "FC0", "SHARD", "FC1", "SHARD", "FC2", "LOG_SOFTMAX"}));
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p.layers[i].name == "FC2") {
      EXPECT_FALSE(p.layers[i].as<LinearSpec>().is_split());
    }
  }
}

TEST(Partition, OffsetsTileTheOutputRows) {
  for (std::size_t k : {2u, 4u, 8u}) {
    std::vector<int> covered(1024, 0);
    for (std::size_t o = 0; o < k; ++o) {
      const auto p = plan_vgg(k, 100.0, o);
      const auto idx = p.transformed(18)[0];
      const auto r = p.owned_rows(idx);
      EXPECT_EQ(r.size(), 1024 / k);
      for (std::size_t j = r.begin; j < r.end; ++j) ++covered[j];
    }
    for (int c : covered) EXPECT_EQ(c, 1);
  }
}

TEST(Partition, ShardCoversTheFullWidth) {
  const auto p = plan_vgg(2, 0.0, 1);
  const auto shards = p.shard_indices();
  const auto& s = p.layers[shards[0]].as<ShardSpec>();
  EXPECT_EQ(s.dim, 512u);
  EXPECT_EQ(s.dim_full, 1024u);
  const auto r = p.shard_member_ranges(shards[0]);
  EXPECT_EQ(r, (std::vector<RowRange>{{0, 512}, {512, 1024}}));
  EXPECT_EQ(p.output_shapes[shards[0]], (Shape{1024}));
}

TEST(Partition, ReportNamesInsertedLayers) {
  const std::string report = plan_report(plan_vgg(2));
  EXPECT_NE(report.find("MODULO"), std::string::npos);
  EXPECT_NE(report.find("4096->512"), std::string::npos);
}

TEST(Ccr, FormulaAndDegenerateCases) {
  LinearSpec fc0{4096, 1024, 1024, 0};
  // 3*B*4096*1024 operations over 2*B*4096*(K-1)/K exchanged scalars.
  EXPECT_DOUBLE_EQ(ccr(fc0, 64, 2), 3.0 * 64 * 4096 * 1024 / (2.0 * 64 * 4096 / 2));
  EXPECT_DOUBLE_EQ(ccr(fc0, 64, 4), ccr(fc0, 128, 4));
  EXPECT_EQ(ccr(LinearSpec{0, 0, 0, 0}, 64, 2), 0.0);
}

TEST(Ccr, OperationCountMatchesInstrumentedKernels) {
  const std::size_t B = 4, in = 12, out = 6;
  auto layer = make_layer<double>(LayerSpec::linear(in, out), 0, 1);
  kernels::mac_counter() = 0;
  const Tensor<double> x(Shape{B, in}, 0.5);
  layer->forward(x, StepContext{});
  layer->backward(Tensor<double>(Shape{B, out}, 1.0));
  EXPECT_EQ(kernels::mac_counter(), 3 * B * in * out);
}

TEST(SplitLinear, SlicingArithmetic) {
  const auto fc0 = LayerSpec::linear(4096, 1024, "FC0");
  const auto s = split_linear(fc0, 2, 1).as<LinearSpec>();
  EXPECT_EQ(s.in_dim, 4096u);
  EXPECT_EQ(s.out_dim, 512u);
  EXPECT_EQ(s.row_offset, 512u);
  EXPECT_FALSE(split_linear(fc0, 1, 0).as<LinearSpec>().is_split());
  EXPECT_THROW(split_linear(LayerSpec::linear(1024, 10, "FC2"), 4, 0), PartitionError);
  EXPECT_THROW(split_linear(fc0, 2, 2), PartitionError);
}

}  // namespace
}  // namespace hybridnet
