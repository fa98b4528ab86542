// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <functional>
#include <numeric>
#include <sstream>
#include <thread>
#include <vector>

#include "hybridnet/error.hpp"
#include "hybridnet/fabric.hpp"
#include "testing.hpp"

namespace hybridnet {
namespace {

// Runs fn(w) on one thread per worker, starting them in `order`.
void run_workers(const std::vector<WorkerId>& order, const std::function<void(WorkerId)>& fn) {
  std::vector<std::thread> threads;
  for (WorkerId w : order) threads.emplace_back(fn, w);
  for (auto& t : threads) t.join();
}

std::vector<WorkerId> iota(std::size_t n) {
  std::vector<WorkerId> v(n);
  std::iota(v.begin(), v.end(), 0);
  return v;
}

Tensor<double> scalar(double v) { return Tensor<double>(Shape{1}, v); }

TEST(Topology, GroupsAndOffsets) {
  Topology t(8, 2);
  EXPECT_EQ(t.groups(), 4u);
  EXPECT_EQ(t.gid(5), 2u);
  EXPECT_EQ(t.offset(5), 1u);
  EXPECT_EQ(t.group(1), (std::vector<WorkerId>{2, 3}));
  EXPECT_EQ(t.same_offset(1), (std::vector<WorkerId>{1, 3, 5, 7}));
  EXPECT_THROW(Topology(4, 3), ConfigError);
  EXPECT_THROW(Topology(0, 1), ConfigError);
}

TEST(ScatterGather, PairExchange) {
  Fabric<double> f(Topology(2, 2));
  std::vector<double> got(2);
  run_workers({0, 1}, [&](WorkerId w) {
    const WorkerId peer = 1 - w;
    auto in = f.scatter_gather({0, 1}, w, Phase::ShardFprop, "x", {{w, peer, 0, scalar(10.0 + w)}}, {{peer, 0}});
    ASSERT_EQ(in.size(), 1u);
    got[w] = in[0].payload[0];
  });
  EXPECT_EQ(got, (std::vector<double>{11, 10}));
  EXPECT_EQ(f.stats().total(Phase::ShardFprop).messages, 2u);
  EXPECT_EQ(f.stats().total(Phase::ShardFprop).scalars_sent, 2u);
}

TEST(ScatterGather, EmptySendsActAsBarrier) {
  Fabric<double> f(Topology(3, 3));
  run_workers({2, 0, 1}, [&](WorkerId w) {
    EXPECT_TRUE(f.scatter_gather({0, 1, 2}, w, Phase::ModuloFprop, "b", {}, {}).empty());
  });
  EXPECT_EQ(f.stats().total(Phase::ModuloFprop), Counters{});
}

TEST(ScatterGather, AllToAllOfFour) {
  Fabric<double> f(Topology(4, 4));
  const auto g = iota(4);
  run_workers(g, [&](WorkerId w) {
    std::vector<Envelope<double>> sends;
    std::vector<Expect> expects;
    for (WorkerId p : g) {
      if (p == w) continue;
      sends.push_back({w, p, 0, scalar(static_cast<double>(w))});
      expects.push_back({p, 0});
    }
    const auto in = f.scatter_gather(g, w, Phase::ModuloFprop, "a2a", sends, expects);
    ASSERT_EQ(in.size(), 3u);
    for (const auto& e : in) EXPECT_EQ(e.payload[0], static_cast<double>(e.src));
  });
  const auto c = f.stats().total(Phase::ModuloFprop);
  EXPECT_EQ(c.messages, 12u);
  EXPECT_EQ(c.scalars_sent, 12u);
  EXPECT_EQ(c.scalars_received, 12u);
}

TEST(ScatterGather, MismatchedTagsNameBothWorkers) {
  Fabric<double> f(Topology(2, 2));
  std::vector<std::string> errors(2);
  run_workers({0, 1}, [&](WorkerId w) {
    try {
      f.scatter_gather({0, 1}, w, Phase::ShardFprop, w == 0 ? "layer=1" : "layer=2", {}, {});
    } catch (const FabricError& e) {
      errors[w] = e.what();
    }
  });
  for (const auto& e : errors) {
    EXPECT_NE(e.find("worker 0"), std::string::npos) << e;
    EXPECT_NE(e.find("worker 1"), std::string::npos) << e;
  }
}

TEST(ScatterGather, UnexpectedMessageIsAnError) {
  Fabric<double> f(Topology(2, 2));
  std::vector<int> failed(2, 0);
  run_workers({0, 1}, [&](WorkerId w) {
    try {
      std::vector<Envelope<double>> sends;
      if (w == 0) sends.push_back({0, 1, 0, scalar(1)});
      f.scatter_gather({0, 1}, w, Phase::ShardFprop, "t", sends, {});
    } catch (const FabricError&) {
      failed[w] = 1;
    }
  });
  EXPECT_EQ(failed, (std::vector<int>{1, 1}));
}

TEST(ScatterGather, SenderMustBeDepositor) {
  Fabric<double> f(Topology(2, 2));
  std::vector<int> failed(2, 0);
  run_workers({0, 1}, [&](WorkerId w) {
    try {
      f.scatter_gather({0, 1}, w, Phase::ShardFprop, "t", {{1 - w, w, 0, scalar(1)}}, {});
    } catch (const FabricError&) {
      failed[w] = 1;
    }
  });
  EXPECT_EQ(failed, (std::vector<int>{1, 1}));
}

TEST(ScatterGather, AbortReleasesWaiters) {
  Fabric<double> f(Topology(2, 2));
  bool threw = false;
  std::thread t([&] {
    try {
      f.barrier({0, 1}, 0, "never");
    } catch (const FabricError&) {
      threw = true;
    }
  });
  std::this_thread::sleep_for(std::chrono::milliseconds(20));
  f.abort("peer failed");
  t.join();
  EXPECT_TRUE(threw);
  EXPECT_TRUE(f.aborted());
}

TEST(ReduceSum, OwnerGetsTheSum) {
  Fabric<double> f(Topology(3, 3));
  std::vector<double> at_owner;
  run_workers({0, 1, 2}, [&](WorkerId w) {
    auto r = f.reduce_sum({0, 1, 2}, w, Phase::ShardBprop, "r", 1, scalar(w + 1.0));
    EXPECT_EQ(r.has_value(), w == 1);
    if (r) at_owner = r->vec();
  });
  EXPECT_EQ(at_owner, std::vector<double>{6});
}

TEST(ReduceSum, SingleMemberIsIdentity) {
  Fabric<double> f(Topology(1, 1));
  const auto t = testing::random_tensor(Shape{5}, 1);
  const auto r = f.reduce_sum({0}, 0, Phase::ShardBprop, "r", 0, t);
  ASSERT_TRUE(r);
  EXPECT_EQ(r->vec(), t.vec());
  EXPECT_EQ(f.stats().total(Phase::ShardBprop), Counters{});
}

TEST(ReduceSum, StartOrderDoesNotChangeBits) {
  std::vector<Tensor<double>> parts;
  for (std::uint64_t s = 0; s < 4; ++s) parts.push_back(testing::random_tensor(Shape{64}, s, -1e8, 1e8));
  std::vector<double> first;
  std::vector<WorkerId> order{0, 1, 2, 3};
  do {
    Fabric<double> f(Topology(4, 4));
    std::vector<double> got;
    run_workers(order, [&](WorkerId w) {
      auto r = f.reduce_sum({0, 1, 2, 3}, w, Phase::ShardBprop, "r", 0, parts[w]);
      if (r) got = r->vec();
    });
    if (first.empty()) first = got;
    EXPECT_EQ(got, first);
  } while (std::next_permutation(order.begin(), order.end()));
}

TEST(AllAverage, TwoReplicas) {
  Fabric<double> f(Topology(2, 1));
  std::vector<double> got(2);
  run_workers({0, 1}, [&](WorkerId w) { got[w] = f.all_average({0, 1}, w, Phase::DpAvg, "avg", scalar(2.0 * w))[0]; });
  EXPECT_EQ(got, (std::vector<double>{1, 1}));
  EXPECT_EQ(f.stats().total(Phase::DpAvg).scalars_sent, 2u);
}

TEST(AllAverage, IdenticalReplicasAreAFixedPoint) {
  const auto t = testing::random_tensor(Shape{7}, 2);
  Fabric<double> four(Topology(4, 1));
  run_workers({0, 1, 2, 3}, [&](WorkerId w) {
    EXPECT_EQ(four.all_average({0, 1, 2, 3}, w, Phase::DpAvg, "a", t).vec(), t.vec());
  });
  // 3t/3 can round away from t by an ulp.
  Fabric<double> three(Topology(3, 1));
  run_workers({0, 1, 2}, [&](WorkerId w) {
    EXPECT_LT(max_relative_error(three.all_average({0, 1, 2}, w, Phase::DpAvg, "a", t), t), 1e-15);
  });
}

TEST(AllAverage, EqualsDirectMeanExactly) {
  std::vector<Tensor<double>> v;
  for (std::uint64_t s = 0; s < 4; ++s) v.push_back(testing::random_tensor(Shape{32}, 10 + s));
  Tensor<double> mean(Shape{32});
  for (std::size_t i = 0; i < 32; ++i) mean[i] = (((v[0][i] + v[1][i]) + v[2][i]) + v[3][i]) / 4.0;
  Fabric<double> f(Topology(4, 1));
  run_workers({3, 1, 0, 2}, [&](WorkerId w) {
    EXPECT_EQ(f.all_average({0, 1, 2, 3}, w, Phase::DpAvg, "a", v[w]).vec(), mean.vec());
  });
}

TEST(CommStats, CsvAndCrossGroupTraffic) {
  CommStats s(4, 4);
  s.record(Phase::ModuloFprop, 0, 1, 10);
  s.record(Phase::ShardBprop, 2, 3, 5);
  EXPECT_EQ(s.cross_group_mp_scalars(Topology(4, 2)), 0u);
  s.record(Phase::ShardFprop, 1, 2, 7);
  EXPECT_EQ(s.cross_group_mp_scalars(Topology(4, 2)), 7u);
  s.record(Phase::DpAvg, 0, 2, 100);
  EXPECT_EQ(s.cross_group_mp_scalars(Topology(4, 2)), 7u);
  EXPECT_EQ(s.bytes_sent(Phase::ModuloFprop, 0), 40u);
  std::ostringstream os;
  s.write_csv(os);
  EXPECT_EQ(os.str().substr(0, os.str().find('\n')), "phase,worker,messages,scalars");
  EXPECT_NE(os.str().find("MODULO_FPROP,0,1,10"), std::string::npos);
}

}  // namespace
}  // namespace hybridnet
