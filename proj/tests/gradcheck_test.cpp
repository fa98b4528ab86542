// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include "gradcheck.hpp"

namespace hybridnet {
namespace {

TEST(Gradcheck, EveryKernelAgreesWithCentralDifferences) {
  const auto rows = testing::run_gradcheck_suite(20, 2024);
  ASSERT_GE(rows.size(), 10u);
  for (const auto& r : rows) {
    EXPECT_EQ(r.cases, 20u);
    EXPECT_LT(r.worst, 1e-5) << r.kernel;
  }
}

}  // namespace
}  // namespace hybridnet
