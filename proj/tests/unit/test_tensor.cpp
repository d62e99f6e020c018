// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <limits>

#include "cml/errors.hpp"
#include "cml/tensor.hpp"

using namespace cml;

TEST_CASE("shape bookkeeping") {
  Tensor t({2, 3, 4}, 1.5);
  CHECK(t.numel() == 24);
  CHECK(t.rank() == 3);
  CHECK(t.cols() == 4);
  CHECK(t.rows() == 6);
  CHECK(shape_to_string(t.shape()) == "[2,3,4]");
  CHECK(shape_numel({}) == 1);
}

TEST_CASE("scalar and item") {
  CHECK(Tensor::scalar(2.5).item() == 2.5);
  CHECK(Tensor::scalar(2.5).rank() == 0);
  CHECK_THROWS_AS(Tensor({2}).item(), ContractViolation);
}

TEST_CASE("reshape keeps data and rejects size changes") {
  Tensor t({2, 3}, std::vector<double>{1, 2, 3, 4, 5, 6});
  const Tensor r = t.reshaped({3, 2});
  CHECK(r.values() == t.values());
  CHECK(r.dim(0) == 3);
  CHECK_THROWS_AS(t.reshaped({4}), ContractViolation);
  CHECK_THROWS_AS(Tensor({2, 2}, std::vector<double>{1, 2, 3}), ContractViolation);
}

TEST_CASE("finiteness and fill") {
  Tensor t({3}, 0.0);
  CHECK(t.all_finite());
  t[1] = std::numeric_limits<double>::quiet_NaN();
  CHECK_FALSE(t.all_finite());
  t.fill(2.0);
  CHECK(t == Tensor({3}, 2.0));
}
