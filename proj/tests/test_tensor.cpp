// Copyright 2026 The MHE-SDC Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <limits>
#include <sstream>

#include "mhe/error.hpp"
#include "mhe/graph.hpp"
#include "mhe/hmt.hpp"
#include "mhe/ops.hpp"
#include "mhe/random.hpp"
#include "mhe/tensor.hpp"
#include "test_util.hpp"

namespace mhe {
namespace {

using testing::naive_conv;
using testing::random_tensor;
using testing::rel_diff;

TEST(Tensor, ShapeBookkeeping) {
  TensorF t({2, 3, 4, 5}, 1.5f);
  EXPECT_EQ(t.numel(), 120u);
  EXPECT_EQ(t.rank(), 4u);
  EXPECT_EQ(t.nchw().plane(), 20u);
  EXPECT_EQ(dims_to_string(t.dims()), "[2x3x4x5]");
  TensorF s = TensorF::scalar(3.0f);
  EXPECT_EQ(s.numel(), 1u);
  EXPECT_EQ(s.item(), 3.0f);
}

TEST(Tensor, RejectsBadShapes) {
  EXPECT_THROW(TensorF({1, 2, 3, 4, 5}), InvalidArgument);
  EXPECT_THROW(TensorF({2, 0}), InvalidArgument);
  EXPECT_THROW(TensorF({2, 2}, std::vector<float>(3)), InvalidArgument);
  EXPECT_THROW(TensorF({2, 2}).item(), InvalidArgument);
  EXPECT_THROW(TensorF({2, 2}).reshaped({3}), InvalidArgument);
  EXPECT_THROW(TensorF({2, 2}).nchw(), InvalidArgument);
}

TEST(Tensor, FromExternalRejectsNonFinite) {
  std::vector<float> v = {1.f, std::numeric_limits<float>::quiet_NaN()};
  EXPECT_THROW(TensorF::from_external({2}, v), InvalidArgument);
  v[1] = std::numeric_limits<float>::infinity();
  EXPECT_THROW(TensorF::from_external({2}, v), InvalidArgument);
  v[1] = 2.f;
  EXPECT_NO_THROW(TensorF::from_external({2}, v));
}

TEST(Tensor, AddInplaceAndCast) {
  TensorD a({3}, std::vector<double>{1, 2, 3});
  a.add_inplace(TensorD({3}, 0.5));
  EXPECT_EQ(a[2], 3.5);
  EXPECT_THROW(a.add_inplace(TensorD({2})), InvalidArgument);
  TensorF f = a.cast<float>();
  EXPECT_EQ(f.dims(), a.dims());
  EXPECT_EQ(f[0], 1.5f);
}

TEST(Random, DeriveSeedSeparatesLabelsAndIndices) {
  EXPECT_EQ(derive_seed(7, "init"), derive_seed(7, "init"));
  EXPECT_NE(derive_seed(7, "init"), derive_seed(7, "pretrain"));
  EXPECT_NE(derive_seed(7, "init"), derive_seed(8, "init"));
  EXPECT_NE(derive_seed(7, "shuffle", 0), derive_seed(7, "shuffle", 1));
  // Published FNV-1a test vectors.
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
}

TEST(Hmt, RoundTripIsBitIdentical) {
  Rng rng(1);
  for (const Dims& dims : {Dims{}, Dims{7}, Dims{2, 3}, Dims{1, 3, 4, 5}}) {
    TensorF f = random_tensor<float>(dims, rng);
    TensorD d = random_tensor<double>(dims, rng);
    std::string bytes = encode_hmt(f);
    EXPECT_EQ(bytes.size(), hmt_encoded_size(DType::kF32, dims));
    std::istringstream in(bytes);
    TensorF back = read_hmt<float>(in);
    EXPECT_EQ(back, f);
    EXPECT_EQ(encode_hmt(back), bytes);
    std::istringstream in2(encode_hmt(d));
    EXPECT_EQ(read_hmt<double>(in2), d);
  }
}

TEST(Hmt, HeaderLayout) {
  TensorF t({2, 3}, 1.0f);
  std::string b = encode_hmt(t);
  ASSERT_EQ(b.size(), 4u + 1 + 1 + 2 * 4 + 6 * 4);
  EXPECT_EQ(b.substr(0, 4), "HMT1");
  EXPECT_EQ(b[4], 0);
  EXPECT_EQ(b[5], 2);
  std::uint32_t d0 = 0;
  std::memcpy(&d0, b.data() + 6, 4);
  EXPECT_EQ(d0, 2u);
  float v = 0;
  std::memcpy(&v, b.data() + 14, 4);
  EXPECT_EQ(v, 1.0f);
}

TEST(Hmt, RejectsCorruptRecords) {
  TensorF t({2, 2}, 1.0f);
  std::string good = encode_hmt(t);
  auto parse = [](std::string bytes) {
    std::istringstream in(bytes);
    return read_hmt<float>(in);
  };
  std::string bad = good;
  bad[0] = 'X';
  EXPECT_THROW(parse(bad), IoError);
  bad = good;
  bad[4] = 9;
  EXPECT_THROW(parse(bad), IoError);
  bad = good;
  bad[5] = 5;
  EXPECT_THROW(parse(bad), IoError);
  EXPECT_THROW(parse(good.substr(0, good.size() - 1)), IoError);
  bad = good;
  float nan = std::numeric_limits<float>::quiet_NaN();
  std::memcpy(bad.data() + bad.size() - 4, &nan, 4);
  EXPECT_THROW(parse(bad), IoError);
}

TEST(Hmt, FileTrailingBytesRejected) {
  testing::TempDir dir("hmt");
  auto p = dir.path() / "t.hmt";
  TensorD t({3}, 2.0);
  save_hmt(p, t);
  EXPECT_EQ(load_hmt<double>(p), t);
  EXPECT_EQ(load_hmt<float>(p), TensorF({3}, 2.0f));
  { std::ofstream out(p, std::ios::app | std::ios::binary); out << 'x'; }
  EXPECT_THROW(load_hmt<double>(p), IoError);
  EXPECT_THROW(load_hmt<double>(dir.path() / "missing.hmt"), IoError);
}

TEST(Conv2d, MatchesNaiveLoops) {
  Rng rng(3);
  for (std::size_t stride : {1u, 2u}) {
    for (std::size_t k : {1u, 3u}) {
      TensorD x = random_tensor<double>({2, 3, 7, 6}, rng);
      TensorD w = random_tensor<double>({4, 3, k, k}, rng);
      ops::ConvGeometry g{stride, k / 2};
      EXPECT_LT(rel_diff(ops::conv2d(x, w, g), naive_conv(x, w, stride, k / 2)), 1e-12)
          << "stride " << stride << " k " << k;
    }
  }
}

TEST(Conv2d, GradientsAreAdjoints) {
  // <conv(x), g> == <x, grad_input(g)> == <w, grad_weight(x, g)>
  Rng rng(4);
  TensorD x = random_tensor<double>({2, 3, 6, 6}, rng);
  TensorD w = random_tensor<double>({2, 3, 3, 3}, rng);
  ops::ConvGeometry g{2, 1};
  TensorD y = ops::conv2d(x, w, g);
  TensorD go = random_tensor<double>(y.dims(), rng);
  TensorD gx = ops::conv2d_grad_input(go, w, x.dims(), g);
  TensorD gw = ops::conv2d_grad_weight(x, go, w.dims(), g);
  auto dot = [](const TensorD& a, const TensorD& b) {
    double s = 0;
    for (std::size_t i = 0; i < a.numel(); ++i) s += a[i] * b[i];
    return s;
  };
  const double lhs = dot(y, go);
  EXPECT_NEAR(dot(x, gx), lhs, 1e-10 * std::abs(lhs) + 1e-12);
  EXPECT_NEAR(dot(w, gw), lhs, 1e-10 * std::abs(lhs) + 1e-12);
}

TEST(Conv2d, RejectsBadGeometry) {
  EXPECT_THROW(ops::conv2d(TensorD({1, 2, 4, 4}), TensorD({1, 3, 3, 3}), {}), InvalidArgument);
  EXPECT_THROW(ops::conv2d(TensorD({1, 2, 4, 4}), TensorD({1, 2, 2, 2}), {}), InvalidArgument);
  EXPECT_THROW(ops::conv2d(TensorD({1, 2, 2, 2}), TensorD({1, 2, 5, 5}), {}), InvalidArgument);
}

TEST(ResizeAvg, BlockMeans) {
  TensorD x({1, 1, 2, 4}, std::vector<double>{1, 2, 3, 4, 5, 6, 7, 8});
  TensorD y = ops::resize_avg(x, 2);
  ASSERT_EQ(y.dims(), (Dims{1, 1, 1, 2}));
  EXPECT_DOUBLE_EQ(y[0], 3.5);
  EXPECT_DOUBLE_EQ(y[1], 5.5);
  EXPECT_EQ(ops::resize_avg(x, 1), x);
  EXPECT_THROW(ops::resize_avg(x, 3), InvalidArgument);
  EXPECT_THROW(ops::resize_avg(x, 4), InvalidArgument);
  TensorD g = ops::resize_avg_grad(TensorD({1, 1, 1, 2}, 1.0), 2);
  EXPECT_EQ(g, TensorD({1, 1, 2, 4}, 0.25));
}

TEST(Graph, ChainRuleThroughSharedNode) {
  Graph<double> g;
  auto a = g.leaf(TensorD({2}, std::vector<double>{1, -2}));
  auto b = g.leaf(TensorD({2}, std::vector<double>{3, 4}));
  auto c = g.constant(TensorD({2}, 5.0));
  // loss = sum(a*b + a) + 0 * c
  auto ab = ops::mul(a, b);
  auto loss = ops::sum(ops::add(ab, a));
  auto grads = g.backward(loss);
  EXPECT_EQ(loss.value().item(), (1 * 3 + 1) + (-2 * 4 - 2));
  EXPECT_EQ(grads[a], TensorD({2}, std::vector<double>{4, 5}));
  EXPECT_EQ(grads[b], TensorD({2}, std::vector<double>{1, -2}));
  EXPECT_EQ(grads[c], TensorD({2}, 0.0));
  EXPECT_FALSE(g.requires_grad(c.id()));
}

TEST(Graph, ElementwiseOps) {
  Graph<double> g;
  auto x = g.leaf(TensorD({3}, std::vector<double>{-1, 0.5, 2}));
  auto r = ops::relu(x);
  EXPECT_EQ(r.value(), TensorD({3}, std::vector<double>{0, 0.5, 2}));
  auto s = ops::softplus(x);
  EXPECT_NEAR(s.value()[0], std::log1p(std::exp(-1.0)), 1e-15);
  auto m = ops::mean(ops::scale(x, 2.0));
  EXPECT_NEAR(m.value().item(), 1.0, 1e-15);
  auto grads = g.backward(m);
  EXPECT_EQ(grads[x], TensorD({3}, 2.0 / 3.0));
  EXPECT_THROW(g.backward(x), InvalidArgument);
}

TEST(Graph, UpsampleAndBias) {
  Graph<double> g;
  auto x = g.leaf(TensorD({1, 2, 1, 1}, std::vector<double>{1, 2}));
  auto b = g.leaf(TensorD({2}, std::vector<double>{10, 20}));
  auto u = ops::upsample_nearest(ops::bias_add(x, b), 2);
  ASSERT_EQ(u.dims(), (Dims{1, 2, 2, 2}));
  EXPECT_EQ(u.value().at(0, 1, 1, 0), 22.0);
  auto grads = g.backward(ops::sum(u));
  EXPECT_EQ(grads[x], TensorD({1, 2, 1, 1}, 4.0));
  EXPECT_EQ(grads[b], TensorD({2}, 4.0));
  EXPECT_THROW(ops::bias_add(x, g.leaf(TensorD({3}))), InvalidArgument);
}

}  // namespace
}  // namespace mhe
