// Copyright 2026 The hlgen Authors.
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

#include <catch_amalgamated.hpp>

#include <cmath>
#include <cstring>
#include <sstream>
#include <vector>

#include "hlgen/autodiff.hpp"
#include "hlgen/random.hpp"
#include "support/primitives.hpp"

using namespace hlgen;
using namespace hlgen::ad;
using Catch::Approx;

namespace {

using testing::random_tensor;

}  // namespace

TEST_CASE("tensor shape and data invariants") {
  Tensor t(Shape{2, 3}, 1.5);
  CHECK(t.size() == 6);
  CHECK(t.rank() == 2);
  CHECK(t.at(1, 2) == 1.5);
  CHECK(Tensor::scalar(4.0).item() == 4.0);
  CHECK(Tensor().is_scalar());
  CHECK_THROWS_AS(Tensor(Shape{2, 2}, std::vector<double>{1, 2, 3}), ShapeError);
  CHECK_THROWS_AS(t.item(), ShapeError);
}

TEST_CASE("forward values of elementary ops") {
  Graph g;
  CHECK(sigmoid(g.constant(Tensor::scalar(0.0))).item() == 0.5);
  const Tensor sm = softmax(g.constant(Tensor::vector({0, 0, 0}))).value();
  for (double v : sm.data()) CHECK(v == Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(ad::tanh(g.constant(Tensor::scalar(1.0))).item() ==
        Approx(0.76159415595576488812).epsilon(1e-15));
}

TEST_CASE("backward of elementary expressions") {
  Parameter x{"x", Tensor::scalar(0.0), Tensor::scalar(0.0)};
  {
    Graph g;
    g.backward(sigmoid(g.param(x)));
    CHECK(x.grad.item() == 0.25);
  }
  Parameter a{"a", Tensor::scalar(2.0), Tensor::scalar(0.0)};
  Parameter b{"b", Tensor::scalar(3.0), Tensor::scalar(0.0)};
  Graph g;
  g.backward(mul(g.param(a), g.param(b)));
  CHECK(a.grad.item() == 3.0);
  CHECK(b.grad.item() == 2.0);
}

TEST_CASE("backward requires a scalar output") {
  Parameter p{"p", Tensor::vector({1, 2}), Tensor(Shape{2})};
  Graph g;
  Var y = ad::tanh(g.param(p));
  CHECK_THROWS_AS(g.backward(y), ShapeError);
}

TEST_CASE("unreachable parameters receive zero gradient") {
  Parameter used{"u", Tensor::vector({1, 2}), Tensor(Shape{2})};
  Parameter unused{"n", Tensor::vector({3, 4}), Tensor(Shape{2})};
  Graph g;
  (void)g.param(unused);
  g.backward(sum(g.param(used)));
  CHECK(unused.grad == Tensor(Shape{2}));
  CHECK(used.grad == Tensor::vector({1, 1}));
}

TEST_CASE("shared subexpressions are visited once") {
  Parameter x{"x", Tensor::vector({0.5, -2.0}), Tensor(Shape{2})};
  Graph g;
  Var v = g.param(x);
  Var sq = mul(v, v);
  g.backward(sum(add(sq, add(sq, v))));
  CHECK(x.grad[0] == Approx(4 * 0.5 + 1));
  CHECK(x.grad[1] == Approx(4 * -2.0 + 1));
}

TEST_CASE("shape mismatch names the node and the op") {
  Graph g;
  Var a = g.constant(Tensor(Shape{2, 3}));
  Var b = g.constant(Tensor(Shape{2, 2}));
  try {
    (void)matmul(a, b);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("node 2") != std::string::npos);
    CHECK(msg.find("matmul") != std::string::npos);
  }
}

TEST_CASE("non-finite forward values are reported") {
  Graph g;
  try {
    (void)ad::log(g.constant(Tensor::scalar(0.0)));
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("numeric overflow at node") != std::string::npos);
  }
  CHECK(log_floor(g.constant(Tensor::scalar(0.0))).item() == Approx(std::log(1e-12)));
}

TEST_CASE("evaluate recomputes from bound inputs") {
  Graph g;
  Var x = g.input("x", Tensor::scalar(1.0));
  Var y = affine(mul(x, x), 3.0, 1.0);
  CHECK(y.item() == 4.0);
  g.evaluate({{"x", Tensor::scalar(2.0)}});
  CHECK(y.item() == 13.0);
  CHECK_THROWS_AS(g.evaluate({{"x", Tensor::vector({1, 2})}}), ShapeError);
}

TEST_CASE("grad_check of an exact linear graph is zero") {
  Parameter x{"x", Tensor::scalar(0.7), Tensor::scalar(0.0)};
  Graph g;
  Var y = scale(g.param(x), 3.0);
  CHECK(grad_check(g, y, x) < 1e-10);
}

TEST_CASE("grad_check of softmax cross-entropy") {
  Parameter logits{"z", Tensor::vector({0.3, -1.2, 0.8, 0.1}), Tensor(Shape{4})};
  Graph g;
  Var loss = scale(ad::log(pick(softmax(g.param(logits)), 2)), -1.0);
  CHECK(grad_check(g, loss, logits) < 1e-6);
}

TEST_CASE("every primitive op passes grad_check below 1e-6") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    for (const auto& c : testing::primitive_cases(seed)) {
      CAPTURE(seed, c.name);
      CHECK(testing::check_op(c, seed) < 1e-6);
    }
  }
}

TEST_CASE("conv1d matches a direct evaluation") {
  Rng rng(3);
  const Tensor x = random_tensor(rng, {6, 2});
  const Tensor w = random_tensor(rng, {3, 2, 2});
  const Tensor b = random_tensor(rng, {3});
  Graph g;
  const Tensor y = conv1d(g.constant(x), g.constant(w), g.constant(b)).value();
  REQUIRE(y.shape() == Shape{5, 3});
  for (std::size_t t = 0; t < 5; ++t)
    for (std::size_t f = 0; f < 3; ++f) {
      double s = b[f];
      for (std::size_t j = 0; j < 2; ++j)
        for (std::size_t c = 0; c < 2; ++c) s += w[(f * 2 + j) * 2 + c] * x.at(t + j, c);
      CHECK(y.at(t, f) == Approx(s).epsilon(1e-14));
    }
  CHECK_THROWS_AS(conv1d(g.constant(Tensor(Shape{1, 2})), g.constant(w), g.constant(b)), ShapeError);
}

TEST_CASE("max_over_time routes ties to the first row") {
  Parameter x{"x", Tensor::matrix(3, 1, {2.0, 2.0, 1.0}), Tensor(Shape{3, 1})};
  Graph g;
  g.backward(sum(max_over_time(g.param(x))));
  CHECK(x.grad == Tensor::matrix(3, 1, {1.0, 0.0, 0.0}));
}

TEST_CASE("softmax rows are distributions") {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng() % 9;
    Graph g;
    const Tensor y = softmax(g.constant(random_tensor(rng, {n}, -30, 30))).value();
    double s = 0.0;
    for (double v : y.data()) {
      CHECK(v >= 0.0);
      s += v;
    }
    CHECK(std::abs(s - 1.0) <= 1e-12);
  }
}

TEST_CASE("backward is linear in the loss") {
  Rng rng(5);
  Parameter p{"p", random_tensor(rng, {3, 2}), Tensor(Shape{3, 2})};
  auto loss1 = [](Graph&, Var v) { return sum(ad::tanh(v)); };
  auto loss2 = [](Graph&, Var v) { return sum(mul(v, sigmoid(v))); };
  Tensor g1, g2;
  {
    Graph g;
    p.grad.fill(0);
    g.backward(loss1(g, g.param(p)));
    g1 = p.grad;
  }
  {
    Graph g;
    p.grad.fill(0);
    g.backward(loss2(g, g.param(p)));
    g2 = p.grad;
  }
  Graph g;
  p.grad.fill(0);
  Var v = g.param(p);
  g.backward(add(loss1(g, v), loss2(g, v)));
  for (std::size_t i = 0; i < p.grad.size(); ++i) CHECK(p.grad[i] == Approx(g1[i] + g2[i]).epsilon(1e-14));
}

TEST_CASE("clip_by_global_norm examples") {
  auto single = clip_by_global_norm({Tensor::vector({3, 4})}, 2.0);
  CHECK(single[0][0] == Approx(1.2));
  CHECK(single[0][1] == Approx(1.6));
  const Tensor unit = Tensor::vector({0.6, 0.8});
  CHECK(clip_by_global_norm({unit}, 2.0)[0] == unit);
  auto pair = clip_by_global_norm({Tensor::vector({3}), Tensor::vector({4})}, 2.0);
  CHECK(pair[0][0] == Approx(1.2));
  CHECK(pair[1][0] == Approx(1.6));
}

TEST_CASE("clip_by_global_norm never exceeds the bound") {
  Rng rng(17);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<Tensor> grads;
    const std::size_t parts = 1 + rng() % 4;
    for (std::size_t i = 0; i < parts; ++i) grads.push_back(random_tensor(rng, {1 + rng() % 5}, -10, 10));
    const double max_norm = 0.01 + 5 * uniform01(rng);
    CHECK(global_norm(clip_by_global_norm(grads, max_norm)) <= max_norm + 1e-9);
  }
}

TEST_CASE("adam first step moves by about lr against the gradient") {
  ParameterSet ps;
  ps.add("w", Tensor::vector({0.5, 0.5, 0.5}));
  ps[0].grad = Tensor::vector({1.0, 0.0, -2.0});
  AdamState st;
  adam_step(ps, st, 0.001);
  CHECK(ps[0].value[0] == Approx(0.5 - 0.001).epsilon(1e-6));
  CHECK(ps[0].value[1] == 0.5);
  CHECK(ps[0].value[2] == Approx(0.5 + 0.001).epsilon(1e-6));
  CHECK(st.step == 1);
}

TEST_CASE("adam is deterministic") {
  auto run = [] {
    ParameterSet ps;
    ps.add("w", Tensor::vector({0.1, -0.2}));
    AdamState st;
    for (int i = 0; i < 5; ++i) {
      ps[0].grad = Tensor::vector({0.3 * i, -0.7});
      adam_step(ps, st, 0.01);
    }
    return ps[0].value;
  };
  CHECK(run() == run());
}

TEST_CASE("init_uniform is seeded and bounded") {
  auto make = [](std::uint64_t seed) {
    ParameterSet ps;
    ps.add("a", Tensor(Shape{20, 3}));
    ps.init_uniform(seed);
    return ps[0].value;
  };
  CHECK(make(9) == make(9));
  CHECK_FALSE(make(9) == make(10));
  const Tensor t = make(9);
  for (double v : t.data()) CHECK(std::abs(v) <= 0.1);
}

TEST_CASE("checkpoint round trip is bit exact") {
  Rng rng(23);
  ParameterSet ps;
  ps.add("layer.W", random_tensor(rng, {3, 4}));
  ps.add("layer.b", random_tensor(rng, {4}));
  ps.add("scalar", Tensor::scalar(-0.0));
  ps[0].value[0] = 1e-300;
  std::stringstream buf;
  write_checkpoint(buf, collect(ps));
  const std::string bytes = buf.str();
  CHECK(bytes.substr(0, 4) == "HFCK");

  ParameterSet other;
  other.add("layer.W", Tensor(Shape{3, 4}));
  other.add("layer.b", Tensor(Shape{4}));
  other.add("scalar", Tensor::scalar(1.0));
  std::stringstream in(bytes);
  assign(other, read_checkpoint(in));
  for (std::size_t i = 0; i < ps.size(); ++i) {
    CHECK(std::memcmp(ps[i].value.data().data(), other[i].value.data().data(),
                      ps[i].value.size() * sizeof(double)) == 0);
  }
  std::stringstream again;
  write_checkpoint(again, collect(other));
  CHECK(again.str() == bytes);
}

TEST_CASE("checkpoint mismatches are rejected") {
  ParameterSet ps;
  ps.add("w", Tensor(Shape{2, 2}));
  std::stringstream buf;
  write_checkpoint(buf, collect(ps));
  const std::string bytes = buf.str();

  ParameterSet wrong_shape;
  wrong_shape.add("w", Tensor(Shape{2, 3}));
  std::stringstream a(bytes);
  CHECK_THROWS_AS(assign(wrong_shape, read_checkpoint(a)), CheckpointMismatch);

  ParameterSet wrong_name;
  wrong_name.add("v", Tensor(Shape{2, 2}));
  std::stringstream b(bytes);
  CHECK_THROWS_AS(assign(wrong_name, read_checkpoint(b)), CheckpointMismatch);

  std::stringstream truncated(bytes.substr(0, bytes.size() - 3));
  CHECK_THROWS_AS(read_checkpoint(truncated), CheckpointMismatch);

  std::stringstream bad_magic("XXXX" + bytes.substr(4));
  CHECK_THROWS_AS(read_checkpoint(bad_magic), CheckpointMismatch);

  CHECK_THROWS_AS(load_checkpoint("/nonexistent/dir/model.ckpt", ps), MissingPrerequisite);
}
