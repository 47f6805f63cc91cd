#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "rbw/num/adam.hpp"
#include "rbw/num/gradcheck.hpp"
#include "rbw/num/ops.hpp"
#include "rbw/num/rng.hpp"

using namespace rbw::num;

namespace {

Tensor random_tensor(Shape shape, std::uint64_t seed, double scale = 1.0) {
  Rng rng(seed);
  Tensor t(std::move(shape));
  for (auto& v : t.values()) v = scale * rng.normal();
  return t;
}

// Oracle: plain triple loop, no reuse of the library kernel.
Tensor naive_matmul(const Tensor& a, const Tensor& b) {
  Tensor c({a.rows(), b.cols()});
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t t = 0; t < a.cols(); ++t) s += a(i, t) * b(t, j);
      c(i, j) = s;
    }
  return c;
}

}  // namespace

TEST(Matmul, IdentityAndAnnihilator) {
  Tape tape;
  auto m = Tensor::matrix({{1, 2}, {3, 4}});
  auto r = matmul(tape.constant(Tensor::identity(2)), tape.constant(m));
  EXPECT_EQ(r.value(), m);
  auto z = matmul(tape.constant(m), tape.constant(Tensor::zeros({2, 2})));
  EXPECT_EQ(z.value(), Tensor::zeros({2, 2}));
}

TEST(Matmul, MatchesTripleLoopOracle) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Tape tape;
    auto a = random_tensor({5, 7}, seed);
    auto b = random_tensor({7, 3}, seed + 100);
    auto c = matmul(tape.constant(a), tape.constant(b));
    EXPECT_LT(max_abs_diff(c.value(), naive_matmul(a, b)), 1e-12);
  }
}

TEST(Matmul, ShapeMismatchNamesBothShapes) {
  Tape tape;
  auto a = tape.constant(Tensor({2, 3}));
  auto b = tape.constant(Tensor({2, 3}));
  try {
    matmul(a, b);
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2x3] x [2x3]"), std::string::npos) << msg;
  }
}

TEST(Softmax, AnalyticCases) {
  Tape tape;
  auto u = softmax(tape.constant(Tensor::matrix({{0, 0, 0}})), 1);
  for (double v : u.value().values()) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);

  auto two = softmax(tape.constant(Tensor::matrix({{0, std::log(2.0)}})), 1, 1.0);
  EXPECT_NEAR(two.value()[0], 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(two.value()[1], 2.0 / 3.0, 1e-15);

  auto big = softmax(tape.constant(Tensor::matrix({{1000, 1000.5}})), 1);
  auto small = softmax(tape.constant(Tensor::matrix({{0, 0.5}})), 1);
  EXPECT_TRUE(big.value().all_finite());
  EXPECT_LT(max_abs_diff(big.value(), small.value()), 1e-15);
}

TEST(Softmax, RejectsNonPositiveTemperature) {
  Tape tape;
  auto x = tape.constant(Tensor::matrix({{1, 2}}));
  EXPECT_THROW(softmax(x, 1, 0.0), ParameterError);
  EXPECT_THROW(softmax(x, 1, -1.0), ParameterError);
}

TEST(Softmax, RowsSumToOneProperty) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Tape tape;
    auto x = tape.constant(random_tensor({4, 9}, seed, 5.0));
    for (std::size_t axis : {0u, 1u}) {
      const auto& y = softmax(x, axis, 0.5 + seed * 0.1).value();
      const std::size_t outer = axis == 1 ? 4 : 9, len = axis == 1 ? 9 : 4;
      for (std::size_t o = 0; o < outer; ++o) {
        double s = 0.0;
        for (std::size_t k = 0; k < len; ++k) {
          const double v = axis == 1 ? y(o, k) : y(k, o);
          EXPECT_GT(v, 0.0);
          EXPECT_LT(v, 1.0);
          s += v;
        }
        EXPECT_NEAR(s, 1.0, 1e-12);
      }
    }
  }
}

TEST(Softmax, ArbitraryRankAxis) {
  Tape tape;
  auto x = tape.constant(random_tensor({2, 3, 4}, 3));
  const auto& y = softmax(x, 1).value();
  for (std::size_t o = 0; o < 2; ++o)
    for (std::size_t in = 0; in < 4; ++in) {
      double s = 0.0;
      for (std::size_t k = 0; k < 3; ++k) s += y[o * 12 + k * 4 + in];
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
}

TEST(LayerNorm, ConstantRowAndNormalizedRow) {
  Tape tape;
  auto gain = tape.constant(Tensor::ones({1, 3}));
  auto bias = tape.constant(Tensor::zeros({1, 3}));
  auto c = layer_norm(tape.constant(Tensor::matrix({{2.5, 2.5, 2.5}})), gain, bias, 1e-5);
  EXPECT_EQ(c.value(), Tensor::zeros({1, 3}));

  auto g2 = tape.constant(Tensor::ones({1, 2}));
  auto b2 = tape.constant(Tensor::zeros({1, 2}));
  auto r = layer_norm(tape.constant(Tensor::matrix({{1, -1}})), g2, b2, 1e-5);
  EXPECT_NEAR(r.value()[0], 1.0, 1e-5);
  EXPECT_NEAR(r.value()[1], -1.0, 1e-5);
}

TEST(LayerNorm, RandomRowStatistics) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Tape tape;
    auto x = tape.constant(random_tensor({1, 16}, seed, 10.0));
    auto y = layer_norm(x, tape.constant(Tensor::ones({1, 16})), tape.constant(Tensor::zeros({1, 16})),
                        1e-5);
    double mu = 0.0, var = 0.0;
    for (double v : y.value().values()) mu += v;
    mu /= 16.0;
    for (double v : y.value().values()) var += (v - mu) * (v - mu);
    var /= 16.0;
    EXPECT_LT(std::abs(mu), 1e-9);
    EXPECT_NEAR(var, 1.0, 1e-6);
  }
}

TEST(LayerNorm, GainShapeMismatch) {
  Tape tape;
  EXPECT_THROW(layer_norm(tape.constant(Tensor({2, 3})), tape.constant(Tensor({1, 2})),
                          tape.constant(Tensor({1, 3}))),
               DimensionError);
}

TEST(CrossEntropy, AnalyticAndSaturated) {
  Tape tape;
  const std::size_t t0[] = {0};
  EXPECT_NEAR(cross_entropy(tape.constant(Tensor::matrix({{0, 0}})), t0).value()[0], std::log(2.0),
              1e-15);
  auto sat = cross_entropy(tape.constant(Tensor::matrix({{1e6, 0}})), t0).value()[0];
  EXPECT_TRUE(std::isfinite(sat));
  EXPECT_NEAR(sat, 0.0, 1e-12);
}

TEST(CrossEntropy, TwoPathOracle) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Tape tape;
    auto logits = random_tensor({6, 5}, seed, 4.0);
    std::vector<std::size_t> targets;
    Rng rng(seed);
    for (int i = 0; i < 6; ++i) targets.push_back(rng.below(5));
    const double lib = cross_entropy(tape.constant(logits), targets).value()[0];
    // Second path: stabilized softmax, then -log of the target entry.
    auto probs = softmax(tape.constant(logits), 1).value();
    double direct = 0.0;
    for (std::size_t i = 0; i < 6; ++i) direct -= std::log(probs(i, targets[i]));
    direct /= 6.0;
    EXPECT_LT(std::abs(lib - direct), 1e-10);
  }
}

TEST(CrossEntropy, TargetOutOfRange) {
  Tape tape;
  const std::size_t bad[] = {2};
  EXPECT_THROW(cross_entropy(tape.constant(Tensor::matrix({{0, 0}})), bad), std::out_of_range);
}

TEST(Backward, SumAndInnerProduct) {
  Tape tape;
  auto xv = Tensor::matrix({{1, -2, 3}});
  auto x = tape.parameter(xv);
  auto s = sum(x);
  tape.backward(s);
  EXPECT_EQ(tape.grad(x), Tensor::ones({1, 3}));

  Tape tape2;
  auto y = tape2.parameter(xv);
  auto ip = matmul(y, transpose(y));
  tape2.backward(ip);
  EXPECT_EQ(tape2.grad(y), Tensor::matrix({{2, -4, 6}}));
}

TEST(Backward, UnusedParameterHasZeroGradient) {
  Tape tape;
  auto used = tape.parameter(Tensor::matrix({{1, 2}}));
  auto unused = tape.parameter(Tensor::matrix({{3, 4}}));
  tape.backward(sum(used));
  EXPECT_EQ(tape.grad(unused), Tensor::zeros({1, 2}));
}

TEST(Backward, NonScalarLossRejected) {
  Tape tape;
  auto x = tape.parameter(Tensor::matrix({{1, 2}}));
  EXPECT_THROW(tape.backward(x), DimensionError);
}

TEST(Tape, NonFiniteOutputIsAnError) {
  Tape tape;
  auto x = tape.constant(Tensor::matrix({{1e308, 1e308}}));
  EXPECT_THROW(scale(x, 10.0), NumericError);
}

TEST(FiniteDiff, AnalyticCases) {
  auto f_sum = [](const Tensor& t) {
    return std::accumulate(t.values().begin(), t.values().end(), 0.0);
  };
  auto g = finite_diff_grad(f_sum, random_tensor({2, 3}, 1));
  for (double v : g.values()) EXPECT_NEAR(v, 1.0, 1e-9);

  auto f_dot = [](const Tensor& t) {
    double s = 0.0;
    for (double v : t.values()) s += v * v;
    return s;
  };
  auto d = finite_diff_grad(f_dot, Tensor::matrix({{1, 2}}));
  EXPECT_NEAR(d[0], 2.0, 1e-8);
  EXPECT_NEAR(d[1], 4.0, 1e-8);

  EXPECT_THROW(finite_diff_grad(f_dot, Tensor::matrix({{1}}), 0.0), ParameterError);
  EXPECT_THROW(finite_diff_grad([](const Tensor&) { return std::nan(""); }, Tensor::matrix({{1}})),
               NumericError);
}

TEST(FiniteDiff, AgreesWithBackwardOnTwoLayerPerceptron) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    ParamSet p;
    p.add("w1", random_tensor({4, 6}, seed, 0.5));
    p.add("b1", random_tensor({1, 6}, seed + 1, 0.1));
    p.add("w2", random_tensor({6, 3}, seed + 2, 0.5));
    p.add("b2", random_tensor({1, 3}, seed + 3, 0.1));
    const Tensor x = random_tensor({5, 4}, seed + 4);
    const std::vector<std::size_t> targets = {0, 1, 2, 1, 0};
    auto loss = [&](Tape& t, const Bindings& b) {
      auto h = tanh(add_row(matmul(t.constant(x), b["w1"]), b["b1"]));
      auto logits = add_row(matmul(h, b["w2"]), b["b2"]);
      return cross_entropy(logits, targets);
    };
    auto res = check_param_gradients(loss, p);
    EXPECT_LT(res.max_relative_error, 1e-4) << res.worst_parameter;
  }
}

// Every differentiable primitive against central differences.
TEST(GradientSuite, PrimitiveOperations) {
  using Builder = std::function<Var(Tape&, const Bindings&)>;
  const std::vector<std::pair<const char*, Builder>> cases = {
      {"matmul", [](Tape&, const Bindings& b) { return sum(tanh(matmul(b["a"], b["c"]))); }},
      {"add_sub_mul",
       [](Tape&, const Bindings& b) {
         return sum(mul(add(b["a"], b["a2"]), sub(b["a"], scale(b["a2"], 0.3))));
       }},
      {"add_row", [](Tape&, const Bindings& b) { return sum(tanh(add_row(b["a"], b["row"]))); }},
      {"mul_scalar", [](Tape&, const Bindings& b) { return sum(tanh(mul_scalar(b["a"], b["s"]))); }},
      {"sigmoid", [](Tape&, const Bindings& b) { return sum(mul(sigmoid(b["a"]), b["a2"])); }},
      {"relu", [](Tape&, const Bindings& b) { return sum(mul(relu(b["a"]), b["a2"])); }},
      {"softmax_rows",
       [](Tape&, const Bindings& b) { return sum(mul(softmax(b["a"], 1, 0.7), b["a2"])); }},
      {"softmax_cols",
       [](Tape&, const Bindings& b) { return sum(mul(softmax(b["a"], 0, 1.3), b["a2"])); }},
      {"layer_norm",
       [](Tape&, const Bindings& b) {
         return sum(mul(layer_norm(b["a"], b["row"], b["row2"]), b["a2"]));
       }},
      {"l2_normalize",
       [](Tape&, const Bindings& b) { return sum(mul(l2_normalize_rows(b["a"]), b["a2"])); }},
      {"concat_slice",
       [](Tape&, const Bindings& b) {
         auto c0 = concat({b["a"], b["a2"]}, 0);
         auto c1 = concat({b["a"], b["a2"]}, 1);
         return add(sum(tanh(slice(c0, 0, 1, 5))), sum(tanh(slice(c1, 1, 2, 7))));
       }},
      {"transpose_reshape",
       [](Tape&, const Bindings& b) {
         return sum(tanh(matmul(reshape(transpose(b["a"]), {3, 4}), b["c"])));
       }},
      {"sum_rows_mean",
       [](Tape&, const Bindings& b) { return mean(tanh(sum_rows(mul(b["a"], b["a2"])))); }},
      {"cross_entropy",
       [](Tape&, const Bindings& b) {
         const std::size_t tg[] = {1, 0, 3};
         return cross_entropy(b["a"], tg);
       }},
  };
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    ParamSet p;
    p.add("a", random_tensor({3, 4}, seed));
    p.add("a2", random_tensor({3, 4}, seed + 50));
    p.add("c", random_tensor({4, 2}, seed + 60));
    p.add("row", random_tensor({1, 4}, seed + 70));
    p.add("row2", random_tensor({1, 4}, seed + 80));
    p.add("s", random_tensor({1, 1}, seed + 90));
    for (const auto& [name, builder] : cases) {
      auto res = check_param_gradients(builder, p);
      EXPECT_LT(res.max_relative_error, 1e-4) << name << " seed " << seed << " at "
                                              << res.worst_parameter;
    }
  }
}

TEST(Adam, ZeroGradientLeavesParamsAndCountsStep) {
  ParamSet p;
  p.add("w", Tensor::matrix({{1.5, -2.0}}));
  auto state = AdamState::init(p, {});
  const ParamSet before = p;
  GradSet g{{"w", Tensor::zeros({1, 2})}};
  adam_step(p, g, state);
  EXPECT_EQ(p, before);
  EXPECT_EQ(state.step_count, 1u);
}

TEST(Adam, FirstStepMovesBySignTimesLr) {
  ParamSet p;
  p.add("w", Tensor::matrix({{0.0, 0.0}}));
  auto state = AdamState::init(p, {.lr = 0.01});
  adam_step(p, {{"w", Tensor::matrix({{1e6, -1e6}})}}, state);
  EXPECT_NEAR(p.get("w")[0], -0.01, 1e-12);
  EXPECT_NEAR(p.get("w")[1], 0.01, 1e-12);
}

TEST(Adam, ConvergesOnQuadratic) {
  ParamSet p;
  p.add("w", Tensor::scalar(0.0));
  auto state = AdamState::init(p, {.lr = 0.1});
  for (int i = 0; i < 200; ++i) {
    Tape tape;
    Bindings b(tape, p, true);
    auto d = add(b["w"], tape.constant(Tensor::scalar(-3.0)));
    tape.backward(mul(d, d));
    adam_step(p, b.gradients(), state);
  }
  EXPECT_LT(std::abs(p.get("w")[0] - 3.0), 1e-2);
  EXPECT_EQ(state.step_count, 200u);
}

TEST(Adam, RejectsBadGradients) {
  ParamSet p;
  p.add("w", Tensor::matrix({{1.0, 2.0}}));
  auto state = AdamState::init(p, {});
  EXPECT_THROW(adam_step(p, {{"w", Tensor::zeros({2, 1})}}, state), DimensionError);
  EXPECT_THROW(adam_step(p, {{"w", Tensor::matrix({{std::nan(""), 0.0}})}}, state), NumericError);
  EXPECT_EQ(state.step_count, 0u);
}

TEST(Determinism, IdenticalSeedsGiveIdenticalTrajectories) {
  auto run = [] {
    ParamSet p;
    p.add("w", random_tensor({3, 2}, 9));
    auto state = AdamState::init(p, {.lr = 0.05});
    const Tensor x = random_tensor({4, 3}, 10);
    for (int i = 0; i < 25; ++i) {
      Tape tape;
      Bindings b(tape, p, true);
      const std::size_t tg[] = {0, 1, 1, 0};
      tape.backward(cross_entropy(matmul(tape.constant(x), b["w"]), tg));
      adam_step(p, b.gradients(), state);
    }
    return p;
  };
  EXPECT_EQ(run(), run());
}
