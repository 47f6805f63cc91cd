#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "rbw/arch/archzoo.hpp"
#include "rbw/num/gradcheck.hpp"
#include "rbw/num/rng.hpp"

using namespace rbw;
using arch::Architecture;
using arch::ModelConfig;
using num::Tape;
using num::Tensor;

namespace {

const Architecture kAll[] = {Architecture::Esbn,        Architecture::CoRelNet,  Architecture::Abstractor,
                             Architecture::Transformer, Architecture::Recurrent, Architecture::RelationNet};

Tensor gaussian(num::Shape shape, std::uint64_t seed, double scale = 1.0) {
  num::Rng rng(seed);
  Tensor t(std::move(shape));
  for (auto& v : t.values()) v = scale * rng.normal();
  return t;
}

ModelConfig small(Architecture a, std::uint64_t seed = 0) {
  ModelConfig c;
  c.arch = a;
  c.d_in = 5;
  c.d = 8;
  c.d_k = 4;
  c.d_s = 5;
  c.hidden = 6;
  c.heads = 2;
  c.layers = 2;
  c.ff_width = 7;
  c.decoder_width = 5;
  c.max_objects = 4;
  c.num_classes = 3;
  c.esbn_gate = a == Architecture::Esbn;
  c.seed = seed;
  return c;
}

ModelConfig wide(Architecture a, std::uint64_t seed) {
  ModelConfig c;
  c.arch = a;
  c.d_in = 16;
  c.max_objects = 4;
  c.num_classes = 2;
  c.heads = 2;
  c.esbn_gate = a == Architecture::Esbn;
  c.seed = seed;
  return c;
}

}  // namespace

TEST(Encoder, ZeroWeightsGiveBiasAndDeterminism) {
  auto c = small(Architecture::CoRelNet);
  auto p = arch::init_params(c);
  p.get("enc.w1") = Tensor(p.get("enc.w1").shape());
  p.get("enc.w2") = Tensor(p.get("enc.w2").shape());
  p.get("enc.b2") = Tensor({1, 8}, {1, 2, 3, 4, 5, 6, 7, 8});
  Tape tape;
  num::Bindings b(tape, p, false);
  auto e = arch::encode(b, tape.constant(gaussian({3, 5}, 1))).value();
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 8; ++j) EXPECT_EQ(e(i, j), j + 1.0);

  auto q = arch::init_params(c);
  Tape t2;
  num::Bindings b2(t2, q, false);
  auto x = t2.constant(gaussian({2, 5}, 2));
  EXPECT_EQ(arch::encode(b2, x).value(), arch::encode(b2, x).value());
  EXPECT_THROW(arch::encode(b2, t2.constant(Tensor({2, 4}))), num::DimensionError);
}

TEST(Encoder, GradientMatchesFiniteDifferences) {
  auto c = small(Architecture::CoRelNet, 3);
  num::ParamSet p;
  for (const auto& [name, t] : arch::init_params(c))
    if (name.rfind("enc.", 0) == 0) p.add(name, t);
  auto x = gaussian({3, 5}, 4);
  auto res = num::check_param_gradients(
      [&](Tape& tape, const num::Bindings& b) { return num::sum(num::tanh(arch::encode(b, tape.constant(x)))); }, p);
  EXPECT_LT(res.max_relative_error, 1e-4);
}

TEST(Architectures, GradientsMatchFiniteDifferences) {
  for (auto a : kAll)
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      auto c = small(a, seed);
      auto x = gaussian({3, 5}, 100 + seed);
      const std::vector<std::size_t> target = {seed % 3};
      auto res = num::check_param_gradients(
          [&](Tape&, const num::Bindings& b) {
            return num::cross_entropy(arch::forward(c, b, x).logits, target);
          },
          arch::init_params(c));
      EXPECT_LT(res.max_relative_error, 1e-4) << arch::to_string(a) << " seed " << seed << " " << res.worst_parameter;
    }
}

TEST(Architectures, PointerHeadGradients) {
  for (auto a : {Architecture::Abstractor, Architecture::Transformer})
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      auto c = small(a, seed);
      c.output = arch::OutputMode::Pointer;
      auto x = gaussian({4, 5}, 7 + seed);
      const std::vector<std::size_t> perm = {2, 0, 3, 1};
      arch::ForwardOptions opt;
      opt.teacher = &perm;
      auto res = num::check_param_gradients(
          [&](Tape&, const num::Bindings& b) { return num::cross_entropy(arch::forward(c, b, x, opt).logits, perm); },
          arch::init_params(c));
      EXPECT_LT(res.max_relative_error, 1e-4) << arch::to_string(a) << " " << res.worst_parameter;
    }
}

TEST(Pointer, TeacherForcingAndGreedyDecoding) {
  auto c = small(Architecture::Abstractor, 1);
  c.output = arch::OutputMode::Pointer;
  auto p = arch::init_params(c);
  auto x = gaussian({4, 5}, 3);
  Tape tape;
  num::Bindings b(tape, p, false);
  const std::vector<std::size_t> perm = {3, 1, 0, 2};
  arch::ForwardOptions opt;
  opt.teacher = &perm;
  auto forced = arch::forward(c, b, x, opt);
  EXPECT_EQ(forced.selection, perm);
  EXPECT_EQ(forced.logits.value().shape(), (num::Shape{4, 4}));
  // Row k masks the slots chosen before it.
  EXPECT_LT(forced.logits.value()(1, 3), -1e8);
  EXPECT_LT(forced.logits.value()(3, 0), -1e8);

  auto greedy = arch::forward(c, b, x);
  auto sel = greedy.selection;
  std::sort(sel.begin(), sel.end());
  EXPECT_EQ(sel, (std::vector<std::size_t>{0, 1, 2, 3}));
  for (std::size_t k = 0; k < 4; ++k) {
    const auto row = greedy.logits.value().row_span(k);
    EXPECT_EQ(static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin()), greedy.selection[k]);
  }
  const std::vector<std::size_t> bad = {0, 0, 1, 2};
  opt.teacher = &bad;
  EXPECT_THROW(arch::forward(c, b, x, opt), std::invalid_argument);
}

TEST(Isolation, BottleneckModelsAreInvariant) {
  for (auto a : {Architecture::Esbn, Architecture::CoRelNet, Architecture::Abstractor})
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      auto c = wide(a, seed);
      auto p = arch::init_params(c);
      auto x = gaussian({4, 16}, seed + 50);
      auto q = rel::random_orthogonal(c.d, seed + 900);
      const double dev = rel::isolation_probe(
          [&](const Tensor* rot) {
            arch::ForwardOptions o;
            o.rotation = rot;
            return arch::forward_logits(c, p, x, o);
          },
          q);
      EXPECT_LT(dev, 1e-6) << arch::to_string(a);
    }
}

TEST(Isolation, BaselinesLeakContent) {
  for (auto a : {Architecture::Transformer, Architecture::RelationNet}) {
    int leaks = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      auto c = wide(a, seed);
      auto p = arch::init_params(c);
      auto x = gaussian({4, 16}, seed + 50);
      auto forward = [&](const Tensor* rot) {
        arch::ForwardOptions o;
        o.rotation = rot;
        return arch::forward_logits(c, p, x, o);
      };
      if (rel::isolation_probe(forward, rel::random_orthogonal(c.d, seed + 900)) > 1e-3) ++leaks;
      EXPECT_EQ(rel::isolation_probe(forward, Tensor::identity(c.d)), 0.0);
    }
    EXPECT_GE(leaks, 9) << arch::to_string(a);
  }
}

TEST(CoRelNet, IdenticalUnitObjectsGiveAllOnes) {
  auto c = small(Architecture::CoRelNet);
  c.identity_projection = true;
  c.relation.scale = 1.0;
  auto p = arch::init_params(c);
  p.get("enc.w2") = Tensor(p.get("enc.w2").shape());
  p.get("enc.b2") = Tensor({1, 8}, {0.6, 0, 0.8, 0, 0, 0, 0, 0});
  arch::ForwardTrace trace;
  arch::ForwardOptions o;
  o.trace = &trace;
  arch::forward_logits(c, p, gaussian({3, 5}, 8), o);
  ASSERT_EQ(trace.relations.size(), 1u);
  for (double v : trace.relations[0].values()) EXPECT_NEAR(v, 1.0, 1e-15);
}

TEST(CoRelNet, PermutationConjugatesRelationMatrix) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto c = small(Architecture::CoRelNet, seed);
    auto p = arch::init_params(c);
    auto x = gaussian({4, 5}, seed + 20);
    std::vector<std::size_t> perm = {2, 0, 3, 1};
    Tensor px({4, 5});
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = 0; j < 5; ++j) px(i, j) = x(perm[i], j);
    arch::ForwardTrace t1, t2;
    arch::ForwardOptions o1, o2;
    o1.trace = &t1;
    o2.trace = &t2;
    arch::forward_logits(c, p, x, o1);
    arch::forward_logits(c, p, px, o2);
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(t2.relations[0](i, j), t1.relations[0](perm[i], perm[j]));
  }
  auto c = small(Architecture::CoRelNet);
  EXPECT_THROW(arch::forward_logits(c, arch::init_params(c), Tensor({5, 5})), num::ParameterError);
}

TEST(Abstractor, SingleObjectIsFirstSymbolThroughTheStack) {
  auto c = small(Architecture::Abstractor, 2);
  c.layers = 1;
  c.decoder_width = 0;
  auto p = arch::init_params(c);
  auto logits = arch::forward_logits(c, p, gaussian({1, 5}, 9));

  // Oracle: attention over one slot is exactly 1, so every head yields s0.
  Tape tape;
  num::Bindings b(tape, p, false);
  auto s0 = num::slice(b["abs.symbols"], 0, 0, 1);
  auto att = num::matmul(num::concat({s0, s0}, 1), b["abs.l0.wo"]);
  auto a = num::layer_norm(num::add(s0, att), b["abs.l0.ln1.g"], b["abs.l0.ln1.b"]);
  auto f = num::relu(num::add_row(num::matmul(a, b["abs.l0.ff.w1"]), b["abs.l0.ff.b1"]));
  f = num::add_row(num::matmul(f, b["abs.l0.ff.w2"]), b["abs.l0.ff.b2"]);
  a = num::layer_norm(num::add(a, f), b["abs.l0.ln2.g"], b["abs.l0.ln2.b"]);
  auto flat = num::concat({a, tape.constant(Tensor({1, 15}))}, 1);
  auto expected = num::add_row(num::matmul(flat, b["head.w"]), b["head.b"]).value();
  EXPECT_LT(num::max_abs_diff(logits, expected), 1e-12);
}

TEST(Abstractor, UntiedRelationsAsymmetricTiedSymmetric) {
  int asym = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto c = wide(Architecture::Abstractor, seed);
    c.heads = 1;
    auto x = gaussian({5, 16}, seed + 3);
    c.max_objects = 5;
    arch::ForwardTrace t;
    arch::ForwardOptions o;
    o.trace = &t;
    arch::forward_logits(c, arch::init_params(c), x, o);
    if (rel::max_asymmetry(t.relations[0]) > 1e-3) ++asym;
    c.tied = true;
    arch::ForwardTrace tt;
    o.trace = &tt;
    arch::forward_logits(c, arch::init_params(c), x, o);
    EXPECT_LE(rel::max_asymmetry(tt.relations[0]), 1e-12);
  }
  EXPECT_GE(asym, 9);
  auto c = small(Architecture::Abstractor);
  EXPECT_THROW(arch::forward_logits(c, arch::init_params(c), Tensor({5, 5})), rel::CapacityError);
}

TEST(Esbn, SingleObjectIgnoresPerception) {
  auto c = small(Architecture::Esbn, 4);
  auto p = arch::init_params(c);
  arch::ForwardTrace trace;
  arch::ForwardOptions o;
  o.trace = &trace;
  auto a = arch::forward_logits(c, p, gaussian({1, 5}, 1), o);
  auto b = arch::forward_logits(c, p, gaussian({1, 5}, 2));
  EXPECT_EQ(a, b);
  EXPECT_EQ(trace.retrieved[0], Tensor({1, 6}));
  EXPECT_THROW(arch::forward_logits(c, p, Tensor()), std::invalid_argument);
}

TEST(Esbn, RetrievalSharpensOnMatchingKey) {
  auto c = small(Architecture::Esbn, 5);
  auto x = gaussian({2, 5}, 6);
  Tensor ep({3, 5});
  for (std::size_t j = 0; j < 5; ++j) {
    ep(0, j) = x(0, j);
    ep(1, j) = x(1, j);
    ep(2, j) = x(0, j);
  }
  double prev = 0.0;
  for (double temp : {1.0, 0.1, 0.01, 0.001}) {
    c.temperature = temp;
    c.relation.normalize = true;
    arch::ForwardTrace trace;
    arch::ForwardOptions o;
    o.trace = &trace;
    arch::forward_logits(c, arch::init_params(c), ep, o);
    const double w = trace.retrieval_weights.back()[0];
    EXPECT_GE(w, prev);
    prev = w;
  }
  EXPECT_GT(prev, 1.0 - 1e-9);
}

TEST(Transformer, AttentionRowsSumToOne) {
  auto c = wide(Architecture::Transformer, 1);
  arch::ForwardTrace t;
  arch::ForwardOptions o;
  o.trace = &t;
  arch::forward_logits(c, arch::init_params(c), gaussian({4, 16}, 2), o);
  ASSERT_EQ(t.attention.size(), 2u);
  for (const auto& w : t.attention)
    for (std::size_t i = 0; i < w.rows(); ++i) {
      double s = 0.0;
      for (double v : w.row_span(i)) s += v;
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
}

TEST(Recurrent, ZeroInputAndLongEpisodes) {
  auto c = small(Architecture::Recurrent, 6);
  c.max_objects = 50;
  auto p = arch::init_params(c);
  const Tensor zeros({4, 5});
  auto a = arch::forward_logits(c, p, zeros);
  p.get("enc.w1") = gaussian(p.get("enc.w1").shape(), 77);
  EXPECT_EQ(arch::forward_logits(c, p, zeros), a);

  auto long_ep = gaussian({50, 5}, 8, 10.0);
  EXPECT_TRUE(arch::forward_logits(c, p, long_ep).all_finite());
  auto e = small(Architecture::Esbn, 6);
  EXPECT_TRUE(arch::forward_logits(e, arch::init_params(e), long_ep).all_finite());
}

TEST(RelationNet, SumIsPermutationInvariant) {
  auto c = small(Architecture::RelationNet, 9);
  auto p = arch::init_params(c);
  auto x = gaussian({4, 5}, 10);
  Tensor px({4, 5});
  const std::size_t perm[] = {3, 0, 2, 1};
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 5; ++j) px(i, j) = x(perm[i], j);
  EXPECT_LT(num::max_abs_diff(arch::forward_logits(c, p, x), arch::forward_logits(c, p, px)), 1e-9);
}

TEST(InitParams, DeterministicPerSeed) {
  for (auto a : kAll) {
    EXPECT_EQ(arch::init_params(small(a, 3)), arch::init_params(small(a, 3)));
    EXPECT_FALSE(arch::init_params(small(a, 3)) == arch::init_params(small(a, 4)));
  }
}

TEST(InitParams, CountsMatchClosedForm) {
  for (auto a : kAll)
    for (std::size_t dec : {0, 9}) {
      ModelConfig c = wide(a, 0);
      c.decoder_width = dec;
      const std::size_t d = c.d, dk = c.d_k, ds = c.d_s, h = c.hidden, m = c.max_objects, ff = c.ff_width;
      const std::size_t L = c.layers, H = c.heads, C = c.num_classes;
      const std::size_t enc = c.d_in * d + d + d * d + d;
      auto head = [&](std::size_t in) { return dec == 0 ? in * C + C : in * dec + dec + dec * C + C; };
      auto block = [&](std::size_t w) { return 4 * w + w * ff + ff + ff * w + w; };
      std::size_t expected = 0;
      switch (a) {
        case Architecture::Esbn: expected = enc + (2 * h + 1) * 4 * h + 4 * h + 2 + head(h); break;
        case Architecture::Recurrent: expected = enc + (d + h) * 4 * h + 4 * h + head(h); break;
        case Architecture::CoRelNet: expected = enc + d * dk + head(m * m); break;
        case Architecture::Abstractor: expected = enc + m * ds + L * (2 * d * dk + H * ds * ds + block(ds)) + head(m * ds); break;
        case Architecture::Transformer: expected = enc + m * d + L * (2 * d * dk + d * d + d * d + block(d)) + head(m * d); break;
        case Architecture::RelationNet: expected = enc + 2 * d * d + d + d * d + d + head(d); break;
      }
      EXPECT_EQ(arch::parameter_count(c), expected) << arch::to_string(a) << " decoder " << dec;
      EXPECT_EQ(arch::init_params(c).count(), expected);
    }
}

TEST(InitParams, MatchingWidensSmallerDecoder) {
  std::vector<ModelConfig> cs;
  for (auto a : kAll) cs.push_back(wide(a, 0));
  arch::match_parameter_counts(cs);
  for (const auto& c : cs) {
    const double mine = static_cast<double>(arch::parameter_count(c));
    for (const auto& o : cs)
      if (o.arch == arch::counterpart(c.arch)) {
        const double theirs = static_cast<double>(arch::parameter_count(o));
        EXPECT_LE(std::abs(mine - theirs), 0.10 * std::max(mine, theirs)) << arch::to_string(c.arch);
      }
  }
}

TEST(ModelConfigJson, RoundTripAndUnknownKeys) {
  auto c = small(Architecture::Abstractor, 12);
  c.output = arch::OutputMode::Pointer;
  nlohmann::json j = c;
  ModelConfig back;
  arch::from_json(j, back);
  EXPECT_EQ(nlohmann::json(back), j);
  j["colour"] = "red";
  EXPECT_THROW(arch::from_json(j, back), std::invalid_argument);
  ModelConfig bad = small(Architecture::Esbn);
  bad.output = arch::OutputMode::Pointer;
  EXPECT_THROW(bad.validate(), num::ParameterError);
}
