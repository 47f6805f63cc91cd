#include "rbw/arch/archzoo.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <stdexcept>

#include "rbw/num/rng.hpp"

namespace rbw::arch {

using num::DimensionError;
using num::ParameterError;
using num::Tape;

namespace {

const std::vector<std::pair<Architecture, std::string>> kNames = {
    {Architecture::Esbn, "esbn"},
    {Architecture::CoRelNet, "corelnet"},
    {Architecture::Abstractor, "abstractor"},
    {Architecture::Transformer, "transformer"},
    {Architecture::Recurrent, "recurrent"},
    {Architecture::RelationNet, "relationnet"},
};

constexpr double kMasked = -1e9;

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string layer_prefix(const char* model, std::size_t l) {
  return std::string(model) + ".l" + std::to_string(l) + ".";
}

// Width of the vector the output head consumes.
std::size_t head_input(const ModelConfig& c) {
  switch (c.arch) {
    case Architecture::Esbn:
    case Architecture::Recurrent: return c.hidden;
    case Architecture::CoRelNet: return c.max_objects * c.max_objects;
    case Architecture::Abstractor: return c.readout == Readout::Slots ? c.max_objects * c.d_s : c.d_s;
    case Architecture::Transformer: return c.readout == Readout::Slots ? c.max_objects * c.d : c.d;
    case Architecture::RelationNet: return c.d;
  }
  return 0;
}

std::size_t esbn_input(const ModelConfig& c) { return c.hidden + (c.esbn_gate ? 1 : 0); }

void add_block(std::vector<std::pair<std::string, Shape>>& out, const std::string& p, std::size_t width,
               std::size_t ff) {
  out.push_back({p + "ln1.g", {1, width}});
  out.push_back({p + "ln1.b", {1, width}});
  out.push_back({p + "ff.w1", {width, ff}});
  out.push_back({p + "ff.b1", {1, ff}});
  out.push_back({p + "ff.w2", {ff, width}});
  out.push_back({p + "ff.b2", {1, width}});
  out.push_back({p + "ln2.g", {1, width}});
  out.push_back({p + "ln2.b", {1, width}});
}

bool is_bias(const std::string& name) {
  const auto dot = name.rfind('.');
  const std::string leaf = name.substr(dot + 1);
  return leaf[0] == 'b';
}

}  // namespace

std::string to_string(Architecture a) {
  for (const auto& [k, v] : kNames)
    if (k == a) return v;
  return "?";
}

Architecture parse_architecture(const std::string& s) {
  for (const auto& [k, v] : kNames)
    if (v == s) return k;
  throw std::invalid_argument("unknown architecture '" + s + "'");
}

bool is_bottleneck(Architecture a) {
  return a == Architecture::Esbn || a == Architecture::CoRelNet || a == Architecture::Abstractor;
}

Architecture counterpart(Architecture a) {
  switch (a) {
    case Architecture::Esbn: return Architecture::Recurrent;
    case Architecture::Recurrent: return Architecture::Esbn;
    case Architecture::CoRelNet: return Architecture::RelationNet;
    case Architecture::RelationNet: return Architecture::CoRelNet;
    case Architecture::Abstractor: return Architecture::Transformer;
    case Architecture::Transformer: return Architecture::Abstractor;
  }
  return a;
}

void ModelConfig::validate() const {
  auto positive = [](std::size_t v, const char* name) {
    if (v == 0) throw ParameterError(std::string("model config: ") + name + " must be positive");
  };
  positive(d_in, "d_in");
  positive(d, "d");
  positive(d_k, "d_k");
  positive(d_s, "d_s");
  positive(hidden, "hidden");
  positive(heads, "heads");
  positive(layers, "layers");
  positive(ff_width, "ff_width");
  positive(max_objects, "max_objects");
  if (d_k % heads != 0) throw ParameterError("model config: heads must divide d_k");
  if (arch == Architecture::Transformer && d % heads != 0) {
    throw ParameterError("model config: heads must divide d for the transformer");
  }
  if (!(temperature > 0.0)) throw ParameterError("model config: temperature must be positive");
  if (output == OutputMode::Classify && num_classes < 2) {
    throw ParameterError("model config: need at least 2 classes");
  }
  if (output == OutputMode::Pointer && arch != Architecture::Abstractor && arch != Architecture::Transformer) {
    throw ParameterError("model config: " + to_string(arch) + " has no sequence output");
  }
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"architecture", to_string(c.arch)},
                     {"d_in", c.d_in},
                     {"d", c.d},
                     {"d_k", c.d_k},
                     {"d_s", c.d_s},
                     {"hidden", c.hidden},
                     {"heads", c.heads},
                     {"layers", c.layers},
                     {"ff_width", c.ff_width},
                     {"decoder_width", c.decoder_width},
                     {"max_objects", c.max_objects},
                     {"num_classes", c.num_classes},
                     {"output", c.output == OutputMode::Pointer ? "pointer" : "classify"},
                     {"readout", c.readout == Readout::Pool ? "pool" : "slots"},
                     {"tied", c.tied},
                     {"identity_projection", c.identity_projection},
                     {"temperature", c.temperature},
                     {"relation_scale", c.relation.scale},
                     {"normalize", c.relation.normalize},
                     {"esbn_gate", c.esbn_gate},
                     {"esbn_time_embedding", c.esbn_time_embedding},
                     {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  if (!j.is_object()) throw std::invalid_argument("model config must be an object");
  nlohmann::json defaults = c;
  for (const auto& [key, _] : j.items()) {
    if (!defaults.contains(key)) throw std::invalid_argument("unknown model config key '" + key + "'");
  }
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  if (j.contains("architecture")) c.arch = parse_architecture(j.at("architecture").get<std::string>());
  get("d_in", c.d_in);
  get("d", c.d);
  get("d_k", c.d_k);
  get("d_s", c.d_s);
  get("hidden", c.hidden);
  get("heads", c.heads);
  get("layers", c.layers);
  get("ff_width", c.ff_width);
  get("decoder_width", c.decoder_width);
  get("max_objects", c.max_objects);
  get("num_classes", c.num_classes);
  if (j.contains("output")) {
    const auto s = j.at("output").get<std::string>();
    if (s != "pointer" && s != "classify") throw std::invalid_argument("output must be classify or pointer");
    c.output = s == "pointer" ? OutputMode::Pointer : OutputMode::Classify;
  }
  if (j.contains("readout")) {
    const auto s = j.at("readout").get<std::string>();
    if (s != "pool" && s != "slots") throw std::invalid_argument("readout must be slots or pool");
    c.readout = s == "pool" ? Readout::Pool : Readout::Slots;
  }
  get("tied", c.tied);
  get("identity_projection", c.identity_projection);
  get("temperature", c.temperature);
  get("relation_scale", c.relation.scale);
  get("normalize", c.relation.normalize);
  get("esbn_gate", c.esbn_gate);
  get("esbn_time_embedding", c.esbn_time_embedding);
  get("seed", c.seed);
}

std::vector<std::pair<std::string, Shape>> param_shapes(const ModelConfig& c) {
  c.validate();
  std::vector<std::pair<std::string, Shape>> out = {
      {"enc.w1", {c.d_in, c.d}}, {"enc.b1", {1, c.d}}, {"enc.w2", {c.d, c.d}}, {"enc.b2", {1, c.d}}};
  const std::size_t dk_head = c.d_k / c.heads;
  switch (c.arch) {
    case Architecture::Esbn: {
      const std::size_t in = esbn_input(c);
      out.push_back({"lstm.w", {in + c.hidden, 4 * c.hidden}});
      out.push_back({"lstm.b", {1, 4 * c.hidden}});
      if (c.esbn_gate) {
        out.push_back({"esbn.gamma", {1, 1}});
        out.push_back({"esbn.beta", {1, 1}});
      }
      if (c.esbn_time_embedding) out.push_back({"esbn.time", {c.max_objects, in}});
      break;
    }
    case Architecture::Recurrent:
      out.push_back({"lstm.w", {c.d + c.hidden, 4 * c.hidden}});
      out.push_back({"lstm.b", {1, 4 * c.hidden}});
      break;
    case Architecture::CoRelNet:
      if (!c.identity_projection) out.push_back({"corel.phi", {c.d, c.d_k}});
      break;
    case Architecture::Abstractor:
      out.push_back({"abs.symbols", {c.max_objects, c.d_s}});
      for (std::size_t l = 0; l < c.layers; ++l) {
        const auto p = layer_prefix("abs", l);
        for (std::size_t h = 0; h < c.heads; ++h) {
          out.push_back({p + "phi" + std::to_string(h), {c.d, dk_head}});
          if (!c.tied) out.push_back({p + "psi" + std::to_string(h), {c.d, dk_head}});
        }
        out.push_back({p + "wo", {c.heads * c.d_s, c.d_s}});
        add_block(out, p, c.d_s, c.ff_width);
      }
      break;
    case Architecture::Transformer:
      out.push_back({"tf.pos", {c.max_objects, c.d}});
      for (std::size_t l = 0; l < c.layers; ++l) {
        const auto p = layer_prefix("tf", l);
        for (std::size_t h = 0; h < c.heads; ++h) {
          out.push_back({p + "wq" + std::to_string(h), {c.d, dk_head}});
          out.push_back({p + "wk" + std::to_string(h), {c.d, dk_head}});
          out.push_back({p + "wv" + std::to_string(h), {c.d, c.d / c.heads}});
        }
        out.push_back({p + "wo", {c.d, c.d}});
        add_block(out, p, c.d, c.ff_width);
      }
      break;
    case Architecture::RelationNet:
      out.push_back({"rn.w1", {2 * c.d, c.d}});
      out.push_back({"rn.b1", {1, c.d}});
      out.push_back({"rn.w2", {c.d, c.d}});
      out.push_back({"rn.b2", {1, c.d}});
      break;
  }
  if (c.output == OutputMode::Pointer) {
    const std::size_t w = c.arch == Architecture::Abstractor ? c.d_s : c.d;
    out.push_back({"ptr.step", {c.max_objects, w}});
    out.push_back({"ptr.prev", {w, w}});
    out.push_back({"ptr.key_state", {w, w}});
    out.push_back({"ptr.key_slot", {w, w}});
  } else {
    const std::size_t in = head_input(c);
    if (c.decoder_width == 0) {
      out.push_back({"head.w", {in, c.num_classes}});
      out.push_back({"head.b", {1, c.num_classes}});
    } else {
      out.push_back({"head.w1", {in, c.decoder_width}});
      out.push_back({"head.b1", {1, c.decoder_width}});
      out.push_back({"head.w2", {c.decoder_width, c.num_classes}});
      out.push_back({"head.b2", {1, c.num_classes}});
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::size_t parameter_count(const ModelConfig& config) {
  std::size_t n = 0;
  for (const auto& [_, shape] : param_shapes(config)) n += num::shape_size(shape);
  return n;
}

ParamSet init_params(const ModelConfig& config) {
  ParamSet params;
  for (const auto& [name, shape] : param_shapes(config)) {
    Tensor t(shape);
    const std::string leaf = name.substr(name.rfind('.') + 1);
    if (name.find(".ln") != std::string::npos && leaf == "g") {
      t = Tensor(shape, 1.0);
    } else if (name == "lstm.b") {
      // Forget-gate bias starts at 1.
      const std::size_t h = shape[1] / 4;
      for (std::size_t i = h; i < 2 * h; ++i) t[i] = 1.0;
    } else if (name == "esbn.gamma") {
      t[0] = 1.0;
    } else if (!is_bias(name)) {
      num::Rng rng(num::mix_seed(config.seed, fnv1a(name)));
      const bool table = name == "abs.symbols" || name == "tf.pos" || name == "ptr.step" || name == "esbn.time";
      const double sd = table ? 1.0 : 1.0 / std::sqrt(static_cast<double>(shape[0]));
      for (auto& v : t.values()) v = sd * rng.normal();
    }
    params.add(name, std::move(t));
  }
  return params;
}

void match_parameter_counts(std::vector<ModelConfig>& configs, double tolerance) {
  for (std::size_t i = 0; i < configs.size(); ++i) {
    if (!is_bottleneck(configs[i].arch)) continue;
    for (std::size_t j = 0; j < configs.size(); ++j) {
      if (configs[j].arch != counterpart(configs[i].arch)) continue;
      const double ci = static_cast<double>(parameter_count(configs[i]));
      const double cj = static_cast<double>(parameter_count(configs[j]));
      if (std::abs(ci - cj) <= tolerance * std::max(ci, cj)) continue;
      ModelConfig& small = ci < cj ? configs[i] : configs[j];
      const double target = std::max(ci, cj);
      if (small.output == OutputMode::Pointer) {
        throw ParameterError("match_parameter_counts: pointer heads have no decoder to widen");
      }
      ModelConfig probe = small;
      probe.decoder_width = 1;
      const double c1 = static_cast<double>(parameter_count(probe));
      probe.decoder_width = 2;
      const double slope = static_cast<double>(parameter_count(probe)) - c1;
      const double w = std::max(1.0, std::round((target - c1) / slope) + 1.0);
      small.decoder_width = std::max(small.decoder_width, static_cast<std::size_t>(w));
      const double now = static_cast<double>(parameter_count(small));
      if (std::abs(now - target) > tolerance * std::max(now, target)) {
        throw ParameterError("match_parameter_counts: cannot match " + to_string(configs[i].arch) + " and " +
                             to_string(configs[j].arch));
      }
    }
  }
}

// ---------------------------------------------------------------------------

Var encode(const Bindings& p, Var x) {
  if (x.cols() != p["enc.w1"].rows()) {
    throw DimensionError("encode: input width " + std::to_string(x.cols()) + " but encoder expects " +
                         std::to_string(p["enc.w1"].rows()));
  }
  Var h = num::relu(num::add_row(num::matmul(x, p["enc.w1"]), p["enc.b1"]));
  return num::add_row(num::matmul(h, p["enc.w2"]), p["enc.b2"]);
}

namespace {

struct Context {
  const ModelConfig& cfg;
  const Bindings& p;
  const ForwardOptions& opt;
  Tape& tape;

  void record(std::vector<Tensor> ForwardTrace::*field, const Tensor& t) const {
    if (opt.trace) (opt.trace->*field).push_back(t);
  }

  Var embed(const Tensor& features) const {
    Var e = encode(p, tape.constant(features));
    if (opt.rotation) e = num::matmul(e, tape.constant(opt.rotation->transposed()));
    record(&ForwardTrace::embeddings, e.value());
    return e;
  }

  // Query/key projection compensated for the embedding rotation.
  Var qk(const std::string& name) const {
    Var w = p[name];
    return opt.rotation ? num::matmul(tape.constant(*opt.rotation), w) : w;
  }

  Var zeros(std::size_t r, std::size_t c) const { return tape.constant(Tensor({r, c})); }

  // N x w rows padded with zero rows to max_objects, flattened.
  Var pad_flatten(Var x) const {
    const std::size_t n = x.rows(), w = x.cols(), m = cfg.max_objects;
    if (n > m) throw ParameterError("episode length " + std::to_string(n) + " exceeds max_objects " + std::to_string(m));
    Var full = n == m ? x : num::concat({x, zeros(m - n, w)}, 0);
    return num::reshape(full, {1, m * w});
  }

  Var head(Var x) const {
    if (cfg.decoder_width == 0) return num::add_row(num::matmul(x, p["head.w"]), p["head.b"]);
    Var h = num::relu(num::add_row(num::matmul(x, p["head.w1"]), p["head.b1"]));
    return num::add_row(num::matmul(h, p["head.w2"]), p["head.b2"]);
  }

  Var readout(Var states) const {
    if (cfg.readout == Readout::Pool) return num::scale(num::sum_rows(states), 1.0 / states.rows());
    return pad_flatten(states);
  }

  std::pair<Var, Var> lstm_step(Var x, Var h, Var c) const {
    const std::size_t n = cfg.hidden;
    Var gates = num::add_row(num::matmul(num::concat({x, h}, 1), p["lstm.w"]), p["lstm.b"]);
    Var i = num::sigmoid(num::slice(gates, 1, 0, n));
    Var f = num::sigmoid(num::slice(gates, 1, n, 2 * n));
    Var g = num::tanh(num::slice(gates, 1, 2 * n, 3 * n));
    Var o = num::sigmoid(num::slice(gates, 1, 3 * n, 4 * n));
    Var c2 = num::add(num::mul(f, c), num::mul(i, g));
    return {num::mul(o, num::tanh(c2)), c2};
  }

  Var block(const std::string& pre, Var x, Var attended) const {
    Var a = num::layer_norm(num::add(x, attended), p[pre + "ln1.g"], p[pre + "ln1.b"]);
    Var f = num::relu(num::add_row(num::matmul(a, p[pre + "ff.w1"]), p[pre + "ff.b1"]));
    f = num::add_row(num::matmul(f, p[pre + "ff.w2"]), p[pre + "ff.b2"]);
    return num::layer_norm(num::add(a, f), p[pre + "ln2.g"], p[pre + "ln2.b"]);
  }

  ForwardResult pointer(Var states, Var slots) const {
    const std::size_t n = states.rows(), w = states.cols();
    if (n > cfg.max_objects) throw ParameterError("pointer: episode longer than max_objects");
    if (opt.teacher) {
      std::vector<std::size_t> sorted = *opt.teacher;
      std::sort(sorted.begin(), sorted.end());
      for (std::size_t k = 0; k < sorted.size(); ++k)
        if (sorted.size() != n || sorted[k] != k) throw std::invalid_argument("pointer: teacher sequence is not a permutation of the slots");
    }
    Var keys_t = num::transpose(num::add(num::matmul(states, p["ptr.key_state"]), num::matmul(slots, p["ptr.key_slot"])));
    Var prev = num::scale(num::sum_rows(states), 1.0 / static_cast<double>(n));
    const double s = 1.0 / std::sqrt(static_cast<double>(w));
    Tensor mask({1, n});
    ForwardResult out;
    std::vector<Var> rows;
    for (std::size_t k = 0; k < n; ++k) {
      Var q = num::add(num::slice(p["ptr.step"], 0, k, k + 1), num::matmul(prev, p["ptr.prev"]));
      Var scores = num::add(num::scale(num::matmul(q, keys_t), s), tape.constant(mask));
      std::size_t choice = 0;
      if (opt.teacher) {
        choice = (*opt.teacher)[k];
      } else {
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < n; ++j)
          if (mask[j] == 0.0 && scores.value()[j] > best) best = scores.value()[j], choice = j;
      }
      mask[choice] = kMasked;
      out.selection.push_back(choice);
      prev = num::slice(states, 0, choice, choice + 1);
      rows.push_back(scores);
    }
    out.logits = num::concat(rows, 0);
    return out;
  }

  ForwardResult esbn(const Tensor& features) const {
    Var e = embed(features);
    const std::size_t n = e.rows(), hdim = cfg.hidden;
    if (cfg.esbn_time_embedding && n > cfg.max_objects) throw ParameterError("esbn: episode longer than time embedding");
    Var h = zeros(1, hdim), c = zeros(1, hdim);
    std::vector<Var> keys, values;
    for (std::size_t t = 0; t < n; ++t) {
      Var z = num::slice(e, 0, t, t + 1);
      Var v = zeros(1, hdim);
      Var g = zeros(1, 1);
      if (t > 0) {
        Var scores = rel::relation_matrix(z, num::concat(keys, 0), cfg.relation);
        Var w = num::softmax(scores, 1, cfg.temperature);
        v = num::matmul(w, num::concat(values, 0));
        if (cfg.esbn_gate) {
          Var ones = tape.constant(Tensor({1, t}, 1.0));
          Var conf = num::sigmoid(num::add(num::mul_scalar(scores, p["esbn.gamma"]), num::mul_scalar(ones, p["esbn.beta"])));
          g = num::matmul(w, num::transpose(conf));
        }
        record(&ForwardTrace::retrieval_weights, w.value());
      }
      record(&ForwardTrace::retrieved, v.value());
      if (opt.trace) opt.trace->gates.push_back(g.value()[0]);
      Var x = cfg.esbn_gate ? num::concat({v, g}, 1) : v;
      if (cfg.esbn_time_embedding) x = num::add(x, num::slice(p["esbn.time"], 0, t, t + 1));
      std::tie(h, c) = lstm_step(x, h, c);
      keys.push_back(z);
      values.push_back(h);
    }
    return {head(h), {}};
  }

  ForwardResult recurrent(const Tensor& features) const {
    Var e = embed(features);
    Var h = zeros(1, cfg.hidden), c = zeros(1, cfg.hidden);
    for (std::size_t t = 0; t < e.rows(); ++t) std::tie(h, c) = lstm_step(num::slice(e, 0, t, t + 1), h, c);
    return {head(h), {}};
  }

  ForwardResult corelnet(const Tensor& features) const {
    Var e = embed(features);
    const std::size_t n = e.rows(), m = cfg.max_objects;
    if (n > m) throw ParameterError("corelnet: episode length " + std::to_string(n) + " exceeds max_objects " + std::to_string(m));
    Var q = cfg.identity_projection ? e : num::matmul(e, qk("corel.phi"));
    Var r = rel::relation_matrix(q, q, cfg.relation);
    record(&ForwardTrace::relations, r.value());
    Var wide = n == m ? r : num::concat({r, zeros(n, m - n)}, 1);
    return {head(pad_flatten(wide)), {}};
  }

  ForwardResult abstractor(const Tensor& features) const {
    Var e = embed(features);
    const std::size_t n = e.rows();
    Var symbols = p["abs.symbols"];
    if (n > symbols.rows()) {
      throw rel::CapacityError("abstractor: " + std::to_string(n) + " objects exceed symbol capacity " +
                               std::to_string(symbols.rows()));
    }
    Var slots = num::slice(symbols, 0, 0, n);
    Var a = slots;
    for (std::size_t l = 0; l < cfg.layers; ++l) {
      const auto pre = layer_prefix("abs", l);
      std::vector<rel::ProjectionPair> heads;
      for (std::size_t h = 0; h < cfg.heads; ++h) {
        const auto id = std::to_string(h);
        heads.push_back({qk(pre + "phi" + id), cfg.tied ? std::nullopt : std::optional<Var>(qk(pre + "psi" + id))});
      }
      auto mh = rel::relational_cross_attention(e, heads, a, cfg.relation, cfg.temperature);
      for (const auto& r : mh.relations) record(&ForwardTrace::relations, r.value());
      a = block(pre, a, num::matmul(mh.abstract_states, p[pre + "wo"]));
    }
    if (cfg.output == OutputMode::Pointer) return pointer(a, slots);
    return {head(readout(a)), {}};
  }

  ForwardResult transformer(const Tensor& features) const {
    Var e = embed(features);
    const std::size_t n = e.rows();
    if (n > cfg.max_objects) throw ParameterError("transformer: episode longer than max_objects");
    Var pos = num::slice(p["tf.pos"], 0, 0, n);
    Var x = num::add(e, pos);
    for (std::size_t l = 0; l < cfg.layers; ++l) {
      const auto pre = layer_prefix("tf", l);
      std::vector<Var> heads;
      for (std::size_t h = 0; h < cfg.heads; ++h) {
        const auto id = std::to_string(h);
        Var wq = l == 0 ? qk(pre + "wq" + id) : p[pre + "wq" + id];
        Var wk = l == 0 ? qk(pre + "wk" + id) : p[pre + "wk" + id];
        Var r = rel::relation_matrix(num::matmul(x, wq), num::matmul(x, wk));
        Var w = num::softmax(r, 1);
        record(&ForwardTrace::relations, r.value());
        record(&ForwardTrace::attention, w.value());
        heads.push_back(num::matmul(w, num::matmul(x, p[pre + "wv" + id])));
      }
      Var cat = heads.size() == 1 ? heads[0] : num::concat(heads, 1);
      x = block(pre, x, num::matmul(cat, p[pre + "wo"]));
    }
    if (cfg.output == OutputMode::Pointer) return pointer(x, pos);
    return {head(readout(x)), {}};
  }

  ForwardResult relationnet(const Tensor& features) const {
    Var e = embed(features);
    const std::size_t n = e.rows();
    // Selection matrices build all ordered pairs (i, j) as rows [e_i, e_j].
    Tensor left({n * n, n}), right({n * n, n});
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        left(i * n + j, i) = 1.0;
        right(i * n + j, j) = 1.0;
      }
    Var pairs = num::concat({num::matmul(tape.constant(left), e), num::matmul(tape.constant(right), e)}, 1);
    Var g = num::relu(num::add_row(num::matmul(pairs, p["rn.w1"]), p["rn.b1"]));
    g = num::add_row(num::matmul(g, p["rn.w2"]), p["rn.b2"]);
    return {head(num::sum_rows(g)), {}};
  }
};

}  // namespace

ForwardResult forward(const ModelConfig& config, const Bindings& params, const Tensor& features,
                      const ForwardOptions& options) {
  if (features.rank() != 2 || features.rows() == 0) throw std::invalid_argument("forward: empty episode");
  if (options.rotation && options.rotation->rows() != config.d) {
    throw DimensionError("forward: rotation " + num::to_string(options.rotation->shape()) +
                         " does not match embedding width " + std::to_string(config.d));
  }
  Context ctx{config, params, options, params.tape()};
  switch (config.arch) {
    case Architecture::Esbn: return ctx.esbn(features);
    case Architecture::CoRelNet: return ctx.corelnet(features);
    case Architecture::Abstractor: return ctx.abstractor(features);
    case Architecture::Transformer: return ctx.transformer(features);
    case Architecture::Recurrent: return ctx.recurrent(features);
    case Architecture::RelationNet: return ctx.relationnet(features);
  }
  throw std::logic_error("forward: unhandled architecture");
}

Tensor forward_logits(const ModelConfig& config, const ParamSet& params, const Tensor& features,
                      const ForwardOptions& options) {
  Tape tape;
  Bindings b(tape, params, false);
  return forward(config, b, features, options).logits.value();
}

}  // namespace rbw::arch
