#include "rbw/task/taskgen.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <stdexcept>

#include "rbw/num/rng.hpp"

namespace rbw::task {

using num::mix_seed;
using num::Rng;

std::string to_string(VocabKind kind) {
  switch (kind) {
    case VocabKind::OneHot: return "one-hot";
    case VocabKind::RandomBinary: return "random-binary";
    case VocabKind::RandomGaussian: return "random-gaussian";
  }
  return "?";
}

std::string to_string(TaskKind kind) {
  switch (kind) {
    case TaskKind::SameDifferent: return "same_different";
    case TaskKind::IdentityRules: return "identity_rules";
    case TaskKind::Counting: return "counting";
    case TaskKind::Sorting: return "sorting";
  }
  return "?";
}

VocabKind parse_vocab_kind(const std::string& s) {
  if (s == "one-hot") return VocabKind::OneHot;
  if (s == "random-binary") return VocabKind::RandomBinary;
  if (s == "random-gaussian") return VocabKind::RandomGaussian;
  throw std::invalid_argument("unknown vocabulary kind '" + s + "'");
}

TaskKind parse_task_kind(const std::string& s) {
  if (s == "same_different") return TaskKind::SameDifferent;
  if (s == "identity_rules") return TaskKind::IdentityRules;
  if (s == "counting") return TaskKind::Counting;
  if (s == "sorting") return TaskKind::Sorting;
  throw std::invalid_argument("unknown task kind '" + s + "'");
}

ObjectVocabulary make_vocab(std::size_t n, std::size_t d_in, VocabKind kind, std::uint64_t seed) {
  if (n < 2) throw std::invalid_argument("make_vocab: need at least 2 objects");
  if (d_in == 0) throw std::invalid_argument("make_vocab: d_in must be positive");
  if (kind == VocabKind::OneHot && n > d_in) {
    throw std::invalid_argument("make_vocab: one-hot needs d_in >= n (n=" + std::to_string(n) +
                                ", d_in=" + std::to_string(d_in) + ")");
  }
  ObjectVocabulary v{kind, seed, Tensor({n, d_in})};
  if (kind == VocabKind::OneHot) {
    for (std::size_t i = 0; i < n; ++i) v.features(i, i) = 1.0;
    return v;
  }
  if (kind == VocabKind::RandomBinary && d_in < 64 && (std::uint64_t{1} << d_in) < n) {
    throw std::invalid_argument("make_vocab: too few binary patterns for " + std::to_string(n) + " objects");
  }
  Rng rng(seed);
  std::set<std::vector<double>> seen;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> row(d_in);
    do {
      for (auto& x : row) x = kind == VocabKind::RandomBinary ? static_cast<double>(rng.below(2)) : rng.normal();
    } while (!seen.insert(row).second);
    std::copy(row.begin(), row.end(), v.features.values().begin() + i * d_in);
  }
  return v;
}

SplitSpec split_vocab(const ObjectVocabulary& vocab, double train_fraction, std::uint64_t seed) {
  const std::size_t n = vocab.size();
  const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(n)));
  if (!(train_fraction > 0.0) || n_train == 0 || n_train >= n) {
    throw std::invalid_argument("split_vocab: fraction " + std::to_string(train_fraction) +
                                " leaves a side empty");
  }
  std::vector<std::size_t> ids(n);
  std::iota(ids.begin(), ids.end(), 0);
  Rng rng(seed);
  rng.shuffle(ids);
  SplitSpec s;
  s.train.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.ood.assign(ids.begin() + static_cast<std::ptrdiff_t>(n_train), ids.end());
  return s;
}

namespace {

void require_side(std::span<const std::size_t> side, std::size_t minimum, const char* op) {
  if (side.size() < minimum) {
    throw std::invalid_argument(std::string(op) + ": side has " + std::to_string(side.size()) +
                                " objects, needs " + std::to_string(minimum));
  }
}

// k distinct objects from the side, in random order.
std::vector<std::size_t> draw_distinct(Rng& rng, std::span<const std::size_t> side, std::size_t k) {
  std::vector<std::size_t> pool(side.begin(), side.end());
  for (std::size_t i = 0; i < k; ++i) {
    const auto j = i + static_cast<std::size_t>(rng.below(pool.size() - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(k);
  return pool;
}

EpisodeInput assemble(const ObjectVocabulary& vocab, const std::vector<std::size_t>& ids,
                      std::size_t extra_cols = 0) {
  const std::size_t w = vocab.width();
  EpisodeInput e;
  e.features = Tensor({ids.size(), w + extra_cols});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    e.object_ids.push_back(static_cast<int>(ids[i]));
    for (std::size_t c = 0; c < w; ++c) e.features(i, c) = vocab.features(ids[i], c);
  }
  return e;
}

}  // namespace

std::vector<TaskInstance> gen_same_different(const ObjectVocabulary& vocab,
                                             std::span<const std::size_t> side, std::size_t count,
                                             std::uint64_t seed) {
  require_side(side, 2, "gen_same_different");
  std::vector<TaskInstance> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Rng pair_rng(mix_seed(seed, i / 2));
    const bool first_is_same = pair_rng.below(2) == 1;
    const bool same = (i % 2 == 0) == first_is_same;
    TaskInstance inst;
    inst.kind = TaskKind::SameDifferent;
    inst.seed = mix_seed(seed, i + (std::uint64_t{1} << 32));
    Rng rng(inst.seed);
    std::vector<std::size_t> ids;
    if (same) {
      const auto a = side[rng.below(side.size())];
      ids = {a, a};
    } else {
      ids = draw_distinct(rng, side, 2);
    }
    inst.episode = assemble(vocab, ids);
    inst.label = same ? 1 : 0;
    out.push_back(std::move(inst));
  }
  return out;
}

std::vector<TaskInstance> gen_identity_rules(const ObjectVocabulary& vocab,
                                             std::span<const std::size_t> side, std::size_t count,
                                             std::uint64_t seed) {
  require_side(side, 4, "gen_identity_rules");
  std::vector<TaskInstance> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Rng pair_rng(mix_seed(seed, i / 2));
    const bool first_aba = pair_rng.below(2) == 1;
    const bool first_swapped = pair_rng.below(2) == 1;
    const bool aba = (i % 2 == 0) == first_aba;
    const bool swapped = (i % 2 == 0) == first_swapped;
    TaskInstance inst;
    inst.kind = TaskKind::IdentityRules;
    inst.seed = mix_seed(seed, i + (std::uint64_t{1} << 32));
    Rng rng(inst.seed);
    const auto objs = draw_distinct(rng, side, 4);
    const auto a = objs[0], b = objs[1], c = objs[2], d = objs[3];
    const auto correct = aba ? c : d;
    const auto cand0 = swapped ? d : c;
    const auto cand1 = swapped ? c : d;
    inst.episode = assemble(vocab, {a, b, aba ? a : b, c, d, cand0, cand1});
    inst.label = cand0 == correct ? 0 : 1;
    out.push_back(std::move(inst));
  }
  return out;
}

std::vector<TaskInstance> gen_counting(const ObjectVocabulary& vocab,
                                       std::span<const std::size_t> side, std::size_t count,
                                       std::size_t max_count, std::uint64_t seed, std::size_t stage,
                                       std::optional<std::size_t> exact_n) {
  require_side(side, 1, "gen_counting");
  if (stage < 1) throw std::invalid_argument("gen_counting: stage must be >= 1");
  if (stage > max_count) throw std::invalid_argument("gen_counting: stage exceeds max_count");
  if (exact_n && (*exact_n < 1 || *exact_n > max_count)) {
    throw std::invalid_argument("gen_counting: exact n outside 1..max_count");
  }
  const std::size_t w = vocab.width();
  std::vector<TaskInstance> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    TaskInstance inst;
    inst.kind = TaskKind::Counting;
    inst.seed = mix_seed(seed, i);
    Rng rng(inst.seed);
    const std::size_t n = exact_n ? *exact_n : 1 + static_cast<std::size_t>(rng.below(stage));
    std::vector<std::size_t> ids(n);
    for (auto& id : ids) id = side[rng.below(side.size())];
    EpisodeInput body = assemble(vocab, ids, 1);
    EpisodeInput e;
    e.object_ids = body.object_ids;
    e.object_ids.push_back(-1);
    e.features = Tensor({n + 1, w + 1});
    std::copy(body.features.values().begin(), body.features.values().end(), e.features.values().begin());
    e.features(n, w) = 1.0;
    inst.episode = std::move(e);
    inst.label = n;
    out.push_back(std::move(inst));
  }
  return out;
}

std::vector<TaskInstance> gen_sorting(const ObjectVocabulary& vocab,
                                      std::span<const std::size_t> side, std::size_t count,
                                      std::size_t n, std::uint64_t seed,
                                      std::size_t attribute_levels, std::size_t max_length) {
  if (n < 2) throw std::invalid_argument("gen_sorting: n must be >= 2");
  if (n > max_length) {
    throw std::invalid_argument("gen_sorting: n=" + std::to_string(n) + " exceeds configured max " +
                                std::to_string(max_length));
  }
  if (attribute_levels < n) throw std::invalid_argument("gen_sorting: fewer attribute levels than objects");
  require_side(side, 1, "gen_sorting");
  const std::size_t w = vocab.width();
  std::vector<TaskInstance> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    TaskInstance inst;
    inst.kind = TaskKind::Sorting;
    inst.seed = mix_seed(seed, i);
    Rng rng(inst.seed);
    std::vector<std::size_t> ids;
    if (side.size() >= n) {
      ids = draw_distinct(rng, side, n);
    } else {
      for (std::size_t k = 0; k < n; ++k) ids.push_back(side[rng.below(side.size())]);
    }
    std::vector<std::size_t> levels(n);
    for (;;) {
      for (auto& l : levels) l = static_cast<std::size_t>(rng.below(attribute_levels));
      std::vector<std::size_t> sorted = levels;
      std::sort(sorted.begin(), sorted.end());
      if (std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end()) break;
    }
    inst.episode = assemble(vocab, ids, 1);
    for (std::size_t k = 0; k < n; ++k) {
      const double a = static_cast<double>(levels[k]) / static_cast<double>(attribute_levels - 1);
      inst.attributes.push_back(a);
      inst.episode.features(k, w) = a;
    }
    inst.target.resize(n);
    std::iota(inst.target.begin(), inst.target.end(), 0);
    std::sort(inst.target.begin(), inst.target.end(),
              [&](std::size_t x, std::size_t y) { return inst.attributes[x] < inst.attributes[y]; });
    out.push_back(std::move(inst));
  }
  return out;
}

void to_json(nlohmann::json& j, const TaskConfig& c) {
  j = nlohmann::json{{"kind", to_string(c.kind)},
                     {"vocab_size", c.vocab_size},
                     {"d_in", c.d_in},
                     {"vocab_kind", to_string(c.vocab_kind)},
                     {"train_fraction", c.train_fraction},
                     {"vocab_seed", c.vocab_seed},
                     {"split_seed", c.split_seed},
                     {"sort_length", c.sort_length},
                     {"max_count", c.max_count},
                     {"attribute_levels", c.attribute_levels}};
}

void from_json(const nlohmann::json& j, TaskConfig& c) {
  static const std::set<std::string> known = {"kind",       "vocab_size",  "d_in",
                                               "vocab_kind", "train_fraction", "vocab_seed",
                                               "split_seed", "sort_length", "max_count",
                                               "attribute_levels"};
  if (!j.is_object()) throw std::invalid_argument("task config must be an object");
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) throw std::invalid_argument("unknown task config key '" + key + "'");
  }
  if (j.contains("kind")) c.kind = parse_task_kind(j.at("kind").get<std::string>());
  if (j.contains("vocab_size")) c.vocab_size = j.at("vocab_size").get<std::size_t>();
  if (j.contains("d_in")) c.d_in = j.at("d_in").get<std::size_t>();
  if (j.contains("vocab_kind")) c.vocab_kind = parse_vocab_kind(j.at("vocab_kind").get<std::string>());
  if (j.contains("train_fraction")) c.train_fraction = j.at("train_fraction").get<double>();
  if (j.contains("vocab_seed")) c.vocab_seed = j.at("vocab_seed").get<std::uint64_t>();
  if (j.contains("split_seed")) c.split_seed = j.at("split_seed").get<std::uint64_t>();
  if (j.contains("sort_length")) c.sort_length = j.at("sort_length").get<std::size_t>();
  if (j.contains("max_count")) c.max_count = j.at("max_count").get<std::size_t>();
  if (j.contains("attribute_levels")) c.attribute_levels = j.at("attribute_levels").get<std::size_t>();
}

TaskWorld TaskWorld::build(const TaskConfig& config) {
  TaskWorld w;
  w.config = config;
  w.vocab = make_vocab(config.vocab_size, config.d_in, config.vocab_kind, config.vocab_seed);
  w.split = split_vocab(w.vocab, config.train_fraction, config.split_seed);
  return w;
}

std::size_t TaskWorld::input_width() const {
  switch (config.kind) {
    case TaskKind::Counting:
    case TaskKind::Sorting: return config.d_in + 1;
    default: return config.d_in;
  }
}

std::size_t TaskWorld::num_classes() const {
  switch (config.kind) {
    case TaskKind::SameDifferent:
    case TaskKind::IdentityRules: return 2;
    case TaskKind::Counting: return config.max_count + 1;
    case TaskKind::Sorting: return config.sort_length;
  }
  return 0;
}

std::size_t TaskWorld::max_length() const {
  switch (config.kind) {
    case TaskKind::SameDifferent: return 2;
    case TaskKind::IdentityRules: return 7;
    case TaskKind::Counting: return config.max_count + 1;
    case TaskKind::Sorting: return config.sort_length;
  }
  return 0;
}

std::vector<TaskInstance> TaskWorld::generate(Side s, std::size_t count, std::uint64_t seed,
                                              std::size_t stage) const {
  const auto ids = side(s);
  switch (config.kind) {
    case TaskKind::SameDifferent: return gen_same_different(vocab, ids, count, seed);
    case TaskKind::IdentityRules: return gen_identity_rules(vocab, ids, count, seed);
    case TaskKind::Counting:
      return gen_counting(vocab, ids, count, config.max_count, seed, stage == 0 ? config.max_count : stage);
    case TaskKind::Sorting:
      return gen_sorting(vocab, ids, count, config.sort_length, seed, config.attribute_levels,
                         config.sort_length);
  }
  return {};
}

nlohmann::json instance_to_json(const TaskInstance& inst) {
  nlohmann::json features = nlohmann::json::array();
  for (std::size_t r = 0; r < inst.episode.features.rows(); ++r) {
    const auto row = inst.episode.features.row_span(r);
    features.push_back(std::vector<double>(row.begin(), row.end()));
  }
  nlohmann::json j{{"task", to_string(inst.kind)},
                   {"seed", inst.seed},
                   {"object_ids", inst.episode.object_ids},
                   {"features", std::move(features)},
                   {"label", inst.label}};
  if (inst.kind == TaskKind::Sorting) {
    j["target"] = inst.target;
    j["attributes"] = inst.attributes;
  }
  return j;
}

TaskInstance instance_from_json(const nlohmann::json& j) {
  TaskInstance inst;
  inst.kind = parse_task_kind(j.at("task").get<std::string>());
  inst.seed = j.at("seed").get<std::uint64_t>();
  inst.episode.object_ids = j.at("object_ids").get<std::vector<int>>();
  const auto rows = j.at("features").get<std::vector<std::vector<double>>>();
  if (rows.empty() || rows.size() != inst.episode.object_ids.size()) {
    throw std::invalid_argument("instance record: feature rows do not match object ids");
  }
  std::vector<double> flat;
  for (const auto& r : rows) {
    if (r.size() != rows[0].size()) throw std::invalid_argument("instance record: ragged features");
    flat.insert(flat.end(), r.begin(), r.end());
  }
  inst.episode.features = Tensor({rows.size(), rows[0].size()}, std::move(flat));
  inst.label = j.at("label").get<std::size_t>();
  if (j.contains("target")) inst.target = j.at("target").get<std::vector<std::size_t>>();
  if (j.contains("attributes")) inst.attributes = j.at("attributes").get<std::vector<double>>();
  return inst;
}

}  // namespace rbw::task
