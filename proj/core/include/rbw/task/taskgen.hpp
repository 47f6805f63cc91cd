#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rbw/num/tensor.hpp"

// Seeded generators for the relational tasks. Every stream is a pure
// function of (task, configuration, seed).
namespace rbw::task {

using num::Tensor;

enum class VocabKind { OneHot, RandomBinary, RandomGaussian };
enum class TaskKind { SameDifferent, IdentityRules, Counting, Sorting };

std::string to_string(VocabKind kind);
std::string to_string(TaskKind kind);
VocabKind parse_vocab_kind(const std::string& s);
TaskKind parse_task_kind(const std::string& s);

struct ObjectVocabulary {
  VocabKind kind = VocabKind::RandomGaussian;
  std::uint64_t seed = 0;
  Tensor features;  // one row per object id

  std::size_t size() const { return features.rows(); }
  std::size_t width() const { return features.cols(); }
};

struct SplitSpec {
  std::vector<std::size_t> train;
  std::vector<std::size_t> ood;
};

enum class Side { Train, Ood };

/// Object ids tagged -1 mark the counting query token.
struct EpisodeInput {
  std::vector<int> object_ids;
  Tensor features;  // N x input width

  std::size_t length() const { return object_ids.size(); }
};

struct TaskInstance {
  TaskKind kind = TaskKind::SameDifferent;
  EpisodeInput episode;
  /// Class index for classification tasks.
  std::size_t label = 0;
  /// Ascending argsort for sorting tasks: target[k] is the slot of the k-th smallest.
  std::vector<std::size_t> target;
  std::vector<double> attributes;
  std::uint64_t seed = 0;
};

/// Pairwise-distinct features; random kinds resample on collision.
ObjectVocabulary make_vocab(std::size_t n, std::size_t d_in, VocabKind kind, std::uint64_t seed);

/// Seeded shuffle of ids, first round(n * fraction) go to train.
SplitSpec split_vocab(const ObjectVocabulary& vocab, double train_fraction, std::uint64_t seed);

/// Label 1 = same. Instances come in pairs holding one of each label.
std::vector<TaskInstance> gen_same_different(const ObjectVocabulary& vocab,
                                             std::span<const std::size_t> side, std::size_t count,
                                             std::uint64_t seed);

/// Episode (a, b, a|b, c, d, cand0, cand1); label is the candidate slot that
/// completes (c, d, ?) under the source rule. Rule and candidate order are
/// balanced within each consecutive pair of instances.
std::vector<TaskInstance> gen_identity_rules(const ObjectVocabulary& vocab,
                                             std::span<const std::size_t> side, std::size_t count,
                                             std::uint64_t seed);

/// n object tokens (n uniform in 1..stage, or exactly `exact_n`) followed by
/// a query token; label n. Input width is vocab width + 1 (query flag).
std::vector<TaskInstance> gen_counting(const ObjectVocabulary& vocab,
                                       std::span<const std::size_t> side, std::size_t count,
                                       std::size_t max_count, std::uint64_t seed, std::size_t stage,
                                       std::optional<std::size_t> exact_n = std::nullopt);

/// n objects with a discrete scalar attribute appended as the last feature;
/// levels are distinct within an episode. Target is the ascending argsort.
std::vector<TaskInstance> gen_sorting(const ObjectVocabulary& vocab,
                                      std::span<const std::size_t> side, std::size_t count,
                                      std::size_t n, std::uint64_t seed,
                                      std::size_t attribute_levels = 10,
                                      std::size_t max_length = 16);

/// Full description of a task family; unknown JSON keys are rejected.
struct TaskConfig {
  TaskKind kind = TaskKind::SameDifferent;
  std::size_t vocab_size = 40;
  std::size_t d_in = 32;
  VocabKind vocab_kind = VocabKind::RandomGaussian;
  double train_fraction = 0.5;
  std::uint64_t vocab_seed = 1;
  std::uint64_t split_seed = 2;
  std::size_t sort_length = 5;
  std::size_t max_count = 10;
  std::size_t attribute_levels = 10;
};

void to_json(nlohmann::json& j, const TaskConfig& c);
void from_json(const nlohmann::json& j, TaskConfig& c);

/// Vocabulary and split materialized from a TaskConfig.
struct TaskWorld {
  TaskConfig config;
  ObjectVocabulary vocab;
  SplitSpec split;

  static TaskWorld build(const TaskConfig& config);
  std::span<const std::size_t> side(Side s) const { return s == Side::Train ? split.train : split.ood; }

  std::size_t input_width() const;
  std::size_t num_classes() const;
  std::size_t max_length() const;

  /// Instances of the configured task; `stage` only affects counting.
  std::vector<TaskInstance> generate(Side s, std::size_t count, std::uint64_t seed,
                                     std::size_t stage = 0) const;
};

/// One line-delimited record per instance.
nlohmann::json instance_to_json(const TaskInstance& inst);
TaskInstance instance_from_json(const nlohmann::json& j);

}  // namespace rbw::task
