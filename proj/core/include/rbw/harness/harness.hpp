#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rbw/arch/archzoo.hpp"
#include "rbw/num/adam.hpp"
#include "rbw/task/taskgen.hpp"

// Training, evaluation, comparisons and reports.
namespace rbw::harness {

using arch::ModelConfig;
using num::ParamSet;
using num::Tensor;
using task::TaskConfig;
using task::TaskInstance;
using task::TaskWorld;

/// Malformed or inconsistent experiment configuration.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class CriterionSplit { Train, Ood };

struct TrainSchedule {
  std::size_t max_episodes = 5000;
  std::size_t batch_size = 16;
  num::AdamConfig adam{};
  std::size_t eval_every = 500;  // episodes
  std::size_t eval_size = 200;   // instances per split
  double theta = 0.95;
  std::size_t window = 3;
  CriterionSplit criterion_split = CriterionSplit::Train;
  /// Stop once the criterion is met (all numbers mastered when staged).
  bool early_stop = false;
  /// Counting only: n drawn from 1..stage, stage advancing on mastery.
  bool staged = false;
  std::uint64_t seed = 0;

  void validate() const;
};

void to_json(nlohmann::json& j, const TrainSchedule& s);
void from_json(const nlohmann::json& j, TrainSchedule& s);

struct EvalRow {
  std::size_t episode = 0;
  std::string split;  // "train", "ood", "n<k>" or "abort"
  double accuracy = 0.0;
  double loss = 0.0;
};

struct RunRecord {
  std::string architecture;
  std::uint64_t seed = 0;
  std::string config_hash;
  std::vector<EvalRow> rows;
  /// First eval of the first sustained run at or above theta on the criterion split.
  std::optional<std::size_t> episodes_to_criterion;
  std::size_t episodes_trained = 0;
  std::size_t final_stage = 0;
  bool aborted = false;
  std::string abort_reason;
  double wall_seconds = 0.0;
  ParamSet params;

  /// Accuracy of the last eval row on a split, if any.
  std::optional<double> final_accuracy(const std::string& split) const;
};

/// Episode of the first eval starting a run of `window` evals at or above
/// theta on `split`.
std::optional<std::size_t> first_sustained(std::span<const EvalRow> rows, const std::string& split, double theta,
                                           std::size_t window);

/// {"name": {"shape": [...], "values": [...]}, ...}
nlohmann::json params_to_json(const ParamSet& params);
ParamSet params_from_json(const nlohmann::json& j);

RunRecord train(const ModelConfig& model, const TaskWorld& world, const TrainSchedule& schedule,
                std::uint64_t seed);

// Evaluation -----------------------------------------------------------------

struct Prediction {
  Tensor logits;                       // 1 x classes, or N x N teacher-forced pointer logits
  std::vector<std::size_t> selection;  // pointer decisions
};
using Predictor = std::function<Prediction(const TaskInstance&)>;

struct EvalResult {
  double accuracy = 0.0;
  double loss = 0.0;
  std::size_t count = 0;
};

/// Argmax with ties to the lowest index; exact match for permutations.
EvalResult evaluate(const Predictor& predictor, std::span<const TaskInstance> dataset);
Predictor model_predictor(const ModelConfig& model, const ParamSet& params);

/// Model config with task-derived fields (input width, classes, capacity, output mode) filled in.
ModelConfig fit_to_task(ModelConfig model, const TaskWorld& world);

// Comparisons ----------------------------------------------------------------

struct Cell {
  std::string label;
  ModelConfig model;
};

struct Assertion {
  std::string kind;  // final_ood_min, final_ood_max, ratio_min, mastery_ratio_less
  std::string cell;
  std::string other;
  double value = 0.0;
};

struct ExperimentConfig {
  std::string name = "experiment";
  TaskConfig task{};
  TrainSchedule schedule{};
  std::vector<Cell> cells;
  std::size_t seeds = 3;
  std::uint64_t seed = 0;  // run seeds are seed, seed+1, ...
  bool match_parameters = true;
  std::vector<Assertion> assertions;

  void validate() const;
};

/// Reads a single JSON document; unknown keys raise ConfigError.
ExperimentConfig parse_experiment(const nlohmann::json& j);
nlohmann::json experiment_to_json(const ExperimentConfig& e);

/// FNV-1a of the canonical JSON, hex.
std::string config_hash(const nlohmann::json& canonical);

struct CellSummary {
  std::string label;
  std::size_t parameters = 0;
  std::size_t runs = 0;
  std::size_t aborted = 0;
  /// Median episodes to criterion; unreached runs count at the budget.
  double median_episodes = 0.0;
  std::size_t censored = 0;
  std::optional<double> median_final_ood;
  std::optional<double> median_final_train;
};

struct RatioRow {
  std::string baseline;
  std::string bottleneck;
  double ratio = 0.0;
  /// Censored baseline runs make the ratio a lower bound.
  bool lower_bound = false;
};

struct ComparisonReport {
  std::string name;
  std::string config_hash;
  std::vector<RunRecord> runs;
  std::vector<CellSummary> cells;
  std::vector<RatioRow> ratios;
  std::vector<std::string> failures;  // assertion failures

  const CellSummary* cell(const std::string& label) const;
  std::optional<double> ratio(const std::string& baseline, const std::string& bottleneck) const;
};

ComparisonReport compare(const ExperimentConfig& experiment);
/// Recomputes summaries, ratios and assertion failures from `runs`.
void summarize(ComparisonReport& report, const ExperimentConfig& experiment);

// Counting mastery -----------------------------------------------------------

struct MasteryCurve {
  /// Index n-1: episode of first sustained mastery of sets of size n.
  std::vector<std::optional<std::size_t>> episodes;

  /// (sum of increments for n=6..10) / (sum for n=1..5) with increments
  /// m[n] - m[n-1], m[0] = 0. Absent when any of n=1..5 is unmastered;
  /// unmastered larger numbers are censored at `budget`.
  std::optional<double> late_early_ratio(std::size_t budget) const;
  bool late_censored() const;
};

MasteryCurve mastery_curve(std::span<const EvalRow> rows, std::size_t max_count, double theta, std::size_t window);

// Probes ---------------------------------------------------------------------

/// Mean pairwise cosine of the ESBN retrieval at `step` across episodes.
double symbol_consistency_probe(const ModelConfig& model, const ParamSet& params,
                                std::span<const TaskInstance> episodes, std::size_t step = 2);

/// Identity-rule episodes of one rule (ABA when `aba`) from one vocabulary side.
std::vector<TaskInstance> rule_episodes(const TaskWorld& world, task::Side side, std::size_t count,
                                        std::uint64_t seed, bool aba = true);

struct IsolationResult {
  std::string architecture;
  std::vector<double> deviations;
  double max_deviation = 0.0;
  std::size_t above_threshold = 0;  // draws with deviation > 1e-3
};

/// Isolation probe over `draws` random orthogonal rotations at random init.
IsolationResult isolation_sweep(ModelConfig model, std::size_t draws, std::uint64_t seed,
                                std::size_t episode_length = 4);

// Reports --------------------------------------------------------------------

/// architecture,seed,episode,split,accuracy,loss sorted by the first four columns.
std::string runs_csv(std::span<const RunRecord> runs);
std::vector<RunRecord> parse_runs_csv(const std::string& text);
std::string summary_csv(const ComparisonReport& report);
/// Accuracy against episodes, one polyline per run, for one split.
std::string learning_curve_svg(std::span<const RunRecord> runs, const std::string& split);

/// Writes runs.csv, summary.csv and curves_<split>.svg into `dir`.
void export_report(const ComparisonReport& report, const std::string& dir);

}  // namespace rbw::harness
