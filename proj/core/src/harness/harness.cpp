#include "rbw/harness/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include "rbw/num/rng.hpp"
#include "rbw/rel/relcore.hpp"

namespace rbw::harness {

using arch::Architecture;
using num::mix_seed;

namespace {

std::string split_n(std::size_t n) { return "n" + std::to_string(n); }

double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

double row_cross_entropy(std::span<const double> row, std::size_t target) {
  if (target >= row.size()) throw std::out_of_range("evaluate: target outside logits");
  const double mx = *std::max_element(row.begin(), row.end());
  double z = 0.0;
  for (double v : row) z += std::exp(v - mx);
  return mx + std::log(z) - row[target];
}

std::size_t argmax(std::span<const double> row) {
  return static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
}

void reject_unknown(const nlohmann::json& j, const std::set<std::string>& known, const char* what) {
  if (!j.is_object()) throw ConfigError(std::string(what) + " must be a JSON object");
  for (const auto& [key, _] : j.items())
    if (!known.count(key)) throw ConfigError(std::string("unknown ") + what + " key '" + key + "'");
}

}  // namespace

// Schedule -------------------------------------------------------------------

void TrainSchedule::validate() const {
  if (batch_size == 0) throw ConfigError("schedule: batch_size must be positive");
  if (eval_every == 0) throw ConfigError("schedule: eval_every must be positive");
  if (eval_size == 0) throw ConfigError("schedule: eval_size must be positive");
  if (!(theta > 0.5 && theta <= 1.0)) throw ConfigError("schedule: theta must lie in (0.5, 1]");
  if (window == 0) throw ConfigError("schedule: window must be at least 1");
  if (!(adam.lr >= 0.0)) throw ConfigError("schedule: lr must be non-negative");
}

void to_json(nlohmann::json& j, const TrainSchedule& s) {
  j = nlohmann::json{{"max_episodes", s.max_episodes},
                     {"batch_size", s.batch_size},
                     {"lr", s.adam.lr},
                     {"beta1", s.adam.beta1},
                     {"beta2", s.adam.beta2},
                     {"epsilon", s.adam.epsilon},
                     {"eval_every", s.eval_every},
                     {"eval_size", s.eval_size},
                     {"theta", s.theta},
                     {"window", s.window},
                     {"criterion_split", s.criterion_split == CriterionSplit::Ood ? "ood" : "train"},
                     {"early_stop", s.early_stop},
                     {"staged", s.staged},
                     {"seed", s.seed}};
}

void from_json(const nlohmann::json& j, TrainSchedule& s) {
  nlohmann::json defaults = s;
  std::set<std::string> known;
  for (const auto& [k, _] : defaults.items()) known.insert(k);
  reject_unknown(j, known, "schedule");
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  get("max_episodes", s.max_episodes);
  get("batch_size", s.batch_size);
  get("lr", s.adam.lr);
  get("beta1", s.adam.beta1);
  get("beta2", s.adam.beta2);
  get("epsilon", s.adam.epsilon);
  get("eval_every", s.eval_every);
  get("eval_size", s.eval_size);
  get("theta", s.theta);
  get("window", s.window);
  if (j.contains("criterion_split")) {
    const auto v = j.at("criterion_split").get<std::string>();
    if (v != "train" && v != "ood") throw ConfigError("schedule: criterion_split must be train or ood");
    s.criterion_split = v == "ood" ? CriterionSplit::Ood : CriterionSplit::Train;
  }
  get("early_stop", s.early_stop);
  get("staged", s.staged);
  get("seed", s.seed);
}

// Bookkeeping ----------------------------------------------------------------

std::optional<double> RunRecord::final_accuracy(const std::string& split) const {
  for (auto it = rows.rbegin(); it != rows.rend(); ++it)
    if (it->split == split) return it->accuracy;
  return std::nullopt;
}

std::optional<std::size_t> first_sustained(std::span<const EvalRow> rows, const std::string& split, double theta,
                                           std::size_t window) {
  std::size_t streak = 0, start = 0;
  for (const auto& r : rows) {
    if (r.split != split) continue;
    if (r.accuracy >= theta) {
      if (streak++ == 0) start = r.episode;
      if (streak >= window) return start;
    } else {
      streak = 0;
    }
  }
  return std::nullopt;
}

// Evaluation -----------------------------------------------------------------

EvalResult evaluate(const Predictor& predictor, std::span<const TaskInstance> dataset) {
  if (dataset.empty()) throw std::invalid_argument("evaluate: empty dataset");
  EvalResult r;
  double correct = 0.0, loss = 0.0;
  for (const auto& inst : dataset) {
    const Prediction p = predictor(inst);
    if (inst.kind == task::TaskKind::Sorting) {
      if (p.logits.rows() != inst.target.size()) throw num::DimensionError("evaluate: pointer logits do not match target length");
      double l = 0.0;
      for (std::size_t k = 0; k < inst.target.size(); ++k) l += row_cross_entropy(p.logits.row_span(k), inst.target[k]);
      loss += l / static_cast<double>(inst.target.size());
      correct += p.selection == inst.target ? 1.0 : 0.0;
    } else {
      const auto row = p.logits.row_span(0);
      loss += row_cross_entropy(row, inst.label);
      correct += argmax(row) == inst.label ? 1.0 : 0.0;
    }
  }
  r.count = dataset.size();
  r.accuracy = correct / static_cast<double>(r.count);
  r.loss = loss / static_cast<double>(r.count);
  return r;
}

Predictor model_predictor(const ModelConfig& model, const ParamSet& params) {
  return [model, &params](const TaskInstance& inst) {
    Prediction p;
    if (model.output == arch::OutputMode::Pointer) {
      arch::ForwardOptions forced;
      forced.teacher = &inst.target;
      p.logits = arch::forward_logits(model, params, inst.episode.features, forced);
      num::Tape tape;
      num::Bindings b(tape, params, false);
      p.selection = arch::forward(model, b, inst.episode.features).selection;
    } else {
      p.logits = arch::forward_logits(model, params, inst.episode.features);
    }
    return p;
  };
}

ModelConfig fit_to_task(ModelConfig model, const TaskWorld& world) {
  model.d_in = world.input_width();
  model.max_objects = world.max_length();
  if (world.config.kind == task::TaskKind::Sorting) {
    model.output = arch::OutputMode::Pointer;
    model.num_classes = 2;
  } else {
    model.output = arch::OutputMode::Classify;
    model.num_classes = world.num_classes();
  }
  return model;
}

nlohmann::json params_to_json(const ParamSet& params) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [name, t] : params) {
    j[name] = {{"shape", t.shape()}, {"values", std::vector<double>(t.values().begin(), t.values().end())}};
  }
  return j;
}

ParamSet params_from_json(const nlohmann::json& j) {
  ParamSet p;
  for (const auto& [name, t] : j.items()) {
    p.add(name, Tensor(t.at("shape").get<num::Shape>(), t.at("values").get<std::vector<double>>()));
  }
  return p;
}

// Training -------------------------------------------------------------------

RunRecord train(const ModelConfig& model_in, const TaskWorld& world, const TrainSchedule& schedule,
                std::uint64_t seed) {
  schedule.validate();
  ModelConfig model = model_in;
  model.seed = seed;
  model.validate();
  const auto started = std::chrono::steady_clock::now();
  const bool counting = world.config.kind == task::TaskKind::Counting;
  const bool pointer = model.output == arch::OutputMode::Pointer;
  const std::size_t max_count = world.config.max_count;

  RunRecord rec;
  rec.architecture = arch::to_string(model.arch);
  rec.seed = seed;
  rec.config_hash = config_hash({{"model", model}, {"task", world.config}, {"schedule", schedule}});
  rec.params = arch::init_params(model);
  auto adam = num::AdamState::init(rec.params, schedule.adam);

  // Fixed evaluation sets.
  std::vector<std::pair<std::string, std::vector<TaskInstance>>> evals;
  if (counting) {
    for (std::size_t n = 1; n <= max_count; ++n) {
      evals.emplace_back(split_n(n), task::gen_counting(world.vocab, world.side(task::Side::Train), schedule.eval_size,
                                                        max_count, mix_seed(seed, 2000 + n), max_count, n));
    }
  } else {
    evals.emplace_back("train", world.generate(task::Side::Train, schedule.eval_size, mix_seed(seed, 1001)));
    evals.emplace_back("ood", world.generate(task::Side::Ood, schedule.eval_size, mix_seed(seed, 1002)));
  }
  const std::string criterion_split = schedule.criterion_split == CriterionSplit::Ood ? "ood" : "train";
  std::size_t stage = schedule.staged ? 1 : max_count;

  auto all_mastered = [&] {
    for (std::size_t n = 1; n <= max_count; ++n)
      if (!first_sustained(rec.rows, split_n(n), schedule.theta, schedule.window)) return false;
    return true;
  };
  auto run_evals = [&](std::size_t episode) {
    const auto predictor = model_predictor(model, rec.params);
    for (std::size_t i = 0; i < evals.size(); ++i) {
      // Staged runs evaluate numbers up to the current stage only.
      if (counting && i + 1 > stage) break;
      const auto& [name, data] = evals[i];
      const auto r = evaluate(predictor, data);
      rec.rows.push_back({episode, name, r.accuracy, r.loss});
    }
    if (counting) {
      if (schedule.staged)
        while (stage < max_count && first_sustained(rec.rows, split_n(stage), schedule.theta, schedule.window)) ++stage;
      if (all_mastered() && !rec.episodes_to_criterion) {
        std::size_t last = 0;
        for (std::size_t n = 1; n <= max_count; ++n)
          last = std::max(last, *first_sustained(rec.rows, split_n(n), schedule.theta, schedule.window));
        rec.episodes_to_criterion = last;
      }
    } else if (!rec.episodes_to_criterion) {
      rec.episodes_to_criterion = first_sustained(rec.rows, criterion_split, schedule.theta, schedule.window);
    }
  };

  std::size_t episodes = 0;
  try {
    run_evals(0);
    const std::uint64_t stream = mix_seed(seed, 7);
    for (std::uint64_t batch = 0; episodes < schedule.max_episodes; ++batch) {
      if (schedule.early_stop && rec.episodes_to_criterion) break;
      const std::size_t count = std::min(schedule.batch_size, schedule.max_episodes - episodes);
      const auto data = world.generate(task::Side::Train, count, mix_seed(stream, batch), counting ? stage : 0);
      num::Tape tape;
      num::Bindings bind(tape, rec.params, true);
      std::vector<num::Var> logits;
      std::vector<std::size_t> targets;
      for (const auto& inst : data) {
        arch::ForwardOptions opt;
        if (pointer) opt.teacher = &inst.target;
        logits.push_back(arch::forward(model, bind, inst.episode.features, opt).logits);
        if (pointer) targets.insert(targets.end(), inst.target.begin(), inst.target.end());
        else targets.push_back(inst.label);
      }
      num::Var loss = num::cross_entropy(num::concat(logits, 0), targets);
      tape.backward(loss);
      num::adam_step(rec.params, bind.gradients(), adam);
      const std::size_t before = episodes;
      episodes += count;
      if (episodes / schedule.eval_every != before / schedule.eval_every || episodes == schedule.max_episodes) {
        run_evals(episodes);
      }
    }
  } catch (const num::NumericError& e) {
    rec.aborted = true;
    rec.abort_reason = e.what();
    rec.rows.push_back({episodes, "abort", 0.0, std::numeric_limits<double>::quiet_NaN()});
  }
  rec.episodes_trained = episodes;
  rec.final_stage = stage;
  rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return rec;
}

// Experiment config ----------------------------------------------------------

void ExperimentConfig::validate() const {
  if (cells.size() < 2) throw ConfigError("experiment: need at least 2 architectures");
  if (seeds < 3) throw ConfigError("experiment: need at least 3 seeds per architecture");
  std::set<std::string> labels;
  for (const auto& c : cells) {
    if (!labels.insert(c.label).second) throw ConfigError("experiment: duplicate cell label '" + c.label + "'");
  }
  for (const auto& a : assertions) {
    static const std::set<std::string> kinds = {"final_ood_min", "final_ood_max", "ratio_min", "mastery_ratio_less"};
    if (!kinds.count(a.kind)) throw ConfigError("experiment: unknown assertion kind '" + a.kind + "'");
    if (!labels.count(a.cell)) throw ConfigError("experiment: assertion names unknown cell '" + a.cell + "'");
    if ((a.kind == "ratio_min" || a.kind == "mastery_ratio_less") && !labels.count(a.other)) {
      throw ConfigError("experiment: assertion names unknown cell '" + a.other + "'");
    }
  }
  schedule.validate();
}

ExperimentConfig parse_experiment(const nlohmann::json& j) {
  reject_unknown(
      j, {"name", "seed", "seeds", "task", "schedule", "model", "cells", "match_parameters", "assert"}, "experiment");
  ExperimentConfig e;
  try {
    if (j.contains("name")) e.name = j.at("name").get<std::string>();
    if (j.contains("seed")) e.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("seeds")) e.seeds = j.at("seeds").get<std::size_t>();
    if (j.contains("task")) e.task = j.at("task").get<TaskConfig>();
    if (j.contains("schedule")) e.schedule = j.at("schedule").get<TrainSchedule>();
    if (j.contains("match_parameters")) e.match_parameters = j.at("match_parameters").get<bool>();
    ModelConfig base;
    if (j.contains("model")) arch::from_json(j.at("model"), base);
    if (!j.contains("cells") || !j.at("cells").is_array()) throw ConfigError("experiment: 'cells' must be an array");
    const auto world = TaskWorld::build(e.task);
    std::vector<ModelConfig> models;
    for (const auto& c : j.at("cells")) {
      Cell cell;
      ModelConfig m = base;
      if (c.is_string()) {
        m.arch = arch::parse_architecture(c.get<std::string>());
        cell.label = c.get<std::string>();
      } else {
        nlohmann::json overrides = c;
        if (!overrides.is_object() || !overrides.contains("architecture")) {
          throw ConfigError("experiment: each cell needs an architecture");
        }
        cell.label = overrides.value("label", overrides.at("architecture").get<std::string>());
        overrides.erase("label");
        arch::from_json(overrides, m);
      }
      cell.model = fit_to_task(m, world);
      cell.model.validate();
      models.push_back(cell.model);
      e.cells.push_back(std::move(cell));
    }
    if (e.match_parameters) {
      arch::match_parameter_counts(models);
      for (std::size_t i = 0; i < models.size(); ++i) e.cells[i].model = models[i];
    }
    if (j.contains("assert")) {
      for (const auto& a : j.at("assert")) {
        reject_unknown(a, {"kind", "cell", "other", "value"}, "assertion");
        e.assertions.push_back({a.at("kind").get<std::string>(), a.at("cell").get<std::string>(),
                                a.value("other", std::string()), a.value("value", 0.0)});
      }
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& ex) {
    throw ConfigError(std::string("experiment: ") + ex.what());
  }
  e.validate();
  return e;
}

nlohmann::json experiment_to_json(const ExperimentConfig& e) {
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& c : e.cells) {
    nlohmann::json m = c.model;
    m["label"] = c.label;
    cells.push_back(m);
  }
  nlohmann::json asserts = nlohmann::json::array();
  for (const auto& a : e.assertions) asserts.push_back({{"kind", a.kind}, {"cell", a.cell}, {"other", a.other}, {"value", a.value}});
  return {{"name", e.name},   {"seed", e.seed},       {"seeds", e.seeds},
          {"task", e.task},   {"schedule", e.schedule}, {"cells", cells},
          {"match_parameters", false}, {"assert", asserts}};
}

std::string config_hash(const nlohmann::json& canonical) {
  const std::string s = canonical.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// Comparisons ----------------------------------------------------------------

const CellSummary* ComparisonReport::cell(const std::string& label) const {
  for (const auto& c : cells)
    if (c.label == label) return &c;
  return nullptr;
}

std::optional<double> ComparisonReport::ratio(const std::string& baseline, const std::string& bottleneck) const {
  for (const auto& r : ratios)
    if (r.baseline == baseline && r.bottleneck == bottleneck) return r.ratio;
  return std::nullopt;
}

void summarize(ComparisonReport& report, const ExperimentConfig& e) {
  report.cells.clear();
  report.ratios.clear();
  report.failures.clear();
  const double budget = static_cast<double>(e.schedule.max_episodes);
  std::map<std::string, std::vector<const RunRecord*>> by_cell;
  for (const auto& r : report.runs) by_cell[r.architecture].push_back(&r);
  const bool counting = e.task.kind == task::TaskKind::Counting;

  std::map<std::string, std::optional<double>> mastery;
  std::map<std::string, bool> mastery_inconclusive;
  for (const auto& c : e.cells) {
    CellSummary s;
    s.label = c.label;
    s.parameters = arch::parameter_count(c.model);
    std::vector<double> ett, ood, trn, ratios;
    bool inconclusive = false;
    for (const auto* r : by_cell[c.label]) {
      ++s.runs;
      if (r->aborted) ++s.aborted;
      if (r->episodes_to_criterion) {
        ett.push_back(static_cast<double>(*r->episodes_to_criterion));
      } else {
        ett.push_back(budget);
        ++s.censored;
      }
      if (auto a = r->final_accuracy("ood")) ood.push_back(*a);
      if (auto a = r->final_accuracy("train")) trn.push_back(*a);
      if (counting) {
        auto curve = mastery_curve(r->rows, e.task.max_count, e.schedule.theta, e.schedule.window);
        if (auto q = curve.late_early_ratio(e.schedule.max_episodes)) ratios.push_back(*q);
        else inconclusive = true;
      }
    }
    s.median_episodes = median(ett);
    if (!ood.empty()) s.median_final_ood = median(ood);
    if (!trn.empty()) s.median_final_train = median(trn);
    if (counting && !ratios.empty() && !inconclusive) mastery[c.label] = median(ratios);
    mastery_inconclusive[c.label] = inconclusive;
    report.cells.push_back(s);
  }
  for (const auto& a : report.cells)
    for (const auto& b : report.cells) {
      if (&a == &b) continue;
      report.ratios.push_back({a.label, b.label, a.median_episodes / b.median_episodes, a.censored > 0});
    }
  for (const auto& as : e.assertions) {
    const auto* c = report.cell(as.cell);
    std::ostringstream msg;
    msg << as.kind << " " << as.cell << (as.other.empty() ? "" : " vs " + as.other) << ": ";
    bool ok = false;
    if (as.kind == "final_ood_min" || as.kind == "final_ood_max") {
      if (c && c->median_final_ood) {
        ok = as.kind == "final_ood_min" ? *c->median_final_ood >= as.value : *c->median_final_ood <= as.value;
        msg << "median " << *c->median_final_ood << " threshold " << as.value;
      } else {
        msg << "no OOD evaluations";
      }
    } else if (as.kind == "ratio_min") {
      const auto r = report.ratio(as.cell, as.other);
      ok = r && *r >= as.value;
      msg << "ratio " << (r ? *r : 0.0) << " threshold " << as.value;
    } else {
      const auto a = mastery[as.cell], b = mastery[as.other];
      if (mastery_inconclusive[as.cell] || mastery_inconclusive[as.other] || !a || !b) {
        msg << "inconclusive (numbers 1..5 not mastered in every run)";
      } else {
        ok = *a < *b;
        msg << *a << " vs " << *b;
      }
    }
    if (!ok) report.failures.push_back(msg.str());
  }
}

ComparisonReport compare(const ExperimentConfig& e) {
  e.validate();
  ComparisonReport report;
  report.name = e.name;
  report.config_hash = config_hash(experiment_to_json(e));
  const auto world = TaskWorld::build(e.task);
  for (const auto& cell : e.cells)
    for (std::size_t s = 0; s < e.seeds; ++s) {
      auto rec = train(cell.model, world, e.schedule, e.seed + s);
      rec.architecture = cell.label;
      report.runs.push_back(std::move(rec));
    }
  summarize(report, e);
  return report;
}

// Mastery --------------------------------------------------------------------

MasteryCurve mastery_curve(std::span<const EvalRow> rows, std::size_t max_count, double theta, std::size_t window) {
  MasteryCurve c;
  for (std::size_t n = 1; n <= max_count; ++n) c.episodes.push_back(first_sustained(rows, split_n(n), theta, window));
  return c;
}

std::optional<double> MasteryCurve::late_early_ratio(std::size_t budget) const {
  if (episodes.size() < 10) throw std::invalid_argument("late_early_ratio: needs numbers 1..10");
  for (std::size_t n = 0; n < 5; ++n)
    if (!episodes[n]) return std::nullopt;
  auto at = [&](std::size_t n) { return static_cast<double>(episodes[n - 1] ? *episodes[n - 1] : budget); };
  // Increments telescope: early = m5 - m0, late = m10 - m5, with m taken as a
  // running maximum so a number mastered before its predecessor adds nothing.
  double m = 0.0, early = 0.0, late = 0.0;
  for (std::size_t n = 1; n <= 10; ++n) {
    const double next = std::max(m, at(n));
    (n <= 5 ? early : late) += next - m;
    m = next;
  }
  if (early <= 0.0) return std::nullopt;
  return late / early;
}

bool MasteryCurve::late_censored() const {
  for (std::size_t n = 5; n < episodes.size() && n < 10; ++n)
    if (!episodes[n]) return true;
  return false;
}

// Probes ---------------------------------------------------------------------

double symbol_consistency_probe(const ModelConfig& model, const ParamSet& params,
                                std::span<const TaskInstance> episodes, std::size_t step) {
  if (model.arch != Architecture::Esbn) throw std::invalid_argument("symbol_consistency_probe: needs an ESBN model");
  if (episodes.size() < 2) throw std::invalid_argument("symbol_consistency_probe: needs at least 2 episodes");
  std::vector<Tensor> vecs;
  for (const auto& inst : episodes) {
    arch::ForwardTrace trace;
    arch::ForwardOptions opt;
    opt.trace = &trace;
    arch::forward_logits(model, params, inst.episode.features, opt);
    if (step >= trace.retrieved.size()) throw std::invalid_argument("symbol_consistency_probe: step beyond episode");
    vecs.push_back(trace.retrieved[step]);
  }
  auto norm = [](const Tensor& t) {
    double s = 0.0;
    for (double v : t.values()) s += v * v;
    return std::sqrt(s);
  };
  double total = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < vecs.size(); ++i)
    for (std::size_t j = i + 1; j < vecs.size(); ++j) {
      double dot = 0.0;
      for (std::size_t k = 0; k < vecs[i].size(); ++k) dot += vecs[i][k] * vecs[j][k];
      const double ni = norm(vecs[i]), nj = norm(vecs[j]);
      total += (ni == 0.0 || nj == 0.0) ? (ni == nj ? 1.0 : 0.0) : dot / (ni * nj);
      ++pairs;
    }
  return total / static_cast<double>(pairs);
}

std::vector<TaskInstance> rule_episodes(const TaskWorld& world, task::Side side, std::size_t count, std::uint64_t seed,
                                        bool aba) {
  std::vector<TaskInstance> out;
  for (std::uint64_t chunk = 0; out.size() < count; ++chunk) {
    for (auto& inst : task::gen_identity_rules(world.vocab, world.side(side), 2 * count, mix_seed(seed, chunk))) {
      const auto& ids = inst.episode.object_ids;
      if ((ids[2] == ids[0]) == aba && out.size() < count) out.push_back(std::move(inst));
    }
  }
  return out;
}

IsolationResult isolation_sweep(ModelConfig model, std::size_t draws, std::uint64_t seed, std::size_t episode_length) {
  IsolationResult res;
  res.architecture = arch::to_string(model.arch);
  for (std::size_t i = 0; i < draws; ++i) {
    model.seed = mix_seed(seed, i);
    const auto params = arch::init_params(model);
    num::Rng rng(mix_seed(seed, 1000 + i));
    Tensor x({episode_length, model.d_in});
    for (auto& v : x.values()) v = rng.normal();
    const auto q = rel::random_orthogonal(model.d, mix_seed(seed, 2000 + i));
    const double dev = rel::isolation_probe(
        [&](const Tensor* rot) {
          arch::ForwardOptions o;
          o.rotation = rot;
          return arch::forward_logits(model, params, x, o);
        },
        q);
    res.deviations.push_back(dev);
    res.max_deviation = std::max(res.max_deviation, dev);
    if (dev > 1e-3) ++res.above_threshold;
  }
  return res;
}

// Reports --------------------------------------------------------------------

std::string runs_csv(std::span<const RunRecord> runs) {
  struct Line {
    std::string arch;
    std::uint64_t seed;
    EvalRow row;
  };
  std::vector<Line> lines;
  for (const auto& r : runs)
    for (const auto& row : r.rows) lines.push_back({r.architecture, r.seed, row});
  std::stable_sort(lines.begin(), lines.end(), [](const Line& a, const Line& b) {
    return std::tie(a.arch, a.seed, a.row.episode, a.row.split) < std::tie(b.arch, b.seed, b.row.episode, b.row.split);
  });
  std::string out = "architecture,seed,episode,split,accuracy,loss\n";
  char buf[64];
  for (const auto& l : lines) {
    out += l.arch;
    std::snprintf(buf, sizeof buf, ",%llu,%zu,", static_cast<unsigned long long>(l.seed), l.row.episode);
    out += buf;
    out += l.row.split;
    std::snprintf(buf, sizeof buf, ",%.6f,%.6f\n", l.row.accuracy, l.row.loss);
    out += buf;
  }
  return out;
}

std::vector<RunRecord> parse_runs_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "architecture,seed,episode,split,accuracy,loss") {
    throw std::invalid_argument("runs csv: missing or wrong header");
  }
  std::vector<RunRecord> runs;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) f.push_back(cell);
    if (f.size() != 6) throw std::invalid_argument("runs csv: line " + std::to_string(lineno) + " has " + std::to_string(f.size()) + " fields");
    try {
      const auto seed = std::stoull(f[1]);
      if (runs.empty() || runs.back().architecture != f[0] || runs.back().seed != seed) {
        runs.emplace_back();
        runs.back().architecture = f[0];
        runs.back().seed = seed;
      }
      runs.back().rows.push_back({std::stoull(f[2]), f[3], std::stod(f[4]), std::stod(f[5])});
    } catch (const std::logic_error&) {
      throw std::invalid_argument("runs csv: bad number on line " + std::to_string(lineno));
    }
  }
  return runs;
}

std::string summary_csv(const ComparisonReport& report) {
  std::ostringstream os;
  auto opt = [](const std::optional<double>& v) {
    char buf[32];
    if (!v) return std::string();
    std::snprintf(buf, sizeof buf, "%.6f", *v);
    return std::string(buf);
  };
  os << "cell,parameters,runs,aborted,median_episodes_to_criterion,censored,median_final_ood,median_final_train\n";
  for (const auto& c : report.cells) {
    os << c.label << ',' << c.parameters << ',' << c.runs << ',' << c.aborted << ',' << opt(c.median_episodes) << ','
       << c.censored << ',' << opt(c.median_final_ood) << ',' << opt(c.median_final_train) << '\n';
  }
  os << "\nbaseline,bottleneck,ratio,lower_bound\n";
  for (const auto& r : report.ratios)
    os << r.baseline << ',' << r.bottleneck << ',' << opt(r.ratio) << ',' << (r.lower_bound ? "yes" : "no") << '\n';
  return os.str();
}

namespace {

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

std::string learning_curve_svg(std::span<const RunRecord> runs, const std::string& split) {
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};
  const double w = 640, h = 400, left = 60, right = 150, top = 30, bottom = 50;
  std::size_t max_ep = 1;
  for (const auto& r : runs)
    for (const auto& row : r.rows)
      if (row.split == split) max_ep = std::max(max_ep, row.episode);
  std::map<std::string, std::size_t> colour;
  for (const auto& r : runs) colour.emplace(r.architecture, colour.size());

  std::ostringstream os;
  char buf[128];
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\">\n";
  os << "<rect x=\"0\" y=\"0\" width=\"" << w << "\" height=\"" << h << "\" fill=\"white\"/>\n";
  const double x0 = left, x1 = w - right, y0 = h - bottom, y1 = top;
  os << "<line x1=\"" << x0 << "\" y1=\"" << y0 << "\" x2=\"" << x1 << "\" y2=\"" << y0 << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << x0 << "\" y1=\"" << y0 << "\" x2=\"" << x0 << "\" y2=\"" << y1 << "\" stroke=\"black\"/>\n";
  os << "<text x=\"" << (x0 + x1) / 2 << "\" y=\"" << h - 12 << "\" text-anchor=\"middle\">episodes</text>\n";
  os << "<text x=\"16\" y=\"" << (y0 + y1) / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " << (y0 + y1) / 2
     << ")\">accuracy (" << xml_escape(split) << ")</text>\n";
  for (int t = 0; t <= 4; ++t) {
    const double acc = t / 4.0, y = y0 - acc * (y0 - y1);
    std::snprintf(buf, sizeof buf, "%.2f", acc);
    os << "<text x=\"" << x0 - 6 << "\" y=\"" << y + 4 << "\" text-anchor=\"end\" font-size=\"10\">" << buf << "</text>\n";
    const double ep = static_cast<double>(max_ep) * t / 4.0, x = x0 + (x1 - x0) * t / 4.0;
    std::snprintf(buf, sizeof buf, "%.0f", ep);
    os << "<text x=\"" << x << "\" y=\"" << y0 + 16 << "\" text-anchor=\"middle\" font-size=\"10\">" << buf << "</text>\n";
  }
  for (const auto& r : runs) {
    std::string pts;
    for (const auto& row : r.rows) {
      if (row.split != split) continue;
      const double x = x0 + (x1 - x0) * static_cast<double>(row.episode) / static_cast<double>(max_ep);
      const double y = y0 - std::clamp(row.accuracy, 0.0, 1.0) * (y0 - y1);
      std::snprintf(buf, sizeof buf, "%.1f,%.1f ", x, y);
      pts += buf;
    }
    if (pts.empty()) continue;
    pts.pop_back();
    os << "<polyline fill=\"none\" stroke=\"" << palette[colour[r.architecture] % 8] << "\" stroke-width=\"1.5\" points=\""
       << pts << "\"/>\n";
  }
  double ly = top + 10;
  for (const auto& [name, idx] : colour) {
    os << "<text x=\"" << x1 + 12 << "\" y=\"" << ly << "\" fill=\"" << palette[idx % 8] << "\">" << xml_escape(name)
       << "</text>\n";
    ly += 18;
  }
  os << "</svg>\n";
  return os.str();
}

void export_report(const ComparisonReport& report, const std::string& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  auto write = [&](const std::string& name, const std::string& content) {
    const auto path = fs::path(dir) / name;
    std::ofstream out(path, std::ios::binary);
    out << content;
    if (!out) throw std::runtime_error("export_report: cannot write " + path.string());
  };
  write("runs.csv", runs_csv(report.runs));
  write("summary.csv", summary_csv(report));
  std::set<std::string> splits;
  for (const auto& r : report.runs)
    for (const auto& row : r.rows)
      if (row.split != "abort") splits.insert(row.split);
  for (const auto& s : splits) write("curves_" + s + ".svg", learning_curve_svg(report.runs, s));
}

}  // namespace rbw::harness
