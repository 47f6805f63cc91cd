#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "rbw/arch/archzoo.hpp"
#include "rbw/harness/harness.hpp"
#include "rbw/ib/ibcalc.hpp"
#include "rbw/rel/relcore.hpp"
#include "rbw/task/taskgen.hpp"

namespace {

using namespace rbw;
using nlohmann::json;

enum Exit { kOk = 0, kFailure = 1, kConfig = 2, kNumeric = 3, kAssert = 4 };

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw harness::ConfigError("cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  out << content;
  if (!out) throw std::runtime_error("cannot write " + path);
}

json read_json(const std::string& path) {
  try {
    return json::parse(slurp(path));
  } catch (const json::parse_error& e) {
    throw harness::ConfigError(path + ": " + e.what());
  }
}

harness::ExperimentConfig load_experiment(const std::string& path, const std::optional<std::uint64_t>& seed) {
  auto e = harness::parse_experiment(read_json(path));
  if (seed) e.seed = *seed;
  return e;
}

const harness::Cell& find_cell(const harness::ExperimentConfig& e, const std::string& label) {
  for (const auto& c : e.cells)
    if (c.label == label) return c;
  throw harness::ConfigError("no cell labelled '" + label + "'");
}

std::vector<task::TaskInstance> read_jsonl(const std::string& path) {
  std::istringstream in(slurp(path));
  std::vector<task::TaskInstance> out;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) out.push_back(task::instance_from_json(json::parse(line)));
  return out;
}

void print_summary(const harness::ComparisonReport& r) {
  std::printf("%-14s %10s %6s %8s %12s %8s %8s\n", "cell", "params", "runs", "aborted", "median_ett", "ood", "train");
  for (const auto& c : r.cells) {
    std::printf("%-14s %10zu %6zu %8zu %12.0f%s %8.3f %8.3f\n", c.label.c_str(), c.parameters, c.runs, c.aborted,
                c.median_episodes, c.censored ? "+" : " ", c.median_final_ood.value_or(NAN),
                c.median_final_train.value_or(NAN));
  }
  for (const auto& q : r.ratios)
    std::printf("ratio %s/%s = %.3f%s\n", q.baseline.c_str(), q.bottleneck.c_str(), q.ratio, q.lower_bound ? " (lower bound)" : "");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Relational bottleneck workbench"};
  app.require_subcommand(1);

  std::optional<std::uint64_t> seed;
  std::string config, cell, out, params_path, data_path, task_path, side = "train", runs_path, mode = "isolation",
                                                                  architecture = "corelnet";
  std::size_t count = 100, stage = 0, k = 4, draws = 10;
  double beta = 1.0;
  bool assert_mode = false;

  auto* gen = app.add_subcommand("gen", "Emit task instances as JSON lines");
  gen->add_option("--task", task_path, "Task config JSON (or an experiment config)")->required();
  gen->add_option("--side", side, "train or ood")->check(CLI::IsMember({"train", "ood"}));
  gen->add_option("--count", count);
  gen->add_option("--stage", stage, "Counting curriculum stage (0 = max_count)");
  gen->add_option("--seed", seed);
  gen->add_option("-o,--out", out, "Output file (default stdout)");

  auto* train = app.add_subcommand("train", "Train one cell of an experiment");
  train->add_option("--config", config)->required();
  train->add_option("--cell", cell)->required();
  train->add_option("--seed", seed);
  train->add_option("-o,--out", out, "Directory for runs.csv and params.json")->required();

  auto* eval = app.add_subcommand("eval", "Evaluate saved parameters on a dataset");
  eval->add_option("--config", config)->required();
  eval->add_option("--cell", cell)->required();
  eval->add_option("--params", params_path)->required();
  eval->add_option("--data", data_path, "JSON lines from `gen`")->required();

  auto* cmp = app.add_subcommand("compare", "Run every cell over all seeds");
  cmp->add_option("--config", config)->required();
  cmp->add_option("--seed", seed);
  cmp->add_option("-o,--out", out, "Report directory");
  cmp->add_flag("--assert", assert_mode, "Exit 4 when an assertion in the config fails");

  auto* ibv = app.add_subcommand("ib-verify", "Audit the equality code on the ABA/ABB world");
  ibv->add_option("--k", k);
  ibv->add_option("--beta", beta);
  ibv->add_option("-o,--out", out, "CSV output file");

  auto* probe = app.add_subcommand("probe", "Isolation or symbol-consistency probes");
  probe->add_option("--mode", mode)->check(CLI::IsMember({"isolation", "symbols"}));
  probe->add_option("--arch", architecture);
  probe->add_option("--draws", draws);
  probe->add_option("--config", config);
  probe->add_option("--cell", cell);
  probe->add_option("--params", params_path);
  probe->add_option("--count", count);
  probe->add_option("--seed", seed);

  auto* report = app.add_subcommand("report", "Re-render curves from a runs CSV");
  report->add_option("--runs", runs_path)->required();
  report->add_option("-o,--out", out)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      json j = read_json(task_path);
      if (j.contains("task") && j.contains("cells")) j = j.at("task");
      const auto world = task::TaskWorld::build(j.get<task::TaskConfig>());
      const auto data = world.generate(side == "ood" ? task::Side::Ood : task::Side::Train, count,
                                       seed.value_or(0), stage);
      std::string text;
      for (const auto& inst : data) text += task::instance_to_json(inst).dump() + "\n";
      if (out.empty()) std::cout << text;
      else spit(out, text);
      return kOk;
    }
    if (*train) {
      const auto e = load_experiment(config, seed);
      const auto& c = find_cell(e, cell);
      const auto world = task::TaskWorld::build(e.task);
      auto rec = harness::train(c.model, world, e.schedule, e.seed);
      rec.architecture = c.label;
      std::filesystem::create_directories(out);
      const std::vector<harness::RunRecord> runs{rec};
      spit(out + "/runs.csv", harness::runs_csv(runs));
      spit(out + "/params.json", harness::params_to_json(rec.params).dump());
      std::printf("%s seed %llu: %zu episodes, criterion %s, %.1fs\n", c.label.c_str(),
                  static_cast<unsigned long long>(rec.seed), rec.episodes_trained,
                  rec.episodes_to_criterion ? std::to_string(*rec.episodes_to_criterion).c_str() : "not reached",
                  rec.wall_seconds);
      if (rec.aborted) {
        std::fprintf(stderr, "aborted: %s\n", rec.abort_reason.c_str());
        return kNumeric;
      }
      return kOk;
    }
    if (*eval) {
      const auto e = load_experiment(config, seed);
      const auto& c = find_cell(e, cell);
      const auto params = harness::params_from_json(read_json(params_path));
      const auto data = read_jsonl(data_path);
      const auto r = harness::evaluate(harness::model_predictor(c.model, params), data);
      std::printf("accuracy %.6f loss %.6f count %zu\n", r.accuracy, r.loss, r.count);
      return kOk;
    }
    if (*cmp) {
      const auto e = load_experiment(config, seed);
      const auto r = harness::compare(e);
      if (!out.empty()) harness::export_report(r, out);
      print_summary(r);
      for (const auto& f : r.failures) std::printf("FAIL %s\n", f.c_str());
      if (assert_mode && !r.failures.empty()) return kAssert;
      for (const auto& run : r.runs)
        if (run.aborted) return kNumeric;
      return kOk;
    }
    if (*ibv) {
      const auto r = ib::verify_relational_code(k, beta);
      std::cout << r.text();
      if (!out.empty()) spit(out, r.csv());
      return r.passed() ? kOk : kFailure;
    }
    if (*probe) {
      if (mode == "isolation") {
        arch::ModelConfig m;
        m.arch = arch::parse_architecture(architecture);
        m.d_in = 16;
        m.max_objects = 4;
        const auto r = harness::isolation_sweep(m, draws, seed.value_or(0));
        std::printf("%s max deviation %.3e, %zu/%zu draws above 1e-3\n", r.architecture.c_str(), r.max_deviation,
                    r.above_threshold, r.deviations.size());
        return kOk;
      }
      const auto e = load_experiment(config, std::nullopt);
      const auto& c = find_cell(e, cell);
      const auto params = harness::params_from_json(read_json(params_path));
      const auto world = task::TaskWorld::build(e.task);
      const auto episodes = harness::rule_episodes(world, task::Side::Ood, count, seed.value_or(0));
      std::printf("mean cosine %.6f over %zu episodes\n",
                  harness::symbol_consistency_probe(c.model, params, episodes), episodes.size());
      return kOk;
    }
    if (*report) {
      const auto runs = harness::parse_runs_csv(slurp(runs_path));
      std::filesystem::create_directories(out);
      spit(out + "/runs.csv", harness::runs_csv(runs));
      std::set<std::string> splits;
      for (const auto& r : runs)
        for (const auto& row : r.rows)
          if (row.split != "abort") splits.insert(row.split);
      for (const auto& s : splits) spit(out + "/curves_" + s + ".svg", harness::learning_curve_svg(runs, s));
      return kOk;
    }
  } catch (const harness::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kConfig;
  } catch (const num::NumericError& e) {
    std::fprintf(stderr, "numeric error: %s\n", e.what());
    return kNumeric;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kConfig;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kFailure;
  }
  return kOk;
}
