// Acceptance suite: one PASS/FAIL line per criterion.
//
//   rbw_acceptance                 run every criterion
//   rbw_acceptance --criterion 4   run one

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rbw/arch/archzoo.hpp"
#include "rbw/harness/harness.hpp"
#include "rbw/ib/ibcalc.hpp"
#include "rbw/num/gradcheck.hpp"
#include "rbw/num/rng.hpp"
#include "rbw/rel/relcore.hpp"

#ifndef RBW_CONFIG_DIR
#define RBW_CONFIG_DIR "configs"
#endif

namespace {

using namespace rbw;
using arch::Architecture;
using num::Bindings;
using num::ParamSet;
using num::Tape;
using num::Tensor;
using num::Var;

std::string g_config_dir = RBW_CONFIG_DIR;

struct Outcome {
  bool pass = false;
  std::string detail;
};

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

harness::ExperimentConfig load(const std::string& name) {
  std::ifstream in(g_config_dir + "/" + name);
  if (!in) throw std::runtime_error("cannot open " + g_config_dir + "/" + name);
  return harness::parse_experiment(nlohmann::json::parse(in));
}

const harness::Cell& cell_of(const harness::ExperimentConfig& e, const std::string& label) {
  for (const auto& c : e.cells)
    if (c.label == label) return c;
  throw std::runtime_error("config lacks cell " + label);
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

Tensor gaussian(num::Shape shape, std::uint64_t seed, double scale = 1.0) {
  num::Rng rng(seed);
  Tensor t(std::move(shape));
  for (auto& v : t.values()) v = scale * rng.normal();
  return t;
}

// 1 ---------------------------------------------------------------------------

Outcome gradient_suite() {
  Stopwatch clock;
  using num::sum;
  using Builder = num::LossBuilder;
  const std::vector<std::pair<const char*, Builder>> ops = {
      {"matmul", [](Tape&, const Bindings& b) { return sum(num::tanh(num::matmul(b["a"], b["c"]))); }},
      {"add/sub/mul", [](Tape&, const Bindings& b) {
         return sum(num::mul(num::add(b["a"], b["a2"]), num::sub(b["a"], num::scale(b["a2"], 0.3))));
       }},
      {"add_row", [](Tape&, const Bindings& b) { return sum(num::tanh(num::add_row(b["a"], b["row"]))); }},
      {"mul_scalar", [](Tape&, const Bindings& b) { return sum(num::tanh(num::mul_scalar(b["a"], b["s"]))); }},
      {"tanh", [](Tape&, const Bindings& b) { return sum(num::mul(num::tanh(b["a"]), b["a2"])); }},
      {"sigmoid", [](Tape&, const Bindings& b) { return sum(num::mul(num::sigmoid(b["a"]), b["a2"])); }},
      {"relu", [](Tape&, const Bindings& b) { return sum(num::mul(num::relu(b["a"]), b["a2"])); }},
      {"softmax", [](Tape&, const Bindings& b) {
         return num::add(sum(num::mul(num::softmax(b["a"], 1, 0.7), b["a2"])),
                         sum(num::mul(num::softmax(b["a"], 0, 1.3), b["a2"])));
       }},
      {"layer_norm", [](Tape&, const Bindings& b) {
         return sum(num::mul(num::layer_norm(b["a"], b["row"], b["row2"]), b["a2"]));
       }},
      {"l2_normalize", [](Tape&, const Bindings& b) { return sum(num::mul(num::l2_normalize_rows(b["a"]), b["a2"])); }},
      {"concat/slice", [](Tape&, const Bindings& b) {
         auto c0 = num::concat({b["a"], b["a2"]}, 0);
         auto c1 = num::concat({b["a"], b["a2"]}, 1);
         return num::add(sum(num::tanh(num::slice(c0, 0, 1, 5))), sum(num::tanh(num::slice(c1, 1, 2, 7))));
       }},
      {"transpose/reshape", [](Tape&, const Bindings& b) {
         return sum(num::tanh(num::matmul(num::reshape(num::transpose(b["a"]), {3, 4}), b["c"])));
       }},
      {"sum_rows/mean", [](Tape&, const Bindings& b) { return num::mean(num::tanh(num::sum_rows(num::mul(b["a"], b["a2"])))); }},
      {"cross_entropy", [](Tape&, const Bindings& b) {
         const std::size_t tg[] = {1, 0, 3};
         return num::cross_entropy(b["a"], tg);
       }},
      {"relation_matrix", [](Tape&, const Bindings& b) {
         auto q = num::matmul(b["a"], b["c"]);
         return num::add(sum(num::tanh(rel::relation_matrix(q, num::matmul(b["a2"], b["c"])))),
                         sum(num::tanh(rel::relation_matrix(q, q, {.scale = 0.8, .normalize = true}))));
       }},
      {"relational_cross_attention", [](Tape&, const Bindings& b) {
         std::vector<rel::ProjectionPair> heads = {{b["c"], b["c2"]}, {b["c2"], std::nullopt}};
         auto out = rel::relational_cross_attention(b["a"], heads, b["sym"], {}, 0.8);
         return sum(num::tanh(out.abstract_states));
       }},
  };
  double worst = 0.0;
  std::string where;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    ParamSet p;
    p.add("a", gaussian({3, 4}, seed));
    p.add("a2", gaussian({3, 4}, seed + 50));
    p.add("c", gaussian({4, 2}, seed + 60));
    p.add("c2", gaussian({4, 2}, seed + 65));
    p.add("row", gaussian({1, 4}, seed + 70));
    p.add("row2", gaussian({1, 4}, seed + 80));
    p.add("s", gaussian({1, 1}, seed + 90));
    p.add("sym", gaussian({3, 2}, seed + 95));
    for (const auto& [name, builder] : ops) {
      const auto r = num::check_param_gradients(builder, p);
      if (r.max_relative_error > worst) worst = r.max_relative_error, where = name;
    }
  }
  const Architecture all[] = {Architecture::Esbn,        Architecture::CoRelNet,  Architecture::Abstractor,
                              Architecture::Transformer, Architecture::Recurrent, Architecture::RelationNet};
  for (auto a : all)
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      arch::ModelConfig c;
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
      c.esbn_gate = true;
      c.seed = seed;
      const auto x = gaussian({3, 5}, 100 + seed);
      const std::vector<std::size_t> target = {seed % 3};
      const auto r = num::check_param_gradients(
          [&](Tape&, const Bindings& b) { return num::cross_entropy(arch::forward(c, b, x).logits, target); },
          arch::init_params(c));
      if (r.max_relative_error > worst) worst = r.max_relative_error, where = arch::to_string(a);
    }
  const double t = clock.seconds();
  return {worst < 1e-4 && t < 120.0,
          "max relative error " + fmt("%.2e", worst) + " (" + where + "), " + fmt("%.1f", t) + "s"};
}

// 2 ---------------------------------------------------------------------------

Outcome isolation() {
  Stopwatch clock;
  bool ok = true;
  std::string detail;
  const Architecture all[] = {Architecture::Esbn,        Architecture::CoRelNet,  Architecture::Abstractor,
                              Architecture::Transformer, Architecture::RelationNet};
  for (auto a : all) {
    arch::ModelConfig c;
    c.arch = a;
    c.d_in = 32;
    c.max_objects = 8;
    c.heads = 2;
    const auto r = harness::isolation_sweep(c, 10, 2024);
    const bool bottleneck = arch::is_bottleneck(a);
    const bool pass = bottleneck ? r.max_deviation < 1e-6 : r.above_threshold >= 9;
    ok = ok && pass;
    detail += r.architecture + (bottleneck ? " max " + fmt("%.1e", r.max_deviation)
                                           : " " + std::to_string(r.above_threshold) + "/10 above 1e-3") + "; ";
  }
  const double t = clock.seconds();
  return {ok && t < 60.0, detail + fmt("%.1f", t) + "s"};
}

// 3, 4 ------------------------------------------------------------------------

Outcome assertions_of(const std::string& config, double limit_seconds, bool per_cell_limit) {
  Stopwatch clock;
  const auto e = load(config);
  const auto r = harness::compare(e);
  const double t = clock.seconds();
  std::string detail;
  for (const auto& c : r.cells) {
    detail += c.label + " ood " + (c.median_final_ood ? fmt("%.3f", *c.median_final_ood) : std::string("n/a")) +
              " ett " + fmt("%.0f", c.median_episodes) + (c.censored ? "+" : "") + "; ";
  }
  for (const auto& a : e.assertions)
    if (a.kind == "ratio_min") {
      const auto* row = &r.ratios.front();
      for (const auto& q : r.ratios)
        if (q.baseline == a.cell && q.bottleneck == a.other) row = &q;
      detail += "ratio " + a.cell + "/" + a.other + " " + fmt("%.2f", row->ratio) +
                (row->lower_bound ? " (lower bound)" : "") + "; ";
    }
  for (const auto& f : r.failures) detail += "failed: " + f + "; ";
  const double budget = per_cell_limit ? limit_seconds * static_cast<double>(e.cells.size()) : limit_seconds;
  bool aborted = false;
  for (const auto& run : r.runs) aborted = aborted || run.aborted;
  if (aborted) detail += "aborted runs present; ";
  return {r.failures.empty() && !aborted && t < budget, detail + fmt("%.0f", t) + "s"};
}

// 5 ---------------------------------------------------------------------------

Outcome ib_verification() {
  Stopwatch clock;
  const auto r = ib::verify_relational_code(4, 1.0);
  const double t = clock.seconds();
  const bool ok = std::abs(r.relational_gap) <= 1e-12 && r.i_x_r < r.i_x_x && r.relational_among_winners;
  return {ok && t < 60.0, "gap " + fmt("%.1e", r.relational_gap) + ", I(X;R) " + fmt("%.4f", r.i_x_r) + " < I(X;X) " +
                              fmt("%.4f", r.i_x_x) + ", relational code among " + std::to_string(r.winners) +
                              " minimal channels (" + std::to_string(r.sufficient_channels) + " sufficient enumerated), " +
                              fmt("%.1f", t) + "s"};
}

// 6 ---------------------------------------------------------------------------

Outcome counting() {
  Stopwatch clock;
  const auto e = load("counting.json");
  const auto r = harness::compare(e);
  const double t = clock.seconds();
  std::map<std::string, std::vector<double>> ratios;
  bool inconclusive = false;
  for (const auto& run : r.runs) {
    const auto curve = harness::mastery_curve(run.rows, e.task.max_count, e.schedule.theta, e.schedule.window);
    const auto q = curve.late_early_ratio(e.schedule.max_episodes);
    if (q) ratios[run.architecture].push_back(*q);
    else inconclusive = true;
  }
  if (inconclusive) return {false, "inconclusive: a run did not master 1..5 within the budget"};
  const double esbn = median(ratios["esbn"]), lstm = median(ratios["recurrent"]);
  return {esbn < lstm && t < 3600.0, "median late/early ratio esbn " + fmt("%.3f", esbn) + " vs recurrent " +
                                         fmt("%.3f", lstm) + ", " + fmt("%.0f", t) + "s"};
}

// 7 ---------------------------------------------------------------------------

Outcome symbols() {
  const auto e = load("identity_rules.json");
  const auto& c = cell_of(e, "esbn");
  const auto world = task::TaskWorld::build(e.task);
  const auto run = harness::train(c.model, world, e.schedule, e.seed);
  const auto episodes = harness::rule_episodes(world, task::Side::Ood, 100, 99);
  const double cosine = harness::symbol_consistency_probe(c.model, run.params, episodes);
  return {cosine >= 0.95, "mean cosine " + fmt("%.4f", cosine) + " over 100 OOD episodes after " +
                              std::to_string(run.episodes_trained) + " training episodes"};
}

// 8 ---------------------------------------------------------------------------

Outcome sorting() {
  const auto e = load("sorting.json");
  const auto& c = cell_of(e, "abstractor");
  const auto world = task::TaskWorld::build(e.task);
  std::vector<double> finals;
  ParamSet trained;
  for (std::size_t s = 0; s < e.seeds; ++s) {
    const auto run = harness::train(c.model, world, e.schedule, e.seed + s);
    finals.push_back(run.final_accuracy("ood").value_or(0.0));
    if (s == 0) trained = run.params;
  }
  const double acc = median(finals);

  auto max_asymmetry = [&](const arch::ModelConfig& m, const ParamSet& p) {
    double worst = 0.0;
    for (const auto& inst : world.generate(task::Side::Ood, 20, 5)) {
      arch::ForwardTrace trace;
      arch::ForwardOptions opt;
      opt.trace = &trace;
      arch::forward_logits(m, p, inst.episode.features, opt);
      for (const auto& r : trace.relations) worst = std::max(worst, rel::max_asymmetry(r));
    }
    return worst;
  };
  auto tied = c.model;
  tied.tied = true;
  const double tied_asym = max_asymmetry(tied, arch::init_params(tied));
  const double untied_asym = max_asymmetry(c.model, trained);
  return {acc >= 0.9 && tied_asym <= 1e-12 && untied_asym > 1e-3,
          "median OOD exact match " + fmt("%.3f", acc) + "; tied max|R-R^T| " + fmt("%.1e", tied_asym) +
              ", untied " + fmt("%.3f", untied_asym)};
}

// 9 ---------------------------------------------------------------------------

Outcome reproducibility() {
  const auto e = load("reproducibility.json");
  const auto dir = std::filesystem::temp_directory_path() / "rbw_acceptance_repro";
  std::filesystem::remove_all(dir);
  harness::export_report(harness::compare(e), (dir / "a").string());
  harness::export_report(harness::compare(e), (dir / "b").string());
  auto slurp = [](const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  bool same = true;
  std::size_t files = 0, bytes = 0;
  for (const auto& entry : std::filesystem::directory_iterator(dir / "a")) {
    if (entry.path().extension() != ".csv") continue;
    const auto a = slurp(entry.path()), b = slurp(dir / "b" / entry.path().filename());
    same = same && a == b && !a.empty();
    ++files;
    bytes += a.size();
  }
  std::filesystem::remove_all(dir);
  return {same && files >= 2, std::to_string(files) + " CSV files, " + std::to_string(bytes) + " bytes, " +
                                  (same ? "identical" : "different")};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::vector<int> only;
  app.add_option("--criterion", only, "Criterion number(s) to run")->check(CLI::Range(1, 9));
  app.add_option("--config-dir", g_config_dir, "Directory holding the experiment configs");
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"gradient suite", gradient_suite},
      {"bottleneck isolation", isolation},
      {"OOD same/different", [] { return assertions_of("same_different.json", 600.0, true); }},
      {"identity-rule data efficiency", [] { return assertions_of("identity_rules.json", 1800.0, false); }},
      {"relational code sufficiency and minimality", ib_verification},
      {"counting transition", counting},
      {"emergent symbols", symbols},
      {"asymmetric relations (sorting)", sorting},
      {"reproducibility", reproducibility},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& ex) {
      o = {false, std::string("error: ") + ex.what()};
    }
    std::printf("criterion %d %s: %s (%s)\n", id, o.pass ? "PASS" : "FAIL", criteria[i].first, o.detail.c_str());
    std::fflush(stdout);
    failures += o.pass ? 0 : 1;
  }
  return failures == 0 ? 0 : 1;
}
