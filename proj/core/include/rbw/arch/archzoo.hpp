#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "rbw/num/params.hpp"
#include "rbw/rel/relcore.hpp"

// The six end-to-end architectures. All share the two-layer encoder and the
// output-head convention; three of them route object embeddings only through
// relation matrices.
namespace rbw::arch {

using num::Bindings;
using num::ParamSet;
using num::Shape;
using num::Tensor;
using num::Var;

enum class Architecture { Esbn, CoRelNet, Abstractor, Transformer, Recurrent, RelationNet };
enum class OutputMode { Classify, Pointer };
enum class Readout { Slots, Pool };

std::string to_string(Architecture a);
Architecture parse_architecture(const std::string& s);
bool is_bottleneck(Architecture a);
/// The matched baseline for a bottleneck model and vice versa.
Architecture counterpart(Architecture a);

struct ModelConfig {
  Architecture arch = Architecture::CoRelNet;
  std::size_t d_in = 32;
  std::size_t d = 64;        // embedding width
  std::size_t d_k = 32;      // query/key width, split across heads
  std::size_t d_s = 64;      // symbol width
  std::size_t hidden = 64;   // recurrent controller / baseline cell
  std::size_t heads = 1;
  std::size_t layers = 1;
  std::size_t ff_width = 128;
  std::size_t decoder_width = 0;  // 0: linear head
  std::size_t max_objects = 8;    // symbol capacity, readout padding
  std::size_t num_classes = 2;
  OutputMode output = OutputMode::Classify;
  Readout readout = Readout::Slots;
  bool tied = false;               // abstractor projections
  bool identity_projection = false;  // corelnet: R from raw embeddings
  double temperature = 1.0;
  rel::RelationOptions relation{};
  bool esbn_gate = false;
  bool esbn_time_embedding = false;
  std::uint64_t seed = 0;

  void validate() const;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
/// Starts from the values already in `c`; unknown keys are rejected.
void from_json(const nlohmann::json& j, ModelConfig& c);

/// Every parameter tensor the architecture owns, in name order.
std::vector<std::pair<std::string, Shape>> param_shapes(const ModelConfig& config);
std::size_t parameter_count(const ModelConfig& config);

/// Gaussian weights with std 1/sqrt(fan_in), zero biases, unit norm gains,
/// unit-variance symbols. Each tensor draws from a stream keyed by its name.
ParamSet init_params(const ModelConfig& config);

/// Widens the decoder of the smaller model in each bottleneck/baseline pair
/// present until the counts agree within `tolerance`.
void match_parameter_counts(std::vector<ModelConfig>& configs, double tolerance = 0.10);

/// Intermediate values, filled only when a trace is requested.
struct ForwardTrace {
  std::vector<Tensor> relations;          // per layer and head
  std::vector<Tensor> attention;          // softmax weights
  std::vector<Tensor> retrieval_weights;  // esbn, one row per step
  std::vector<Tensor> retrieved;          // esbn v_ret per step
  std::vector<double> gates;              // esbn confidence per step
  std::vector<Tensor> embeddings;
};

struct ForwardOptions {
  /// Orthogonal Q: embeddings e -> e Q^T, query/key projections W -> Q W.
  const Tensor* rotation = nullptr;
  /// Pointer targets for teacher forcing; greedy decoding when absent.
  const std::vector<std::size_t>* teacher = nullptr;
  ForwardTrace* trace = nullptr;
};

struct ForwardResult {
  /// 1 x classes, or N x N pointer logits with already-chosen slots masked.
  Var logits;
  /// Pointer mode: chosen slot per step (teacher forced or greedy).
  std::vector<std::size_t> selection;
};

/// Two-layer perceptron applied row-wise.
Var encode(const Bindings& p, Var x);

ForwardResult forward(const ModelConfig& config, const Bindings& params, const Tensor& features,
                      const ForwardOptions& options = {});

/// Logits of a forward pass with fresh frozen bindings; convenient for probes.
Tensor forward_logits(const ModelConfig& config, const ParamSet& params, const Tensor& features,
                      const ForwardOptions& options = {});

}  // namespace rbw::arch
