#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <vector>

#include "rbw/num/ops.hpp"

// Relational primitives shared by the bottleneck architectures. Everything
// downstream of these functions sees object embeddings only through inner
// products between their projections.
namespace rbw::rel {

using num::Tensor;
using num::Var;

/// Raised when a symbol library has fewer vectors than there are objects.
class CapacityError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Query/key projections of one head. When `psi` is empty the pair is tied
/// and keys are the very same node as queries.
struct ProjectionPair {
  Var phi;
  std::optional<Var> psi;

  bool tied() const noexcept { return !psi.has_value(); }
};

struct Projected {
  Var queries;
  Var keys;
};

/// queries = emb * phi, keys = emb * psi (or the queries again when tied).
Projected project(Var embeddings, const ProjectionPair& projection);

struct RelationOptions {
  /// Multiplies every inner product; <= 0 selects 1/sqrt(d_k).
  double scale = 0.0;
  /// L2-normalize queries and keys before the inner product.
  bool normalize = false;
};

double resolve_scale(const RelationOptions& options, std::size_t key_dim);

/// R[i][j] = scale * <q_i, k_j>.
Var relation_matrix(Var queries, Var keys, const RelationOptions& options = {});

/// softmax_rows(R / temperature) * symbols[0..N). The output depends on the
/// objects only through R.
Var attend_symbols(Var relation, Var symbols, double temperature = 1.0);

/// One relation matrix per head; outputs of attend_symbols concatenated along columns.
struct MultiHeadResult {
  Var abstract_states;
  std::vector<Var> relations;
};
MultiHeadResult relational_cross_attention(Var embeddings, const std::vector<ProjectionPair>& heads,
                                           Var symbols, const RelationOptions& options,
                                           double temperature = 1.0);

/// Seeded Gaussian matrix orthogonalized by Householder QR, columns sign-fixed
/// so that R has a positive diagonal.
Tensor random_orthogonal(std::size_t dim, std::uint64_t seed);

/// max |Q^T Q - I|.
double orthogonality_defect(const Tensor& q);

/// max |R - R^T|.
double max_asymmetry(const Tensor& relation);

/// Forward pass that optionally rotates the encoder output by Q (row vectors
/// e -> e Q^T) and compensates the query/key projections (W -> Q W), returning logits.
using RotatableForward = std::function<Tensor(const Tensor* rotation)>;

/// Max absolute change in logits when embeddings are rotated by an orthogonal
/// Q with compensated projections. Throws std::invalid_argument when Q is not
/// orthogonal within 1e-10.
double isolation_probe(const RotatableForward& forward, const Tensor& rotation);

}  // namespace rbw::rel
