#include "rbw/rel/relcore.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "rbw/num/rng.hpp"

namespace rbw::rel {

using num::DimensionError;
using num::to_string;

Projected project(Var embeddings, const ProjectionPair& projection) {
  if (embeddings.cols() != projection.phi.rows()) {
    throw DimensionError("project: embeddings " + to_string(embeddings.shape()) +
                         " do not match projection " + to_string(projection.phi.shape()));
  }
  Var q = num::matmul(embeddings, projection.phi);
  if (projection.tied()) return {q, q};
  if (projection.psi->shape() != projection.phi.shape()) {
    throw DimensionError("project: untied projections differ, " + to_string(projection.phi.shape()) +
                         " vs " + to_string(projection.psi->shape()));
  }
  return {q, num::matmul(embeddings, *projection.psi)};
}

double resolve_scale(const RelationOptions& options, std::size_t key_dim) {
  return options.scale > 0.0 ? options.scale : 1.0 / std::sqrt(static_cast<double>(key_dim));
}

Var relation_matrix(Var queries, Var keys, const RelationOptions& options) {
  if (queries.cols() != keys.cols()) {
    throw DimensionError("relation_matrix: queries " + to_string(queries.shape()) + " and keys " +
                         to_string(keys.shape()) + " differ in d_k");
  }
  const double s = resolve_scale(options, queries.cols());
  const bool tied = queries.id() == keys.id();
  if (options.normalize) {
    queries = num::l2_normalize_rows(queries);
    keys = tied ? queries : num::l2_normalize_rows(keys);
  }
  Var r = num::matmul(queries, num::transpose(keys));
  return s == 1.0 ? r : num::scale(r, s);
}

Var attend_symbols(Var relation, Var symbols, double temperature) {
  const std::size_t n = relation.rows();
  if (relation.cols() != n) {
    throw DimensionError("attend_symbols: relation matrix must be square, got " +
                         to_string(relation.shape()));
  }
  if (symbols.rows() < n) {
    throw CapacityError("attend_symbols: " + std::to_string(n) + " objects exceed symbol capacity " +
                        std::to_string(symbols.rows()));
  }
  Var weights = num::softmax(relation, 1, temperature);
  Var bound = symbols.rows() == n ? symbols : num::slice(symbols, 0, 0, n);
  return num::matmul(weights, bound);
}

MultiHeadResult relational_cross_attention(Var embeddings, const std::vector<ProjectionPair>& heads,
                                           Var symbols, const RelationOptions& options,
                                           double temperature) {
  if (heads.empty()) throw std::invalid_argument("relational_cross_attention: no heads");
  MultiHeadResult out;
  std::vector<Var> per_head;
  for (const auto& head : heads) {
    auto [q, k] = project(embeddings, head);
    Var r = relation_matrix(q, k, options);
    out.relations.push_back(r);
    per_head.push_back(attend_symbols(r, symbols, temperature));
  }
  out.abstract_states = per_head.size() == 1 ? per_head[0] : num::concat(per_head, 1);
  return out;
}

Tensor random_orthogonal(std::size_t dim, std::uint64_t seed) {
  if (dim == 0) throw std::invalid_argument("random_orthogonal: dim must be >= 1");
  num::Rng rng(seed);
  Tensor a({dim, dim});
  for (auto& v : a.values()) v = rng.normal();

  // Householder QR: accumulate Q = H_0 H_1 ... H_{n-1}.
  Tensor q = Tensor::identity(dim);
  std::vector<double> v(dim);
  std::vector<double> rdiag(dim, 0.0);
  for (std::size_t k = 0; k < dim; ++k) {
    double norm = 0.0;
    for (std::size_t i = k; i < dim; ++i) norm += a(i, k) * a(i, k);
    norm = std::sqrt(norm);
    const double alpha = a(k, k) > 0 ? -norm : norm;
    std::fill(v.begin(), v.end(), 0.0);
    for (std::size_t i = k; i < dim; ++i) v[i] = a(i, k);
    v[k] -= alpha;
    double vnorm2 = 0.0;
    for (std::size_t i = k; i < dim; ++i) vnorm2 += v[i] * v[i];
    rdiag[k] = alpha;
    if (vnorm2 == 0.0) continue;
    // A <- H A
    for (std::size_t j = k; j < dim; ++j) {
      double d = 0.0;
      for (std::size_t i = k; i < dim; ++i) d += v[i] * a(i, j);
      const double f = 2.0 * d / vnorm2;
      for (std::size_t i = k; i < dim; ++i) a(i, j) -= f * v[i];
    }
    // Q <- Q H
    for (std::size_t r = 0; r < dim; ++r) {
      double d = 0.0;
      for (std::size_t i = k; i < dim; ++i) d += q(r, i) * v[i];
      const double f = 2.0 * d / vnorm2;
      for (std::size_t i = k; i < dim; ++i) q(r, i) -= f * v[i];
    }
    rdiag[k] = a(k, k);
  }
  for (std::size_t k = 0; k < dim; ++k) {
    if (rdiag[k] < 0.0)
      for (std::size_t r = 0; r < dim; ++r) q(r, k) = -q(r, k);
  }
  return q;
}

double orthogonality_defect(const Tensor& q) {
  const std::size_t n = q.rows();
  if (q.cols() != n) throw DimensionError("orthogonality_defect: Q must be square, got " + to_string(q.shape()));
  double worst = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double d = 0.0;
      for (std::size_t k = 0; k < n; ++k) d += q(k, i) * q(k, j);
      worst = std::max(worst, std::abs(d - (i == j ? 1.0 : 0.0)));
    }
  return worst;
}

double max_asymmetry(const Tensor& relation) {
  const std::size_t n = relation.rows();
  if (relation.cols() != n) throw DimensionError("max_asymmetry: relation must be square");
  double worst = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      worst = std::max(worst, std::abs(relation(i, j) - relation(j, i)));
  return worst;
}

double isolation_probe(const RotatableForward& forward, const Tensor& rotation) {
  if (orthogonality_defect(rotation) > 1e-10) {
    throw std::invalid_argument("isolation_probe: rotation is not orthogonal (defect " +
                                std::to_string(orthogonality_defect(rotation)) + ")");
  }
  const Tensor base = forward(nullptr);
  const Tensor rotated = forward(&rotation);
  return num::max_abs_diff(base, rotated);
}

}  // namespace rbw::rel
