#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

// Exact information quantities on finite tables. All logarithms are base 2.
namespace rbw::ib {

/// A channel passed to minimality_audit is not sufficient.
class ContractError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline constexpr double kTolerance = 1e-12;

/// p(x, y) as an |X| x |Y| table.
struct DiscreteJoint {
  std::vector<std::string> x_labels;
  std::vector<std::string> y_labels;
  std::vector<std::vector<double>> p;

  /// Throws std::invalid_argument on negative entries, ragged rows or a
  /// total mass off 1 by more than 1e-12.
  void validate() const;
  std::vector<double> px() const;
  std::vector<double> py() const;
};

/// p(z | x), one row per x.
struct EncoderChannel {
  std::string name;
  std::vector<std::string> x_labels;
  std::vector<std::string> z_labels;
  std::vector<std::vector<double>> p;

  void validate() const;
  bool deterministic() const;
  /// Index of the z each x maps to; throws if the channel is stochastic.
  std::vector<std::size_t> assignment() const;

  static EncoderChannel from_assignment(std::string name, std::vector<std::string> x_labels,
                                        std::span<const std::size_t> z_of_x,
                                        std::vector<std::string> z_labels = {});
};

EncoderChannel identity_channel(const std::vector<std::string>& x_labels);
EncoderChannel constant_channel(const std::vector<std::string>& x_labels);

double entropy(std::span<const double> p);
double mutual_information(const DiscreteJoint& joint);

struct Composed {
  DiscreteJoint xz;
  DiscreteJoint zy;
};
/// Markov composition X -> Z -> Y.
Composed compose(const DiscreteJoint& joint, const EncoderChannel& enc);

struct IBConfig {
  double beta = 1.0;
};

/// I(X;Z) - beta * I(Z;Y).
double ib_objective(const DiscreteJoint& joint, const EncoderChannel& enc, const IBConfig& cfg);

/// I(X;Y) - I(Z;Y), clamped to 0 inside the tolerance; a larger negative
/// value violates data processing and throws std::logic_error.
double sufficiency_gap(const DiscreteJoint& joint, const EncoderChannel& enc);

using Tuple = std::vector<std::size_t>;

/// A finite-valued relation r(a, b) over symbols 0..k-1.
struct RelationTable {
  std::vector<std::string> value_names;
  std::vector<std::vector<std::size_t>> value;  // value[a][b] indexes value_names

  std::size_t alphabet() const { return value.size(); }
};

/// Equality on k symbols: "same" on the diagonal, "diff" elsewhere.
RelationTable equality_relation(std::size_t k);
/// Symmetric, with "same" reflexive and transitive.
bool is_equality_like(const RelationTable& r);

struct RelationalCode {
  RelationTable relation;
  std::size_t arity = 3;  // tuple length N; output has N(N-1) entries
};

/// Deterministic channel sending each tuple to (r(x_i, x_j)) over ordered
/// pairs i != j. Z labels are the realized relation tuples, sorted.
EncoderChannel relational_encode(std::span<const Tuple> world, const RelationalCode& code);

/// Indices of the channels attaining minimal I(X;Z), ties included.
std::vector<std::size_t> minimality_audit(const DiscreteJoint& joint, std::span<const EncoderChannel> encoders);

/// True when two deterministic channels induce the same partition of X.
bool same_partition(const EncoderChannel& a, const EncoderChannel& b);

// Micro-worlds -------------------------------------------------------------

std::vector<Tuple> all_tuples(std::size_t k, std::size_t n);
/// "abc"-style label.
std::string tuple_label(const Tuple& t);
/// Canonical equality pattern, e.g. (c, a, c) -> "ABA".
std::string equality_pattern(const Tuple& t);

/// Uniform over the given tuples with Y = label(tuple).
DiscreteJoint uniform_world(std::span<const Tuple> tuples, const std::function<std::string(const Tuple&)>& label);

/// The k-symbol, length-3 tuples following ABA or ABB, labelled by rule.
std::vector<Tuple> aba_abb_tuples(std::size_t k);

/// Every deterministic channel with at most `max_z` outputs (one per
/// partition of X) that is sufficient for Y.
std::vector<EncoderChannel> sufficient_deterministic_channels(const DiscreteJoint& joint, std::size_t max_z);

// Report --------------------------------------------------------------------

struct ChannelRow {
  std::string id;
  double i_xz = 0.0;
  double i_zy = 0.0;
  double objective = 0.0;
};

struct VerifyReport {
  std::size_t k = 4;
  std::size_t n = 3;
  double beta = 1.0;
  std::size_t full_world_patterns = 0;
  double relational_gap = 0.0;
  double i_x_r = 0.0;
  double i_x_x = 0.0;
  std::size_t sufficient_channels = 0;
  std::size_t winners = 0;
  bool relational_among_winners = false;
  std::vector<ChannelRow> rows;

  bool passed() const;
  std::string text() const;
  std::string csv() const;
};

/// Audit of the equality code on the ABA/ABB world of k symbols (length 3).
VerifyReport verify_relational_code(std::size_t k, double beta);

}  // namespace rbw::ib
