#include "rbw/ib/ibcalc.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <numeric>
#include <sstream>

namespace rbw::ib {

namespace {

double plogp_ratio(double p, double q) { return p > 0.0 ? p * std::log2(p / q) : 0.0; }

void check_row(std::span<const double> row, const std::string& what) {
  for (double v : row)
    if (!(v >= 0.0) || !std::isfinite(v)) throw std::invalid_argument(what + ": negative or non-finite entry");
}

}  // namespace

void DiscreteJoint::validate() const {
  if (p.size() != x_labels.size() || p.empty()) throw std::invalid_argument("joint: row count does not match X labels");
  double total = 0.0;
  for (const auto& row : p) {
    if (row.size() != y_labels.size()) throw std::invalid_argument("joint: row width does not match Y labels");
    check_row(row, "joint");
    total += std::accumulate(row.begin(), row.end(), 0.0);
  }
  if (std::abs(total - 1.0) > kTolerance) {
    std::ostringstream os;
    os << "joint: table sums to " << std::setprecision(17) << total << ", not 1";
    throw std::invalid_argument(os.str());
  }
}

std::vector<double> DiscreteJoint::px() const {
  std::vector<double> out;
  for (const auto& row : p) out.push_back(std::accumulate(row.begin(), row.end(), 0.0));
  return out;
}

std::vector<double> DiscreteJoint::py() const {
  std::vector<double> out(y_labels.size(), 0.0);
  for (const auto& row : p)
    for (std::size_t y = 0; y < row.size(); ++y) out[y] += row[y];
  return out;
}

void EncoderChannel::validate() const {
  if (p.size() != x_labels.size()) throw std::invalid_argument("channel '" + name + "': row count does not match X");
  for (const auto& row : p) {
    if (row.size() != z_labels.size()) throw std::invalid_argument("channel '" + name + "': row width does not match Z");
    check_row(row, "channel '" + name + "'");
    if (std::abs(std::accumulate(row.begin(), row.end(), 0.0) - 1.0) > kTolerance) {
      throw std::invalid_argument("channel '" + name + "': row does not sum to 1");
    }
  }
}

bool EncoderChannel::deterministic() const {
  for (const auto& row : p)
    for (double v : row)
      if (v != 0.0 && v != 1.0) return false;
  return true;
}

std::vector<std::size_t> EncoderChannel::assignment() const {
  if (!deterministic()) throw std::invalid_argument("channel '" + name + "' is not deterministic");
  std::vector<std::size_t> out;
  for (const auto& row : p) out.push_back(static_cast<std::size_t>(std::find(row.begin(), row.end(), 1.0) - row.begin()));
  return out;
}

EncoderChannel EncoderChannel::from_assignment(std::string name, std::vector<std::string> x_labels,
                                               std::span<const std::size_t> z_of_x,
                                               std::vector<std::string> z_labels) {
  if (z_of_x.size() != x_labels.size()) throw std::invalid_argument("from_assignment: size mismatch");
  const std::size_t nz = z_of_x.empty() ? 0 : *std::max_element(z_of_x.begin(), z_of_x.end()) + 1;
  if (z_labels.empty()) {
    for (std::size_t z = 0; z < nz; ++z) z_labels.push_back("z" + std::to_string(z));
  }
  if (z_labels.size() < nz) throw std::invalid_argument("from_assignment: too few Z labels");
  EncoderChannel c{std::move(name), std::move(x_labels), std::move(z_labels), {}};
  for (std::size_t z : z_of_x) {
    std::vector<double> row(c.z_labels.size(), 0.0);
    row[z] = 1.0;
    c.p.push_back(std::move(row));
  }
  return c;
}

EncoderChannel identity_channel(const std::vector<std::string>& x_labels) {
  std::vector<std::size_t> a(x_labels.size());
  std::iota(a.begin(), a.end(), 0);
  return EncoderChannel::from_assignment("identity", x_labels, a, x_labels);
}

EncoderChannel constant_channel(const std::vector<std::string>& x_labels) {
  std::vector<std::size_t> a(x_labels.size(), 0);
  return EncoderChannel::from_assignment("constant", x_labels, a, {"*"});
}

double entropy(std::span<const double> p) {
  double h = 0.0;
  for (double v : p)
    if (v > 0.0) h -= v * std::log2(v);
  return h;
}

double mutual_information(const DiscreteJoint& joint) {
  joint.validate();
  const auto px = joint.px();
  const auto py = joint.py();
  double mi = 0.0;
  for (std::size_t x = 0; x < px.size(); ++x)
    for (std::size_t y = 0; y < py.size(); ++y) mi += plogp_ratio(joint.p[x][y], px[x] * py[y]);
  return mi;
}

Composed compose(const DiscreteJoint& joint, const EncoderChannel& enc) {
  joint.validate();
  enc.validate();
  if (enc.x_labels != joint.x_labels) {
    throw std::invalid_argument("compose: channel '" + enc.name + "' is defined on a different X alphabet");
  }
  const auto px = joint.px();
  const std::size_t nz = enc.z_labels.size(), ny = joint.y_labels.size();
  Composed c;
  c.xz = {joint.x_labels, enc.z_labels, {}};
  c.zy = {enc.z_labels, joint.y_labels, std::vector<std::vector<double>>(nz, std::vector<double>(ny, 0.0))};
  for (std::size_t x = 0; x < px.size(); ++x) {
    std::vector<double> row(nz);
    for (std::size_t z = 0; z < nz; ++z) {
      row[z] = px[x] * enc.p[x][z];
      for (std::size_t y = 0; y < ny; ++y) c.zy.p[z][y] += joint.p[x][y] * enc.p[x][z];
    }
    c.xz.p.push_back(std::move(row));
  }
  return c;
}

double ib_objective(const DiscreteJoint& joint, const EncoderChannel& enc, const IBConfig& cfg) {
  if (!(cfg.beta >= 0.0)) throw std::invalid_argument("ib_objective: beta must be non-negative");
  const auto c = compose(joint, enc);
  return mutual_information(c.xz) - cfg.beta * mutual_information(c.zy);
}

double sufficiency_gap(const DiscreteJoint& joint, const EncoderChannel& enc) {
  const double gap = mutual_information(joint) - mutual_information(compose(joint, enc).zy);
  if (gap < -kTolerance) throw std::logic_error("sufficiency_gap: I(Z;Y) exceeds I(X;Y)");
  return std::max(gap, 0.0);
}

RelationTable equality_relation(std::size_t k) {
  RelationTable r{{"same", "diff"}, std::vector<std::vector<std::size_t>>(k, std::vector<std::size_t>(k, 1))};
  for (std::size_t a = 0; a < k; ++a) r.value[a][a] = 0;
  return r;
}

bool is_equality_like(const RelationTable& r) {
  const std::size_t k = r.alphabet();
  auto same = [&](std::size_t a, std::size_t b) { return r.value_names.at(r.value[a][b]) == "same"; };
  for (std::size_t a = 0; a < k; ++a) {
    if (r.value[a].size() != k || !same(a, a)) return false;
    for (std::size_t b = 0; b < k; ++b) {
      if (r.value[a][b] != r.value[b][a]) return false;
      for (std::size_t c = 0; c < k; ++c)
        if (same(a, b) && same(b, c) && !same(a, c)) return false;
    }
  }
  return true;
}

EncoderChannel relational_encode(std::span<const Tuple> world, const RelationalCode& code) {
  const auto& r = code.relation;
  std::vector<std::string> x_labels, codes;
  for (const auto& t : world) {
    if (t.size() != code.arity) throw std::invalid_argument("relational_encode: tuple length differs from code arity");
    std::string z;
    for (std::size_t i = 0; i < t.size(); ++i)
      for (std::size_t j = 0; j < t.size(); ++j) {
        if (i == j) continue;
        if (t[i] >= r.alphabet() || t[j] >= r.alphabet()) {
          throw std::invalid_argument("relational_encode: relation undefined for symbol in " + tuple_label(t));
        }
        if (!z.empty()) z += ',';
        z += r.value_names.at(r.value[t[i]][t[j]]);
      }
    x_labels.push_back(tuple_label(t));
    codes.push_back(z);
  }
  std::vector<std::string> z_labels = codes;
  std::sort(z_labels.begin(), z_labels.end());
  z_labels.erase(std::unique(z_labels.begin(), z_labels.end()), z_labels.end());
  std::vector<std::size_t> a;
  for (const auto& z : codes) a.push_back(static_cast<std::size_t>(std::lower_bound(z_labels.begin(), z_labels.end(), z) - z_labels.begin()));
  return EncoderChannel::from_assignment("relational-equality", std::move(x_labels), a, std::move(z_labels));
}

std::vector<std::size_t> minimality_audit(const DiscreteJoint& joint, std::span<const EncoderChannel> encoders) {
  if (encoders.empty()) throw std::invalid_argument("minimality_audit: no channels");
  std::vector<double> ixz;
  for (const auto& e : encoders) {
    if (sufficiency_gap(joint, e) > kTolerance) {
      throw ContractError("minimality_audit: channel '" + e.name + "' is not sufficient");
    }
    ixz.push_back(mutual_information(compose(joint, e).xz));
  }
  const double best = *std::min_element(ixz.begin(), ixz.end());
  std::vector<std::size_t> winners;
  for (std::size_t i = 0; i < ixz.size(); ++i)
    if (ixz[i] <= best + kTolerance) winners.push_back(i);
  return winners;
}

bool same_partition(const EncoderChannel& a, const EncoderChannel& b) {
  const auto za = a.assignment(), zb = b.assignment();
  if (za.size() != zb.size()) return false;
  std::map<std::size_t, std::size_t> fwd, back;
  for (std::size_t i = 0; i < za.size(); ++i) {
    auto [f, fi] = fwd.emplace(za[i], zb[i]);
    auto [g, gi] = back.emplace(zb[i], za[i]);
    if (f->second != zb[i] || g->second != za[i]) return false;
  }
  return true;
}

std::vector<Tuple> all_tuples(std::size_t k, std::size_t n) {
  std::vector<Tuple> out;
  Tuple t(n, 0);
  for (;;) {
    out.push_back(t);
    std::size_t i = n;
    while (i > 0 && ++t[i - 1] == k) t[--i] = 0;
    if (i == 0) break;
  }
  return out;
}

std::string tuple_label(const Tuple& t) {
  std::string s;
  for (auto v : t) s += static_cast<char>('a' + v);
  return s;
}

std::string equality_pattern(const Tuple& t) {
  std::map<std::size_t, char> seen;
  std::string s;
  for (auto v : t) {
    auto it = seen.emplace(v, static_cast<char>('A' + seen.size())).first;
    s += it->second;
  }
  return s;
}

DiscreteJoint uniform_world(std::span<const Tuple> tuples, const std::function<std::string(const Tuple&)>& label) {
  if (tuples.empty()) throw std::invalid_argument("uniform_world: no tuples");
  DiscreteJoint j;
  std::vector<std::string> ys;
  for (const auto& t : tuples) ys.push_back(label(t));
  j.y_labels = ys;
  std::sort(j.y_labels.begin(), j.y_labels.end());
  j.y_labels.erase(std::unique(j.y_labels.begin(), j.y_labels.end()), j.y_labels.end());
  const double w = 1.0 / static_cast<double>(tuples.size());
  for (std::size_t i = 0; i < tuples.size(); ++i) {
    j.x_labels.push_back(tuple_label(tuples[i]));
    std::vector<double> row(j.y_labels.size(), 0.0);
    row[std::lower_bound(j.y_labels.begin(), j.y_labels.end(), ys[i]) - j.y_labels.begin()] = w;
    j.p.push_back(std::move(row));
  }
  return j;
}

std::vector<Tuple> aba_abb_tuples(std::size_t k) {
  std::vector<Tuple> out;
  for (const auto& t : all_tuples(k, 3)) {
    const auto pat = equality_pattern(t);
    if (pat == "ABA" || pat == "ABB") out.push_back(t);
  }
  return out;
}

std::vector<EncoderChannel> sufficient_deterministic_channels(const DiscreteJoint& joint, std::size_t max_z) {
  joint.validate();
  if (max_z == 0) throw std::invalid_argument("sufficient_deterministic_channels: max_z must be positive");
  const std::size_t nx = joint.x_labels.size(), ny = joint.y_labels.size();
  const double target = mutual_information(joint);
  const auto py = joint.py();
  std::vector<std::vector<double>> table(max_z, std::vector<double>(ny, 0.0));
  std::vector<std::size_t> assign(nx, 0);
  std::vector<EncoderChannel> out;

  auto izy = [&](std::size_t blocks) {
    double mi = 0.0;
    for (std::size_t z = 0; z < blocks; ++z) {
      const double pz = std::accumulate(table[z].begin(), table[z].end(), 0.0);
      for (std::size_t y = 0; y < ny; ++y) mi += plogp_ratio(table[z][y], pz * py[y]);
    }
    return mi;
  };
  // Restricted growth strings enumerate each partition of X exactly once.
  std::function<void(std::size_t, std::size_t)> rec = [&](std::size_t i, std::size_t used) {
    if (i == nx) {
      if (izy(used) >= target - kTolerance) {
        out.push_back(EncoderChannel::from_assignment("partition-" + std::to_string(out.size()), joint.x_labels, assign));
      }
      return;
    }
    const std::size_t limit = std::min(used + 1, max_z);
    for (std::size_t b = 0; b < limit; ++b) {
      assign[i] = b;
      for (std::size_t y = 0; y < ny; ++y) table[b][y] += joint.p[i][y];
      rec(i + 1, std::max(used, b + 1));
      for (std::size_t y = 0; y < ny; ++y) table[b][y] -= joint.p[i][y];
    }
  };
  rec(0, 0);
  return out;
}

bool VerifyReport::passed() const {
  return relational_gap <= kTolerance && i_x_r < i_x_x && relational_among_winners;
}

std::string VerifyReport::text() const {
  std::ostringstream os;
  os << std::setprecision(12);
  os << "world: k=" << k << " symbols, tuples of length " << n << ", uniform input distribution (assumed)\n";
  os << "equality patterns in the full world: " << full_world_patterns << "\n";
  os << "ABA/ABB labelling, beta=" << beta << "\n";
  os << "  sufficiency gap of relational code: " << relational_gap << " bits\n";
  os << "  I(X;R) = " << i_x_r << " bits, I(X;X) = " << i_x_x << " bits\n";
  os << "  sufficient deterministic channels enumerated: " << sufficient_channels << "\n";
  os << "  minimal channels: " << winners << ", relational code among them: "
     << (relational_among_winners ? "yes" : "no") << "\n";
  os << (passed() ? "PASS" : "FAIL") << "\n";
  return os.str();
}

std::string VerifyReport::csv() const {
  std::ostringstream os;
  os << std::setprecision(17) << "channel,i_xz,i_zy,objective\n";
  for (const auto& r : rows) os << r.id << ',' << r.i_xz << ',' << r.i_zy << ',' << r.objective << '\n';
  return os.str();
}

VerifyReport verify_relational_code(std::size_t k, double beta) {
  if (k < 2) throw std::invalid_argument("verify_relational_code: need at least 2 symbols");
  VerifyReport rep;
  rep.k = k;
  rep.n = 3;
  rep.beta = beta;
  const auto full = all_tuples(k, 3);
  RelationalCode code{equality_relation(k), 3};
  rep.full_world_patterns = relational_encode(full, code).z_labels.size();

  const auto tuples = aba_abb_tuples(k);
  const auto joint = uniform_world(tuples, equality_pattern);
  const auto relational = relational_encode(tuples, code);
  const auto identity = identity_channel(joint.x_labels);
  rep.relational_gap = sufficiency_gap(joint, relational);
  rep.i_x_r = mutual_information(compose(joint, relational).xz);
  rep.i_x_x = mutual_information(compose(joint, identity).xz);

  auto enumerated = sufficient_deterministic_channels(joint, relational.z_labels.size());
  rep.sufficient_channels = enumerated.size();
  std::vector<EncoderChannel> candidates = enumerated;
  candidates.push_back(relational);
  const auto winners = minimality_audit(joint, candidates);
  rep.winners = winners.size();
  for (auto w : winners)
    if (same_partition(candidates[w], relational)) rep.relational_among_winners = true;

  std::vector<EncoderChannel> listed = {identity, relational, constant_channel(joint.x_labels)};
  listed.insert(listed.end(), enumerated.begin(), enumerated.end());
  for (const auto& c : listed) {
    const auto comp = compose(joint, c);
    ChannelRow row{c.name, mutual_information(comp.xz), mutual_information(comp.zy), 0.0};
    row.objective = row.i_xz - beta * row.i_zy;
    rep.rows.push_back(row);
  }
  return rep;
}

}  // namespace rbw::ib
