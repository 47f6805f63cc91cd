#include "rbw/num/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace rbw::num {

namespace {

void require_same_shape(const char* op, Var a, Var b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                         to_string(b.shape()));
  }
}

void require_matrix(const char* op, Var a) {
  if (a.shape().size() != 2) {
    throw DimensionError(std::string(op) + ": expected a matrix, got " + to_string(a.shape()));
  }
}

}  // namespace

Var matmul(Var a, Var b) {
  require_matrix("matmul", a);
  require_matrix("matmul", b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
  if (bv.rows() != k) {
    throw DimensionError("matmul: inner dimensions differ, " + to_string(av.shape()) + " x " +
                         to_string(bv.shape()));
  }
  Tensor out({m, n});
  const double* A = av.values().data();
  const double* B = bv.values().data();
  double* C = out.values().data();
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = C + i * n;
    for (std::size_t t = 0; t < k; ++t) {
      const double s = A[i * k + t];
      if (s == 0.0) continue;
      const double* brow = B + t * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += s * brow[j];
    }
  }
  return a.tape().record(
      std::move(out), {a, b},
      [a, b, m, k, n](Tape& t, std::span<const double> g) {
        const double* A = t.value(a).values().data();
        const double* B = t.value(b).values().data();
        if (auto ga = t.accumulate(a); !ga.empty()) {
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t tt = 0; tt < k; ++tt) {
              const double* brow = B + tt * n;
              const double* grow = g.data() + i * n;
              double s = 0.0;
              for (std::size_t j = 0; j < n; ++j) s += grow[j] * brow[j];
              ga[i * k + tt] += s;
            }
        }
        if (auto gb = t.accumulate(b); !gb.empty()) {
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t tt = 0; tt < k; ++tt) {
              const double s = A[i * k + tt];
              if (s == 0.0) continue;
              double* gbrow = gb.data() + tt * n;
              const double* grow = g.data() + i * n;
              for (std::size_t j = 0; j < n; ++j) gbrow[j] += s * grow[j];
            }
        }
      },
      "matmul");
}

Var add(Var a, Var b) {
  require_same_shape("add", a, b);
  Tensor out = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return a.tape().record(
      std::move(out), {a, b},
      [a, b](Tape& t, std::span<const double> g) {
        if (auto ga = t.accumulate(a); !ga.empty())
          for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        if (auto gb = t.accumulate(b); !gb.empty())
          for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
      },
      "add");
}

Var sub(Var a, Var b) {
  require_same_shape("sub", a, b);
  Tensor out = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  return a.tape().record(
      std::move(out), {a, b},
      [a, b](Tape& t, std::span<const double> g) {
        if (auto ga = t.accumulate(a); !ga.empty())
          for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        if (auto gb = t.accumulate(b); !gb.empty())
          for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
      },
      "sub");
}

Var mul(Var a, Var b) {
  require_same_shape("mul", a, b);
  Tensor out = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return a.tape().record(
      std::move(out), {a, b},
      [a, b](Tape& t, std::span<const double> g) {
        const auto& av = t.value(a);
        const auto& bv = t.value(b);
        if (auto ga = t.accumulate(a); !ga.empty())
          for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
        if (auto gb = t.accumulate(b); !gb.empty())
          for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
      },
      "mul");
}

Var scale(Var a, double factor) {
  Tensor out = a.value();
  for (auto& x : out.values()) x *= factor;
  return a.tape().record(
      std::move(out), {a},
      [a, factor](Tape& t, std::span<const double> g) {
        if (auto ga = t.accumulate(a); !ga.empty())
          for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * factor;
      },
      "scale");
}

Var add_row(Var a, Var row) {
  require_matrix("add_row", a);
  const std::size_t m = a.rows(), n = a.cols();
  if (row.value().size() != n || row.value().rows() != 1) {
    throw DimensionError("add_row: row " + to_string(row.shape()) + " does not broadcast over " +
                         to_string(a.shape()));
  }
  Tensor out = a.value();
  const auto& rv = row.value();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out(i, j) += rv[j];
  return a.tape().record(
      std::move(out), {a, row},
      [a, row, m, n](Tape& t, std::span<const double> g) {
        if (auto ga = t.accumulate(a); !ga.empty())
          for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        if (auto gr = t.accumulate(row); !gr.empty())
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) gr[j] += g[i * n + j];
      },
      "add_row");
}

Var mul_scalar(Var a, Var s) {
  if (s.value().size() != 1) {
    throw DimensionError("mul_scalar: expected a 1x1 factor, got " + to_string(s.shape()));
  }
  const double k = s.value()[0];
  Tensor out = a.value();
  for (auto& x : out.values()) x *= k;
  return a.tape().record(
      std::move(out), {a, s},
      [a, s](Tape& t, std::span<const double> g) {
        const double k = t.value(s)[0];
        const auto& av = t.value(a);
        if (auto ga = t.accumulate(a); !ga.empty())
          for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * k;
        if (auto gs = t.accumulate(s); !gs.empty()) {
          double acc = 0.0;
          for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * av[i];
          gs[0] += acc;
        }
      },
      "mul_scalar");
}

namespace {

// Elementwise op; `deriv` maps an input entry to the local derivative.
template <typename Fwd, typename Deriv>
Var elementwise(Var a, const char* op, Fwd fwd, Deriv deriv) {
  const Tensor& av = a.value();
  Tensor out(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i]);
  return a.tape().record(
      std::move(out), {a},
      [a, deriv](Tape& t, std::span<const double> g) {
        auto ga = t.accumulate(a);
        if (ga.empty()) return;
        const Tensor& x = t.value(a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * deriv(x[i]);
      },
      op);
}

}  // namespace

Var tanh(Var a) {
  return elementwise(
      a, "tanh", [](double x) { return std::tanh(x); },
      [](double x) {
        const double y = std::tanh(x);
        return 1.0 - y * y;
      });
}

Var sigmoid(Var a) {
  return elementwise(
      a, "sigmoid", [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
      [](double x) {
        const double y = 1.0 / (1.0 + std::exp(-x));
        return y * (1.0 - y);
      });
}

Var relu(Var a) {
  return elementwise(
      a, "relu", [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x) { return x > 0.0 ? 1.0 : 0.0; });
}

Var softmax(Var x, std::size_t axis, double temperature) {
  if (!(temperature > 0.0)) {
    throw ParameterError("softmax: temperature must be positive, got " + std::to_string(temperature));
  }
  const Shape& shape = x.shape();
  if (axis >= shape.size()) {
    throw DimensionError("softmax: axis " + std::to_string(axis) + " out of range for " +
                         to_string(shape));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= shape[i];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) inner *= shape[i];
  const std::size_t len = shape[axis];
  const Tensor& xv = x.value();
  Tensor out(shape);
  const double inv_t = 1.0 / temperature;
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * len * inner + in;
      double mx = xv[base];
      for (std::size_t k = 1; k < len; ++k) mx = std::max(mx, xv[base + k * inner]);
      double z = 0.0;
      for (std::size_t k = 0; k < len; ++k) {
        const double e = std::exp((xv[base + k * inner] - mx) * inv_t);
        out[base + k * inner] = e;
        z += e;
      }
      for (std::size_t k = 0; k < len; ++k) out[base + k * inner] /= z;
    }
  Tensor saved = out;
  return x.tape().record(
      std::move(out), {x},
      [x, y = std::move(saved), outer, inner, len, inv_t](Tape& t, std::span<const double> g) {
        auto gx = t.accumulate(x);
        if (gx.empty()) return;
        for (std::size_t o = 0; o < outer; ++o)
          for (std::size_t in = 0; in < inner; ++in) {
            const std::size_t base = o * len * inner + in;
            double dot = 0.0;
            for (std::size_t k = 0; k < len; ++k) dot += g[base + k * inner] * y[base + k * inner];
            for (std::size_t k = 0; k < len; ++k) {
              const std::size_t idx = base + k * inner;
              gx[idx] += inv_t * y[idx] * (g[idx] - dot);
            }
          }
      },
      "softmax");
}

Var layer_norm(Var x, Var gain, Var bias, double epsilon) {
  require_matrix("layer_norm", x);
  const std::size_t m = x.rows(), n = x.cols();
  if (gain.value().size() != n || bias.value().size() != n) {
    throw DimensionError("layer_norm: gain " + to_string(gain.shape()) + " / bias " +
                         to_string(bias.shape()) + " do not match last axis of " +
                         to_string(x.shape()));
  }
  if (!(epsilon > 0.0)) throw ParameterError("layer_norm: epsilon must be positive");
  const Tensor& xv = x.value();
  const Tensor& gv = gain.value();
  const Tensor& bv = bias.value();
  Tensor normed({m, n});
  std::vector<double> inv_std(m);
  Tensor out({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += xv(i, j);
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (xv(i, j) - mu) * (xv(i, j) - mu);
    var /= static_cast<double>(n);
    inv_std[i] = 1.0 / std::sqrt(var + epsilon);
    for (std::size_t j = 0; j < n; ++j) {
      normed(i, j) = (xv(i, j) - mu) * inv_std[i];
      out(i, j) = gv[j] * normed(i, j) + bv[j];
    }
  }
  return x.tape().record(
      std::move(out), {x, gain, bias},
      [x, gain, bias, m, n, xh = std::move(normed), inv_std = std::move(inv_std)](
          Tape& t, std::span<const double> g) {
        const Tensor& gv = t.value(gain);
        if (auto gg = t.accumulate(gain); !gg.empty())
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) gg[j] += g[i * n + j] * xh(i, j);
        if (auto gb = t.accumulate(bias); !gb.empty())
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) gb[j] += g[i * n + j];
        auto gx = t.accumulate(x);
        if (gx.empty()) return;
        const double inv_n = 1.0 / static_cast<double>(n);
        for (std::size_t i = 0; i < m; ++i) {
          double mean_d = 0.0, mean_dx = 0.0;
          for (std::size_t j = 0; j < n; ++j) {
            const double d = g[i * n + j] * gv[j];
            mean_d += d;
            mean_dx += d * xh(i, j);
          }
          mean_d *= inv_n;
          mean_dx *= inv_n;
          for (std::size_t j = 0; j < n; ++j) {
            const double d = g[i * n + j] * gv[j];
            gx[i * n + j] += inv_std[i] * (d - mean_d - xh(i, j) * mean_dx);
          }
        }
      },
      "layer_norm");
}

Var l2_normalize_rows(Var x, double epsilon) {
  require_matrix("l2_normalize_rows", x);
  const std::size_t m = x.rows(), n = x.cols();
  const Tensor& xv = x.value();
  Tensor out({m, n});
  std::vector<double> norms(m);
  for (std::size_t i = 0; i < m; ++i) {
    double s = epsilon;
    for (std::size_t j = 0; j < n; ++j) s += xv(i, j) * xv(i, j);
    norms[i] = std::sqrt(s);
    for (std::size_t j = 0; j < n; ++j) out(i, j) = xv(i, j) / norms[i];
  }
  Tensor saved = out;
  return x.tape().record(
      std::move(out), {x},
      [x, m, n, y = std::move(saved), norms = std::move(norms)](Tape& t, std::span<const double> g) {
        auto gx = t.accumulate(x);
        if (gx.empty()) return;
        for (std::size_t i = 0; i < m; ++i) {
          double dot = 0.0;
          for (std::size_t j = 0; j < n; ++j) dot += y(i, j) * g[i * n + j];
          for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += (g[i * n + j] - y(i, j) * dot) / norms[i];
        }
      },
      "l2_normalize_rows");
}

Var concat(std::initializer_list<Var> parts, std::size_t axis) {
  return concat(std::span<const Var>(parts.begin(), parts.size()), axis);
}

Var concat(std::span<const Var> parts, std::size_t axis) {
  if (parts.empty()) throw DimensionError("concat: no operands");
  if (axis > 1) throw DimensionError("concat: axis must be 0 or 1");
  for (const Var& p : parts) require_matrix("concat", p);
  const std::size_t other = axis == 0 ? parts[0].cols() : parts[0].rows();
  std::size_t total = 0;
  for (const Var& p : parts) {
    const std::size_t o = axis == 0 ? p.cols() : p.rows();
    if (o != other) {
      throw DimensionError("concat: " + to_string(parts[0].shape()) + " and " +
                           to_string(p.shape()) + " disagree off the concat axis");
    }
    total += axis == 0 ? p.rows() : p.cols();
  }
  const Shape shape = axis == 0 ? Shape{total, other} : Shape{other, total};
  Tensor out(shape);
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const Var& p : parts) {
    offsets.push_back(off);
    const Tensor& pv = p.value();
    if (axis == 0) {
      std::copy(pv.values().begin(), pv.values().end(), out.values().begin() + off * other);
      off += pv.rows();
    } else {
      for (std::size_t i = 0; i < other; ++i)
        for (std::size_t j = 0; j < pv.cols(); ++j) out(i, off + j) = pv(i, j);
      off += pv.cols();
    }
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  Tape& tape = parts[0].tape();
  return tape.record(
      std::move(out), std::span<const Var>(inputs),
      [inputs, offsets, axis, other, total](Tape& t, std::span<const double> g) {
        for (std::size_t p = 0; p < inputs.size(); ++p) {
          auto gp = t.accumulate(inputs[p]);
          if (gp.empty()) continue;
          const Tensor& pv = t.value(inputs[p]);
          if (axis == 0) {
            const std::size_t start = offsets[p] * other;
            for (std::size_t i = 0; i < pv.size(); ++i) gp[i] += g[start + i];
          } else {
            const std::size_t c = pv.cols();
            for (std::size_t i = 0; i < other; ++i)
              for (std::size_t j = 0; j < c; ++j) gp[i * c + j] += g[i * total + offsets[p] + j];
          }
        }
      },
      "concat");
}

Var slice(Var x, std::size_t axis, std::size_t begin, std::size_t end) {
  require_matrix("slice", x);
  if (axis > 1) throw DimensionError("slice: axis must be 0 or 1");
  const std::size_t m = x.rows(), n = x.cols();
  const std::size_t extent = axis == 0 ? m : n;
  if (begin >= end || end > extent) {
    throw DimensionError("slice: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") invalid for " + to_string(x.shape()));
  }
  const Tensor& xv = x.value();
  Tensor out(axis == 0 ? Shape{end - begin, n} : Shape{m, end - begin});
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t j = 0; j < out.cols(); ++j)
      out(i, j) = axis == 0 ? xv(begin + i, j) : xv(i, begin + j);
  const std::size_t orows = out.rows(), ocols = out.cols();
  return x.tape().record(
      std::move(out), {x},
      [x, axis, begin, n, orows, ocols](Tape& t, std::span<const double> g) {
        auto gx = t.accumulate(x);
        if (gx.empty()) return;
        for (std::size_t i = 0; i < orows; ++i)
          for (std::size_t j = 0; j < ocols; ++j) {
            const std::size_t src = axis == 0 ? (begin + i) * n + j : i * n + begin + j;
            gx[src] += g[i * ocols + j];
          }
      },
      "slice");
}

Var transpose(Var x) {
  require_matrix("transpose", x);
  const std::size_t m = x.rows(), n = x.cols();
  return x.tape().record(
      x.value().transposed(), {x},
      [x, m, n](Tape& t, std::span<const double> g) {
        auto gx = t.accumulate(x);
        if (gx.empty()) return;
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += g[j * m + i];
      },
      "transpose");
}

Var reshape(Var x, Shape shape) {
  if (shape_size(shape) != x.value().size()) {
    throw DimensionError("reshape: cannot view " + to_string(x.shape()) + " as " + to_string(shape));
  }
  return x.tape().record(
      x.value().reshaped(std::move(shape)), {x},
      [x](Tape& t, std::span<const double> g) {
        auto gx = t.accumulate(x);
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i];
      },
      "reshape");
}

Var sum(Var x) {
  double s = 0.0;
  for (double v : x.value().values()) s += v;
  return x.tape().record(
      Tensor::scalar(s), {x},
      [x](Tape& t, std::span<const double> g) {
        auto gx = t.accumulate(x);
        for (auto& v : gx) v += g[0];
      },
      "sum");
}

Var mean(Var x) { return scale(sum(x), 1.0 / static_cast<double>(x.value().size())); }

Var sum_rows(Var x) {
  require_matrix("sum_rows", x);
  const std::size_t m = x.rows(), n = x.cols();
  Tensor out({1, n});
  const Tensor& xv = x.value();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j] += xv(i, j);
  return x.tape().record(
      std::move(out), {x},
      [x, m, n](Tape& t, std::span<const double> g) {
        auto gx = t.accumulate(x);
        if (gx.empty()) return;
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += g[j];
      },
      "sum_rows");
}

Var cross_entropy(Var logits, std::span<const std::size_t> targets) {
  require_matrix("cross_entropy", logits);
  const std::size_t b = logits.rows(), c = logits.cols();
  if (targets.size() != b) {
    throw DimensionError("cross_entropy: " + std::to_string(targets.size()) + " targets for " +
                         std::to_string(b) + " rows");
  }
  for (auto tgt : targets) {
    if (tgt >= c) {
      throw std::out_of_range("cross_entropy: target " + std::to_string(tgt) + " >= classes " +
                              std::to_string(c));
    }
  }
  const Tensor& lv = logits.value();
  Tensor probs({b, c});
  double loss = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    double mx = lv(i, 0);
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, lv(i, j));
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += std::exp(lv(i, j) - mx);
    const double lse = mx + std::log(z);
    loss += lse - lv(i, targets[i]);
    for (std::size_t j = 0; j < c; ++j) probs(i, j) = std::exp(lv(i, j) - lse);
  }
  loss /= static_cast<double>(b);
  std::vector<std::size_t> tg(targets.begin(), targets.end());
  return logits.tape().record(
      Tensor::scalar(loss), {logits},
      [logits, b, c, p = std::move(probs), tg = std::move(tg)](Tape& t, std::span<const double> g) {
        auto gl = t.accumulate(logits);
        if (gl.empty()) return;
        const double k = g[0] / static_cast<double>(b);
        for (std::size_t i = 0; i < b; ++i)
          for (std::size_t j = 0; j < c; ++j)
            gl[i * c + j] += k * (p(i, j) - (j == tg[i] ? 1.0 : 0.0));
      },
      "cross_entropy");
}

}  // namespace rbw::num
