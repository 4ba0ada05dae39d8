#pragma once

// Dense 64-bit tensors and a tape for reverse-mode differentiation. Rank 1
// and 2 only; scalars are shape {1}. Sized for a desk-scale corrector, not
// for throughput.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace textmend {

struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> values;
  std::vector<double> grad;  // empty until first use; same numel as values

  Tensor() = default;
  Tensor(std::vector<std::size_t> shape_, std::vector<double> values_)
      : shape(std::move(shape_)), values(std::move(values_)) {
    if (numel_of(shape) != values.size())
      throw std::invalid_argument("Tensor: shape/value count mismatch");
  }

  static Tensor zeros(std::vector<std::size_t> shape) {
    Tensor t;
    t.shape = std::move(shape);
    t.values.assign(numel_of(t.shape), 0.0);
    return t;
  }

  static std::size_t numel_of(const std::vector<std::size_t>& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
  }

  std::size_t numel() const noexcept { return values.size(); }
  std::size_t rows() const { return shape.at(0); }
  std::size_t cols() const { return shape.size() > 1 ? shape[1] : 1; }

  double& at(std::size_t i) { return values[i]; }
  double at(std::size_t i) const { return values[i]; }
  double& at(std::size_t r, std::size_t c) { return values[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return values[r * cols() + c]; }

  void ensure_grad() {
    if (grad.size() != values.size()) grad.assign(values.size(), 0.0);
  }
  void zero_grad() { grad.assign(values.size(), 0.0); }
};

inline std::string shape_str(const std::vector<std::size_t>& s) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << ')';
  return os.str();
}

struct Var {
  std::uint32_t id = UINT32_MAX;
  bool valid() const noexcept { return id != UINT32_MAX; }
};

// Records forward primitives and replays their adjoints in reverse.
// Single-owner: a tape and its vars must not be shared across threads.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(const Tensor& t) { return push(t.shape, t.values, nullptr); }

  Var leaf(std::vector<std::size_t> shape, std::vector<double> values) {
    return push(std::move(shape), std::move(values), nullptr);
  }

  Var scalar(double v) { return push({1}, {v}, nullptr); }

  const Tensor& value(Var v) const { return nodes_[check(v)].value; }
  const std::vector<double>& grad(Var v) const { return nodes_[check(v)].grad; }
  double scalar_value(Var v) const {
    const Tensor& t = value(v);
    if (t.numel() != 1) throw std::invalid_argument("scalar_value: tensor " + shape_str(t.shape));
    return t.values[0];
  }

  // --- primitives ----------------------------------------------------------

  Var add(Var a, Var b) {
    require_same("add", a, b);
    const auto& ta = val(a);
    const auto& tb = val(b);
    std::vector<double> out(ta.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = ta.values[i] + tb.values[i];
    return push(ta.shape, std::move(out), [a, b](Tape& t, const Node& n) {
      for (std::size_t i = 0; i < n.grad.size(); ++i) {
        t.node(a).grad[i] += n.grad[i];
        t.node(b).grad[i] += n.grad[i];
      }
    });
  }

  Var sub(Var a, Var b) {
    require_same("sub", a, b);
    const auto& ta = val(a);
    const auto& tb = val(b);
    std::vector<double> out(ta.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = ta.values[i] - tb.values[i];
    return push(ta.shape, std::move(out), [a, b](Tape& t, const Node& n) {
      for (std::size_t i = 0; i < n.grad.size(); ++i) {
        t.node(a).grad[i] += n.grad[i];
        t.node(b).grad[i] -= n.grad[i];
      }
    });
  }

  Var mul(Var a, Var b) {
    require_same("mul", a, b);
    const auto& ta = val(a);
    const auto& tb = val(b);
    std::vector<double> out(ta.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = ta.values[i] * tb.values[i];
    return push(ta.shape, std::move(out), [a, b](Tape& t, const Node& n) {
      const auto& va = t.node(a).value.values;
      const auto& vb = t.node(b).value.values;
      for (std::size_t i = 0; i < n.grad.size(); ++i) {
        t.node(a).grad[i] += n.grad[i] * vb[i];
        t.node(b).grad[i] += n.grad[i] * va[i];
      }
    });
  }

  Var scale(Var a, double s) {
    const auto& ta = val(a);
    std::vector<double> out(ta.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = ta.values[i] * s;
    return push(ta.shape, std::move(out), [a, s](Tape& t, const Node& n) {
      for (std::size_t i = 0; i < n.grad.size(); ++i) t.node(a).grad[i] += n.grad[i] * s;
    });
  }

  Var add_scalar(Var a, double c) {
    const auto& ta = val(a);
    std::vector<double> out(ta.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = ta.values[i] + c;
    return push(ta.shape, std::move(out), [a](Tape& t, const Node& n) {
      for (std::size_t i = 0; i < n.grad.size(); ++i) t.node(a).grad[i] += n.grad[i];
    });
  }

  // Adds a length-c vector to every row of an r x c matrix.
  Var add_rowvec(Var m, Var v) {
    const auto& tm = val(m);
    const auto& tv = val(v);
    if (tm.shape.size() != 2 || tv.shape.size() != 1 || tm.shape[1] != tv.shape[0])
      throw std::invalid_argument("add_rowvec: " + shape_str(tm.shape) + " vs " + shape_str(tv.shape));
    std::vector<double> out(tm.numel());
    const std::size_t r = tm.shape[0], c = tm.shape[1];
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) out[i * c + j] = tm.values[i * c + j] + tv.values[j];
    return push(tm.shape, std::move(out), [m, v, r, c](Tape& t, const Node& n) {
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) {
          t.node(m).grad[i * c + j] += n.grad[i * c + j];
          t.node(v).grad[j] += n.grad[i * c + j];
        }
    });
  }

  // (r x k)(k x c) -> r x c; also (r x k)(k) -> (r) and (k)(k x c) -> (c).
  Var matmul(Var a, Var b) {
    const auto& ta = val(a);
    const auto& tb = val(b);
    const bool a_vec = ta.shape.size() == 1;
    const bool b_vec = tb.shape.size() == 1;
    const std::size_t r = a_vec ? 1 : ta.shape[0];
    const std::size_t k = a_vec ? ta.shape[0] : ta.shape[1];
    const std::size_t k2 = b_vec ? tb.shape[0] : tb.shape[0];
    const std::size_t c = b_vec ? 1 : tb.shape[1];
    if (k != k2)
      throw std::invalid_argument("matmul: " + shape_str(ta.shape) + " vs " + shape_str(tb.shape));
    std::vector<double> out(r * c, 0.0);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t kk = 0; kk < k; ++kk) {
        const double av = ta.values[i * k + kk];
        if (av == 0.0) continue;
        for (std::size_t j = 0; j < c; ++j) out[i * c + j] += av * tb.values[kk * c + j];
      }
    std::vector<std::size_t> shape;
    if (a_vec && b_vec) shape = {1};
    else if (a_vec) shape = {c};
    else if (b_vec) shape = {r};
    else shape = {r, c};
    return push(std::move(shape), std::move(out), [a, b, r, k, c](Tape& t, const Node& n) {
      const auto& va = t.node(a).value.values;
      const auto& vb = t.node(b).value.values;
      auto& ga = t.node(a).grad;
      auto& gb = t.node(b).grad;
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) {
          const double g = n.grad[i * c + j];
          if (g == 0.0) continue;
          for (std::size_t kk = 0; kk < k; ++kk) {
            ga[i * k + kk] += g * vb[kk * c + j];
            gb[kk * c + j] += g * va[i * k + kk];
          }
        }
    });
  }

  Var transpose(Var a) {
    const auto& ta = val(a);
    if (ta.shape.size() != 2) throw std::invalid_argument("transpose: " + shape_str(ta.shape));
    const std::size_t r = ta.shape[0], c = ta.shape[1];
    std::vector<double> out(ta.numel());
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) out[j * r + i] = ta.values[i * c + j];
    return push({c, r}, std::move(out), [a, r, c](Tape& t, const Node& n) {
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) t.node(a).grad[i * c + j] += n.grad[j * r + i];
    });
  }

  Var tanh(Var a) {
    return unary(a, [](double x) { return std::tanh(x); },
                 [](double, double y) { return 1.0 - y * y; });
  }

  Var sigmoid(Var a) {
    return unary(a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
                 [](double, double y) { return y * (1.0 - y); });
  }

  Var relu(Var a) {
    return unary(a, [](double x) { return x > 0.0 ? x : 0.0; },
                 [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
  }

  Var log(Var a) {
    return unary(a, [](double x) { return std::log(x); },
                 [](double x, double) { return 1.0 / x; });
  }

  // axis 0 of a vector, or per-row (axis 1) / per-column (axis 0) of a matrix.
  Var softmax(Var a, std::size_t axis = 0) { return softmax_impl(a, axis, false); }
  Var log_softmax(Var a, std::size_t axis = 0) { return softmax_impl(a, axis, true); }

  Var embedding_lookup(Var table, std::vector<int> ids) {
    const auto& tt = val(table);
    if (tt.shape.size() != 2) throw std::invalid_argument("embedding_lookup: table " + shape_str(tt.shape));
    const std::size_t v = tt.shape[0], d = tt.shape[1];
    std::vector<double> out(ids.size() * d);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= v)
        throw std::out_of_range("embedding_lookup: id " + std::to_string(ids[i]) + " for table " +
                                shape_str(tt.shape));
      std::copy_n(tt.values.begin() + ids[i] * d, d, out.begin() + i * d);
    }
    return push({ids.size(), d}, std::move(out),
                [table, ids = std::move(ids), d](Tape& t, const Node& n) {
                  auto& g = t.node(table).grad;
                  for (std::size_t i = 0; i < ids.size(); ++i)
                    for (std::size_t j = 0; j < d; ++j) g[ids[i] * d + j] += n.grad[i * d + j];
                });
  }

  // Mean over rows (axis 0 -> length-c result) or columns (axis 1 -> length-r).
  Var mean_pool(Var a, std::size_t axis = 0) {
    const auto& ta = val(a);
    if (ta.shape.size() != 2) throw std::invalid_argument("mean_pool: " + shape_str(ta.shape));
    const std::size_t r = ta.shape[0], c = ta.shape[1];
    if (axis == 0) {
      std::vector<double> out(c, 0.0);
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[j] += ta.values[i * c + j] / static_cast<double>(r);
      return push({c}, std::move(out), [a, r, c](Tape& t, const Node& n) {
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < c; ++j)
            t.node(a).grad[i * c + j] += n.grad[j] / static_cast<double>(r);
      });
    }
    if (axis != 1) throw std::invalid_argument("mean_pool: axis must be 0 or 1");
    std::vector<double> out(r, 0.0);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) out[i] += ta.values[i * c + j] / static_cast<double>(c);
    return push({r}, std::move(out), [a, r, c](Tape& t, const Node& n) {
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j)
          t.node(a).grad[i * c + j] += n.grad[i] / static_cast<double>(c);
    });
  }

  // 1-D concat.
  Var concat(std::span<const Var> parts, std::size_t axis = 0) {
    if (axis != 0) throw std::invalid_argument("concat: only axis 0 on vectors");
    if (parts.empty()) throw std::invalid_argument("concat: no inputs");
    std::vector<double> out;
    std::vector<Var> ids(parts.begin(), parts.end());
    for (Var p : parts) {
      const auto& tp = val(p);
      if (tp.shape.size() != 1) throw std::invalid_argument("concat: operand " + shape_str(tp.shape));
      out.insert(out.end(), tp.values.begin(), tp.values.end());
    }
    const std::size_t total = out.size();
    return push({total}, std::move(out), [ids = std::move(ids)](Tape& t, const Node& n) {
      std::size_t off = 0;
      for (Var p : ids) {
        auto& g = t.node(p).grad;
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[off + i];
        off += g.size();
      }
    });
  }

  Var concat(std::initializer_list<Var> parts) {
    return concat(std::span<const Var>(parts.begin(), parts.size()));
  }

  // Stacks k same-length vectors into a k x d matrix.
  Var stack_rows(std::span<const Var> rows) {
    if (rows.empty()) throw std::invalid_argument("stack_rows: no inputs");
    const std::size_t d = val(rows[0]).numel();
    std::vector<double> out;
    std::vector<Var> ids(rows.begin(), rows.end());
    for (Var r : rows) {
      const auto& tr = val(r);
      if (tr.shape.size() != 1 || tr.numel() != d)
        throw std::invalid_argument("stack_rows: operand " + shape_str(tr.shape));
      out.insert(out.end(), tr.values.begin(), tr.values.end());
    }
    return push({rows.size(), d}, std::move(out), [ids = std::move(ids), d](Tape& t, const Node& n) {
      for (std::size_t i = 0; i < ids.size(); ++i) {
        auto& g = t.node(ids[i]).grad;
        for (std::size_t j = 0; j < d; ++j) g[j] += n.grad[i * d + j];
      }
    });
  }

  Var flatten(Var a) {
    const auto& ta = val(a);
    std::vector<double> out = ta.values;
    return push({ta.numel()}, std::move(out), [a](Tape& t, const Node& n) {
      auto& g = t.node(a).grad;
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
    });
  }

  Var select(Var a, std::size_t index) {
    const auto& ta = val(a);
    if (index >= ta.numel())
      throw std::out_of_range("select: index " + std::to_string(index) + " in " + shape_str(ta.shape));
    return push({1}, {ta.values[index]}, [a, index](Tape& t, const Node& n) {
      t.node(a).grad[index] += n.grad[0];
    });
  }

  Var sum(Var a) {
    const auto& ta = val(a);
    double s = 0.0;
    for (double x : ta.values) s += x;
    return push({1}, {s}, [a](Tape& t, const Node& n) {
      for (auto& g : t.node(a).grad) g += n.grad[0];
    });
  }

  // cosine(u, v) = <u,v>/(|u||v|); defined as 0 with no gradient when either
  // norm is below 1e-12 so zero-pooled rows cannot poison training with NaNs.
  Var cosine(Var u, Var v) {
    const auto& tu = val(u);
    const auto& tv = val(v);
    if (tu.shape.size() != 1 || tv.shape.size() != 1 || tu.numel() != tv.numel())
      throw std::invalid_argument("cosine: " + shape_str(tu.shape) + " vs " + shape_str(tv.shape));
    double dot = 0.0, nu = 0.0, nv = 0.0;
    for (std::size_t i = 0; i < tu.numel(); ++i) {
      dot += tu.values[i] * tv.values[i];
      nu += tu.values[i] * tu.values[i];
      nv += tv.values[i] * tv.values[i];
    }
    nu = std::sqrt(nu);
    nv = std::sqrt(nv);
    if (nu < 1e-12 || nv < 1e-12) {
      return push({1}, {0.0}, [](Tape&, const Node&) {});
    }
    const double cos = dot / (nu * nv);
    return push({1}, {cos}, [u, v, nu, nv, cos](Tape& t, const Node& n) {
      const auto& vu = t.node(u).value.values;
      const auto& vv = t.node(v).value.values;
      auto& gu = t.node(u).grad;
      auto& gv = t.node(v).grad;
      const double g = n.grad[0];
      for (std::size_t i = 0; i < vu.size(); ++i) {
        gu[i] += g * (vv[i] / (nu * nv) - cos * vu[i] / (nu * nu));
        gv[i] += g * (vu[i] / (nu * nv) - cos * vv[i] / (nv * nv));
      }
    });
  }

  // --- reverse pass ---------------------------------------------------------

  // Resets node gradients, seeds d(loss)/d(loss)=1, and replays adjoints in
  // reverse creation order. Running it twice yields identical gradients.
  void backward(Var loss) {
    Node& l = node(loss);
    if (l.value.numel() != 1)
      throw std::invalid_argument("backward: loss must be scalar, got " + shape_str(l.value.shape));
    for (auto& n : nodes_) n.grad.assign(n.value.numel(), 0.0);
    l.grad[0] = 1.0;
    for (std::size_t i = nodes_.size(); i-- > 0;) {
      if (nodes_[i].backward_fn) nodes_[i].backward_fn(*this, nodes_[i]);
    }
  }

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    std::vector<double> grad;
    std::function<void(Tape&, const Node&)> backward_fn;
  };

  std::uint32_t check(Var v) const {
    if (!v.valid() || v.id >= nodes_.size()) throw std::out_of_range("Tape: invalid var");
    return v.id;
  }

  Node& node(Var v) { return nodes_[check(v)]; }
  const Tensor& val(Var v) const { return nodes_[check(v)].value; }

  Var push(std::vector<std::size_t> shape, std::vector<double> values,
           std::function<void(Tape&, const Node&)> fn) {
    Node n;
    n.value.shape = std::move(shape);
    n.value.values = std::move(values);
    n.grad.assign(n.value.numel(), 0.0);
    n.backward_fn = std::move(fn);
    nodes_.push_back(std::move(n));
    return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
  }

  template <typename F, typename G>
  Var unary(Var a, F&& f, G&& df) {
    const auto& ta = val(a);
    std::vector<double> out(ta.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(ta.values[i]);
    return push(ta.shape, std::move(out), [a, df](Tape& t, const Node& n) {
      const auto& x = t.node(a).value.values;
      const auto& y = n.value.values;
      for (std::size_t i = 0; i < x.size(); ++i) t.node(a).grad[i] += n.grad[i] * df(x[i], y[i]);
    });
  }

  void require_same(const char* op, Var a, Var b) const {
    const auto& ta = val(a);
    const auto& tb = val(b);
    if (ta.shape != tb.shape)
      throw std::invalid_argument(std::string(op) + ": " + shape_str(ta.shape) + " vs " +
                                  shape_str(tb.shape));
  }

  Var softmax_impl(Var a, std::size_t axis, bool log_form) {
    const auto& ta = val(a);
    std::size_t groups, len, gstride, estride;
    if (ta.shape.size() == 1) {
      groups = 1, len = ta.shape[0], gstride = 0, estride = 1;
    } else if (ta.shape.size() == 2 && axis == 1) {
      groups = ta.shape[0], len = ta.shape[1], gstride = ta.shape[1], estride = 1;
    } else if (ta.shape.size() == 2 && axis == 0) {
      groups = ta.shape[1], len = ta.shape[0], gstride = 1, estride = ta.shape[1];
    } else {
      throw std::invalid_argument("softmax: " + shape_str(ta.shape) + " axis " + std::to_string(axis));
    }
    std::vector<double> out(ta.numel());
    for (std::size_t g = 0; g < groups; ++g) {
      double mx = -HUGE_VAL;
      for (std::size_t e = 0; e < len; ++e) mx = std::max(mx, ta.values[g * gstride + e * estride]);
      double z = 0.0;
      for (std::size_t e = 0; e < len; ++e) z += std::exp(ta.values[g * gstride + e * estride] - mx);
      const double logz = std::log(z) + mx;
      for (std::size_t e = 0; e < len; ++e) {
        const double lp = ta.values[g * gstride + e * estride] - logz;
        out[g * gstride + e * estride] = log_form ? lp : std::exp(lp);
      }
    }
    return push(ta.shape, std::move(out),
                [a, groups, len, gstride, estride, log_form](Tape& t, const Node& n) {
                  auto& ga = t.node(a).grad;
                  const auto& y = n.value.values;
                  for (std::size_t g = 0; g < groups; ++g) {
                    double dot = 0.0;
                    for (std::size_t e = 0; e < len; ++e) {
                      const std::size_t i = g * gstride + e * estride;
                      dot += n.grad[i] * (log_form ? 1.0 : y[i]);
                    }
                    for (std::size_t e = 0; e < len; ++e) {
                      const std::size_t i = g * gstride + e * estride;
                      if (log_form)
                        ga[i] += n.grad[i] - std::exp(y[i]) * dot;
                      else
                        ga[i] += y[i] * (n.grad[i] - dot);
                    }
                  }
                });
  }

  std::vector<Node> nodes_;
};

// ---------------------------------------------------------------------------
// Gradient checking

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_param = 0;
  std::size_t worst_component = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

// Central-difference check of already-populated analytic gradients.
// `value_fn` must recompute the scalar objective from the params' current
// values; relative error uses a max(1, |analytic|, |numeric|) denominator.
template <typename F>
GradCheckResult grad_check(F&& value_fn, std::span<Tensor* const> params, double fd_step) {
  GradCheckResult r;
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor& t = *params[p];
    t.ensure_grad();
    for (std::size_t i = 0; i < t.numel(); ++i) {
      const double saved = t.values[i];
      t.values[i] = saved + fd_step;
      const double fp = value_fn();
      t.values[i] = saved - fd_step;
      const double fm = value_fn();
      t.values[i] = saved;
      const double numeric = (fp - fm) / (2.0 * fd_step);
      const double analytic = t.grad[i];
      const double denom = std::max({1.0, std::fabs(analytic), std::fabs(numeric)});
      const double rel = std::fabs(analytic - numeric) / denom;
      if (rel > r.max_rel_error) {
        r.max_rel_error = rel;
        r.worst_param = p;
        r.worst_component = i;
        r.analytic = analytic;
        r.numeric = numeric;
      }
    }
  }
  return r;
}

}  // namespace textmend
