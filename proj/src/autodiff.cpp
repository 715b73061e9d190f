#include "ucil/autodiff.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

namespace ucil {

const char* prim_name(Prim p) {
  switch (p) {
    case Prim::Leaf: return "leaf";
    case Prim::Constant: return "constant";
    case Prim::Matmul: return "matmul";
    case Prim::Conv1d: return "conv1d";
    case Prim::Relu: return "relu";
    case Prim::Sigmoid: return "sigmoid";
    case Prim::Add: return "add";
    case Prim::Sub: return "sub";
    case Prim::Mul: return "mul";
    case Prim::MeanAxis: return "mean_axis";
    case Prim::L2NormAxis: return "l2_normalize";
    case Prim::SquaredError: return "squared_error";
    case Prim::Log: return "log";
  }
  return "?";
}

namespace {

[[noreturn]] void shape_error(const char* prim, const std::string& detail) {
  throw std::invalid_argument(std::string(prim) + ": " + detail);
}

void require_same_shape(const char* prim, const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) {
    shape_error(prim, "shape mismatch " + shape_str(a.shape) + " vs " + shape_str(b.shape));
  }
}

double stable_sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Strides for iterating one axis of a row-major tensor: the axis has `len`
// slices of `inner` contiguous runs repeated `outer` times.
struct AxisSplit {
  std::size_t outer, len, inner;
};

AxisSplit split_axis(const std::vector<std::size_t>& shape, std::size_t axis) {
  AxisSplit s{1, shape[axis], 1};
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

std::vector<std::size_t> drop_axis(const std::vector<std::size_t>& shape, std::size_t axis) {
  std::vector<std::size_t> out;
  out.reserve(shape.size() - 1);
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i != axis) out.push_back(shape[i]);
  }
  return out;
}

}  // namespace

namespace kernels {

void matmul(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
            std::size_t n, bool accumulate) {
  if (!accumulate) std::memset(c, 0, m * n * sizeof(double));
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// Same-length temporal conv with zero padding of (K-1)/2 on both sides,
// lowered to a matmul over unrolled windows.
Tensor conv1d_forward(const Tensor& x, const Tensor& w, const Tensor& b) {
  const std::size_t t_len = x.shape[0], cin = x.shape[1];
  const std::size_t cout = w.shape[0], kw = w.shape[2];
  const std::size_t pad = (kw - 1) / 2;

  // rows: T x (K*Cin), kernel transposed to (K*Cin) x Cout
  std::vector<double> rows(t_len * kw * cin, 0.0);
  for (std::size_t t = 0; t < t_len; ++t) {
    double* r = rows.data() + t * kw * cin;
    for (std::size_t k = 0; k < kw; ++k) {
      const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + k) - static_cast<std::ptrdiff_t>(pad);
      if (src < 0 || src >= static_cast<std::ptrdiff_t>(t_len)) continue;
      std::memcpy(r + k * cin, x.data.data() + static_cast<std::size_t>(src) * cin,
                  cin * sizeof(double));
    }
  }
  std::vector<double> wt(kw * cin * cout);
  for (std::size_t o = 0; o < cout; ++o) {
    for (std::size_t ci = 0; ci < cin; ++ci) {
      for (std::size_t k = 0; k < kw; ++k) {
        wt[(k * cin + ci) * cout + o] = w.at(o, ci, k);
      }
    }
  }
  Tensor out({t_len, cout});
  matmul(rows.data(), wt.data(), out.data.data(), t_len, kw * cin, cout, false);
  for (std::size_t t = 0; t < t_len; ++t) {
    for (std::size_t o = 0; o < cout; ++o) out.at(t, o) += b.at(o);
  }
  return out;
}

}  // namespace kernels

// ---------------------------------------------------------------------------
// Tape
// ---------------------------------------------------------------------------

Var Tape::push(Node n) {
  if (n.kind != Prim::Leaf && n.kind != Prim::Constant && !n.out.all_finite()) {
    throw std::runtime_error(std::string(prim_name(n.kind)) +
                             ": non-finite value in result (inputs out of the primitive's domain)");
  }
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::int32_t>(nodes_.size() - 1)};
}

void Tape::check_var(Var v, const char* prim) const {
  if (!v.valid() || static_cast<std::size_t>(v.id) >= nodes_.size()) {
    shape_error(prim, "invalid tape handle");
  }
}

Var Tape::leaf(Tensor value) { return push({Prim::Leaf, {}, {}, {}, 0, std::move(value)}); }

Var Tape::constant(Tensor value) { return push({Prim::Constant, {}, {}, {}, 0, std::move(value)}); }

const Tensor& Tape::value(Var v) const {
  check_var(v, "value");
  return nodes_[static_cast<std::size_t>(v.id)].out;
}

bool Tape::is_leaf(Var v) const {
  check_var(v, "is_leaf");
  return nodes_[static_cast<std::size_t>(v.id)].kind == Prim::Leaf;
}

Var Tape::matmul(Var a, Var b) {
  check_var(a, "matmul");
  check_var(b, "matmul");
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  if (ta.rank() != 2 || tb.rank() != 2 || ta.shape[1] != tb.shape[0]) {
    shape_error("matmul", "incompatible shapes " + shape_str(ta.shape) + " @ " + shape_str(tb.shape));
  }
  Tensor out({ta.shape[0], tb.shape[1]});
  kernels::matmul(ta.data.data(), tb.data.data(), out.data.data(), ta.shape[0], ta.shape[1],
                  tb.shape[1], false);
  return push({Prim::Matmul, a, b, {}, 0, std::move(out)});
}

Var Tape::conv1d(Var x, Var w, Var b) {
  check_var(x, "conv1d");
  check_var(w, "conv1d");
  check_var(b, "conv1d");
  const Tensor& tx = val(x);
  const Tensor& tw = val(w);
  const Tensor& tb = val(b);
  if (tx.rank() != 2 || tw.rank() != 3 || tb.rank() != 1) {
    shape_error("conv1d", "expects x [TxCin], w [CoutxCinxK], b [Cout]; got " +
                              shape_str(tx.shape) + ", " + shape_str(tw.shape) + ", " +
                              shape_str(tb.shape));
  }
  if (tw.shape[1] != tx.shape[1] || tb.shape[0] != tw.shape[0]) {
    shape_error("conv1d", "channel mismatch " + shape_str(tx.shape) + ", " + shape_str(tw.shape) +
                              ", " + shape_str(tb.shape));
  }
  if (tw.shape[2] % 2 == 0) {
    shape_error("conv1d", "kernel width must be odd, got " + std::to_string(tw.shape[2]));
  }
  return push({Prim::Conv1d, x, w, b, 0, kernels::conv1d_forward(tx, tw, tb)});
}

Var Tape::relu(Var x) {
  check_var(x, "relu");
  Tensor out = val(x);
  for (double& v : out.data) v = v > 0.0 ? v : 0.0;
  return push({Prim::Relu, x, {}, {}, 0, std::move(out)});
}

Var Tape::sigmoid(Var x) {
  check_var(x, "sigmoid");
  Tensor out = val(x);
  for (double& v : out.data) v = stable_sigmoid(v);
  return push({Prim::Sigmoid, x, {}, {}, 0, std::move(out)});
}

Var Tape::add(Var a, Var b) {
  check_var(a, "add");
  check_var(b, "add");
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  require_same_shape("add", ta, tb);
  Tensor out = ta;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += tb.data[i];
  return push({Prim::Add, a, b, {}, 0, std::move(out)});
}

Var Tape::sub(Var a, Var b) {
  check_var(a, "sub");
  check_var(b, "sub");
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  require_same_shape("sub", ta, tb);
  Tensor out = ta;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] -= tb.data[i];
  return push({Prim::Sub, a, b, {}, 0, std::move(out)});
}

Var Tape::mul(Var a, Var b) {
  check_var(a, "mul");
  check_var(b, "mul");
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  require_same_shape("mul", ta, tb);
  Tensor out = ta;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= tb.data[i];
  return push({Prim::Mul, a, b, {}, 0, std::move(out)});
}

Var Tape::mean_axis(Var x, std::size_t axis) {
  check_var(x, "mean_axis");
  const Tensor& tx = val(x);
  if (axis >= tx.rank()) {
    shape_error("mean_axis", "axis " + std::to_string(axis) + " out of range for " +
                                 shape_str(tx.shape));
  }
  const AxisSplit s = split_axis(tx.shape, axis);
  Tensor out(drop_axis(tx.shape, axis));
  const double inv = 1.0 / static_cast<double>(s.len);
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t i = 0; i < s.inner; ++i) {
      double acc = 0.0;
      for (std::size_t a = 0; a < s.len; ++a) acc += tx.data[(o * s.len + a) * s.inner + i];
      out.data[o * s.inner + i] = acc * inv;
    }
  }
  return push({Prim::MeanAxis, x, {}, {}, axis, std::move(out)});
}

Var Tape::l2_normalize(Var x, std::size_t axis) {
  check_var(x, "l2_normalize");
  const Tensor& tx = val(x);
  if (axis >= tx.rank()) {
    shape_error("l2_normalize", "axis " + std::to_string(axis) + " out of range for " +
                                    shape_str(tx.shape));
  }
  const AxisSplit s = split_axis(tx.shape, axis);
  Tensor out(tx.shape);
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t i = 0; i < s.inner; ++i) {
      double sq = 0.0;
      for (std::size_t a = 0; a < s.len; ++a) {
        const double v = tx.data[(o * s.len + a) * s.inner + i];
        sq += v * v;
      }
      if (sq == 0.0) {
        throw std::runtime_error("l2_normalize: zero-norm slice");
      }
      const double inv = 1.0 / std::sqrt(sq);
      for (std::size_t a = 0; a < s.len; ++a) {
        const std::size_t idx = (o * s.len + a) * s.inner + i;
        out.data[idx] = tx.data[idx] * inv;
      }
    }
  }
  return push({Prim::L2NormAxis, x, {}, {}, axis, std::move(out)});
}

Var Tape::squared_error(Var a, Var b) {
  check_var(a, "squared_error");
  check_var(b, "squared_error");
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  require_same_shape("squared_error", ta, tb);
  double acc = 0.0;
  for (std::size_t i = 0; i < ta.data.size(); ++i) {
    const double d = ta.data[i] - tb.data[i];
    acc += d * d;
  }
  acc /= static_cast<double>(ta.data.size());
  return push({Prim::SquaredError, a, b, {}, 0, Tensor::scalar(acc)});
}

Var Tape::log(Var x) {
  check_var(x, "log");
  Tensor out = val(x);
  for (double& v : out.data) v = std::log(v);
  return push({Prim::Log, x, {}, {}, 0, std::move(out)});
}

// ---------------------------------------------------------------------------
// backward
// ---------------------------------------------------------------------------

Gradients Tape::backward(Var scalar_output) const {
  check_var(scalar_output, "backward");
  const std::size_t root = static_cast<std::size_t>(scalar_output.id);
  if (!nodes_[root].out.shape.empty()) {
    throw std::invalid_argument("backward: output must be a scalar, got shape " +
                                shape_str(nodes_[root].out.shape));
  }

  // Adjoints allocated lazily on first touch; reachability tracked to skip
  // untouched subgraphs.
  std::vector<Tensor> adj(nodes_.size());
  std::vector<char> reached(nodes_.size(), 0);
  adj[root] = Tensor::scalar(1.0);
  reached[root] = 1;

  auto grad_of = [&](Var v) -> Tensor& {
    Tensor& t = adj[static_cast<std::size_t>(v.id)];
    if (t.data.empty() && !nodes_[static_cast<std::size_t>(v.id)].out.shape.empty()) {
      t = Tensor(nodes_[static_cast<std::size_t>(v.id)].out.shape);
    } else if (t.data.empty()) {
      t = Tensor::scalar(0.0);
    }
    reached[static_cast<std::size_t>(v.id)] = 1;
    return t;
  };

  for (std::size_t n = root + 1; n-- > 0;) {
    if (!reached[n] || adj[n].data.empty()) continue;
    const Node& node = nodes_[n];
    const Tensor& gy = adj[n];
    switch (node.kind) {
      case Prim::Leaf:
      case Prim::Constant:
        break;
      case Prim::Matmul: {
        const Tensor& a = val(node.in0);
        const Tensor& b = val(node.in1);
        const std::size_t m = a.shape[0], k = a.shape[1], nn = b.shape[1];
        {
          Tensor& ga = grad_of(node.in0);  // gy (m x n) @ b^T (n x k)
          for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < nn; ++j) {
              const double g = gy.at(i, j);
              for (std::size_t p = 0; p < k; ++p) ga.at(i, p) += g * b.at(p, j);
            }
          }
        }
        {
          Tensor& gb = grad_of(node.in1);  // a^T (k x m) @ gy (m x n)
          for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t p = 0; p < k; ++p) {
              const double av = a.at(i, p);
              for (std::size_t j = 0; j < nn; ++j) gb.at(p, j) += av * gy.at(i, j);
            }
          }
        }
        break;
      }
      case Prim::Conv1d: {
        const Tensor& x = val(node.in0);
        const Tensor& w = val(node.in1);
        const std::size_t t_len = x.shape[0], cin = x.shape[1];
        const std::size_t cout = w.shape[0], kw = w.shape[2];
        const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>((kw - 1) / 2);
        Tensor& gx = grad_of(node.in0);
        Tensor& gw = grad_of(node.in1);
        Tensor& gb = grad_of(node.in2);
        for (std::size_t t = 0; t < t_len; ++t) {
          for (std::size_t o = 0; o < cout; ++o) {
            const double g = gy.at(t, o);
            gb.at(o) += g;
            for (std::size_t k = 0; k < kw; ++k) {
              const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + k) - pad;
              if (src < 0 || src >= static_cast<std::ptrdiff_t>(t_len)) continue;
              const std::size_t s = static_cast<std::size_t>(src);
              for (std::size_t ci = 0; ci < cin; ++ci) {
                gw.at(o, ci, k) += g * x.at(s, ci);
                gx.at(s, ci) += g * w.at(o, ci, k);
              }
            }
          }
        }
        break;
      }
      case Prim::Relu: {
        const Tensor& x = val(node.in0);
        Tensor& gx = grad_of(node.in0);
        for (std::size_t i = 0; i < x.data.size(); ++i) {
          if (x.data[i] > 0.0) gx.data[i] += gy.data[i];
        }
        break;
      }
      case Prim::Sigmoid: {
        const Tensor& y = node.out;
        Tensor& gx = grad_of(node.in0);
        for (std::size_t i = 0; i < y.data.size(); ++i) {
          gx.data[i] += gy.data[i] * y.data[i] * (1.0 - y.data[i]);
        }
        break;
      }
      case Prim::Add: {
        Tensor& ga = grad_of(node.in0);
        for (std::size_t i = 0; i < gy.data.size(); ++i) ga.data[i] += gy.data[i];
        Tensor& gb = grad_of(node.in1);
        for (std::size_t i = 0; i < gy.data.size(); ++i) gb.data[i] += gy.data[i];
        break;
      }
      case Prim::Sub: {
        Tensor& ga = grad_of(node.in0);
        for (std::size_t i = 0; i < gy.data.size(); ++i) ga.data[i] += gy.data[i];
        Tensor& gb = grad_of(node.in1);
        for (std::size_t i = 0; i < gy.data.size(); ++i) gb.data[i] -= gy.data[i];
        break;
      }
      case Prim::Mul: {
        const Tensor& a = val(node.in0);
        const Tensor& b = val(node.in1);
        Tensor& ga = grad_of(node.in0);
        for (std::size_t i = 0; i < gy.data.size(); ++i) ga.data[i] += gy.data[i] * b.data[i];
        Tensor& gb = grad_of(node.in1);
        for (std::size_t i = 0; i < gy.data.size(); ++i) gb.data[i] += gy.data[i] * a.data[i];
        break;
      }
      case Prim::MeanAxis: {
        const Tensor& x = val(node.in0);
        const AxisSplit s = split_axis(x.shape, node.axis);
        const double inv = 1.0 / static_cast<double>(s.len);
        Tensor& gx = grad_of(node.in0);
        for (std::size_t o = 0; o < s.outer; ++o) {
          for (std::size_t i = 0; i < s.inner; ++i) {
            const double g = gy.data[o * s.inner + i] * inv;
            for (std::size_t a = 0; a < s.len; ++a) {
              gx.data[(o * s.len + a) * s.inner + i] += g;
            }
          }
        }
        break;
      }
      case Prim::L2NormAxis: {
        const Tensor& x = val(node.in0);
        const Tensor& y = node.out;
        const AxisSplit s = split_axis(x.shape, node.axis);
        Tensor& gx = grad_of(node.in0);
        for (std::size_t o = 0; o < s.outer; ++o) {
          for (std::size_t i = 0; i < s.inner; ++i) {
            double sq = 0.0, dot = 0.0;
            for (std::size_t a = 0; a < s.len; ++a) {
              const std::size_t idx = (o * s.len + a) * s.inner + i;
              sq += x.data[idx] * x.data[idx];
              dot += gy.data[idx] * y.data[idx];
            }
            const double inv_r = 1.0 / std::sqrt(sq);
            for (std::size_t a = 0; a < s.len; ++a) {
              const std::size_t idx = (o * s.len + a) * s.inner + i;
              gx.data[idx] += (gy.data[idx] - y.data[idx] * dot) * inv_r;
            }
          }
        }
        break;
      }
      case Prim::SquaredError: {
        const Tensor& a = val(node.in0);
        const Tensor& b = val(node.in1);
        const double g = gy.data[0] * 2.0 / static_cast<double>(a.data.size());
        Tensor& ga = grad_of(node.in0);
        for (std::size_t i = 0; i < a.data.size(); ++i) ga.data[i] += g * (a.data[i] - b.data[i]);
        Tensor& gb = grad_of(node.in1);
        for (std::size_t i = 0; i < a.data.size(); ++i) gb.data[i] -= g * (a.data[i] - b.data[i]);
        break;
      }
      case Prim::Log: {
        const Tensor& x = val(node.in0);
        Tensor& gx = grad_of(node.in0);
        for (std::size_t i = 0; i < x.data.size(); ++i) gx.data[i] += gy.data[i] / x.data[i];
        break;
      }
    }
  }

  // Unreached leaves get zero gradients of the right shape.
  Gradients out(nodes_.size());
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (!adj[i].data.empty()) {
      out.slot(i) = std::move(adj[i]);
    } else if (nodes_[i].kind == Prim::Leaf) {
      out.slot(i) = Tensor(nodes_[i].out.shape);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// replay
// ---------------------------------------------------------------------------

Tensor Tape::eval(const Node& n) const {
  Tape scratch;
  switch (n.kind) {
    case Prim::Leaf:
    case Prim::Constant:
      return n.out;
    case Prim::Matmul:
      return scratch.value(scratch.matmul(scratch.constant(val(n.in0)), scratch.constant(val(n.in1))));
    case Prim::Conv1d:
      return scratch.value(scratch.conv1d(scratch.constant(val(n.in0)), scratch.constant(val(n.in1)),
                                          scratch.constant(val(n.in2))));
    case Prim::Relu:
      return scratch.value(scratch.relu(scratch.constant(val(n.in0))));
    case Prim::Sigmoid:
      return scratch.value(scratch.sigmoid(scratch.constant(val(n.in0))));
    case Prim::Add:
      return scratch.value(scratch.add(scratch.constant(val(n.in0)), scratch.constant(val(n.in1))));
    case Prim::Sub:
      return scratch.value(scratch.sub(scratch.constant(val(n.in0)), scratch.constant(val(n.in1))));
    case Prim::Mul:
      return scratch.value(scratch.mul(scratch.constant(val(n.in0)), scratch.constant(val(n.in1))));
    case Prim::MeanAxis:
      return scratch.value(scratch.mean_axis(scratch.constant(val(n.in0)), n.axis));
    case Prim::L2NormAxis:
      return scratch.value(scratch.l2_normalize(scratch.constant(val(n.in0)), n.axis));
    case Prim::SquaredError:
      return scratch.value(
          scratch.squared_error(scratch.constant(val(n.in0)), scratch.constant(val(n.in1))));
    case Prim::Log:
      return scratch.value(scratch.log(scratch.constant(val(n.in0))));
  }
  throw std::logic_error("eval: unknown primitive");
}

bool Tape::replay_matches() const {
  for (const Node& n : nodes_) {
    if (n.kind == Prim::Leaf || n.kind == Prim::Constant) continue;
    const Tensor redo = eval(n);
    if (redo.shape != n.out.shape || redo.data != n.out.data) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// grad_check
// ---------------------------------------------------------------------------

double grad_check(const ScalarFn& fn, const std::vector<Tensor>& point, double eps) {
  Tape tape;
  std::vector<Var> leaves;
  leaves.reserve(point.size());
  for (const Tensor& t : point) leaves.push_back(tape.leaf(t));
  const Var out = fn(tape, leaves);
  if (!tape.value(out).shape.empty()) {
    throw std::invalid_argument("grad_check: function output must be scalar");
  }
  const Gradients grads = tape.backward(out);

  auto eval_at = [&fn](const std::vector<Tensor>& p) {
    Tape t;
    std::vector<Var> ls;
    ls.reserve(p.size());
    for (const Tensor& x : p) ls.push_back(t.leaf(x));
    return t.value(fn(t, ls)).data[0];
  };

  double worst = 0.0;
  std::vector<Tensor> probe = point;
  for (std::size_t li = 0; li < point.size(); ++li) {
    const Tensor& analytic = grads.wrt(leaves[li]);
    for (std::size_t i = 0; i < point[li].data.size(); ++i) {
      const double orig = probe[li].data[i];
      probe[li].data[i] = orig + eps;
      const double fp = eval_at(probe);
      probe[li].data[i] = orig - eps;
      const double fm = eval_at(probe);
      probe[li].data[i] = orig;
      const double numeric = (fp - fm) / (2.0 * eps);
      const double a = analytic.data[i];
      const double err = std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric));
      if (err > worst) worst = err;
    }
  }
  return worst;
}

}  // namespace ucil
