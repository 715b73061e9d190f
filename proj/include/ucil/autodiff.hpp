#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ucil/tensor.hpp"

namespace ucil {

// Handle to a node on a Tape. Only valid for the tape that produced it.
struct Var {
  std::int32_t id = -1;
  bool valid() const { return id >= 0; }
};

enum class Prim : std::uint8_t {
  Leaf,        // differentiable input (parameter)
  Constant,    // recorded input that never receives a gradient
  Matmul,      // (m x k) @ (k x n)
  Conv1d,      // temporal conv: x (T x Cin), w (Cout x Cin x K), b (Cout) -> (T x Cout)
  Relu,
  Sigmoid,
  Add,         // elementwise, same shape
  Sub,
  Mul,
  MeanAxis,    // mean over one axis; drops that axis
  L2NormAxis,  // slice-wise L2 normalization along one axis
  SquaredError,// scalar mean of (a - b)^2 over all elements
  Log,
};

const char* prim_name(Prim p);

// Gradients from one backward pass, indexed by tape node. Leaves the output
// never reached hold zeros of the leaf's shape.
class Gradients {
 public:
  explicit Gradients(std::size_t n) : grads_(n) {}
  const Tensor& wrt(Var v) const { return grads_[static_cast<std::size_t>(v.id)]; }
  Tensor& slot(std::size_t i) { return grads_[i]; }

 private:
  std::vector<Tensor> grads_;
};

// Append-only recording of primitive applications. Node inputs always precede
// the node itself, so one reverse sweep is a valid backward order.
class Tape {
 public:
  Var leaf(Tensor value);
  Var constant(Tensor value);

  Var matmul(Var a, Var b);
  Var conv1d(Var x, Var w, Var b);
  Var relu(Var x);
  Var sigmoid(Var x);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var mean_axis(Var x, std::size_t axis);
  Var l2_normalize(Var x, std::size_t axis);
  Var squared_error(Var a, Var b);
  Var log(Var x);

  const Tensor& value(Var v) const;
  std::size_t size() const { return nodes_.size(); }
  bool is_leaf(Var v) const;

  // Reverse-mode sweep from a scalar output. Deterministic: the accumulation
  // order is fixed by node order.
  Gradients backward(Var scalar_output) const;

  // Recomputes every non-input node from its recorded inputs and compares
  // against the stored activations. Bitwise equality is the contract.
  bool replay_matches() const;

 private:
  struct Node {
    Prim kind;
    Var in0, in1, in2;
    std::size_t axis = 0;
    Tensor out;
  };

  Var push(Node n);
  const Tensor& val(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].out; }
  void check_var(Var v, const char* prim) const;
  Tensor eval(const Node& n) const;

  std::vector<Node> nodes_;
};

// Max over coordinates of |analytic - numeric| / max(1e-8, |analytic| + |numeric|),
// with numeric gradients from central differences of step eps. The function
// must build a scalar output from the given leaves.
using ScalarFn = std::function<Var(Tape&, const std::vector<Var>&)>;
double grad_check(const ScalarFn& fn, const std::vector<Tensor>& point, double eps);

// --- kernels (shared with eval/inference paths; deterministic loops) ---
namespace kernels {
// c (m x n) = a (m x k) @ b (k x n); c must be zero-initialized by caller when accumulate=false.
void matmul(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
            std::size_t n, bool accumulate);
Tensor conv1d_forward(const Tensor& x, const Tensor& w, const Tensor& b);
}  // namespace kernels

}  // namespace ucil
