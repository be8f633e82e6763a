// Reverse-mode automatic differentiation on a define-by-run tape.
//
// Values are evaluated eagerly as nodes are recorded, so the tape doubles as
// the forward evaluator. Every forward result is checked for NaN/Inf.
// Elementwise binary ops broadcast only over a leading batch dimension:
// (B, n) op (n) is legal, anything fancier is a shape error.

#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "invbasin/errors.hpp"
#include "invbasin/tensor.hpp"

namespace invbasin::ad {

enum class Op : std::uint8_t {
  kLeaf,
  kConst,
  kAdd,
  kSub,
  kMul,
  kDiv,
  kMatmul,
  kMatmulNT,  // a * b^T
  kTranspose,
  kConcatCols,
  kSlice,
  kSigmoid,
  kTanh,
  kRelu,
  kSoftplus,
  kExp,
  kLog,
  kSqrt,
  kSquare,
  kSum,
  kMean,
  kSumRows,
  kDiagPart,
  kScaleRows,
  kScalarMul,
  kScalarAdd,
};

const char* op_name(Op op);

struct Value {
  int idx = -1;
  bool valid() const { return idx >= 0; }
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Differentiable input (parameter). The tensor is copied onto the tape.
  Value leaf(const Tensor& value);
  // Non-differentiable input.
  Value constant(Tensor value);

  Value add(Value a, Value b);
  Value sub(Value a, Value b);
  Value mul(Value a, Value b);
  Value div(Value a, Value b);

  // (m,k)*(k,n) -> (m,n)
  Value matmul(Value a, Value b);
  // (m,k)*(n,k)^T -> (m,n); the natural orientation for (out,in) weights.
  Value matmul_nt(Value a, Value b);
  Value transpose(Value a);
  // (m,n1) ++ (m,n2) -> (m,n1+n2)
  Value concat_cols(Value a, Value b);
  // Rows [r0,r1) and columns [c0,c1) of a rank-2 tensor.
  Value slice(Value a, std::size_t r0, std::size_t r1, std::size_t c0,
              std::size_t c1);

  Value sigmoid(Value a);
  Value tanh(Value a);
  Value relu(Value a);
  Value softplus(Value a);
  Value exp(Value a);
  Value log(Value a);
  Value sqrt(Value a);
  Value square(Value a);

  // Reductions. sum/mean collapse to a rank-0 scalar.
  Value sum(Value a);
  Value mean(Value a);
  // (m,n) -> (m,): per-row sum.
  Value sum_rows(Value a);
  // (n,n) -> (n,): main diagonal.
  Value diag_part(Value a);
  // out[i,j] = m[i,j] * v[i] for m:(r,c), v:(r,)
  Value scale_rows(Value m, Value v);

  Value scalar_mul(Value a, double c);
  Value scalar_add(Value a, double c);

  // The reference is invalidated by the next op recorded on this tape.
  const Tensor& value(Value v) const { return node(v.idx).value; }

  // Reverse pass from a scalar loss. May be called once per tape.
  void backward(Value loss);

  // Adjoint of a node after backward(); zeros if the node was not reached.
  Tensor grad(Value v) const;

  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Op op;
    bool requires_grad = false;
    std::array<int, 2> in = {-1, -1};
    std::array<std::size_t, 4> aux = {0, 0, 0, 0};
    double scalar = 0.0;
    Tensor value;
    Tensor adjoint;  // allocated during backward
  };

  Node& node(int idx) { return nodes_[static_cast<std::size_t>(idx)]; }
  const Node& node(int idx) const {
    return nodes_[static_cast<std::size_t>(idx)];
  }

  Value push(Node n);
  Value unary(Op op, Value a, const std::function<double(double)>& f);
  Value binary(Op op, Value a, Value b);
  void check_finite(const Tensor& t, Op op) const;
  Tensor& adjoint_of(int idx);

  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

// Central-difference gradient audit. `build` must construct a scalar loss
// from the given parameter tensors on a fresh tape; every parameter entry is
// perturbed by +/-step and the central difference is compared against the
// reverse-mode gradient. Returns the worst relative error, with denominator
// max(|g|, 1e-8).
double finite_diff_check(
    const std::function<Value(Tape&, const std::vector<Value>&)>& build,
    const std::vector<Tensor>& params, double step);

}  // namespace invbasin::ad
