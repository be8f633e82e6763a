#include "invbasin/autodiff.hpp"

#include <Eigen/Core>

#include <cmath>
#include <cstdlib>

namespace invbasin::ad {

namespace {

using EMap = Eigen::Map<
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using EMapMut =
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

EMap as_matrix(const Tensor& t, std::size_t rows, std::size_t cols) {
  return EMap(t.data(), static_cast<Eigen::Index>(rows),
              static_cast<Eigen::Index>(cols));
}

EMapMut as_matrix(Tensor& t, std::size_t rows, std::size_t cols) {
  return EMapMut(t.data(), static_cast<Eigen::Index>(rows),
                 static_cast<Eigen::Index>(cols));
}

double stable_sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  double e = std::exp(x);
  return e / (1.0 + e);
}

double stable_softplus(double x) {
  // log(1 + exp(x)) without overflow on either tail.
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

// Broadcast classification for elementwise binary ops.
// 0: identical shapes; 1: b broadcast over a's leading dim; 2: the reverse.
int broadcast_mode(const Tensor& a, const Tensor& b) {
  if (a.shape() == b.shape()) return 0;
  auto tail_matches = [](const Tensor& big, const Tensor& small) {
    if (big.rank() != small.rank() + 1 || big.rank() < 2) return false;
    for (std::size_t i = 0; i < small.rank(); ++i) {
      if (big.shape()[i + 1] != small.shape()[i]) return false;
    }
    return true;
  };
  if (tail_matches(a, b)) return 1;
  if (tail_matches(b, a)) return 2;
  return -1;
}

}  // namespace

const char* op_name(Op op) {
  switch (op) {
    case Op::kLeaf: return "leaf";
    case Op::kConst: return "const";
    case Op::kAdd: return "add";
    case Op::kSub: return "sub";
    case Op::kMul: return "mul";
    case Op::kDiv: return "div";
    case Op::kMatmul: return "matmul";
    case Op::kMatmulNT: return "matmul_nt";
    case Op::kTranspose: return "transpose";
    case Op::kConcatCols: return "concat_cols";
    case Op::kSlice: return "slice";
    case Op::kSigmoid: return "sigmoid";
    case Op::kTanh: return "tanh";
    case Op::kRelu: return "relu";
    case Op::kSoftplus: return "softplus";
    case Op::kExp: return "exp";
    case Op::kLog: return "log";
    case Op::kSqrt: return "sqrt";
    case Op::kSquare: return "square";
    case Op::kSum: return "sum";
    case Op::kMean: return "mean";
    case Op::kSumRows: return "sum_rows";
    case Op::kDiagPart: return "diag_part";
    case Op::kScaleRows: return "scale_rows";
    case Op::kScalarMul: return "scalar_mul";
    case Op::kScalarAdd: return "scalar_add";
  }
  return "?";
}

void Tape::check_finite(const Tensor& t, Op op) const {
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (!std::isfinite(t[i])) {
      throw NumericError(std::string("non-finite value produced by op '") +
                         op_name(op) + "'");
    }
  }
}

Value Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return Value{static_cast<int>(nodes_.size()) - 1};
}

Value Tape::leaf(const Tensor& value) {
  check_finite(value, Op::kLeaf);
  Node n;
  n.op = Op::kLeaf;
  n.requires_grad = true;
  n.value = value;
  return push(std::move(n));
}

Value Tape::constant(Tensor value) {
  check_finite(value, Op::kConst);
  Node n;
  n.op = Op::kConst;
  n.requires_grad = false;
  n.value = std::move(value);
  return push(std::move(n));
}

Value Tape::binary(Op op, Value a, Value b) {
  const Tensor& ta = node(a.idx).value;
  const Tensor& tb = node(b.idx).value;
  int mode = broadcast_mode(ta, tb);
  if (mode < 0) {
    throw ShapeError(std::string("op '") + op_name(op) +
                     "': shapes do not conform: " + ta.shape_string() + " vs " +
                     tb.shape_string());
  }
  const Tensor& big = mode == 2 ? tb : ta;
  const Tensor& small = mode == 2 ? tb : ta;  // unused when mode == 0
  (void)small;
  Tensor out(big.shape());
  std::size_t inner = mode == 0 ? ta.size() : (mode == 1 ? tb.size() : ta.size());
  std::size_t lead = out.size() / std::max<std::size_t>(inner, 1);
  auto apply = [&](auto f) {
    if (mode == 0) {
      for (std::size_t i = 0; i < out.size(); ++i) f(out[i], ta[i], tb[i]);
    } else if (mode == 1) {
      for (std::size_t l = 0; l < lead; ++l)
        for (std::size_t j = 0; j < inner; ++j)
          f(out[l * inner + j], ta[l * inner + j], tb[j]);
    } else {
      for (std::size_t l = 0; l < lead; ++l)
        for (std::size_t j = 0; j < inner; ++j)
          f(out[l * inner + j], ta[j], tb[l * inner + j]);
    }
  };
  switch (op) {
    case Op::kAdd: apply([](double& o, double x, double y) { o = x + y; }); break;
    case Op::kSub: apply([](double& o, double x, double y) { o = x - y; }); break;
    case Op::kMul: apply([](double& o, double x, double y) { o = x * y; }); break;
    case Op::kDiv: apply([](double& o, double x, double y) { o = x / y; }); break;
    default: throw ContractError("binary() called with non-binary op");
  }
  check_finite(out, op);
  Node n;
  n.op = op;
  n.requires_grad = node(a.idx).requires_grad || node(b.idx).requires_grad;
  n.in = {a.idx, b.idx};
  n.aux[0] = static_cast<std::size_t>(mode);
  n.value = std::move(out);
  return push(std::move(n));
}

Value Tape::add(Value a, Value b) { return binary(Op::kAdd, a, b); }
Value Tape::sub(Value a, Value b) { return binary(Op::kSub, a, b); }
Value Tape::mul(Value a, Value b) { return binary(Op::kMul, a, b); }
Value Tape::div(Value a, Value b) { return binary(Op::kDiv, a, b); }

Value Tape::matmul(Value a, Value b) {
  const Tensor& ta = node(a.idx).value;
  const Tensor& tb = node(b.idx).value;
  if (ta.rank() != 2 || tb.rank() != 2 || ta.shape()[1] != tb.shape()[0]) {
    throw ShapeError("op 'matmul': shapes do not conform: " +
                     ta.shape_string() + " vs " + tb.shape_string());
  }
  Tensor out({ta.shape()[0], tb.shape()[1]});
  as_matrix(out, out.shape()[0], out.shape()[1]).noalias() =
      as_matrix(ta, ta.shape()[0], ta.shape()[1]) *
      as_matrix(tb, tb.shape()[0], tb.shape()[1]);
  check_finite(out, Op::kMatmul);
  Node n;
  n.op = Op::kMatmul;
  n.requires_grad = node(a.idx).requires_grad || node(b.idx).requires_grad;
  n.in = {a.idx, b.idx};
  n.value = std::move(out);
  return push(std::move(n));
}

Value Tape::matmul_nt(Value a, Value b) {
  const Tensor& ta = node(a.idx).value;
  const Tensor& tb = node(b.idx).value;
  if (ta.rank() != 2 || tb.rank() != 2 || ta.shape()[1] != tb.shape()[1]) {
    throw ShapeError("op 'matmul_nt': shapes do not conform: " +
                     ta.shape_string() + " vs " + tb.shape_string());
  }
  Tensor out({ta.shape()[0], tb.shape()[0]});
  as_matrix(out, out.shape()[0], out.shape()[1]).noalias() =
      as_matrix(ta, ta.shape()[0], ta.shape()[1]) *
      as_matrix(tb, tb.shape()[0], tb.shape()[1]).transpose();
  check_finite(out, Op::kMatmulNT);
  Node n;
  n.op = Op::kMatmulNT;
  n.requires_grad = node(a.idx).requires_grad || node(b.idx).requires_grad;
  n.in = {a.idx, b.idx};
  n.value = std::move(out);
  return push(std::move(n));
}

Value Tape::transpose(Value a) {
  const Tensor& ta = node(a.idx).value;
  if (ta.rank() != 2) {
    throw ShapeError("op 'transpose': expected rank-2, got " +
                     ta.shape_string());
  }
  Tensor out({ta.shape()[1], ta.shape()[0]});
  for (std::size_t i = 0; i < ta.shape()[0]; ++i)
    for (std::size_t j = 0; j < ta.shape()[1]; ++j)
      out.at(j, i) = ta.at(i, j);
  Node n;
  n.op = Op::kTranspose;
  n.requires_grad = node(a.idx).requires_grad;
  n.in = {a.idx, -1};
  n.value = std::move(out);
  return push(std::move(n));
}

Value Tape::concat_cols(Value a, Value b) {
  const Tensor& ta = node(a.idx).value;
  const Tensor& tb = node(b.idx).value;
  if (ta.rank() != 2 || tb.rank() != 2 || ta.shape()[0] != tb.shape()[0]) {
    throw ShapeError("op 'concat_cols': shapes do not conform: " +
                     ta.shape_string() + " vs " + tb.shape_string());
  }
  std::size_t rows = ta.shape()[0];
  std::size_t ca = ta.shape()[1];
  std::size_t cb = tb.shape()[1];
  Tensor out({rows, ca + cb});
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < ca; ++j) out.at(i, j) = ta.at(i, j);
    for (std::size_t j = 0; j < cb; ++j) out.at(i, ca + j) = tb.at(i, j);
  }
  Node n;
  n.op = Op::kConcatCols;
  n.requires_grad = node(a.idx).requires_grad || node(b.idx).requires_grad;
  n.in = {a.idx, b.idx};
  n.aux[0] = ca;
  n.value = std::move(out);
  return push(std::move(n));
}

Value Tape::slice(Value a, std::size_t r0, std::size_t r1, std::size_t c0,
                  std::size_t c1) {
  const Tensor& ta = node(a.idx).value;
  if (ta.rank() != 2 || r1 > ta.shape()[0] || c1 > ta.shape()[1] || r0 >= r1 ||
      c0 >= c1) {
    throw ShapeError("op 'slice': invalid block [" + std::to_string(r0) + "," +
                     std::to_string(r1) + ")x[" + std::to_string(c0) + "," +
                     std::to_string(c1) + ") of " + ta.shape_string());
  }
  Tensor out({r1 - r0, c1 - c0});
  for (std::size_t i = r0; i < r1; ++i)
    for (std::size_t j = c0; j < c1; ++j) out.at(i - r0, j - c0) = ta.at(i, j);
  Node n;
  n.op = Op::kSlice;
  n.requires_grad = node(a.idx).requires_grad;
  n.in = {a.idx, -1};
  n.aux = {r0, r1, c0, c1};
  n.value = std::move(out);
  return push(std::move(n));
}

Value Tape::unary(Op op, Value a, const std::function<double(double)>& f) {
  const Tensor& ta = node(a.idx).value;
  Tensor out(ta.shape());
  for (std::size_t i = 0; i < ta.size(); ++i) out[i] = f(ta[i]);
  check_finite(out, op);
  Node n;
  n.op = op;
  n.requires_grad = node(a.idx).requires_grad;
  n.in = {a.idx, -1};
  n.value = std::move(out);
  return push(std::move(n));
}

Value Tape::sigmoid(Value a) {
  return unary(Op::kSigmoid, a, stable_sigmoid);
}
Value Tape::tanh(Value a) {
  return unary(Op::kTanh, a, [](double x) { return std::tanh(x); });
}
Value Tape::relu(Value a) {
  return unary(Op::kRelu, a, [](double x) { return x > 0.0 ? x : 0.0; });
}
Value Tape::softplus(Value a) {
  return unary(Op::kSoftplus, a, stable_softplus);
}
Value Tape::exp(Value a) {
  return unary(Op::kExp, a, [](double x) { return std::exp(x); });
}
Value Tape::log(Value a) {
  return unary(Op::kLog, a, [](double x) { return std::log(x); });
}
Value Tape::sqrt(Value a) {
  return unary(Op::kSqrt, a, [](double x) { return std::sqrt(x); });
}
Value Tape::square(Value a) {
  return unary(Op::kSquare, a, [](double x) { return x * x; });
}

Value Tape::sum(Value a) {
  const Tensor& ta = node(a.idx).value;
  double s = 0.0;
  for (std::size_t i = 0; i < ta.size(); ++i) s += ta[i];
  Tensor out = Tensor::scalar(s);
  check_finite(out, Op::kSum);
  Node n;
  n.op = Op::kSum;
  n.requires_grad = node(a.idx).requires_grad;
  n.in = {a.idx, -1};
  n.value = std::move(out);
  return push(std::move(n));
}

Value Tape::mean(Value a) {
  const Tensor& ta = node(a.idx).value;
  if (ta.size() == 0) throw ShapeError("op 'mean': empty tensor");
  double s = 0.0;
  for (std::size_t i = 0; i < ta.size(); ++i) s += ta[i];
  Tensor out = Tensor::scalar(s / static_cast<double>(ta.size()));
  check_finite(out, Op::kMean);
  Node n;
  n.op = Op::kMean;
  n.requires_grad = node(a.idx).requires_grad;
  n.in = {a.idx, -1};
  n.value = std::move(out);
  return push(std::move(n));
}

Value Tape::sum_rows(Value a) {
  const Tensor& ta = node(a.idx).value;
  if (ta.rank() != 2) {
    throw ShapeError("op 'sum_rows': expected rank-2, got " +
                     ta.shape_string());
  }
  Tensor out({ta.shape()[0]});
  for (std::size_t i = 0; i < ta.shape()[0]; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < ta.shape()[1]; ++j) s += ta.at(i, j);
    out[i] = s;
  }
  check_finite(out, Op::kSumRows);
  Node n;
  n.op = Op::kSumRows;
  n.requires_grad = node(a.idx).requires_grad;
  n.in = {a.idx, -1};
  n.value = std::move(out);
  return push(std::move(n));
}

Value Tape::diag_part(Value a) {
  const Tensor& ta = node(a.idx).value;
  if (ta.rank() != 2 || ta.shape()[0] != ta.shape()[1]) {
    throw ShapeError("op 'diag_part': expected square matrix, got " +
                     ta.shape_string());
  }
  Tensor out({ta.shape()[0]});
  for (std::size_t i = 0; i < ta.shape()[0]; ++i) out[i] = ta.at(i, i);
  Node n;
  n.op = Op::kDiagPart;
  n.requires_grad = node(a.idx).requires_grad;
  n.in = {a.idx, -1};
  n.value = std::move(out);
  return push(std::move(n));
}

Value Tape::scale_rows(Value m, Value v) {
  const Tensor& tm = node(m.idx).value;
  const Tensor& tv = node(v.idx).value;
  if (tm.rank() != 2 || tv.rank() != 1 || tm.shape()[0] != tv.shape()[0]) {
    throw ShapeError("op 'scale_rows': shapes do not conform: " +
                     tm.shape_string() + " vs " + tv.shape_string());
  }
  Tensor out(tm.shape());
  for (std::size_t i = 0; i < tm.shape()[0]; ++i)
    for (std::size_t j = 0; j < tm.shape()[1]; ++j)
      out.at(i, j) = tm.at(i, j) * tv[i];
  check_finite(out, Op::kScaleRows);
  Node n;
  n.op = Op::kScaleRows;
  n.requires_grad = node(m.idx).requires_grad || node(v.idx).requires_grad;
  n.in = {m.idx, v.idx};
  n.value = std::move(out);
  return push(std::move(n));
}

Value Tape::scalar_mul(Value a, double c) {
  Value v = unary(Op::kScalarMul, a, [c](double x) { return x * c; });
  node(v.idx).scalar = c;
  return v;
}

Value Tape::scalar_add(Value a, double c) {
  Value v = unary(Op::kScalarAdd, a, [c](double x) { return x + c; });
  node(v.idx).scalar = c;
  return v;
}

Tensor& Tape::adjoint_of(int idx) {
  Node& n = node(idx);
  if (n.adjoint.empty()) n.adjoint = Tensor(n.value.shape());
  return n.adjoint;
}

void Tape::backward(Value loss) {
  if (backward_done_) {
    throw ContractError("backward() may be called once per tape");
  }
  backward_done_ = true;
  if (!loss.valid() || node(loss.idx).value.size() != 1) {
    throw ContractError("backward(): loss must be scalar, got shape " +
                        (loss.valid() ? node(loss.idx).value.shape_string()
                                      : std::string("<invalid>")));
  }
  adjoint_of(loss.idx)[0] = 1.0;

  for (int i = loss.idx; i >= 0; --i) {
    Node& n = node(i);
    if (!n.requires_grad || n.adjoint.empty()) continue;
    const Tensor& d = n.adjoint;
    switch (n.op) {
      case Op::kLeaf:
      case Op::kConst:
        break;
      case Op::kAdd:
      case Op::kSub:
      case Op::kMul:
      case Op::kDiv: {
        const Tensor& ta = node(n.in[0]).value;
        const Tensor& tb = node(n.in[1]).value;
        int mode = static_cast<int>(n.aux[0]);
        std::size_t inner = mode == 1 ? tb.size() : ta.size();
        std::size_t lead = d.size() / std::max<std::size_t>(inner, 1);
        bool need_a = node(n.in[0]).requires_grad;
        bool need_b = node(n.in[1]).requires_grad;
        Tensor* da = need_a ? &adjoint_of(n.in[0]) : nullptr;
        Tensor* db = need_b ? &adjoint_of(n.in[1]) : nullptr;
        auto a_at = [&](std::size_t l, std::size_t j) {
          return mode == 2 ? ta[j] : ta[l * inner + j];
        };
        auto b_at = [&](std::size_t l, std::size_t j) {
          return mode == 1 ? tb[j] : tb[l * inner + j];
        };
        auto da_at = [&](std::size_t l, std::size_t j) -> double& {
          return mode == 2 ? (*da)[j] : (*da)[l * inner + j];
        };
        auto db_at = [&](std::size_t l, std::size_t j) -> double& {
          return mode == 1 ? (*db)[j] : (*db)[l * inner + j];
        };
        for (std::size_t l = 0; l < lead; ++l) {
          for (std::size_t j = 0; j < inner; ++j) {
            double g = d[l * inner + j];
            switch (n.op) {
              case Op::kAdd:
                if (da) da_at(l, j) += g;
                if (db) db_at(l, j) += g;
                break;
              case Op::kSub:
                if (da) da_at(l, j) += g;
                if (db) db_at(l, j) -= g;
                break;
              case Op::kMul:
                if (da) da_at(l, j) += g * b_at(l, j);
                if (db) db_at(l, j) += g * a_at(l, j);
                break;
              case Op::kDiv: {
                double b = b_at(l, j);
                if (da) da_at(l, j) += g / b;
                if (db) db_at(l, j) -= g * a_at(l, j) / (b * b);
                break;
              }
              default: break;
            }
          }
        }
        break;
      }
      case Op::kMatmul: {
        const Tensor& ta = node(n.in[0]).value;
        const Tensor& tb = node(n.in[1]).value;
        std::size_t m = ta.shape()[0], k = ta.shape()[1], p = tb.shape()[1];
        if (node(n.in[0]).requires_grad) {
          Tensor& da = adjoint_of(n.in[0]);
          as_matrix(da, m, k).noalias() +=
              as_matrix(d, m, p) * as_matrix(tb, k, p).transpose();
        }
        if (node(n.in[1]).requires_grad) {
          Tensor& db = adjoint_of(n.in[1]);
          as_matrix(db, k, p).noalias() +=
              as_matrix(ta, m, k).transpose() * as_matrix(d, m, p);
        }
        break;
      }
      case Op::kMatmulNT: {
        // out = a * b^T, a:(m,k), b:(p,k), d:(m,p)
        const Tensor& ta = node(n.in[0]).value;
        const Tensor& tb = node(n.in[1]).value;
        std::size_t m = ta.shape()[0], k = ta.shape()[1], p = tb.shape()[0];
        if (node(n.in[0]).requires_grad) {
          Tensor& da = adjoint_of(n.in[0]);
          as_matrix(da, m, k).noalias() +=
              as_matrix(d, m, p) * as_matrix(tb, p, k);
        }
        if (node(n.in[1]).requires_grad) {
          Tensor& db = adjoint_of(n.in[1]);
          as_matrix(db, p, k).noalias() +=
              as_matrix(d, m, p).transpose() * as_matrix(ta, m, k);
        }
        break;
      }
      case Op::kTranspose: {
        Tensor& da = adjoint_of(n.in[0]);
        std::size_t r = da.shape()[0], c = da.shape()[1];
        for (std::size_t i2 = 0; i2 < r; ++i2)
          for (std::size_t j = 0; j < c; ++j) da.at(i2, j) += d.at(j, i2);
        break;
      }
      case Op::kConcatCols: {
        std::size_t ca = n.aux[0];
        std::size_t rows = d.shape()[0], cols = d.shape()[1];
        if (node(n.in[0]).requires_grad) {
          Tensor& da = adjoint_of(n.in[0]);
          for (std::size_t i2 = 0; i2 < rows; ++i2)
            for (std::size_t j = 0; j < ca; ++j) da.at(i2, j) += d.at(i2, j);
        }
        if (node(n.in[1]).requires_grad) {
          Tensor& db = adjoint_of(n.in[1]);
          for (std::size_t i2 = 0; i2 < rows; ++i2)
            for (std::size_t j = ca; j < cols; ++j)
              db.at(i2, j - ca) += d.at(i2, j);
        }
        break;
      }
      case Op::kSlice: {
        Tensor& da = adjoint_of(n.in[0]);
        for (std::size_t i2 = n.aux[0]; i2 < n.aux[1]; ++i2)
          for (std::size_t j = n.aux[2]; j < n.aux[3]; ++j)
            da.at(i2, j) += d.at(i2 - n.aux[0], j - n.aux[2]);
        break;
      }
      case Op::kSigmoid: {
        Tensor& da = adjoint_of(n.in[0]);
        for (std::size_t i2 = 0; i2 < d.size(); ++i2) {
          double s = n.value[i2];
          da[i2] += d[i2] * s * (1.0 - s);
        }
        break;
      }
      case Op::kTanh: {
        Tensor& da = adjoint_of(n.in[0]);
        for (std::size_t i2 = 0; i2 < d.size(); ++i2) {
          double y = n.value[i2];
          da[i2] += d[i2] * (1.0 - y * y);
        }
        break;
      }
      case Op::kRelu: {
        const Tensor& ta = node(n.in[0]).value;
        Tensor& da = adjoint_of(n.in[0]);
        for (std::size_t i2 = 0; i2 < d.size(); ++i2)
          if (ta[i2] > 0.0) da[i2] += d[i2];
        break;
      }
      case Op::kSoftplus: {
        const Tensor& ta = node(n.in[0]).value;
        Tensor& da = adjoint_of(n.in[0]);
        for (std::size_t i2 = 0; i2 < d.size(); ++i2)
          da[i2] += d[i2] * stable_sigmoid(ta[i2]);
        break;
      }
      case Op::kExp: {
        Tensor& da = adjoint_of(n.in[0]);
        for (std::size_t i2 = 0; i2 < d.size(); ++i2)
          da[i2] += d[i2] * n.value[i2];
        break;
      }
      case Op::kLog: {
        const Tensor& ta = node(n.in[0]).value;
        Tensor& da = adjoint_of(n.in[0]);
        for (std::size_t i2 = 0; i2 < d.size(); ++i2)
          da[i2] += d[i2] / ta[i2];
        break;
      }
      case Op::kSqrt: {
        Tensor& da = adjoint_of(n.in[0]);
        for (std::size_t i2 = 0; i2 < d.size(); ++i2)
          da[i2] += d[i2] * 0.5 / n.value[i2];
        break;
      }
      case Op::kSquare: {
        const Tensor& ta = node(n.in[0]).value;
        Tensor& da = adjoint_of(n.in[0]);
        for (std::size_t i2 = 0; i2 < d.size(); ++i2)
          da[i2] += d[i2] * 2.0 * ta[i2];
        break;
      }
      case Op::kSum: {
        Tensor& da = adjoint_of(n.in[0]);
        double g = d[0];
        for (std::size_t i2 = 0; i2 < da.size(); ++i2) da[i2] += g;
        break;
      }
      case Op::kMean: {
        Tensor& da = adjoint_of(n.in[0]);
        double g = d[0] / static_cast<double>(da.size());
        for (std::size_t i2 = 0; i2 < da.size(); ++i2) da[i2] += g;
        break;
      }
      case Op::kSumRows: {
        Tensor& da = adjoint_of(n.in[0]);
        std::size_t r = da.shape()[0], c = da.shape()[1];
        for (std::size_t i2 = 0; i2 < r; ++i2)
          for (std::size_t j = 0; j < c; ++j) da.at(i2, j) += d[i2];
        break;
      }
      case Op::kDiagPart: {
        Tensor& da = adjoint_of(n.in[0]);
        for (std::size_t i2 = 0; i2 < d.size(); ++i2) da.at(i2, i2) += d[i2];
        break;
      }
      case Op::kScaleRows: {
        const Tensor& tm = node(n.in[0]).value;
        const Tensor& tv = node(n.in[1]).value;
        std::size_t r = tm.shape()[0], c = tm.shape()[1];
        if (node(n.in[0]).requires_grad) {
          Tensor& dm = adjoint_of(n.in[0]);
          for (std::size_t i2 = 0; i2 < r; ++i2)
            for (std::size_t j = 0; j < c; ++j)
              dm.at(i2, j) += d.at(i2, j) * tv[i2];
        }
        if (node(n.in[1]).requires_grad) {
          Tensor& dv = adjoint_of(n.in[1]);
          for (std::size_t i2 = 0; i2 < r; ++i2) {
            double s = 0.0;
            for (std::size_t j = 0; j < c; ++j) s += d.at(i2, j) * tm.at(i2, j);
            dv[i2] += s;
          }
        }
        break;
      }
      case Op::kScalarMul: {
        Tensor& da = adjoint_of(n.in[0]);
        for (std::size_t i2 = 0; i2 < d.size(); ++i2)
          da[i2] += d[i2] * n.scalar;
        break;
      }
      case Op::kScalarAdd: {
        Tensor& da = adjoint_of(n.in[0]);
        for (std::size_t i2 = 0; i2 < d.size(); ++i2) da[i2] += d[i2];
        break;
      }
    }
    // Free the adjoint of interior nodes as soon as it has been propagated;
    // only leaves keep theirs for grad().
    if (n.op != Op::kLeaf) n.adjoint = Tensor();
  }
}

Tensor Tape::grad(Value v) const {
  const Node& n = node(v.idx);
  if (n.adjoint.empty()) return Tensor(n.value.shape());
  return n.adjoint;
}

double finite_diff_check(
    const std::function<Value(Tape&, const std::vector<Value>&)>& build,
    const std::vector<Tensor>& params, double step) {
  if (step <= 0.0) throw ContractError("finite_diff_check: step must be > 0");

  auto eval = [&](const std::vector<Tensor>& ps) {
    Tape tape;
    std::vector<Value> leaves;
    leaves.reserve(ps.size());
    for (const auto& p : ps) leaves.push_back(tape.leaf(p));
    Value loss = build(tape, leaves);
    return tape.value(loss).item();
  };

  Tape tape;
  std::vector<Value> leaves;
  leaves.reserve(params.size());
  for (const auto& p : params) leaves.push_back(tape.leaf(p));
  Value loss = build(tape, leaves);
  if (tape.value(loss).size() != 1) {
    throw ContractError("finite_diff_check: loss must be scalar");
  }
  tape.backward(loss);
  std::vector<Tensor> grads;
  grads.reserve(params.size());
  for (Value l : leaves) grads.push_back(tape.grad(l));

  double worst = 0.0;
  std::vector<Tensor> ps = params;
  for (std::size_t k = 0; k < ps.size(); ++k) {
    for (std::size_t i = 0; i < ps[k].size(); ++i) {
      double orig = ps[k][i];
      ps[k][i] = orig + step;
      double fp = eval(ps);
      ps[k][i] = orig - step;
      double fm = eval(ps);
      ps[k][i] = orig;
      double fd = (fp - fm) / (2.0 * step);
      double g = grads[k][i];
      double rel = std::abs(fd - g) / std::max(std::abs(g), 1e-8);
      if (rel > worst) worst = rel;
    }
  }
  return worst;
}

}  // namespace invbasin::ad
