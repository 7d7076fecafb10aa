#include "srlm/autodiff.hpp"

#include <cmath>

namespace srlm::ad {

namespace {

const char* op_name(OpKind k) {
  switch (k) {
    case OpKind::kInput: return "input";
    case OpKind::kConstant: return "constant";
    case OpKind::kAdd: return "add";
    case OpKind::kMul: return "mul";
    case OpKind::kMatMul: return "matmul";
    case OpKind::kTanh: return "tanh";
    case OpKind::kSigmoid: return "sigmoid";
    case OpKind::kExp: return "exp";
    case OpKind::kLog: return "log";
    case OpKind::kSoftmaxXent: return "softmax_xent";
    case OpKind::kConcat: return "concat";
    case OpKind::kSlice: return "slice";
    case OpKind::kSum: return "sum";
  }
  return "?";
}

bool is_scalar(const Matrix& m) { return m.rows() == 1 && m.cols() == 1; }

void require(bool cond, const std::string& msg) {
  if (!cond) throw AdError(msg);
}

}  // namespace

const Matrix& Value::data() const { return tape_->value(*this); }
Eigen::Index Value::rows() const { return data().rows(); }
Eigen::Index Value::cols() const { return data().cols(); }

void Tape::check_finite(const Matrix& m, const char* what) const {
  if (!m.allFinite()) {
    throw AdError(std::string("non-finite value in ") + what);
  }
}

Value Tape::push(Node n) {
  check_finite(n.value, op_name(n.kind));
  if (n.has_tangent) {
    require(n.value.cols() == 1, "tangent propagation requires vector-shaped values");
    check_finite(n.tangent, "tangent");
  }
  nodes_.push_back(std::move(n));
  return Value(this, static_cast<int>(nodes_.size()) - 1);
}

Value Tape::input(Matrix v, bool requires_grad) {
  Node n;
  n.kind = OpKind::kInput;
  n.value = std::move(v);
  n.requires_grad = requires_grad;
  return push(std::move(n));
}

Value Tape::input_with_tangent(Matrix v, Matrix tangent, bool requires_grad) {
  require(width_ > 0, "tape was created without tangent width");
  require(v.cols() == 1, "tangent seeds require a column vector input");
  require(tangent.rows() == v.rows() && tangent.cols() == width_,
          "tangent seed shape must be rows x tangent_width");
  Node n;
  n.kind = OpKind::kInput;
  n.value = std::move(v);
  n.tangent = std::move(tangent);
  n.has_tangent = true;
  n.requires_grad = requires_grad;
  return push(std::move(n));
}

Value Tape::constant(Matrix v) {
  Node n;
  n.kind = OpKind::kConstant;
  n.value = std::move(v);
  return push(std::move(n));
}

Value Tape::scalar(double v) {
  Matrix m(1, 1);
  m(0, 0) = v;
  return constant(std::move(m));
}

void Tape::accumulate_grad(int id, const Matrix& g) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (n.grad.size() == 0) {
    n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
  }
  n.grad += g;
}

void Tape::accumulate_grad_tangent(int id, const Matrix& gt) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (n.grad_tangent.size() == 0) {
    n.grad_tangent = Matrix::Zero(n.value.rows(), width_);
  }
  n.grad_tangent += gt;
}

Matrix Tape::grad(Value v) const {
  const Node& n = node(v);
  if (n.grad.size() == 0) return Matrix::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

Matrix Tape::grad_tangent(Value v) const {
  const Node& n = node(v);
  if (n.grad_tangent.size() == 0) return Matrix::Zero(n.value.rows(), width_);
  return n.grad_tangent;
}

namespace {

struct BinaryShapes {
  bool same;      // identical shapes
  bool b_scalar;  // b broadcast over a
  bool a_scalar;  // a broadcast over b
};

BinaryShapes classify(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() == b.rows() && a.cols() == b.cols()) return {true, false, false};
  if (is_scalar(b)) return {false, true, false};
  if (is_scalar(a)) return {false, false, true};
  throw AdError(std::string(op) + ": shape mismatch");
}

}  // namespace

Value add(Value x, Value y) {
  require(x.tape() == y.tape(), "add: operands from different tapes");
  Tape& t = *x.tape();
  const Node& na = t.node(x);
  const Node& nb = t.node(y);
  const BinaryShapes s = classify(na.value, nb.value, "add");
  Node n;
  n.kind = OpKind::kAdd;
  n.a = x.id();
  n.b = y.id();
  if (s.same) {
    n.value = na.value + nb.value;
  } else if (s.b_scalar) {
    n.value = na.value.array() + nb.value(0, 0);
  } else {
    n.value = nb.value.array() + na.value(0, 0);
  }
  n.requires_grad = na.requires_grad || nb.requires_grad;
  if (na.has_tangent || nb.has_tangent) {
    const int w = t.tangent_width();
    const Eigen::Index rows = n.value.rows();
    Matrix tan = Matrix::Zero(rows, w);
    if (na.has_tangent) {
      if (na.value.rows() == rows) {
        tan += na.tangent;
      } else {  // a scalar broadcast
        tan += Matrix::Ones(rows, 1) * na.tangent;
      }
    }
    if (nb.has_tangent) {
      if (nb.value.rows() == rows) {
        tan += nb.tangent;
      } else {
        tan += Matrix::Ones(rows, 1) * nb.tangent;
      }
    }
    n.tangent = std::move(tan);
    n.has_tangent = true;
  }
  return t.push(std::move(n));
}

Value mul(Value x, Value y) {
  require(x.tape() == y.tape(), "mul: operands from different tapes");
  Tape& t = *x.tape();
  const Node& na = t.node(x);
  const Node& nb = t.node(y);
  const BinaryShapes s = classify(na.value, nb.value, "mul");
  Node n;
  n.kind = OpKind::kMul;
  n.a = x.id();
  n.b = y.id();
  if (s.same) {
    n.value = na.value.cwiseProduct(nb.value);
  } else if (s.b_scalar) {
    n.value = na.value * nb.value(0, 0);
  } else {
    n.value = nb.value * na.value(0, 0);
  }
  n.requires_grad = na.requires_grad || nb.requires_grad;
  if (na.has_tangent || nb.has_tangent) {
    const int w = t.tangent_width();
    const Eigen::Index rows = n.value.rows();
    Matrix tan = Matrix::Zero(rows, w);
    if (s.same) {
      if (na.has_tangent) tan += (na.tangent.array().colwise() * nb.value.col(0).array()).matrix();
      if (nb.has_tangent) tan += (nb.tangent.array().colwise() * na.value.col(0).array()).matrix();
    } else if (s.b_scalar) {
      if (na.has_tangent) tan += na.tangent * nb.value(0, 0);
      if (nb.has_tangent) tan += na.value * nb.tangent;  // outer product
    } else {
      if (nb.has_tangent) tan += nb.tangent * na.value(0, 0);
      if (na.has_tangent) tan += nb.value * na.tangent;
    }
    n.tangent = std::move(tan);
    n.has_tangent = true;
  }
  return t.push(std::move(n));
}

Value matmul(Value x, Value y) {
  require(x.tape() == y.tape(), "matmul: operands from different tapes");
  Tape& t = *x.tape();
  const Node& na = t.node(x);
  const Node& nb = t.node(y);
  require(na.value.cols() == nb.value.rows(), "matmul: inner dimensions differ");
  require(!na.has_tangent, "matmul: tangent through the left operand is unsupported");
  Node n;
  n.kind = OpKind::kMatMul;
  n.a = x.id();
  n.b = y.id();
  n.value = na.value * nb.value;
  n.requires_grad = na.requires_grad || nb.requires_grad;
  if (nb.has_tangent) {
    n.tangent = na.value * nb.tangent;
    n.has_tangent = true;
  }
  return t.push(std::move(n));
}

Value unary_op(Tape& t, Value x, OpKind kind) {
  const Node& na = t.node(x);
  Node n;
  n.kind = kind;
  n.a = x.id();
  switch (kind) {
    case OpKind::kTanh: n.value = na.value.array().tanh(); break;
    case OpKind::kSigmoid: n.value = 1.0 / (1.0 + (-na.value.array()).exp()); break;
    case OpKind::kExp: n.value = na.value.array().exp(); break;
    case OpKind::kLog: n.value = na.value.array().log(); break;
    default: throw AdError("unary: bad kind");
  }
  n.requires_grad = na.requires_grad;
  if (na.has_tangent) {
    Eigen::ArrayXd d;
    switch (kind) {
      case OpKind::kTanh: d = 1.0 - n.value.col(0).array().square(); break;
      case OpKind::kSigmoid: d = n.value.col(0).array() * (1.0 - n.value.col(0).array()); break;
      case OpKind::kExp: d = n.value.col(0).array(); break;
      case OpKind::kLog: d = 1.0 / na.value.col(0).array(); break;
      default: throw AdError("unary: bad kind");
    }
    n.tangent = (na.tangent.array().colwise() * d).matrix();
    n.has_tangent = true;
  }
  return t.push(std::move(n));
}

Value tanh(Value x) { return unary_op(*x.tape(), x, OpKind::kTanh); }
Value sigmoid(Value x) { return unary_op(*x.tape(), x, OpKind::kSigmoid); }
Value exp(Value x) { return unary_op(*x.tape(), x, OpKind::kExp); }
Value log(Value x) { return unary_op(*x.tape(), x, OpKind::kLog); }

Value softmax_xent(Value logits, int target) {
  Tape& t = *logits.tape();
  const Node& na = t.node(logits);
  require(na.value.cols() == 1, "softmax_xent: logits must be a column vector");
  require(target >= 0 && target < na.value.rows(), "softmax_xent: target out of range");
  const Eigen::VectorXd u = na.value.col(0);
  const double m = u.maxCoeff();
  const Eigen::ArrayXd shifted = (u.array() - m).exp();
  const double z = shifted.sum();
  Node n;
  n.kind = OpKind::kSoftmaxXent;
  n.a = logits.id();
  n.target = target;
  n.value = Matrix(1, 1);
  n.value(0, 0) = m + std::log(z) - u[target];
  n.cached = (shifted / z).matrix();  // softmax probabilities
  n.requires_grad = na.requires_grad;
  if (na.has_tangent) {
    // dy = p' udot - udot[target]
    n.tangent = n.cached.col(0).transpose() * na.tangent - na.tangent.row(target);
    n.has_tangent = true;
  }
  return t.push(std::move(n));
}

Value concat(Value x, Value y) {
  require(x.tape() == y.tape(), "concat: operands from different tapes");
  Tape& t = *x.tape();
  const Node& na = t.node(x);
  const Node& nb = t.node(y);
  require(na.value.cols() == 1 && nb.value.cols() == 1, "concat: expects column vectors");
  Node n;
  n.kind = OpKind::kConcat;
  n.a = x.id();
  n.b = y.id();
  n.value = Matrix(na.value.rows() + nb.value.rows(), 1);
  n.value << na.value, nb.value;
  n.requires_grad = na.requires_grad || nb.requires_grad;
  if (na.has_tangent || nb.has_tangent) {
    const int w = t.tangent_width();
    Matrix tan = Matrix::Zero(n.value.rows(), w);
    if (na.has_tangent) tan.topRows(na.value.rows()) = na.tangent;
    if (nb.has_tangent) tan.bottomRows(nb.value.rows()) = nb.tangent;
    n.tangent = std::move(tan);
    n.has_tangent = true;
  }
  return t.push(std::move(n));
}

Value slice(Value x, int r0, int r1, int c0, int c1) {
  Tape& t = *x.tape();
  const Node& na = t.node(x);
  require(0 <= r0 && r0 < r1 && r1 <= na.value.rows() && 0 <= c0 && c0 < c1 &&
              c1 <= na.value.cols(),
          "slice: bounds out of range");
  Node n;
  n.kind = OpKind::kSlice;
  n.a = x.id();
  n.r0 = r0;
  n.r1 = r1;
  n.c0 = c0;
  n.c1 = c1;
  n.value = na.value.block(r0, c0, r1 - r0, c1 - c0);
  n.requires_grad = na.requires_grad;
  if (na.has_tangent) {
    require(c0 == 0 && c1 == 1, "slice: tangent propagation expects vector slices");
    n.tangent = na.tangent.middleRows(r0, r1 - r0);
    n.has_tangent = true;
  }
  return t.push(std::move(n));
}

Value sum(Value x) {
  Tape& t = *x.tape();
  const Node& na = t.node(x);
  Node n;
  n.kind = OpKind::kSum;
  n.a = x.id();
  n.value = Matrix(1, 1);
  n.value(0, 0) = na.value.sum();
  n.requires_grad = na.requires_grad;
  if (na.has_tangent) {
    n.tangent = na.tangent.colwise().sum();
    n.has_tangent = true;
  }
  return t.push(std::move(n));
}

void Tape::backward(Value out) {
  require(out.tape() == this, "backward: output from another tape");
  const Node& o = node(out);
  require(is_scalar(o.value), "backward: output must be scalar");
  check_finite(o.value, "backward seed");
  require(backward_visits_ == 0, "backward: tape already replayed; rebuild the graph");

  const bool tangents = width_ > 0;
  accumulate_grad(out.id(), Matrix::Ones(1, 1));
  if (tangents) accumulate_grad_tangent(out.id(), Matrix::Zero(1, width_));

  for (int id = out.id(); id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.requires_grad || n.grad.size() == 0) continue;
    ++backward_visits_;
    const Matrix& g = n.grad;
    const bool gt_present = tangents && n.grad_tangent.size() != 0;
    Matrix gt = gt_present ? n.grad_tangent : Matrix::Zero(n.value.rows(), width_);

    switch (n.kind) {
      case OpKind::kInput:
      case OpKind::kConstant:
        break;
      case OpKind::kAdd: {
        const Node& a = nodes_[static_cast<std::size_t>(n.a)];
        const Node& b = nodes_[static_cast<std::size_t>(n.b)];
        const BinaryShapes s = classify(a.value, b.value, "add");
        if (a.requires_grad) {
          if (s.a_scalar) {
            Matrix ga(1, 1);
            ga(0, 0) = g.sum();
            accumulate_grad(n.a, ga);
            if (tangents) accumulate_grad_tangent(n.a, gt.colwise().sum());
          } else {
            accumulate_grad(n.a, g);
            if (tangents) accumulate_grad_tangent(n.a, gt);
          }
        }
        if (b.requires_grad) {
          if (s.b_scalar) {
            Matrix gb(1, 1);
            gb(0, 0) = g.sum();
            accumulate_grad(n.b, gb);
            if (tangents) accumulate_grad_tangent(n.b, gt.colwise().sum());
          } else {
            accumulate_grad(n.b, g);
            if (tangents) accumulate_grad_tangent(n.b, gt);
          }
        }
        break;
      }
      case OpKind::kMul: {
        const Node& a = nodes_[static_cast<std::size_t>(n.a)];
        const Node& b = nodes_[static_cast<std::size_t>(n.b)];
        const BinaryShapes s = classify(a.value, b.value, "mul");
        if (a.requires_grad) {
          if (s.same) {
            accumulate_grad(n.a, g.cwiseProduct(b.value));
            if (tangents) {
              Matrix at = (gt.array().colwise() * b.value.col(0).array()).matrix();
              if (b.has_tangent) at += (b.tangent.array().colwise() * g.col(0).array()).matrix();
              accumulate_grad_tangent(n.a, at);
            }
          } else if (s.b_scalar) {
            accumulate_grad(n.a, g * b.value(0, 0));
            if (tangents) {
              Matrix at = gt * b.value(0, 0);
              if (b.has_tangent) at += g * b.tangent;
              accumulate_grad_tangent(n.a, at);
            }
          } else {  // a scalar
            Matrix ga(1, 1);
            ga(0, 0) = g.cwiseProduct(b.value).sum();
            accumulate_grad(n.a, ga);
            if (tangents) {
              Matrix at = b.value.col(0).transpose() * gt;
              if (b.has_tangent) at += g.col(0).transpose() * b.tangent;
              accumulate_grad_tangent(n.a, at);
            }
          }
        }
        if (b.requires_grad) {
          if (s.same) {
            accumulate_grad(n.b, g.cwiseProduct(a.value));
            if (tangents) {
              Matrix bt = (gt.array().colwise() * a.value.col(0).array()).matrix();
              if (a.has_tangent) bt += (a.tangent.array().colwise() * g.col(0).array()).matrix();
              accumulate_grad_tangent(n.b, bt);
            }
          } else if (s.a_scalar) {
            accumulate_grad(n.b, g * a.value(0, 0));
            if (tangents) {
              Matrix bt = gt * a.value(0, 0);
              if (a.has_tangent) bt += g * a.tangent;
              accumulate_grad_tangent(n.b, bt);
            }
          } else {  // b scalar
            Matrix gb(1, 1);
            gb(0, 0) = g.cwiseProduct(a.value).sum();
            accumulate_grad(n.b, gb);
            if (tangents) {
              Matrix bt = a.value.col(0).transpose() * gt;
              if (a.has_tangent) bt += g.col(0).transpose() * a.tangent;
              accumulate_grad_tangent(n.b, bt);
            }
          }
        }
        break;
      }
      case OpKind::kMatMul: {
        const Node& a = nodes_[static_cast<std::size_t>(n.a)];
        const Node& b = nodes_[static_cast<std::size_t>(n.b)];
        if (a.requires_grad) {
          accumulate_grad(n.a, g * b.value.transpose());
          // grad tangents into matrix operands are terminal (parameter leaves)
          // and are not tracked; vector-path tangents flow through b below.
        }
        if (b.requires_grad) {
          accumulate_grad(n.b, a.value.transpose() * g);
          if (tangents) accumulate_grad_tangent(n.b, a.value.transpose() * gt);
        }
        break;
      }
      case OpKind::kTanh: {
        const Node& a = nodes_[static_cast<std::size_t>(n.a)];
        if (a.requires_grad) {
          const Eigen::ArrayXXd d = 1.0 - n.value.array().square();
          accumulate_grad(n.a, (g.array() * d).matrix());
          if (tangents) {
            Matrix at = (gt.array().colwise() * d.col(0)).matrix();
            if (n.has_tangent) {
              // d/de (1 - y^2) = -2 y ydot
              at += (n.tangent.array().colwise() *
                     (-2.0 * n.value.col(0).array() * g.col(0).array()))
                        .matrix();
            }
            accumulate_grad_tangent(n.a, at);
          }
        }
        break;
      }
      case OpKind::kSigmoid: {
        const Node& a = nodes_[static_cast<std::size_t>(n.a)];
        if (a.requires_grad) {
          const Eigen::ArrayXXd d = n.value.array() * (1.0 - n.value.array());
          accumulate_grad(n.a, (g.array() * d).matrix());
          if (tangents) {
            Matrix at = (gt.array().colwise() * d.col(0)).matrix();
            if (n.has_tangent) {
              // d/de (y(1-y)) = (1-2y) ydot
              at += (n.tangent.array().colwise() *
                     ((1.0 - 2.0 * n.value.col(0).array()) * g.col(0).array()))
                        .matrix();
            }
            accumulate_grad_tangent(n.a, at);
          }
        }
        break;
      }
      case OpKind::kExp: {
        const Node& a = nodes_[static_cast<std::size_t>(n.a)];
        if (a.requires_grad) {
          accumulate_grad(n.a, g.cwiseProduct(n.value));
          if (tangents) {
            Matrix at = (gt.array().colwise() * n.value.col(0).array()).matrix();
            if (n.has_tangent) {
              at += (n.tangent.array().colwise() * g.col(0).array()).matrix();
            }
            accumulate_grad_tangent(n.a, at);
          }
        }
        break;
      }
      case OpKind::kLog: {
        const Node& a = nodes_[static_cast<std::size_t>(n.a)];
        if (a.requires_grad) {
          accumulate_grad(n.a, g.cwiseQuotient(a.value));
          if (tangents) {
            Matrix at = (gt.array().colwise() / a.value.col(0).array()).matrix();
            if (a.has_tangent) {
              at -= (a.tangent.array().colwise() *
                     (g.col(0).array() / a.value.col(0).array().square()))
                        .matrix();
            }
            accumulate_grad_tangent(n.a, at);
          }
        }
        break;
      }
      case OpKind::kSoftmaxXent: {
        const Node& a = nodes_[static_cast<std::size_t>(n.a)];
        if (a.requires_grad) {
          Eigen::VectorXd pe = n.cached.col(0);
          pe[n.target] -= 1.0;  // p - e_t
          accumulate_grad(n.a, g(0, 0) * pe);
          if (tangents) {
            Matrix at = pe * gt;  // (p - e_t) outer grad-tangent row
            if (a.has_tangent) {
              const Eigen::RowVectorXd pu = n.cached.col(0).transpose() * a.tangent;
              Matrix pdot = (a.tangent.array().colwise() * n.cached.col(0).array()).matrix() -
                            n.cached.col(0) * pu;
              at += g(0, 0) * pdot;
            }
            accumulate_grad_tangent(n.a, at);
          }
        }
        break;
      }
      case OpKind::kConcat: {
        const Node& a = nodes_[static_cast<std::size_t>(n.a)];
        const Node& b = nodes_[static_cast<std::size_t>(n.b)];
        if (a.requires_grad) {
          accumulate_grad(n.a, g.topRows(a.value.rows()));
          if (tangents) accumulate_grad_tangent(n.a, gt.topRows(a.value.rows()));
        }
        if (b.requires_grad) {
          accumulate_grad(n.b, g.bottomRows(b.value.rows()));
          if (tangents) accumulate_grad_tangent(n.b, gt.bottomRows(b.value.rows()));
        }
        break;
      }
      case OpKind::kSlice: {
        const Node& a = nodes_[static_cast<std::size_t>(n.a)];
        if (a.requires_grad) {
          Matrix ga = Matrix::Zero(a.value.rows(), a.value.cols());
          ga.block(n.r0, n.c0, n.r1 - n.r0, n.c1 - n.c0) = g;
          accumulate_grad(n.a, ga);
          if (tangents && a.value.cols() == 1) {
            Matrix gat = Matrix::Zero(a.value.rows(), width_);
            gat.middleRows(n.r0, n.r1 - n.r0) = gt;
            accumulate_grad_tangent(n.a, gat);
          }
        }
        break;
      }
      case OpKind::kSum: {
        const Node& a = nodes_[static_cast<std::size_t>(n.a)];
        if (a.requires_grad) {
          accumulate_grad(n.a, Matrix::Constant(a.value.rows(), a.value.cols(), g(0, 0)));
          if (tangents && a.value.cols() == 1) {
            accumulate_grad_tangent(n.a, Matrix::Ones(a.value.rows(), 1) * gt);
          }
        }
        break;
      }
    }
  }

  for (const Node& n : nodes_) {
    if (n.kind == OpKind::kInput && n.grad.size() != 0 && !n.grad.allFinite()) {
      throw AdError("NaN encountered during backward pass");
    }
  }
}

std::vector<Matrix> grad(const ScalarFn& f, const std::vector<Matrix>& inputs) {
  Tape tape;
  std::vector<Value> xs;
  xs.reserve(inputs.size());
  for (const Matrix& m : inputs) xs.push_back(tape.input(m));
  Value out = f(tape, xs);
  if (out.rows() != 1 || out.cols() != 1) {
    throw AdError("grad: function output is not scalar");
  }
  tape.backward(out);
  std::vector<Matrix> gs;
  gs.reserve(xs.size());
  for (Value v : xs) gs.push_back(tape.grad(v));
  return gs;
}

Matrix jvp(const VectorFn& f, const Matrix& x, const Matrix& v) {
  if (x.rows() != v.rows() || x.cols() != v.cols()) {
    throw AdError("jvp: direction shape must match input shape");
  }
  if (x.cols() != 1) throw AdError("jvp: input must be a column vector");
  Tape tape(1);
  Value xv = tape.input_with_tangent(x, v, /*requires_grad=*/false);
  Value out = f(tape, xv);
  if (!tape.has_tangent(out)) {
    return Matrix::Zero(out.rows(), out.cols());
  }
  return tape.tangent(out);
}

}  // namespace srlm::ad
