#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace srlm::ad {

using Matrix = Eigen::MatrixXd;

struct AdError : std::runtime_error {
  explicit AdError(const std::string& msg) : std::runtime_error(msg) {}
};

enum class OpKind : std::uint8_t {
  kInput,
  kConstant,
  kAdd,
  kMul,
  kMatMul,
  kTanh,
  kSigmoid,
  kExp,
  kLog,
  kSoftmaxXent,
  kConcat,
  kSlice,
  kSum,
};

class Tape;

// Lightweight handle to a tape node.
class Value {
 public:
  Value() = default;
  Value(Tape* tape, int id) : tape_(tape), id_(id) {}
  Tape* tape() const { return tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }
  const Matrix& data() const;
  Eigen::Index rows() const;
  Eigen::Index cols() const;

 private:
  Tape* tape_ = nullptr;
  int id_ = -1;
};

// Record of one elementary operation.
struct Node {
  OpKind kind = OpKind::kConstant;
  int a = -1;
  int b = -1;
  Matrix value;
  Matrix tangent;       // rows x width; only vector/scalar nodes carry tangents
  Matrix grad;          // same shape as value, lazily allocated
  Matrix grad_tangent;  // rows x width
  bool requires_grad = false;
  bool has_tangent = false;
  // op-specific data
  int r0 = 0, r1 = 0, c0 = 0, c1 = 0;  // slice bounds
  int target = -1;                     // softmax-cross-entropy target index
  Matrix cached;                       // softmax probabilities
};

// Append-only operation tape. Nodes are recorded in evaluation order, which
// is a topological order; the backward sweep walks it once in reverse. A tape
// is confined to a single thread. Constructing with tangent_width > 0 enables
// forward-mode tangent propagation alongside values, including through the
// backward sweep (forward-over-reverse), which yields Hessian-vector products
// without nested tapes.
class Tape {
 public:
  explicit Tape(int tangent_width = 0) : width_(tangent_width) {}

  int tangent_width() const { return width_; }
  std::size_t size() const { return nodes_.size(); }
  std::size_t backward_visits() const { return backward_visits_; }

  void clear() {
    nodes_.clear();
    backward_visits_ = 0;
  }

  Value input(Matrix v, bool requires_grad = true);
  Value input_with_tangent(Matrix v, Matrix tangent, bool requires_grad = true);
  Value constant(Matrix v);
  Value scalar(double v);

  // Backward sweep from a scalar output; fills grad (and grad_tangent when
  // the tape carries tangents) for every reachable node with requires_grad.
  void backward(Value out);

  const Matrix& value(Value v) const { return node(v).value; }
  const Matrix& tangent(Value v) const { return node(v).tangent; }
  bool has_tangent(Value v) const { return node(v).has_tangent; }
  // Gradient of the last backward() output w.r.t. v; zeros if unreached.
  Matrix grad(Value v) const;
  Matrix grad_tangent(Value v) const;

  const Node& node(Value v) const { return nodes_.at(static_cast<std::size_t>(v.id())); }

  friend Value unary_op(Tape& t, Value x, OpKind kind);
  friend Value add(Value x, Value y);
  friend Value mul(Value x, Value y);
  friend Value matmul(Value x, Value y);
  friend Value tanh(Value x);
  friend Value sigmoid(Value x);
  friend Value exp(Value x);
  friend Value log(Value x);
  friend Value softmax_xent(Value logits, int target);
  friend Value concat(Value x, Value y);
  friend Value slice(Value x, int r0, int r1, int c0, int c1);
  friend Value sum(Value x);

 private:
  Node& mut(Value v) { return nodes_.at(static_cast<std::size_t>(v.id())); }
  Value push(Node n);
  void check_finite(const Matrix& m, const char* what) const;
  void accumulate_grad(int id, const Matrix& g);
  void accumulate_grad_tangent(int id, const Matrix& gt);

  std::vector<Node> nodes_;
  int width_ = 0;
  std::size_t backward_visits_ = 0;
};

Value add(Value x, Value y);
Value mul(Value x, Value y);
Value matmul(Value x, Value y);
Value tanh(Value x);
Value sigmoid(Value x);
Value exp(Value x);
Value log(Value x);
// Fused -log softmax(logits)[target]; logits must be a column vector.
Value softmax_xent(Value logits, int target);
// Stack two column vectors.
Value concat(Value x, Value y);
Value slice(Value x, int r0, int r1, int c0 = 0, int c1 = 1);
// Reduce all entries to a 1x1 scalar.
Value sum(Value x);

inline Value scale(Value x, double c) {
  return mul(x, x.tape()->scalar(c));
}
inline Value shift(Value x, double c) {
  return add(x, x.tape()->scalar(c));
}
inline Value sub(Value x, Value y) { return add(x, scale(y, -1.0)); }

// Functional drivers matching the library's gradient/JVP contracts.
using ScalarFn = std::function<Value(Tape&, const std::vector<Value>&)>;
using VectorFn = std::function<Value(Tape&, Value)>;

// Reverse-mode gradient of a scalar-valued function at the given inputs;
// one gradient per input, same shape as the input.
std::vector<Matrix> grad(const ScalarFn& f, const std::vector<Matrix>& inputs);

// Forward-mode directional derivative (Df)(x) . v.
Matrix jvp(const VectorFn& f, const Matrix& x, const Matrix& v);

}  // namespace srlm::ad
