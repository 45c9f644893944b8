#ifndef CLINPROMPT_TENSOR_H_
#define CLINPROMPT_TENSOR_H_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace clinprompt {

class Rng;

struct Shape {
  size_t rows = 0;
  size_t cols = 0;

  size_t size() const { return rows * cols; }
  bool operator==(const Shape&) const = default;
  std::string str() const;
};

// Storage and autograd bookkeeping behind a Tensor handle.
struct TensorNode {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until a gradient is first written
  bool requires_grad = false;
  uint64_t seq = 0;  // creation order, used to replay the tape backwards
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void(TensorNode&)> backward_fn;

  bool is_leaf() const { return !backward_fn; }
  std::vector<double>& ensure_grad();
};

// Dense row-major matrix of doubles. Every tensor is two-dimensional; vectors
// are 1xN rows and scalars are 1x1. Copies share storage; use clone() for a
// deep copy.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

  static Tensor zeros(size_t rows, size_t cols, bool requires_grad = false);
  static Tensor ones(size_t rows, size_t cols, bool requires_grad = false);
  static Tensor full(size_t rows, size_t cols, double value,
                     bool requires_grad = false);
  static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows,
                          bool requires_grad = false);
  static Tensor randn(size_t rows, size_t cols, double stddev, Rng& rng,
                      bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  size_t rows() const { return node_->shape.rows; }
  size_t cols() const { return node_->shape.cols; }
  size_t size() const { return node_->data.size(); }

  std::span<double> data() { return node_->data; }
  std::span<const double> data() const { return node_->data; }
  double& at(size_t r, size_t c) { return node_->data[r * cols() + c]; }
  double at(size_t r, size_t c) const { return node_->data[r * cols() + c]; }
  double item() const;

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool v) { node_->requires_grad = v; }
  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const double> grad() const { return node_->grad; }
  std::span<double> mutable_grad() { return node_->ensure_grad(); }
  void zero_grad() { node_->grad.clear(); }

  // Detached deep copy (no grad, no history).
  Tensor clone() const;
  bool same_storage(const Tensor& other) const { return node_ == other.node_; }

  const std::shared_ptr<TensorNode>& node() const { return node_; }
  explicit Tensor(std::shared_ptr<TensorNode> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<TensorNode> node_;
};

void zero_grad(std::span<Tensor> tensors);

// Gradient recording is on by default; NoGradGuard turns it off for the
// current thread (inference, generation).
bool grad_enabled();
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// The operations reachable from a loss, in execution order.
class Tape {
 public:
  static Tape record(const Tensor& loss);
  const std::vector<TensorNode*>& nodes() const { return nodes_; }

 private:
  std::vector<TensorNode*> nodes_;
};

// Reverse-mode pass from a 1x1 loss. Leaf gradients accumulate across calls;
// intermediate gradients are recomputed each time.
void backward(const Tensor& loss);

// ---- differentiable operations ------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
// a * b^T without materializing the transpose.
Tensor matmul_nt(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& x);

Tensor add(const Tensor& a, const Tensor& b);
// x (m x n) + bias (1 x n), bias broadcast over rows.
Tensor add_bias(const Tensor& x, const Tensor& bias);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double s);
Tensor sum(const Tensor& x);

Tensor gelu(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor sigmoid(const Tensor& x);

Tensor softmax_rows(const Tensor& x);
// Row-wise softmax where entry (i, j) with j > i is exactly zero.
Tensor causal_softmax(const Tensor& x);
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps);

// Mean of -log softmax(logits)[t] over rows whose mask bit is set.
// Throws ContractError when no mask bit is set.
Tensor cross_entropy(const Tensor& logits, std::span<const int> targets,
                     const std::vector<bool>& mask);

Tensor concat_rows(std::span<const Tensor> parts);
Tensor concat_rows(const Tensor& a, const Tensor& b);
Tensor concat_cols(std::span<const Tensor> parts);
Tensor slice_rows(const Tensor& x, size_t begin, size_t end);
Tensor slice_cols(const Tensor& x, size_t begin, size_t end);

// Rows of `table` selected by `ids`. Backward scatter-adds into the table.
Tensor embedding_lookup(const Tensor& table, std::span<const int> ids);

// Inverted dropout; identity when p == 0.
Tensor dropout(const Tensor& x, double p, Rng& rng);

}  // namespace clinprompt

#endif  // CLINPROMPT_TENSOR_H_
